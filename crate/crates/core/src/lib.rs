//! Engagement prediction pipeline for tweet/user interaction logs.
//!
//! Parses delimited logs, scores predictions with PRAUC and RCE, builds
//! constant CTR baselines, extracts a fixed 59-column feature vector from
//! precomputed author/user profiles, and trains per-class histogram
//! gradient-boosted trees. The [`harness`] module ties these together into
//! synthetic experiments; [`cli`] exposes them as subcommands.

pub mod cli;
pub mod ctr;
pub mod features;
pub mod gbdt;
pub mod harness;
pub mod ingest;
pub mod metrics;

pub use ingest::{EngagementClass, FormatConfig, InteractionRecord, PerClass};
pub use metrics::MetricReport;
