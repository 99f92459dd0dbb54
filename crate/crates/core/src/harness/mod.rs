//! Experiment layer: synthetic data, dataset statistics, chunked
//! evaluation, rank-sum leaderboard and the constant-vs-model comparison.

mod chunks;
mod compare;
mod generate;
mod leaderboard;
mod stats;

use thiserror::Error;

use crate::ctr::CtrError;
use crate::features::FeatureError;
use crate::gbdt::GbdtError;
use crate::ingest::{EngagementClass, IngestError, InteractionRecord};
use crate::metrics::MetricError;

pub use chunks::{
    chunk_eval, ChunkEvalReport, ChunkReport, ClassSpread, ConstantPredictor, GbdtPredictor,
    Predictor, CHUNK_CSV_HEADER, CHUNK_SUMMARY_CSV_HEADER, DEFAULT_CHUNK_SIZE,
};
pub use compare::{
    run_comparison, train_per_class, ComparisonReport, ComparisonRow, SplitConfig, Splits,
    COMPARISON_CSV_HEADER,
};
pub use generate::{generate, generate_to_path, GenConfig, SyntheticGenerator, DEFAULT_RATES};
pub use leaderboard::{leaderboard, leaderboard_csv, LeaderboardEntry, LEADERBOARD_CSV_HEADER};
pub use stats::{dataset_stats, DatasetStats};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Ctr(#[from] CtrError),
    #[error("class {class}: {source}")]
    Gbdt {
        class: EngagementClass,
        #[source]
        source: GbdtError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("records are not ordered by tweet timestamp (row {0})")]
    Unordered(usize),
    #[error("class {class}: predictor returned {got} scores for {expected} rows")]
    PredictionLength {
        class: EngagementClass,
        expected: usize,
        got: usize,
    },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
}

/// Checks that records are sorted by tweet timestamp.
pub fn check_time_order(records: &[InteractionRecord]) -> Result<(), HarnessError> {
    match records
        .windows(2)
        .position(|w| w[1].tweet_timestamp < w[0].tweet_timestamp)
    {
        Some(i) => Err(HarnessError::Unordered(i + 1)),
        None => Ok(()),
    }
}

/// Splits time-ordered records at the first row with timestamp `>= boundary`.
pub fn split_at_time(records: &[InteractionRecord], boundary: u64) -> (&[InteractionRecord], &[InteractionRecord]) {
    let k = records.partition_point(|r| r.tweet_timestamp < boundary);
    records.split_at(k)
}

/// Timestamp boundary leaving roughly `fraction` of time-ordered records
/// before it.
pub fn time_boundary(records: &[InteractionRecord], fraction: f64) -> u64 {
    if records.is_empty() {
        return 0;
    }
    let k = ((records.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    if k >= records.len() {
        records[records.len() - 1].tweet_timestamp + 1
    } else {
        records[k].tweet_timestamp
    }
}
