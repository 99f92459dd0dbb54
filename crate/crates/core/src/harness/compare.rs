//! Constant CTR baseline against per-class boosted models on time splits.

use serde::{Deserialize, Serialize};

use super::chunks::{ConstantPredictor, GbdtPredictor, Predictor};
use super::{check_time_order, split_at_time, time_boundary, HarnessError};
use crate::ctr::{compute_ctr, CtrTable};
use crate::features::{build_profiles, extract_matrix, VocabularyConfig};
use crate::gbdt::{train, Dataset, FeatureMatrix, GbdtModel, TrainParams};
use crate::ingest::{label_columns, EngagementClass, InteractionRecord, PerClass};
use crate::metrics::{metric_report, MetricReport};

/// Timestamp boundaries. Rows before `history_end` only feed the profile
/// tables; `[history_end, train_end)` trains, `[train_end, valid_end)`
/// validates and early-stops, and everything from `valid_end` on is the test
/// split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub history_end: u64,
    pub train_end: u64,
    pub valid_end: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct Splits<'a> {
    pub history: &'a [InteractionRecord],
    pub train: &'a [InteractionRecord],
    pub valid: &'a [InteractionRecord],
    pub test: &'a [InteractionRecord],
}

impl SplitConfig {
    /// Boundaries at cumulative row fractions of time-ordered records.
    pub fn from_fractions(records: &[InteractionRecord], history: f64, train: f64, valid: f64) -> Self {
        SplitConfig {
            history_end: time_boundary(records, history),
            train_end: time_boundary(records, train),
            valid_end: time_boundary(records, valid),
        }
    }

    pub fn split<'a>(&self, records: &'a [InteractionRecord]) -> Result<Splits<'a>, HarnessError> {
        if !(self.history_end <= self.train_end && self.train_end <= self.valid_end) {
            return Err(HarnessError::Config(
                "split boundaries must satisfy history_end <= train_end <= valid_end".into(),
            ));
        }
        check_time_order(records)?;
        let (history, rest) = split_at_time(records, self.history_end);
        let (train, rest) = split_at_time(rest, self.train_end);
        let (valid, test) = split_at_time(rest, self.valid_end);
        for (name, part) in [("history", history), ("train", train), ("valid", valid), ("test", test)] {
            if part.is_empty() {
                return Err(HarnessError::EmptySplit(name));
            }
        }
        Ok(Splits { history, train, valid, test })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub split: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub ctr: CtrTable,
    pub models: PerClass<GbdtModel>,
}

pub const COMPARISON_CSV_HEADER: &str = "model,split,prauc_like,rce_like,prauc_reply,rce_reply,\
prauc_retweet,rce_retweet,prauc_rwc,rce_rwc";

impl ComparisonReport {
    pub fn get(&self, model: &str, split: &str) -> Option<&MetricReport> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.split == split)
            .map(|r| &r.report)
    }

    /// Two models by two splits, PRAUC and RCE for every class.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{COMPARISON_CSV_HEADER}\n");
        for row in &self.rows {
            s.push_str(&format!("{},{}", row.model, row.split));
            for (_, m) in row.report.per_class().iter() {
                s.push_str(&format!(",{},{}", m.prauc, m.rce));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let rows = serde_json::to_value(&self.rows).expect("rows serialize");
        let ctr = serde_json::to_value(self.ctr).expect("table serializes");
        let best: Vec<usize> = self.models.0.iter().map(|m| m.best_iteration).collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "rows": rows,
            "ctr": ctr,
            "best_iterations": best,
        }))
        .expect("comparison serializes")
    }
}

/// Trains one model per class. Class `c` uses seed `params.seed + c.index()`.
pub fn train_per_class(
    train_x: &FeatureMatrix,
    train_y: &PerClass<Vec<bool>>,
    valid_x: &FeatureMatrix,
    valid_y: &PerClass<Vec<bool>>,
    params: &TrainParams,
) -> Result<PerClass<GbdtModel>, HarnessError> {
    let mut models = Vec::with_capacity(4);
    for class in EngagementClass::ALL {
        let p = TrainParams { seed: params.seed.wrapping_add(class.index() as u64), ..*params };
        let mut model = train(
            Dataset { features: train_x, labels: &train_y[class] },
            Dataset { features: valid_x, labels: &valid_y[class] },
            &p,
        )
        .map_err(|source| HarnessError::Gbdt { class, source })?;
        model.class = Some(class);
        models.push(model);
    }
    let mut it = models.into_iter();
    Ok(PerClass::from_fn(|_| it.next().expect("four models")))
}

fn evaluate(
    predictor: &dyn Predictor,
    records: &[InteractionRecord],
) -> Result<MetricReport, HarnessError> {
    let scores = predictor.predict(records)?;
    Ok(metric_report(&scores, &label_columns(records))?)
}

/// Profiles come from the history split, the CTR table and the boosted
/// models from the train split. Both predictors are scored on the valid and
/// test splits.
pub fn run_comparison(
    records: &[InteractionRecord],
    splits: &SplitConfig,
    params: &TrainParams,
    vocab: &VocabularyConfig,
) -> Result<ComparisonReport, HarnessError> {
    let parts = splits.split(records)?;
    let tables = build_profiles(parts.history);
    let ctr = compute_ctr(parts.train)?;

    let train_x = extract_matrix(parts.train, &tables, vocab);
    let valid_x = extract_matrix(parts.valid, &tables, vocab);
    let models = train_per_class(
        &train_x,
        &label_columns(parts.train),
        &valid_x,
        &label_columns(parts.valid),
        params,
    )?;

    let constant = ConstantPredictor(ctr);
    let gbdt = GbdtPredictor { tables, vocab: vocab.clone(), models };
    let mut rows = Vec::with_capacity(4);
    for (model, predictor) in [("CTR", &constant as &dyn Predictor), ("GBDT", &gbdt)] {
        for (split, part) in [("valid", parts.valid), ("test", parts.test)] {
            rows.push(ComparisonRow {
                model: model.to_owned(),
                split: split.to_owned(),
                report: evaluate(predictor, part)?,
            });
        }
    }
    Ok(ComparisonReport { rows, ctr, models: gbdt.models })
}
