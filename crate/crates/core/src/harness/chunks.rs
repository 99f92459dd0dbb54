//! Evaluation over consecutive time-ordered chunks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_time_order, HarnessError};
use crate::ctr::{predict_constant, CtrTable};
use crate::features::{extract_matrix, FeatureTables, VocabularyConfig};
use crate::gbdt::{predict, GbdtModel};
use crate::ingest::{label_columns, EngagementClass, InteractionRecord, PerClass};
use crate::metrics::{metric_report, MetricReport};

pub const DEFAULT_CHUNK_SIZE: usize = 100_000;

/// Anything that scores records for all four classes.
pub trait Predictor: Sync {
    fn predict(&self, records: &[InteractionRecord]) -> Result<PerClass<Vec<f64>>, HarnessError>;
}

/// Predicts the training CTR of each class for every row.
#[derive(Debug, Clone)]
pub struct ConstantPredictor(pub CtrTable);

impl Predictor for ConstantPredictor {
    fn predict(&self, records: &[InteractionRecord]) -> Result<PerClass<Vec<f64>>, HarnessError> {
        Ok(predict_constant(&self.0, records.len()))
    }
}

/// Feature extraction followed by one boosted model per class.
#[derive(Debug, Clone)]
pub struct GbdtPredictor {
    pub tables: FeatureTables,
    pub vocab: VocabularyConfig,
    pub models: PerClass<GbdtModel>,
}

impl Predictor for GbdtPredictor {
    fn predict(&self, records: &[InteractionRecord]) -> Result<PerClass<Vec<f64>>, HarnessError> {
        let matrix = extract_matrix(records, &self.tables, &self.vocab);
        self.models.try_map(|class, model| {
            predict(model, &matrix).map_err(|source| HarnessError::Gbdt { class, source })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkReport {
    pub index: usize,
    pub first_timestamp: u64,
    pub last_timestamp: u64,
    pub rows: usize,
    pub report: MetricReport,
}

/// Mean and population standard deviation across chunks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSpread {
    pub prauc_mean: f64,
    pub prauc_std: f64,
    pub rce_mean: f64,
    pub rce_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkEvalReport {
    pub chunks: Vec<ChunkReport>,
    pub summary: PerClass<ClassSpread>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Splits time-ordered `records` into consecutive chunks of `chunk_size`
/// rows (the last may be shorter) and evaluates `predictor` on each.
pub fn chunk_eval(
    records: &[InteractionRecord],
    chunk_size: usize,
    predictor: &dyn Predictor,
) -> Result<ChunkEvalReport, HarnessError> {
    if chunk_size == 0 {
        return Err(HarnessError::Config("chunk size must be at least 1".into()));
    }
    if records.is_empty() {
        return Err(HarnessError::EmptySplit("evaluation"));
    }
    check_time_order(records)?;

    let chunks = records
        .par_chunks(chunk_size)
        .enumerate()
        .map(|(index, chunk)| {
            let scores = predictor.predict(chunk)?;
            for (class, s) in scores.iter() {
                if s.len() != chunk.len() {
                    return Err(HarnessError::PredictionLength {
                        class,
                        expected: chunk.len(),
                        got: s.len(),
                    });
                }
            }
            let report = metric_report(&scores, &label_columns(chunk))?;
            Ok(ChunkReport {
                index,
                first_timestamp: chunk[0].tweet_timestamp,
                last_timestamp: chunk[chunk.len() - 1].tweet_timestamp,
                rows: chunk.len(),
                report,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let summary = PerClass::from_fn(|c: EngagementClass| {
        let (prauc_mean, prauc_std) = mean_std(chunks.iter().map(|r| r.report.get(c).prauc));
        let (rce_mean, rce_std) = mean_std(chunks.iter().map(|r| r.report.get(c).rce));
        ClassSpread { prauc_mean, prauc_std, rce_mean, rce_std }
    });
    Ok(ChunkEvalReport { chunks, summary })
}

pub const CHUNK_CSV_HEADER: &str =
    "chunk,first_timestamp,last_timestamp,rows,class,prauc,rce,positive_rate";
pub const CHUNK_SUMMARY_CSV_HEADER: &str = "class,prauc_mean,prauc_std,rce_mean,rce_std";

impl ChunkEvalReport {
    /// One row per (chunk, class).
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CHUNK_CSV_HEADER}\n");
        for ch in &self.chunks {
            for (c, m) in ch.report.per_class().iter() {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    ch.index,
                    ch.first_timestamp,
                    ch.last_timestamp,
                    ch.rows,
                    c.name(),
                    m.prauc,
                    m.rce,
                    m.positive_rate
                ));
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = format!("{CHUNK_SUMMARY_CSV_HEADER}\n");
        for (c, m) in self.summary.iter() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                c.name(),
                m.prauc_mean,
                m.prauc_std,
                m.rce_mean,
                m.rce_std
            ));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chunk report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctr::compute_ctr;
    use crate::harness::{GenConfig, SyntheticGenerator};

    struct Short;

    impl Predictor for Short {
        fn predict(&self, r: &[InteractionRecord]) -> Result<PerClass<Vec<f64>>, HarnessError> {
            Ok(PerClass::from_fn(|c| {
                let n = if c == EngagementClass::Retweet { r.len() - 1 } else { r.len() };
                vec![0.5; n]
            }))
        }
    }

    fn data(rows: usize) -> Vec<InteractionRecord> {
        SyntheticGenerator::new(&GenConfig { rows, seed: 3, ..Default::default() })
            .unwrap()
            .collect()
    }

    #[test]
    fn single_chunk_equals_whole_set() {
        let recs = data(3000);
        let p = ConstantPredictor(compute_ctr(&recs).unwrap());
        let out = chunk_eval(&recs, 10_000, &p).unwrap();
        assert_eq!(out.chunks.len(), 1);
        let whole = metric_report(&p.predict(&recs).unwrap(), &label_columns(&recs)).unwrap();
        assert_eq!(out.chunks[0].report, whole);
    }

    #[test]
    fn constant_prauc_closed_form_per_chunk() {
        let recs = data(10_000);
        let p = ConstantPredictor(compute_ctr(&recs).unwrap());
        let out = chunk_eval(&recs, 2_500, &p).unwrap();
        assert_eq!(out.chunks.len(), 4);
        let total: usize = out.chunks.iter().map(|c| c.rows).sum();
        assert_eq!(total, recs.len());
        for ch in &out.chunks {
            for (_, m) in ch.report.per_class().iter() {
                assert!((m.prauc - (1.0 + m.positive_rate) / 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn length_mismatch_names_class() {
        let recs = data(100);
        let err = chunk_eval(&recs, 50, &Short).unwrap_err();
        assert!(err.to_string().contains("retweet"), "{err}");
    }

    #[test]
    fn unordered_input_rejected() {
        let mut recs = data(100);
        recs.swap(10, 90);
        let p = ConstantPredictor(compute_ctr(&recs).unwrap());
        assert!(matches!(chunk_eval(&recs, 10, &p), Err(HarnessError::Unordered(_))));
    }
}
