//! Per-class click-through-rate constants and the constant-tuning experiment.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{label_columns, EngagementClass, InteractionRecord, PerClass};
use crate::metrics::{self, MetricError};

#[derive(Debug, Error, PartialEq)]
pub enum CtrError {
    #[error("cannot compute CTR over an empty dataset")]
    Empty,
    #[error("no candidates given")]
    NoCandidates,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("malformed CTR table: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCtr {
    pub positive_count: u64,
    pub ctr: f64,
}

/// Positive rate of each class over one dataset: positives / all rows,
/// pseudo-negatives included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtrTable {
    pub n_rows: u64,
    pub classes: PerClass<ClassCtr>,
}

pub const CTR_CSV_HEADER: &str = "class,positive_count,n_rows,ctr";

impl CtrTable {
    pub fn ctr(&self, class: EngagementClass) -> f64 {
        self.classes[class].ctr
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CTR_CSV_HEADER}\n");
        for (c, v) in self.classes.iter() {
            s.push_str(&format!("{},{},{},{}\n", c, v.positive_count, self.n_rows, v.ctr));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, CtrError> {
        let bad = |m: String| CtrError::Parse(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(CTR_CSV_HEADER) {
            return Err(bad(format!("expected header '{CTR_CSV_HEADER}'")));
        }
        let mut counts: PerClass<Option<u64>> = PerClass::default();
        let mut n_rows = None;
        for line in lines {
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 4 {
                return Err(bad(format!("malformed row '{line}'")));
            }
            let class: EngagementClass = cols[0].parse().map_err(bad)?;
            let pos: u64 = cols[1].parse().map_err(|_| bad(format!("bad count '{}'", cols[1])))?;
            let n: u64 = cols[2].parse().map_err(|_| bad(format!("bad n_rows '{}'", cols[2])))?;
            if *n_rows.get_or_insert(n) != n {
                return Err(bad("n_rows differs between classes".into()));
            }
            counts[class] = Some(pos);
        }
        let n_rows = n_rows.ok_or_else(|| bad("no rows".into()))?;
        let mut counter = CtrCounter { n_rows, positives: PerClass::default() };
        for c in EngagementClass::ALL {
            counter.positives[c] = counts[c].ok_or_else(|| bad(format!("missing class {c}")))?;
        }
        counter.finish()
    }
}

/// Streaming positive counter; partial counters merge exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CtrCounter {
    pub n_rows: u64,
    pub positives: PerClass<u64>,
}

impl CtrCounter {
    pub fn observe(&mut self, record: &InteractionRecord) {
        self.n_rows += 1;
        for c in EngagementClass::ALL {
            if record.is_positive(c) {
                self.positives[c] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &CtrCounter) {
        self.n_rows += other.n_rows;
        for c in EngagementClass::ALL {
            self.positives[c] += other.positives[c];
        }
    }

    pub fn finish(&self) -> Result<CtrTable, CtrError> {
        if self.n_rows == 0 {
            return Err(CtrError::Empty);
        }
        Ok(CtrTable {
            n_rows: self.n_rows,
            classes: self.positives.map(|_, &p| ClassCtr {
                positive_count: p,
                ctr: p as f64 / self.n_rows as f64,
            }),
        })
    }
}

pub fn compute_ctr<'a, I>(records: I) -> Result<CtrTable, CtrError>
where
    I: IntoIterator<Item = &'a InteractionRecord>,
{
    let mut counter = CtrCounter::default();
    for r in records {
        counter.observe(r);
    }
    counter.finish()
}

/// Length-`n` constant prediction vectors, one per class.
pub fn predict_constant(table: &CtrTable, n: usize) -> PerClass<Vec<f64>> {
    table.classes.map(|_, v| vec![v.ctr; n])
}

/// A row of the constant-tuning experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Candidate {
    /// Per-class CTR of the training split.
    Ctr,
    /// Independent uniform(0, 1) score per row.
    Random,
    Constant(f64),
}

impl Candidate {
    /// The candidate list of the original constant-tuning table.
    pub fn standard_set() -> Vec<Candidate> {
        vec![
            Candidate::Ctr,
            Candidate::Random,
            Candidate::Constant(0.0),
            Candidate::Constant(0.1),
            Candidate::Constant(0.3),
            Candidate::Constant(0.5),
            Candidate::Constant(1.0),
        ]
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::Ctr => f.write_str("CTR"),
            Candidate::Random => f.write_str("Random"),
            Candidate::Constant(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Candidate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ctr" => Ok(Candidate::Ctr),
            "random" => Ok(Candidate::Random),
            other => {
                let v: f64 = other.parse().map_err(|_| format!("bad candidate '{s}'"))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("constant candidate {v} outside [0, 1]"));
                }
                Ok(Candidate::Constant(v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningRow {
    pub candidate: Candidate,
    pub rce: PerClass<f64>,
    pub prauc: PerClass<f64>,
}

pub const TUNING_CSV_HEADER: &str =
    "candidate,rce_like,rce_reply,rce_retweet,rce_rwc,prauc_like,prauc_reply,prauc_retweet,prauc_rwc";

pub fn tuning_csv(rows: &[TuningRow]) -> String {
    let mut s = format!("{TUNING_CSV_HEADER}\n");
    for r in rows {
        s.push_str(&r.candidate.to_string());
        for v in r.rce.0.iter().chain(r.prauc.0.iter()) {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

/// Scores every candidate on `eval_records`. `training` supplies the values
/// of the `CTR` candidate; `seed` drives the `Random` candidate.
pub fn tune_constants(
    training: &CtrTable,
    eval_records: &[InteractionRecord],
    candidates: &[Candidate],
    seed: u64,
) -> Result<Vec<TuningRow>, CtrError> {
    if candidates.is_empty() {
        return Err(CtrError::NoCandidates);
    }
    let labels = label_columns(eval_records);
    let n = eval_records.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    candidates
        .iter()
        .map(|&cand| {
            let scores: PerClass<Vec<f64>> = match cand {
                Candidate::Ctr => predict_constant(training, n),
                Candidate::Constant(v) => PerClass::from_fn(|_| vec![v; n]),
                Candidate::Random => {
                    PerClass::from_fn(|_| (0..n).map(|_| rng.random::<f64>()).collect())
                }
            };
            let per = scores.try_map(|c, s| {
                let ys = &labels[c];
                let eval = || Ok::<_, MetricError>((metrics::rce(s, ys)?, metrics::prauc(s, ys)?));
                eval().map_err(|e| e.in_class(c))
            })?;
            Ok(TuningRow {
                candidate: cand,
                rce: per.map(|_, v| v.0),
                prauc: per.map(|_, v| v.1),
            })
        })
        .collect()
}
