//! PRAUC and RCE, the two leaderboard metrics.
//!
//! Cross entropy clamps every prediction to `[EPSILON, 1 - EPSILON]` before
//! taking logarithms, so constant predictors of exactly 0 or 1 still score a
//! finite (very negative) RCE.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EngagementClass, PerClass};

pub const EPSILON: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {predictions} predictions vs {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("empty input")]
    Empty,
    #[error("degenerate naive baseline: labels are all {}", if *.all_positive { "positive" } else { "negative" })]
    DegenerateBaseline { all_positive: bool },
    #[error("no positive labels")]
    NoPositives,
    #[error("NaN score at index {0}")]
    NanScore(usize),
    #[error("class {class}: {source}")]
    Class {
        class: EngagementClass,
        #[source]
        source: Box<MetricError>,
    },
}

impl MetricError {
    pub fn in_class(self, class: EngagementClass) -> MetricError {
        MetricError::Class { class, source: Box::new(self) }
    }
}

/// Logarithm used by cross entropy. RCE does not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Natural,
    Two,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
        }
    }
}

fn check_lengths(predictions: usize, labels: usize) -> Result<(), MetricError> {
    if predictions != labels {
        return Err(MetricError::LengthMismatch { predictions, labels });
    }
    if labels == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Neumaier-compensated mean log-loss over `(prediction, label)` pairs.
fn mean_log_loss(pairs: impl Iterator<Item = (f64, bool)>, base: LogBase) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut n = 0usize;
    for (p, y) in pairs {
        let p = p.clamp(EPSILON, 1.0 - EPSILON);
        let term = if y { base.log(p) } else { base.log(1.0 - p) };
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        n += 1;
    }
    -(sum + comp) / n as f64
}

/// Mean negative log-likelihood (natural log) of `labels` under `predictions`.
pub fn cross_entropy(predictions: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    cross_entropy_with_base(predictions, labels, LogBase::Natural)
}

pub fn cross_entropy_with_base(
    predictions: &[f64],
    labels: &[bool],
    base: LogBase,
) -> Result<f64, MetricError> {
    check_lengths(predictions.len(), labels.len())?;
    Ok(mean_log_loss(
        predictions.iter().copied().zip(labels.iter().copied()),
        base,
    ))
}

/// Fraction of `true` labels.
pub fn positive_rate(labels: &[bool]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64
}

/// Relative cross entropy in percent: `100 * (1 - CE(pred) / CE(naive))`,
/// where the naive predictor outputs the labels' own positive rate.
pub fn rce(predictions: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    rce_with_base(predictions, labels, LogBase::Natural)
}

pub fn rce_with_base(predictions: &[f64], labels: &[bool], base: LogBase) -> Result<f64, MetricError> {
    check_lengths(predictions.len(), labels.len())?;
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(MetricError::DegenerateBaseline { all_positive: positives > 0 });
    }
    let rate = positives as f64 / labels.len() as f64;
    let model = mean_log_loss(predictions.iter().copied().zip(labels.iter().copied()), base);
    let naive = mean_log_loss(std::iter::repeat(rate).zip(labels.iter().copied()), base);
    Ok(100.0 * (1.0 - model / naive))
}

/// Area under the precision/recall curve.
///
/// Thresholds are the distinct scores in descending order; tied scores are
/// admitted together. The curve starts at (recall 0, precision 1) and is
/// integrated with the trapezoidal rule.
pub fn prauc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(MetricError::NanScore(i));
    }
    let total_pos = labels.iter().filter(|&&y| y).count();
    if total_pos == 0 {
        return Err(MetricError::NoPositives);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let total_pos = total_pos as f64;
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut prev_recall, mut prev_precision) = (0.0f64, 1.0f64);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * (precision + prev_precision) / 2.0;
        prev_recall = recall;
        prev_precision = precision;
    }
    Ok(area)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub prauc: f64,
    pub rce: f64,
    pub positive_rate: f64,
}

/// PRAUC, RCE and positive rate for each engagement class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub like: ClassMetrics,
    pub reply: ClassMetrics,
    pub retweet: ClassMetrics,
    pub rwc: ClassMetrics,
}

pub const REPORT_CSV_HEADER: &str = "class,prauc,rce,positive_rate";

impl MetricReport {
    pub fn from_per_class(m: PerClass<ClassMetrics>) -> Self {
        let [like, reply, retweet, rwc] = m.0;
        MetricReport { like, reply, retweet, rwc }
    }

    pub fn per_class(&self) -> PerClass<ClassMetrics> {
        PerClass([self.like, self.reply, self.retweet, self.rwc])
    }

    pub fn get(&self, class: EngagementClass) -> ClassMetrics {
        self.per_class()[class]
    }

    pub fn mean_prauc(&self) -> f64 {
        self.per_class().0.iter().map(|m| m.prauc).sum::<f64>() / 4.0
    }

    pub fn mean_rce(&self) -> f64 {
        self.per_class().0.iter().map(|m| m.rce).sum::<f64>() / 4.0
    }

    /// CSV with columns `class,prauc,rce,positive_rate`, one row per class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for (c, m) in self.per_class().iter() {
            s.push_str(&format!("{},{},{},{}\n", c.name(), m.prauc, m.rce, m.positive_rate));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(REPORT_CSV_HEADER) {
            return Err(format!("expected header '{REPORT_CSV_HEADER}'"));
        }
        let mut found: PerClass<Option<ClassMetrics>> = PerClass::default();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 4 {
                return Err(format!("malformed row '{line}'"));
            }
            let class: EngagementClass = cols[0].parse()?;
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("'{s}': {e}"));
            found[class] = Some(ClassMetrics {
                prauc: num(cols[1])?,
                rce: num(cols[2])?,
                positive_rate: num(cols[3])?,
            });
        }
        found
            .try_map(|c, m| m.ok_or_else(|| format!("missing class {c}")))
            .map(MetricReport::from_per_class)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }
}

/// Evaluates every class; errors name the class they came from.
pub fn metric_report(
    predictions: &PerClass<Vec<f64>>,
    labels: &PerClass<Vec<bool>>,
) -> Result<MetricReport, MetricError> {
    let per = predictions.try_map(|c, preds| {
        let ys = &labels[c];
        let eval = || -> Result<ClassMetrics, MetricError> {
            Ok(ClassMetrics {
                prauc: prauc(preds, ys)?,
                rce: rce(preds, ys)?,
                positive_rate: positive_rate(ys),
            })
        };
        eval().map_err(|e| e.in_class(c))
    })?;
    Ok(MetricReport::from_per_class(per))
}

pub const PREDICTIONS_CSV_HEADER: &str = "like,reply,retweet,rwc";

/// One row per record, one column per class. Values round-trip exactly.
pub fn predictions_csv(predictions: &PerClass<Vec<f64>>) -> String {
    let n = predictions[EngagementClass::Like].len();
    let mut s = format!("{PREDICTIONS_CSV_HEADER}\n");
    for i in 0..n {
        let row: Vec<String> = predictions.0.iter().map(|p| p[i].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_predictions_csv(text: &str) -> Result<PerClass<Vec<f64>>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(PREDICTIONS_CSV_HEADER) {
        return Err(format!("expected header '{PREDICTIONS_CSV_HEADER}'"));
    }
    let mut out: PerClass<Vec<f64>> = PerClass::default();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 4 {
            return Err(format!("line {}: expected 4 columns", i + 2));
        }
        for (c, col) in EngagementClass::ALL.into_iter().zip(cols) {
            let v = col.parse::<f64>().map_err(|e| format!("line {}: '{col}': {e}", i + 2))?;
            out[c].push(v);
        }
    }
    Ok(out)
}
