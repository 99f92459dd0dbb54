//! Class balance and per-user activity distribution of a dataset.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ingest::{EngagementClass, InteractionRecord, PerClass};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_rows: u64,
    pub positives: PerClass<u64>,
    /// Rows with no engagement of any class.
    pub pseudo_negatives: u64,
    /// Interactions per unique engaging user -> number of such users.
    pub user_histogram: BTreeMap<u64, u64>,
}

pub fn dataset_stats<'a, I>(records: I) -> DatasetStats
where
    I: IntoIterator<Item = &'a InteractionRecord>,
{
    let mut stats = DatasetStats::default();
    let mut per_user: HashMap<&str, u64> = HashMap::new();
    for r in records {
        stats.n_rows += 1;
        let mut any = false;
        for c in EngagementClass::ALL {
            if r.is_positive(c) {
                stats.positives[c] += 1;
                any = true;
            }
        }
        if !any {
            stats.pseudo_negatives += 1;
        }
        *per_user.entry(r.user_id.as_str()).or_default() += 1;
    }
    for count in per_user.into_values() {
        *stats.user_histogram.entry(count).or_default() += 1;
    }
    stats
}

impl DatasetStats {
    pub fn rate(&self, count: u64) -> f64 {
        if self.n_rows == 0 {
            0.0
        } else {
            count as f64 / self.n_rows as f64
        }
    }

    /// `class,count,rate`, one row per class plus `pseudo_negative`.
    pub fn class_csv(&self) -> String {
        let mut s = String::from("class,count,rate\n");
        for (c, &n) in self.positives.iter() {
            s.push_str(&format!("{},{},{}\n", c.name(), n, self.rate(n)));
        }
        s.push_str(&format!(
            "pseudo_negative,{},{}\n",
            self.pseudo_negatives,
            self.rate(self.pseudo_negatives)
        ));
        s
    }

    /// `interactions_per_user,users`, ascending.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("interactions_per_user,users\n");
        for (k, v) in &self.user_histogram {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    /// Share of users with at most `k` interactions.
    pub fn user_share_at_most(&self, k: u64) -> f64 {
        let total: u64 = self.user_histogram.values().sum();
        if total == 0 {
            return 0.0;
        }
        let low: u64 = self.user_histogram.range(..=k).map(|(_, v)| v).sum();
        low as f64 / total as f64
    }
}
