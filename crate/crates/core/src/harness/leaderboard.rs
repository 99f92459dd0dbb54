//! Rank-sum leaderboard over mean PRAUC and mean RCE.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub name: String,
    pub mean_prauc: f64,
    pub mean_rce: f64,
    pub prauc_rank: usize,
    pub rce_rank: usize,
    pub rank_sum: usize,
    pub position: usize,
}

/// Competition ranks, best (largest) value first: tied values share the
/// smallest rank and the next rank skips.
fn competition_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&v| 1 + values.iter().filter(|&&w| w > v).count())
        .collect()
}

/// Ranks submissions. Final order is ascending rank sum, then higher mean
/// RCE, then name.
pub fn leaderboard(submissions: &[(String, MetricReport)]) -> Vec<LeaderboardEntry> {
    let prauc: Vec<f64> = submissions.iter().map(|(_, r)| r.mean_prauc()).collect();
    let rce: Vec<f64> = submissions.iter().map(|(_, r)| r.mean_rce()).collect();
    let prauc_ranks = competition_ranks(&prauc);
    let rce_ranks = competition_ranks(&rce);

    let mut entries: Vec<LeaderboardEntry> = submissions
        .iter()
        .enumerate()
        .map(|(i, (name, _))| LeaderboardEntry {
            name: name.clone(),
            mean_prauc: prauc[i],
            mean_rce: rce[i],
            prauc_rank: prauc_ranks[i],
            rce_rank: rce_ranks[i],
            rank_sum: prauc_ranks[i] + rce_ranks[i],
            position: 0,
        })
        .collect();
    entries.sort_by(|a, b| {
        a.rank_sum
            .cmp(&b.rank_sum)
            .then_with(|| b.mean_rce.partial_cmp(&a.mean_rce).unwrap_or(Ordering::Equal))
            .then_with(|| a.name.cmp(&b.name))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.position = i + 1;
    }
    entries
}

pub const LEADERBOARD_CSV_HEADER: &str =
    "position,name,mean_prauc,mean_rce,prauc_rank,rce_rank,rank_sum";

pub fn leaderboard_csv(entries: &[LeaderboardEntry]) -> String {
    let mut s = format!("{LEADERBOARD_CSV_HEADER}\n");
    for e in entries {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.position, e.name, e.mean_prauc, e.mean_rce, e.prauc_rank, e.rce_rank, e.rank_sum
        ));
    }
    s
}
