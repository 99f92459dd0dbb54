//! Fixtures and brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use engage::features::{N_FEATURES, SYNTHETIC_VOCABULARY};
use engage::harness::{GenConfig, SyntheticGenerator};
use engage::ingest::{EngagementClass, InteractionRecord};

/// Generated records with small populations so ids repeat often.
pub fn fixture(rows: usize, seed: u64) -> Vec<InteractionRecord> {
    let cfg = GenConfig {
        rows,
        authors: 40,
        users: 150,
        languages: 6,
        cta_rate: 0.3,
        seed,
        ..Default::default()
    };
    SyntheticGenerator::new(&cfg).unwrap().collect()
}

fn mean(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn distinct<'a>(ids: impl Iterator<Item = &'a str>) -> usize {
    let mut v: Vec<&str> = ids.collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn first_seen<T: PartialEq + Clone>(values: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// 18 profile features of one side of the pair, recomputed from scratch.
fn profile(
    rows: &[&InteractionRecord],
    counterpart: impl Fn(&InteractionRecord) -> &str,
) -> Vec<f64> {
    let n = rows.len();
    let mut f = vec![0.0; 18];
    for c in EngagementClass::ALL {
        let pos: Vec<&&InteractionRecord> = rows.iter().filter(|r| r.is_positive(c)).collect();
        f[c.index()] = pos.len() as f64;
        f[4 + c.index()] = mean(pos.len(), n);
        f[8 + c.index()] = distinct(pos.iter().map(|r| counterpart(r))) as f64;
    }
    f[12] = n as f64;
    f[13] = f[..4].iter().sum();
    f[14] = mean(rows.iter().filter(|r| r.any_positive()).count(), n);
    f[15] = mean(rows.iter().map(|r| r.text_token_ids.len()).sum(), n);
    f[16] = mean(rows.iter().map(|r| r.hashtag_ids.len()).sum(), n);
    f[17] = mean(rows.iter().filter(|r| r.media_count > 0).count(), n);
    f
}

/// Every feature of `record` recomputed by scanning `history`.
pub fn oracle_features(record: &InteractionRecord, history: &[InteractionRecord]) -> Vec<f64> {
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    let code = |pos: Option<usize>| pos.map_or(-1.0, |p| p as f64);
    let types = first_seen(history.iter().map(|r| r.tweet_type));
    let langs = first_seen(history.iter().map(|r| r.language_id.clone()));

    let mut f = vec![
        record.hashtag_ids.len() as f64,
        record.media_count as f64,
        record.link_count as f64,
        record.domain_count as f64,
        record.text_token_ids.len() as f64,
        code(types.iter().position(|&t| t == record.tweet_type)),
        code(langs.iter().position(|l| *l == record.language_id)),
        record.author_follower_count as f64,
        record.author_following_count as f64,
        b(record.author_verified),
        record.user_follower_count as f64,
        b(record.engagee_follows_engager),
    ];

    let by_author: Vec<&InteractionRecord> =
        history.iter().filter(|r| r.author_id == record.author_id).collect();
    f.extend(profile(&by_author, |r| &r.user_id));
    let by_user: Vec<&InteractionRecord> =
        history.iter().filter(|r| r.user_id == record.user_id).collect();
    f.extend(profile(&by_user, |r| &r.author_id));

    f.push(
        by_user
            .iter()
            .filter(|r| r.language_id == record.language_id && r.any_positive())
            .count() as f64,
    );
    for c in EngagementClass::ALL {
        f.push(
            by_user
                .iter()
                .filter(|r| r.author_id == record.author_id && r.is_positive(c))
                .count() as f64,
        );
    }

    let words = ["share", "retweet", "reply", "comment"];
    let mut hits = 0.0;
    for w in words {
        let found = record.text_token_ids.iter().any(|t| {
            SYNTHETIC_VOCABULARY
                .iter()
                .any(|(id, word)| id == t && word.to_lowercase() == w)
        });
        f.push(b(found));
        hits += b(found);
    }
    f.push(hits);
    f.push(b(hits > 0.0));
    assert_eq!(f.len(), N_FEATURES);
    f
}
