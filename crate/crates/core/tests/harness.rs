//! End-to-end properties of the experiment layer.

mod common;

use engage::ctr::compute_ctr;
use engage::features::{build_profiles, extract_matrix, VocabularyConfig};
use engage::gbdt::TrainParams;
use engage::harness::{
    chunk_eval, dataset_stats, split_at_time, train_per_class, ConstantPredictor, GbdtPredictor,
    GenConfig, SyntheticGenerator, DEFAULT_RATES,
};
use engage::ingest::{label_columns, EngagementClass, InteractionRecord, PerClass};

const WEEK: u64 = 7 * 24 * 3600;

fn generate(cfg: &GenConfig) -> Vec<InteractionRecord> {
    SyntheticGenerator::new(cfg).unwrap().collect()
}

#[test]
fn million_rows_hit_configured_rates() {
    let n = 1_000_000;
    let stats = dataset_stats(&generate(&GenConfig { rows: n, seed: 21, ..Default::default() }));
    for (c, &r) in DEFAULT_RATES.iter() {
        let got = stats.positives[c] as f64 / n as f64;
        let three_sigma = 3.0 * (r * (1.0 - r) / n as f64).sqrt();
        assert!((got - r).abs() <= 0.002, "{c}: {got}");
        assert!((got - r).abs() <= three_sigma, "{c}: {got} vs {r} ± {three_sigma}");
    }
}

#[test]
fn constant_predictor_is_stable_across_chunks() {
    let records = generate(&GenConfig { rows: 400_000, seed: 22, ..Default::default() });
    let predictor = ConstantPredictor(compute_ctr(&records).unwrap());
    let report = chunk_eval(&records, 100_000, &predictor).unwrap();
    assert_eq!(report.chunks.len(), 4);
    let rows: usize = report.chunks.iter().map(|c| c.rows).sum();
    assert_eq!(rows, records.len());
    for chunk in &report.chunks {
        for (c, m) in chunk.report.per_class().iter() {
            assert!((m.prauc - (1.0 + m.positive_rate) / 2.0).abs() < 1e-9, "{c}");
            assert!(m.rce.abs() <= 0.05, "{c}: rce {}", m.rce);
        }
    }
}

#[test]
fn drifted_chunks_lower_model_rce_only() {
    let cfg = GenConfig {
        rows: 120_000,
        users: 5_000,
        authors: 500,
        week2_fraction: 0.5,
        drift: PerClass([0.5; 4]),
        seed: 23,
        ..Default::default()
    };
    let records = generate(&cfg);
    let (week1, week2) = split_at_time(&records, cfg.start_timestamp + WEEK);
    let (history, rest) = week1.split_at(week1.len() / 2);
    let (train, valid) = rest.split_at(rest.len() * 4 / 5);
    let tables = build_profiles(history);
    let vocab = VocabularyConfig::synthetic();
    let models = train_per_class(
        &extract_matrix(train, &tables, &vocab),
        &label_columns(train),
        &extract_matrix(valid, &tables, &vocab),
        &label_columns(valid),
        &TrainParams { seed: 23, ..Default::default() },
    )
    .unwrap();
    let gbdt = GbdtPredictor { tables, vocab, models };
    let constant = ConstantPredictor(compute_ctr(train).unwrap());

    let chunk = valid.len();
    let same_week = chunk_eval(valid, chunk, &gbdt).unwrap();
    let drifted = chunk_eval(&week2[..chunk], chunk, &gbdt).unwrap();
    let like = EngagementClass::Like;
    assert!(
        drifted.chunks[0].report.get(like).rce < same_week.chunks[0].report.get(like).rce,
        "like rce did not drop"
    );
    for ch in chunk_eval(week2, 10_000, &constant).unwrap().chunks {
        for (_, m) in ch.report.per_class().iter() {
            assert!((m.prauc - (1.0 + m.positive_rate) / 2.0).abs() < 1e-9);
        }
    }
}

#[test]
fn sparse_users_concentrate_histogram_at_one_or_two() {
    let records = generate(&GenConfig { rows: 20_000, users: 200_000, user_skew: 0.0, seed: 24, ..Default::default() });
    let stats = dataset_stats(&records);
    assert!(stats.user_share_at_most(2) > 0.95, "{}", stats.user_share_at_most(2));
    let total: u64 = stats.user_histogram.iter().map(|(k, v)| k * v).sum();
    assert_eq!(total, stats.n_rows);
}
