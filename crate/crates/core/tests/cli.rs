//! The binary against the library on identical inputs.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use engage::ctr::{compute_ctr, tune_constants, tuning_csv, Candidate};
use engage::harness::{dataset_stats, generate_to_path, leaderboard, leaderboard_csv, GenConfig};
use engage::ingest::{label_columns, parse_dataset, FormatConfig, InteractionRecord};
use engage::metrics::{metric_report, predictions_csv, MetricReport};

fn engage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_engage")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = engage(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn load(path: &Path) -> Vec<InteractionRecord> {
    let file = std::fs::File::open(path).unwrap();
    parse_dataset(std::io::BufReader::new(file), &FormatConfig::default())
        .unwrap()
        .collect_all()
        .unwrap()
        .0
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(rows: usize, seed: u64) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        let cfg = GenConfig { rows, seed, ..Default::default() };
        generate_to_path(&cfg, &root.join("data.tsv"), &FormatConfig::default()).unwrap();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).to_str().unwrap().to_owned()
    }
}

#[test]
fn gen_matches_library_and_ctr_is_near_defaults() {
    let f = Fixture::new(100_000, 7);
    ok(&["gen", "--rows", "100000", "--seed", "7", "-o", &f.path("cli.tsv")]);
    assert_eq!(std::fs::read(f.path("cli.tsv")).unwrap(), std::fs::read(f.path("data.tsv")).unwrap());

    let stdout = ok(&["ctr", "-i", &f.path("data.tsv")]);
    let table = compute_ctr(&load(Path::new(&f.path("data.tsv")))).unwrap();
    assert_eq!(stdout, table.to_csv());
    for (c, &r) in engage::harness::DEFAULT_RATES.iter() {
        assert!((table.ctr(c) - r).abs() < 0.01, "{c}: {}", table.ctr(c));
    }
}

#[test]
fn tune_constants_matches_library() {
    let f = Fixture::new(20_000, 8);
    let stdout = ok(&[
        "tune-constants",
        "-i",
        &f.path("data.tsv"),
        "--candidates",
        "ctr,random,0,0.1,0.3,0.5,1",
        "--train-fraction",
        "0.5",
        "--seed",
        "3",
    ]);
    let records = load(Path::new(&f.path("data.tsv")));
    let (train, eval) = records.split_at(10_000);
    let candidates: Vec<Candidate> =
        ["ctr", "random", "0", "0.1", "0.3", "0.5", "1"].iter().map(|s| s.parse().unwrap()).collect();
    let rows = tune_constants(&compute_ctr(train).unwrap(), eval, &candidates, 3).unwrap();
    assert_eq!(stdout, tuning_csv(&rows));
    assert_eq!(stdout.lines().count(), 8);
}

#[test]
fn stats_matches_library() {
    let f = Fixture::new(5_000, 9);
    let stdout = ok(&["stats", "-i", &f.path("data.tsv"), "--histogram", &f.path("h.csv")]);
    let stats = dataset_stats(&load(Path::new(&f.path("data.tsv"))));
    assert_eq!(stdout, stats.class_csv());
    assert_eq!(std::fs::read_to_string(f.path("h.csv")).unwrap(), stats.histogram_csv());
}

#[test]
fn predict_evaluate_leaderboard_pipeline() {
    let f = Fixture::new(8_000, 10);
    let data = f.path("data.tsv");
    ok(&["ctr", "-i", &data, "-o", &f.path("ctr.csv")]);
    ok(&["predict", "-i", &data, "--ctr", &f.path("ctr.csv"), "-o", &f.path("const.csv")]);
    ok(&["build-features", "-i", &data, "-o", &f.path("tables")]);
    ok(&["train", "-i", &data, "--tables", &f.path("tables"), "--rounds", "15", "-o", &f.path("models")]);
    ok(&["predict", "-i", &data, "--tables", &f.path("tables"), "--models", &f.path("models"), "-o", &f.path("gbdt.csv")]);

    let records = load(Path::new(&data));
    let labels = label_columns(&records);
    let table = compute_ctr(&records).unwrap();
    let constant = engage::ctr::predict_constant(&table, records.len());
    assert_eq!(std::fs::read_to_string(f.path("const.csv")).unwrap(), predictions_csv(&constant));

    let mut reports = Vec::new();
    for name in ["const", "gbdt"] {
        let out = f.path(&format!("{name}_report.csv"));
        ok(&["evaluate", "-i", &data, "--predictions", &f.path(&format!("{name}.csv")), "-o", &out]);
        let text = std::fs::read_to_string(&out).unwrap();
        reports.push((name.to_owned(), MetricReport::from_csv(&text).unwrap()));
    }
    assert_eq!(reports[0].1, metric_report(&constant, &labels).unwrap());

    let stdout = ok(&[
        "leaderboard",
        "--submission",
        &format!("const={}", f.path("const_report.csv")),
        "--submission",
        &format!("gbdt={}", f.path("gbdt_report.csv")),
    ]);
    assert_eq!(stdout, leaderboard_csv(&leaderboard(&reports)));

    let chunks = ok(&["chunk-eval", "-i", &data, "--ctr", &f.path("ctr.csv"), "--chunk-size", "2000"]);
    assert_eq!(chunks.lines().count(), 1 + 4 * 4);
}

#[test]
fn evaluate_length_mismatch_exits_2_naming_class() {
    let f = Fixture::new(200, 11);
    let text = "like,reply,retweet,rwc\n0.5,0.5,0.5,0.5\n";
    std::fs::write(f.path("short.csv"), text).unwrap();
    let out = engage(&["evaluate", "-i", &f.path("data.tsv"), "--predictions", &f.path("short.csv")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("class like"), "{err}");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(engage(&["nope"]).status.code(), Some(1));
    assert_eq!(engage(&["ctr"]).status.code(), Some(1));
    assert_eq!(engage(&["ctr", "-i", "/no/such/file"]).status.code(), Some(1));
    assert_eq!(engage(&["gen", "-o", "/tmp/x.tsv", "--rates", "1,2"]).status.code(), Some(1));
    assert_eq!(engage(&["train", "--help"]).status.code(), Some(0));
}

#[test]
fn every_run_prints_a_reproducibility_line() {
    let f = Fixture::new(100, 12);
    let out = engage(&["--seed", "5", "stats", "-i", &f.path("data.tsv")]);
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().next().unwrap();
    assert!(line.starts_with("engage stats: seed=5 config_sha256="), "{line}");
    assert_eq!(line.rsplit('=').next().unwrap().len(), 64);
}

#[test]
fn custom_delimiters_round_trip() {
    let f = Fixture::new(300, 13);
    let piped = f.path("piped.txt");
    ok(&["gen", "--rows", "300", "--seed", "13", "--field-delim", "|", "--list-delim", ";", "-o", &piped]);
    let a = ok(&["ctr", "-i", &f.path("data.tsv")]);
    let b = ok(&["ctr", "-i", &piped, "--field-delim", "0x7c", "--list-delim", ";"]);
    assert_eq!(a, b);
}
