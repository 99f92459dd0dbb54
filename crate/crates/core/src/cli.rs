//! `engage` command-line front end. Every subcommand parses its inputs,
//! makes one library call and writes that call's serialized result.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ctr::{compute_ctr, tune_constants, tuning_csv, Candidate, CtrTable};
use crate::features::{
    build_profiles, extract_matrix, write_matrix_csv, FeatureTables, VocabularyConfig,
};
use crate::gbdt::{GbdtModel, Sampling, TrainParams};
use crate::harness::{
    chunk_eval, dataset_stats, generate_to_path, leaderboard, leaderboard_csv, run_comparison,
    train_per_class, ConstantPredictor, GbdtPredictor, GenConfig, Predictor, SplitConfig,
    DEFAULT_CHUNK_SIZE,
};
use crate::ingest::{label_columns, parse_dataset, FormatConfig, InteractionRecord, PerClass};
use crate::metrics::{metric_report, parse_predictions_csv, predictions_csv, MetricReport};

#[derive(Debug, Parser, Serialize)]
#[command(name = "engage", version, about = "Engagement prediction pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Cap on worker threads. Output does not depend on it.
    #[arg(long, global = true, env = "ENGAGE_THREADS")]
    #[serde(skip)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Field delimiter: a single character, `\t`, or a hex byte such as `0x01`.
    #[arg(long, global = true, value_parser = parse_delimiter)]
    pub field_delim: Option<u8>,
    /// List delimiter, same syntax as `--field-delim`.
    #[arg(long, global = true, value_parser = parse_delimiter)]
    pub list_delim: Option<u8>,
    /// Report parse rejections and training progress on stderr.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Write a synthetic dataset.
    Gen(GenArgs),
    /// Class counts and per-user interaction histogram.
    Stats(StatsArgs),
    /// Per-class click-through rates.
    Ctr(IoArgs),
    /// Score constant predictors against an evaluation set.
    TuneConstants(TuneArgs),
    /// Precompute author, user, language and prior-action tables.
    BuildFeatures(BuildFeaturesArgs),
    /// Write the feature matrix of a dataset.
    Extract(ExtractArgs),
    /// Train one boosted model per class.
    Train(TrainArgs),
    /// Write per-class predictions.
    Predict(PredictArgs),
    /// PRAUC and RCE of a predictions file.
    Evaluate(EvaluateArgs),
    /// Evaluate a predictor on consecutive time chunks.
    ChunkEval(ChunkEvalArgs),
    /// Rank submissions by mean PRAUC and mean RCE.
    Leaderboard(LeaderboardArgs),
    /// CTR baseline against boosted models on valid and test splits.
    Compare(CompareArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Stats(_) => "stats",
            Command::Ctr(_) => "ctr",
            Command::TuneConstants(_) => "tune-constants",
            Command::BuildFeatures(_) => "build-features",
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::ChunkEval(_) => "chunk-eval",
            Command::Leaderboard(_) => "leaderboard",
            Command::Compare(_) => "compare",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IoArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Defaults to stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub rows: usize,
    /// Four comma-separated rates: like,reply,retweet,rwc.
    #[arg(long)]
    pub rates: Option<String>,
    #[arg(long)]
    pub authors: Option<usize>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub propensity_sigma: Option<f64>,
    #[arg(long)]
    pub languages: Option<usize>,
    #[arg(long)]
    pub language_skew: Option<f64>,
    #[arg(long)]
    pub week2_fraction: Option<f64>,
    /// Second-week rate multiplier: one value for all classes, or four.
    #[arg(long)]
    pub drift: Option<String>,
    #[arg(long)]
    pub cta_rate: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Where to write the per-user interaction histogram.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Separate evaluation set; the whole input then feeds the CTR table.
    #[arg(long, conflicts_with = "train_fraction")]
    pub eval: Option<PathBuf>,
    /// Leading share of input rows that feeds the CTR table; the rest is evaluated.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long, default_value = "ctr,random,0,0.1,0.3,0.5,1")]
    pub candidates: String,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildFeaturesArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Output directory for the table files.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long)]
    pub tables: PathBuf,
    /// Tab-separated `token_id<TAB>word` file. Defaults to the synthetic vocabulary.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ParamArgs {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub early_stopping_rounds: Option<usize>,
    #[arg(long)]
    pub subsample: Option<f64>,
    /// `uniform` or `gradient`.
    #[arg(long, value_parser = parse_sampling)]
    pub sampling: Option<Sampling>,
    #[arg(long)]
    pub max_delta_step: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub min_child_weight: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self, seed: u64) -> TrainParams {
        let d = TrainParams::default();
        TrainParams {
            eta: self.eta.unwrap_or(d.eta),
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            rounds: self.rounds.unwrap_or(d.rounds),
            early_stopping_rounds: self.early_stopping_rounds.unwrap_or(d.early_stopping_rounds),
            subsample: self.subsample.unwrap_or(d.subsample),
            sampling: self.sampling.unwrap_or(d.sampling),
            max_delta_step: self.max_delta_step.unwrap_or(d.max_delta_step),
            lambda: self.lambda.unwrap_or(d.lambda),
            bins: self.bins.unwrap_or(d.bins),
            min_child_weight: self.min_child_weight.unwrap_or(d.min_child_weight),
            seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long)]
    pub tables: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Validation set for early stopping.
    #[arg(long, conflicts_with = "valid_fraction")]
    pub valid: Option<PathBuf>,
    /// Trailing share of input rows held out for early stopping.
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    /// Output directory; one `<class>.json` per class.
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictorArgs {
    /// Directory of per-class model files (needs `--tables`).
    #[arg(long, requires = "tables", required_unless_present = "ctr", conflicts_with = "ctr")]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub tables: Option<PathBuf>,
    /// CTR table for the constant predictor.
    #[arg(long)]
    pub ctr: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub predictor: PredictorArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ChunkEvalArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    /// Where to write the across-chunk mean and spread.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct LeaderboardArgs {
    /// `name=path` of a metric report CSV; repeat per submission.
    #[arg(long = "submission", required = true)]
    pub submissions: Vec<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, default_value_t = 0.4)]
    pub history_fraction: f64,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.85)]
    pub valid_fraction: f64,
    /// Explicit timestamp boundaries; override the fractions.
    #[arg(long, requires_all = ["train_end", "valid_end"])]
    pub history_end: Option<u64>,
    #[arg(long, requires_all = ["history_end", "valid_end"])]
    pub train_end: Option<u64>,
    #[arg(long, requires_all = ["history_end", "train_end"])]
    pub valid_end: Option<u64>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub json: bool,
}

/// Failure of a run, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    let b = match s {
        "\\t" | "tab" => b'\t',
        _ if s.starts_with("0x") || s.starts_with("0X") => {
            u8::from_str_radix(&s[2..], 16).map_err(|e| format!("'{s}': {e}"))?
        }
        _ if s.len() == 1 => s.as_bytes()[0],
        _ => return Err(format!("'{s}' is not a single byte, `\\t` or a 0x-prefixed hex byte")),
    };
    Ok(b)
}

fn parse_sampling(s: &str) -> Result<Sampling, String> {
    match s.to_ascii_lowercase().as_str() {
        "uniform" => Ok(Sampling::Uniform),
        "gradient" | "gradient_based" | "gradient-based" => Ok(Sampling::GradientBased),
        _ => Err(format!("unknown sampling '{s}' (expected uniform or gradient)")),
    }
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--{what}: {e}")))?;
    if v.len() != N && v.len() != 1 {
        return Err(CliError::Usage(format!("--{what} takes 1 or {N} comma-separated values")));
    }
    Ok(v)
}

fn per_class(v: &[f64]) -> PerClass<f64> {
    PerClass::from_fn(|c| if v.len() == 1 { v[0] } else { v[c.index()] })
}

struct Ctx {
    format: FormatConfig,
    seed: u64,
    verbose: u8,
}

impl Ctx {
    fn read_records(&self, path: &Path) -> Result<Vec<InteractionRecord>, CliError> {
        let file = fs::File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
        let (records, report) = parse_dataset(BufReader::new(file), &self.format)
            .map_err(data)?
            .collect_all()
            .map_err(data)?;
        if report.rejected > 0 {
            eprintln!(
                "{}: skipped {} of {} lines",
                path.display(),
                report.rejected,
                report.total
            );
            if self.verbose > 0 {
                for r in &report.first_rejections {
                    eprintln!("  line {}: {}", r.line, r.reason);
                }
            }
        }
        Ok(records)
    }

    fn vocab(&self, path: Option<&Path>) -> Result<VocabularyConfig, CliError> {
        match path {
            Some(p) => VocabularyConfig::from_tsv(&read_text(p)?).map_err(data),
            None => Ok(VocabularyConfig::synthetic()),
        }
    }

    fn predictor(&self, args: &PredictorArgs) -> Result<Box<dyn Predictor>, CliError> {
        if let Some(path) = &args.ctr {
            let table = CtrTable::from_csv(&read_text(path)?).map_err(data)?;
            return Ok(Box::new(ConstantPredictor(table)));
        }
        let (models_dir, tables_dir) = match (&args.models, &args.tables) {
            (Some(m), Some(t)) => (m, t),
            _ => return Err(CliError::Usage("--models requires --tables".into())),
        };
        let tables = FeatureTables::load(tables_dir).map_err(data)?;
        let models = load_models(models_dir)?;
        Ok(Box::new(GbdtPredictor { tables, vocab: self.vocab(args.vocab.as_deref())?, models }))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn model_path(dir: &Path, class: crate::ingest::EngagementClass) -> PathBuf {
    dir.join(format!("{}.json", class.name()))
}

fn load_models(dir: &Path) -> Result<PerClass<GbdtModel>, CliError> {
    PerClass::from_fn(|c| c).try_map(|_, &c| {
        let path = model_path(dir, c);
        let m = GbdtModel::from_json(&read_text(&path)?)
            .map_err(|e| data(format!("{}: {e}", path.display())))?;
        if m.class.is_some_and(|mc| mc != c) {
            return Err(data(format!("{}: model is for another class", path.display())));
        }
        Ok(m)
    })
}

fn require_inputs(command: &Command) -> Result<(), CliError> {
    fn push_pred<'a>(p: &'a PredictorArgs, v: &mut Vec<&'a Path>) {
        v.extend(p.models.as_deref());
        v.extend(p.tables.as_deref());
        v.extend(p.ctr.as_deref());
        v.extend(p.vocab.as_deref());
    }
    let mut inputs: Vec<&Path> = Vec::new();
    match command {
        Command::Gen(_) | Command::Leaderboard(_) => {}
        Command::Stats(a) => inputs.push(&a.io.input),
        Command::Ctr(a) => inputs.push(&a.input),
        Command::TuneConstants(a) => {
            inputs.push(&a.io.input);
            inputs.extend(a.eval.as_deref());
        }
        Command::BuildFeatures(a) => inputs.push(&a.input),
        Command::Extract(a) => {
            inputs.extend([a.input.as_path(), a.tables.as_path()]);
            inputs.extend(a.vocab.as_deref());
        }
        Command::Train(a) => {
            inputs.extend([a.input.as_path(), a.tables.as_path()]);
            inputs.extend(a.vocab.as_deref());
            inputs.extend(a.valid.as_deref());
        }
        Command::Predict(a) => {
            inputs.push(&a.io.input);
            push_pred(&a.predictor, &mut inputs);
        }
        Command::Evaluate(a) => inputs.extend([a.io.input.as_path(), a.predictions.as_path()]),
        Command::ChunkEval(a) => {
            inputs.push(&a.io.input);
            push_pred(&a.predictor, &mut inputs);
        }
        Command::Compare(a) => {
            inputs.push(&a.io.input);
            inputs.extend(a.vocab.as_deref());
        }
    }
    match inputs.iter().find(|p| !p.exists()) {
        Some(p) => Err(CliError::Usage(format!("input path {} does not exist", p.display()))),
        None => Ok(()),
    }
}

fn check_fraction(v: f64, flag: &str) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{flag} must be in [0, 1]")))
    }
}

/// Stable digest of the resolved command line, thread count excluded.
pub fn config_digest(cli: &Cli) -> String {
    let json = serde_json::to_vec(cli).expect("arguments serialize");
    hex::encode(Sha256::digest(&json))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    require_inputs(&cli.command)?;
    let mut format = FormatConfig::default();
    if let Some(b) = cli.global.field_delim {
        format.field_delimiter = b;
    }
    if let Some(b) = cli.global.list_delim {
        format.list_delimiter = b;
    }
    format.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ctx = Ctx { format, seed: cli.global.seed, verbose: cli.global.verbose };

    match &cli.command {
        Command::Gen(a) => {
            let d = GenConfig::default();
            let config = GenConfig {
                rows: a.rows,
                rates: match &a.rates {
                    Some(s) => per_class(&parse_floats::<4>(s, "rates")?),
                    None => d.rates,
                },
                authors: a.authors.unwrap_or(d.authors),
                users: a.users.unwrap_or(d.users),
                propensity_sigma: a.propensity_sigma.unwrap_or(d.propensity_sigma),
                languages: a.languages.unwrap_or(d.languages),
                language_skew: a.language_skew.unwrap_or(d.language_skew),
                week2_fraction: a.week2_fraction.unwrap_or(d.week2_fraction),
                drift: match &a.drift {
                    Some(s) => per_class(&parse_floats::<4>(s, "drift")?),
                    None => d.drift,
                },
                cta_rate: a.cta_rate.unwrap_or(d.cta_rate),
                seed: ctx.seed,
                ..d
            };
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            generate_to_path(&config, &a.output, &ctx.format).map_err(data)?;
        }
        Command::Stats(a) => {
            let records = ctx.read_records(&a.io.input)?;
            let stats = dataset_stats(&records);
            let text = if a.json { stats.to_json() } else { stats.class_csv() };
            emit(a.io.output.as_deref(), &text)?;
            if let Some(h) = &a.histogram {
                write_text(h, &stats.histogram_csv())?;
            }
        }
        Command::Ctr(a) => {
            let records = ctx.read_records(&a.input)?;
            let table = compute_ctr(&records).map_err(data)?;
            emit(a.output.as_deref(), &table.to_csv())?;
        }
        Command::TuneConstants(a) => {
            let candidates: Vec<Candidate> = a
                .candidates
                .split(',')
                .map(|s| s.trim().parse::<Candidate>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("--candidates: {e}")))?;
            let records = ctx.read_records(&a.io.input)?;
            let (train, eval_owned);
            let eval: &[InteractionRecord] = match &a.eval {
                Some(p) => {
                    train = &records[..];
                    eval_owned = ctx.read_records(p)?;
                    &eval_owned
                }
                None => {
                    let f = check_fraction(a.train_fraction.unwrap_or(0.8), "train-fraction")?;
                    let k = ((records.len() as f64) * f).round() as usize;
                    train = &records[..k];
                    &records[k..]
                }
            };
            let table = compute_ctr(train).map_err(data)?;
            let rows = tune_constants(&table, eval, &candidates, ctx.seed).map_err(data)?;
            emit(a.io.output.as_deref(), &tuning_csv(&rows))?;
        }
        Command::BuildFeatures(a) => {
            let records = ctx.read_records(&a.input)?;
            build_profiles(&records).save(&a.output).map_err(data)?;
        }
        Command::Extract(a) => {
            let records = ctx.read_records(&a.input)?;
            let tables = FeatureTables::load(&a.tables).map_err(data)?;
            let matrix = extract_matrix(&records, &tables, &ctx.vocab(a.vocab.as_deref())?);
            write_matrix_csv(&a.output, &matrix).map_err(data)?;
        }
        Command::Train(a) => {
            let records = ctx.read_records(&a.input)?;
            let (train, valid_owned);
            let valid: &[InteractionRecord] = match &a.valid {
                Some(p) => {
                    train = &records[..];
                    valid_owned = ctx.read_records(p)?;
                    &valid_owned
                }
                None => {
                    let f = check_fraction(a.valid_fraction.unwrap_or(0.1), "valid-fraction")?;
                    let k = records.len() - ((records.len() as f64) * f).round() as usize;
                    train = &records[..k];
                    &records[k..]
                }
            };
            let tables = FeatureTables::load(&a.tables).map_err(data)?;
            let vocab = ctx.vocab(a.vocab.as_deref())?;
            let params = a.params.resolve(ctx.seed);
            params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let models = train_per_class(
                &extract_matrix(train, &tables, &vocab),
                &label_columns(train),
                &extract_matrix(valid, &tables, &vocab),
                &label_columns(valid),
                &params,
            )
            .map_err(data)?;
            fs::create_dir_all(&a.output)
                .map_err(|e| data(format!("{}: {e}", a.output.display())))?;
            for (c, m) in models.iter() {
                if ctx.verbose > 0 {
                    eprintln!("{c}: best_iteration={} of {}", m.best_iteration, m.trees.len());
                }
                write_text(&model_path(&a.output, c), &m.to_json())?;
            }
        }
        Command::Predict(a) => {
            let records = ctx.read_records(&a.io.input)?;
            let predictor = ctx.predictor(&a.predictor)?;
            let scores = predictor.predict(&records).map_err(data)?;
            emit(a.io.output.as_deref(), &predictions_csv(&scores))?;
        }
        Command::Evaluate(a) => {
            let records = ctx.read_records(&a.io.input)?;
            let preds = parse_predictions_csv(&read_text(&a.predictions)?)
                .map_err(|e| data(format!("{}: {e}", a.predictions.display())))?;
            let report = metric_report(&preds, &label_columns(&records)).map_err(data)?;
            let text = if a.json { report.to_json() } else { report.to_csv() };
            emit(a.io.output.as_deref(), &text)?;
        }
        Command::ChunkEval(a) => {
            if a.chunk_size == 0 {
                return Err(CliError::Usage("--chunk-size must be at least 1".into()));
            }
            let records = ctx.read_records(&a.io.input)?;
            let predictor = ctx.predictor(&a.predictor)?;
            let report = chunk_eval(&records, a.chunk_size, predictor.as_ref()).map_err(data)?;
            let text = if a.json { report.to_json() } else { report.to_csv() };
            emit(a.io.output.as_deref(), &text)?;
            if let Some(p) = &a.summary {
                write_text(p, &report.summary_csv())?;
            }
        }
        Command::Leaderboard(a) => {
            let mut subs = Vec::with_capacity(a.submissions.len());
            for s in &a.submissions {
                let (name, path) = s.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("--submission '{s}' is not of the form name=path"))
                })?;
                let path = Path::new(path);
                if !path.exists() {
                    return Err(CliError::Usage(format!(
                        "input path {} does not exist",
                        path.display()
                    )));
                }
                let report = MetricReport::from_csv(&read_text(path)?)
                    .map_err(|e| data(format!("{}: {e}", path.display())))?;
                subs.push((name.to_owned(), report));
            }
            emit(a.output.as_deref(), &leaderboard_csv(&leaderboard(&subs)))?;
        }
        Command::Compare(a) => {
            let records = ctx.read_records(&a.io.input)?;
            let splits = match (a.history_end, a.train_end, a.valid_end) {
                (Some(history_end), Some(train_end), Some(valid_end)) => {
                    SplitConfig { history_end, train_end, valid_end }
                }
                _ => SplitConfig::from_fractions(
                    &records,
                    check_fraction(a.history_fraction, "history-fraction")?,
                    check_fraction(a.train_fraction, "train-fraction")?,
                    check_fraction(a.valid_fraction, "valid-fraction")?,
                ),
            };
            let params = a.params.resolve(ctx.seed);
            params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let vocab = ctx.vocab(a.vocab.as_deref())?;
            let report = run_comparison(&records, &splits, &params, &vocab).map_err(data)?;
            let text = if a.json { report.to_json() } else { report.to_csv() };
            emit(a.io.output.as_deref(), &text)?;
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        // Only the first pool configuration in a process takes effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    eprintln!(
        "engage {}: seed={} config_sha256={}",
        cli.command.name(),
        cli.global.seed,
        config_digest(&cli)
    );
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Data(m)) = &e;
            eprintln!("error: {m}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
