//! Command-line front end: multi-seed experiment runs, fixed-structure
//! baselines and standalone hidden-layer analysis.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use msbaco::dataset::{self, LabelColumn};
use msbaco::network::Network;
use msbaco::selector::{self, ExperimentConfig, ExperimentResult, PreparedData, HISTOGRAM_BINS};
use msbaco::sensitivity::{self, EfastSettings};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub mod config;

use config::ConfigFields;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(msbaco::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dataset(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<msbaco::Error> for CliError {
    fn from(e: msbaco::Error) -> Self {
        match e {
            msbaco::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "msbaco",
    version,
    about = "Hidden-layer model selection with a binary ant colony"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the selection loop once per seed and write results
    Run(BatchArgs),
    /// Train the fixed-width network to early stopping, no selection
    Baselines(BatchArgs),
    /// Write contribution and correlation analysis for a saved network
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of seeds to run
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Experiments executed in parallel
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub fields: ConfigFields,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Network JSON written by `run`
    #[arg(long)]
    pub network: PathBuf,
    /// Dataset CSV the network was trained on
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "class")]
    pub label_column: String,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub has_header: bool,
    /// Split seed recorded in the run's result (`seeds.split`)
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// EFAST phase seed (`seeds.final_phase` reproduces a run's final analysis)
    #[arg(long, default_value_t = 0)]
    pub phase_seed: u64,
    #[arg(long, default_value = "analysis.json")]
    pub out: PathBuf,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => batch(&args, Mode::Select).map(|_| ()),
        Command::Baselines(args) => batch(&args, Mode::Baseline).map(|_| ()),
        Command::Analyze(args) => analyze(&args),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Select,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub test_accuracy: f64,
    pub test_ce: f64,
    pub final_width: usize,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
}

pub fn resolve_config(args: &BatchArgs) -> Result<ExperimentConfig, CliError> {
    let base = match &args.config {
        Some(p) => ConfigFields::from_file(p)?,
        None => ConfigFields::default(),
    };
    base.overlay(&args.fields).resolve()
}

/// Runs one experiment per seed and writes every artifact into
/// `args.out_dir`. Files are staged in a scratch directory and moved into
/// place only after every seed succeeded.
pub fn batch(args: &BatchArgs, mode: Mode) -> Result<RunManifest, CliError> {
    let cfg = resolve_config(args)?;
    if args.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let (ds, name) = selector::load_dataset(&cfg).map_err(CliError::Dataset)?;

    let seeds: Vec<u64> = (0..args.seeds as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let outcomes: Vec<(ExperimentResult, Network)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| {
                let run_cfg = ExperimentConfig {
                    seed: s,
                    ..cfg.clone()
                };
                let data = PreparedData::new(&ds, &name, run_cfg.seeds().split)
                    .map_err(CliError::Dataset)?;
                let out = match mode {
                    Mode::Select => selector::run_on(&data, &run_cfg),
                    Mode::Baseline => selector::run_baseline(&data, &run_cfg),
                };
                out.map_err(CliError::from)
            })
            .collect::<Result<_, CliError>>()
    })?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".staging-")
        .tempdir_in(&args.out_dir)
        .map_err(|e| io_err(&args.out_dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut summary = Vec::with_capacity(seeds.len());
    for (&s, (result, net)) in seeds.iter().zip(&outcomes) {
        files.push((format!("result_{s}.json"), to_json(result)?));
        files.push((format!("network_{s}.json"), to_json(net)?));
        for it in &result.iterations {
            files.push((format!("curve_iter{}_{s}.csv", it.iteration), curve_csv(it)));
        }
        files.push((format!("contributions_{s}.csv"), contributions_csv(result)));
        files.push((format!("corr_hist_{s}.csv"), histogram_csv(result)));
        summary.push(SummaryRow {
            seed: s,
            test_accuracy: result.test_accuracy,
            test_ce: result.test_ce,
            final_width: result.final_width,
            wall_clock_seconds: result.wall_clock_seconds,
        });
    }
    files.push(("summary.csv".into(), summary_csv(&summary)));

    let mut artifacts: Vec<PathBuf> = files.iter().map(|(n, _)| args.out_dir.join(n)).collect();
    artifacts.push(args.out_dir.join("manifest.json"));
    let manifest = RunManifest {
        mode,
        config: cfg,
        seeds: seeds.clone(),
        artifacts,
        summary,
    };
    files.push(("manifest.json".into(), to_json(&manifest)?));

    for (fname, body) in &files {
        let p = staging.path().join(fname);
        std::fs::write(&p, body).map_err(|e| io_err(&p, e))?;
    }
    for (fname, _) in &files {
        let from = staging.path().join(fname);
        let to = args.out_dir.join(fname);
        std::fs::rename(&from, &to).map_err(|e| io_err(&to, e))?;
    }
    Ok(manifest)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn curve_csv(it: &selector::IterationRecord) -> String {
    let mut s = String::from("generation,best_validation_ce,best_objective,best_popcount\n");
    for g in &it.curve {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            g.generation, g.best_validation_ce, g.best_objective, g.best_popcount
        );
    }
    s
}

/// Initial contribution of every neuron, and the final contribution of the
/// survivors (empty for pruned neurons).
pub fn contributions_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("neuron,initial_contribution,survived,final_contribution\n");
    for (n, c) in r.initial_contributions.iter().enumerate() {
        let pos = r.survivors.iter().position(|&x| x == n);
        let fin = pos
            .map(|p| r.final_contributions[p].to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "{n},{c},{},{fin}", u8::from(pos.is_some()));
    }
    s
}

pub fn histogram_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("bin_low,bin_high,initial_count,final_count\n");
    let w = 1.0 / HISTOGRAM_BINS as f64;
    for b in 0..HISTOGRAM_BINS {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            b as f64 * w,
            (b + 1) as f64 * w,
            r.initial_abs_correlation_histogram[b],
            r.final_abs_correlation_histogram[b]
        );
    }
    s
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per seed plus a `mean±std` footer row.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("seed,test_accuracy,test_ce,final_width,wall_clock_seconds\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.3}",
            r.seed, r.test_accuracy, r.test_ce, r.final_width, r.wall_clock_seconds
        );
    }
    let col = |f: fn(&SummaryRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>());
    let (acc, ce, width, secs) = (
        col(|r| r.test_accuracy),
        col(|r| r.test_ce),
        col(|r| r.final_width as f64),
        col(|r| r.wall_clock_seconds),
    );
    let _ = writeln!(
        s,
        "mean±std,{:.6}±{:.6},{:.6}±{:.6},{:.4}±{:.4},{:.3}±{:.3}",
        acc.0, acc.1, ce.0, ce.1, width.0, width.1, secs.0, secs.1
    );
    s
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.network).map_err(|e| io_err(&args.network, e))?;
    let net: Network = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.network.display())))?;
    let label: LabelColumn = args.label_column.parse().expect("infallible");
    let ds =
        dataset::load_csv(&args.dataset, &label, args.has_header).map_err(CliError::Dataset)?;
    if ds.feature_count() != net.inputs() || ds.class_count() != net.classes() {
        return Err(CliError::Dataset(msbaco::Error::Dimension(format!(
            "network expects {} features and {} classes, dataset has {} and {}",
            net.inputs(),
            net.classes(),
            ds.feature_count(),
            ds.class_count()
        ))));
    }
    let splits = dataset::split(&ds, args.split_seed).map_err(CliError::Dataset)?;
    let train = dataset::normalize(&ds, &splits).partition(&splits.train);
    let report = sensitivity::analyze(&net, &train.x, EfastSettings::default(), args.phase_seed)?;
    let body = to_json(&report)?;
    let dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    std::fs::write(tmp.path(), body).map_err(|e| io_err(tmp.path(), e))?;
    tmp.persist(&args.out).map_err(|e| io_err(&args.out, e))?;
    Ok(())
}
