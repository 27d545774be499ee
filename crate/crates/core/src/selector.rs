//! The outer model-selection loop: train for a few epochs, analyze the
//! hidden layer, let the colony pick a neuron subset, prune, and repeat
//! until the colony stops shrinking the network. The survivor is then
//! fine-tuned with early stopping and scored on the held-out test rows.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baco::{self, bit_string, BacoConfig, GenerationRecord, HeuristicDesign};
use crate::correlation::abs_histogram;
use crate::dataset::{self, Dataset, LabelColumn, Partition};
use crate::network::{self, Network, TrainConfig};
use crate::seed::{self, Stream};
use crate::sensitivity::{self, AnalysisReport, EfastSettings};
use crate::{Error, Result};

/// Bins of the `|R|` histograms over `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 20;

/// Stream index reserved for the final fine-tuning and analysis.
const FINAL_STAGE: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub n_init: usize,
    pub learning_rate: f64,
    /// Training epochs before each selection phase.
    pub e_bet: usize,
    /// Early-stopping patience for the final fine-tune.
    pub patience: usize,
    /// Epoch cap for the final fine-tune.
    pub max_epochs: usize,
    pub max_iterations: usize,
    pub heuristic: HeuristicDesign,
    pub baco: BacoConfig,
    pub efast: EfastSettings,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            label_column: LabelColumn::default(),
            has_header: true,
            n_init: 50,
            learning_rate: 0.1,
            e_bet: 50,
            patience: 20,
            max_epochs: 2000,
            max_iterations: 20,
            heuristic: HeuristicDesign::H3,
            baco: BacoConfig::default(),
            efast: EfastSettings::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 {
            return Err(Error::Config("n_init must be at least 1".into()));
        }
        if self.e_bet == 0 {
            return Err(Error::Config("e_bet must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        self.final_train_config().validate()?;
        self.baco.validate()
    }

    fn final_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            shuffle_seed: seed::derive(self.seed, Stream::Shuffle, FINAL_STAGE),
        }
    }

    pub fn seeds(&self) -> SeedRecord {
        SeedRecord {
            master: self.seed,
            split: seed::derive(self.seed, Stream::Split, 0),
            init: seed::derive(self.seed, Stream::Init, 0),
            final_shuffle: seed::derive(self.seed, Stream::Shuffle, FINAL_STAGE),
            final_phase: seed::derive(self.seed, Stream::Phase, FINAL_STAGE),
        }
    }
}

/// Every seed an experiment derives from its master seed. Per-iteration
/// seeds are `derive(master, stream, iteration)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub split: u64,
    pub init: u64,
    pub final_shuffle: u64,
    /// Phase seed of the analysis stored in `final_contributions`.
    pub final_phase: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Continue,
    Stop,
}

/// Keep iterating only while the colony strictly shrinks the hidden layer.
pub fn termination_check(prev_width: usize, selected: usize) -> Termination {
    assert!(
        selected <= prev_width,
        "selected {selected} neurons out of {prev_width}"
    );
    if selected < prev_width {
        Termination::Continue
    } else {
        Termination::Stop
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub width_before: usize,
    pub width_after: usize,
    pub selected: String,
    pub best_validation_ce: f64,
    pub curve: Vec<GenerationRecord>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub features: usize,
    pub classes: usize,
    pub samples: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Everything one experiment reports. Wall-clock time is kept out of the
/// serialized form so repeated runs produce identical documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub heuristic: Option<HeuristicDesign>,
    pub dataset: DatasetSummary,
    pub seeds: SeedRecord,
    pub iterations: Vec<IterationRecord>,
    pub initial_width: usize,
    pub final_width: usize,
    /// Indices (in the initial network) of the neurons that survived.
    pub survivors: Vec<usize>,
    pub final_validation_ce: f64,
    pub test_accuracy: f64,
    pub test_ce: f64,
    /// Contribution percentages from the first analysis.
    pub initial_contributions: Vec<f64>,
    /// Contribution percentages of the fine-tuned network.
    pub final_contributions: Vec<f64>,
    pub initial_abs_correlation_histogram: Vec<usize>,
    pub final_abs_correlation_histogram: Vec<usize>,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// Normalized partitions of one seeded split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub classes: usize,
    pub features: usize,
    pub train: Partition,
    pub validation: Partition,
    pub test: Partition,
}

impl PreparedData {
    pub fn new(ds: &Dataset, name: &str, split_seed: u64) -> Result<Self> {
        let splits = dataset::split(ds, split_seed)?;
        let norm = dataset::normalize(ds, &splits);
        Ok(PreparedData {
            name: name.to_owned(),
            classes: ds.class_count(),
            features: ds.feature_count(),
            train: norm.partition(&splits.train),
            validation: norm.partition(&splits.validation),
            test: norm.partition(&splits.test),
        })
    }

    fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            name: self.name.clone(),
            features: self.features,
            classes: self.classes,
            samples: self.train.len() + self.validation.len() + self.test.len(),
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
        }
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, String)> {
    let ds = dataset::load_csv(&cfg.dataset, &cfg.label_column, cfg.has_header)?;
    let name = cfg
        .dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((ds, name))
}

/// Loads the configured dataset and runs the full selection loop.
pub fn run_ms_baco(cfg: &ExperimentConfig) -> Result<(ExperimentResult, Network)> {
    cfg.validate()?;
    let (ds, name) = load_dataset(cfg)?;
    let data = PreparedData::new(&ds, &name, cfg.seeds().split)?;
    run_on(&data, cfg)
}

/// Runs the selection loop on already prepared partitions.
pub fn run_on(data: &PreparedData, cfg: &ExperimentConfig) -> Result<(ExperimentResult, Network)> {
    cfg.validate()?;
    let started = Instant::now();
    let seeds = cfg.seeds();
    let mut net = Network::init(data.features, cfg.n_init, data.classes, seeds.init)?;
    let mut survivors: Vec<usize> = (0..cfg.n_init).collect();
    let mut iterations = Vec::new();
    let mut initial: Option<AnalysisReport> = None;

    for it in 0..cfg.max_iterations {
        let iter_start = Instant::now();
        let idx = it as u64;
        let mut rng = seed::rng(seed::derive(cfg.seed, Stream::Shuffle, idx));
        net.train_epochs(&data.train, cfg.e_bet, cfg.learning_rate, &mut rng)?;

        let report = sensitivity::analyze(
            &net,
            &data.train.x,
            cfg.efast,
            seed::derive(cfg.seed, Stream::Phase, idx),
        )?;
        let outcome = baco::run_baco(
            &net,
            &data.validation,
            &report,
            &cfg.baco,
            cfg.heuristic,
            seed::derive(cfg.seed, Stream::Colony, idx),
        )?;
        initial.get_or_insert(report);

        let width = net.hidden();
        let selected = outcome.best.popcount();
        let decision = termination_check(width, selected);
        if decision == Termination::Continue {
            net = net.prune(&outcome.best.bits)?;
            survivors = survivors
                .iter()
                .zip(&outcome.best.bits)
                .filter_map(|(&s, &keep)| keep.then_some(s))
                .collect();
        }
        iterations.push(IterationRecord {
            iteration: it + 1,
            width_before: width,
            width_after: net.hidden(),
            selected: bit_string(&outcome.best.bits),
            best_validation_ce: outcome.best.ce.expect("valid best"),
            curve: outcome.curve,
            seconds: iter_start.elapsed().as_secs_f64(),
        });
        if decision == Termination::Stop {
            break;
        }
    }

    let (net, final_validation_ce) = network::train_with_early_stopping(
        &net,
        &data.train,
        &data.validation,
        &cfg.final_train_config(),
    )?;
    let initial = initial.expect("at least one iteration");
    let result = finish(
        data,
        cfg,
        &net,
        final_validation_ce,
        Some(cfg.heuristic),
        iterations,
        survivors,
        Some(&initial),
        started,
    )?;
    Ok((result, net))
}

/// Fixed-structure baseline: the initial network trained to early stopping
/// with no selection.
pub fn run_baseline(
    data: &PreparedData,
    cfg: &ExperimentConfig,
) -> Result<(ExperimentResult, Network)> {
    cfg.validate()?;
    let started = Instant::now();
    let seeds = cfg.seeds();
    let net = Network::init(data.features, cfg.n_init, data.classes, seeds.init)?;
    let (net, final_validation_ce) = network::train_with_early_stopping(
        &net,
        &data.train,
        &data.validation,
        &cfg.final_train_config(),
    )?;
    let survivors = (0..cfg.n_init).collect();
    let result = finish(
        data,
        cfg,
        &net,
        final_validation_ce,
        None,
        Vec::new(),
        survivors,
        None,
        started,
    )?;
    Ok((result, net))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    data: &PreparedData,
    cfg: &ExperimentConfig,
    net: &Network,
    final_validation_ce: f64,
    heuristic: Option<HeuristicDesign>,
    iterations: Vec<IterationRecord>,
    survivors: Vec<usize>,
    initial: Option<&AnalysisReport>,
    started: Instant,
) -> Result<ExperimentResult> {
    let seeds = cfg.seeds();
    let final_report = sensitivity::analyze(net, &data.train.x, cfg.efast, seeds.final_phase)?;
    let initial = initial.unwrap_or(&final_report);
    Ok(ExperimentResult {
        heuristic,
        dataset: data.summary(),
        seeds,
        iterations,
        initial_width: cfg.n_init,
        final_width: net.hidden(),
        survivors,
        final_validation_ce,
        test_accuracy: net.accuracy(&data.test.x, &data.test.labels)?,
        test_ce: net.partition_ce(&data.test)?,
        initial_contributions: initial.contributions.clone(),
        final_contributions: final_report.contributions.clone(),
        initial_abs_correlation_histogram: abs_histogram(&initial.correlation, HISTOGRAM_BINS),
        final_abs_correlation_histogram: abs_histogram(&final_report.correlation, HISTOGRAM_BINS),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}
