//! Flat key-value experiment configuration files and command-line overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use msbaco::baco::HeuristicDesign;
use msbaco::dataset::LabelColumn;
use msbaco::selector::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every field optional; unset fields fall back to the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ConfigFields {
    /// Dataset CSV (relative paths in a config file resolve against the file's directory)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Label column, by header name or zero-based index
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub has_header: Option<bool>,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub e_bet: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, value_parser = parse_design)]
    pub heuristic: Option<HeuristicDesign>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub ants: Option<usize>,
    #[arg(long)]
    pub gen_max: Option<usize>,
    #[arg(long)]
    pub tau0: Option<f64>,
    /// Master seed; run `i` of a multi-seed batch uses `seed + i`
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub efast_samples: Option<usize>,
    #[arg(long)]
    pub efast_interference: Option<u32>,
    #[arg(long)]
    pub efast_focal_frequency: Option<u32>,
}

fn parse_design(s: &str) -> Result<HeuristicDesign, String> {
    s.parse().map_err(|e: msbaco::Error| e.to_string())
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ConfigFields {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut fields: ConfigFields = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(ds) = &fields.dataset {
            if ds.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                fields.dataset = Some(base.join(ds));
            }
        }
        Ok(fields)
    }

    /// Values set in `other` replace the ones in `self`.
    pub fn overlay(mut self, other: &ConfigFields) -> Self {
        overlay!(
            self,
            other,
            dataset,
            label_column,
            has_header,
            n_init,
            learning_rate,
            e_bet,
            patience,
            max_epochs,
            max_iterations,
            heuristic,
            alpha,
            beta,
            rho,
            ants,
            gen_max,
            tau0,
            seed,
            efast_samples,
            efast_interference,
            efast_focal_frequency
        );
        self
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig {
            dataset: self
                .dataset
                .clone()
                .ok_or_else(|| CliError::Config("no dataset given".into()))?,
            ..Default::default()
        };
        if let Some(l) = &self.label_column {
            cfg.label_column = l.parse::<LabelColumn>().expect("infallible");
        }
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),*) => {
                $( if let Some(v) = self.$src { cfg.$($dst).+ = v; } )*
            };
        }
        set!(
            has_header => has_header,
            n_init => n_init,
            learning_rate => learning_rate,
            e_bet => e_bet,
            patience => patience,
            max_epochs => max_epochs,
            max_iterations => max_iterations,
            heuristic => heuristic,
            alpha => baco.alpha,
            beta => baco.beta,
            rho => baco.rho,
            ants => baco.ants,
            gen_max => baco.generations,
            tau0 => baco.tau0,
            seed => seed,
            efast_samples => efast.samples,
            efast_interference => efast.interference,
            efast_focal_frequency => efast.focal_frequency
        );
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        msbaco::sensitivity::EfastPlan::new(cfg.efast, cfg.n_init, 0)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
