//! Extended FAST variance-based sensitivity analysis.
//!
//! Each output unit `k` is treated as a separate model whose factors are the
//! products `v_nk * y_n` of hidden activations and outgoing weights, and
//! whose response is the pre-softmax logit `sum_n v_nk * y_n + b_k`. For
//! every (neuron, output) pair a search curve is traced in which the focal
//! factor oscillates at a high frequency and all other factors at low
//! complementary frequencies. The output spectrum then separates the
//! variance the focal factor is responsible for (including interactions)
//! from the variance explained by the others.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::Network;
use crate::seed::{self, Stream};
use crate::{Error, Result};

/// Output variances below this are treated as zero.
const ZERO_VARIANCE: f64 = 1e-12;

/// Tunable sizes of the EFAST design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfastSettings {
    /// Interference factor `M`: number of harmonics considered per frequency.
    pub interference: u32,
    /// Points per search curve; must be odd.
    pub samples: usize,
    pub focal_frequency: u32,
}

impl Default for EfastSettings {
    fn default() -> Self {
        EfastSettings {
            interference: 4,
            samples: 513,
            focal_frequency: 64,
        }
    }
}

/// A complete sampling design for one factor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfastPlan {
    pub factor_count: usize,
    pub interference: u32,
    pub samples: usize,
    pub focal_frequency: u32,
    /// Frequencies for the non-focal factors, in factor order.
    pub complementary_frequencies: Vec<u32>,
    pub phase_seed: u64,
}

impl EfastPlan {
    /// Complementary frequencies come from `1..=m` with `m = focal / (2M)`.
    /// With fewer than `m` complementary factors they are spread evenly over
    /// that range (the first at 1, the last at `m`), otherwise assigned
    /// round-robin. Adjacent low frequencies such as 1 and 2 trace a thin
    /// curve through the complementary subspace and bias interaction terms.
    pub fn new(settings: EfastSettings, factor_count: usize, phase_seed: u64) -> Result<Self> {
        let max_comp = settings.focal_frequency / (2 * settings.interference.max(1));
        if max_comp == 0 {
            return Err(Error::Config(format!(
                "focal frequency {} leaves no room for complementary frequencies with M={}",
                settings.focal_frequency, settings.interference
            )));
        }
        let count = factor_count.saturating_sub(1);
        let complementary_frequencies = if count > 1 && count < max_comp as usize {
            let step = f64::from(max_comp - 1) / (count - 1) as f64;
            (0..count)
                .map(|j| 1 + (j as f64 * step).floor() as u32)
                .collect()
        } else {
            (0..count).map(|j| 1 + (j as u32 % max_comp)).collect()
        };
        let plan = EfastPlan {
            factor_count,
            interference: settings.interference,
            samples: settings.samples,
            focal_frequency: settings.focal_frequency,
            complementary_frequencies,
            phase_seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.interference as usize;
        let w = self.focal_frequency as usize;
        if m == 0 || w == 0 || self.factor_count == 0 {
            return Err(Error::Config(
                "interference, focal frequency and factor count must be positive".into(),
            ));
        }
        if self.samples.is_multiple_of(2) || self.samples < 2 * m * w + 1 {
            return Err(Error::Config(format!(
                "sample count {} must be odd and at least 2*M*w+1 = {}",
                self.samples,
                2 * m * w + 1
            )));
        }
        if self.complementary_frequencies.len() + 1 != self.factor_count {
            return Err(Error::Config(format!(
                "{} complementary frequencies for {} factors",
                self.complementary_frequencies.len(),
                self.factor_count
            )));
        }
        let limit = self.focal_frequency / (2 * self.interference);
        if let Some(&f) = self
            .complementary_frequencies
            .iter()
            .find(|&&f| f == 0 || f > limit)
        {
            return Err(Error::Config(format!(
                "complementary frequency {f} outside [1, {limit}]"
            )));
        }
        Ok(())
    }

    /// Frequency each factor carries on the curve for `focal`.
    fn frequencies(&self, focal: usize) -> Vec<u32> {
        let mut comp = self.complementary_frequencies.iter();
        (0..self.factor_count)
            .map(|j| {
                if j == focal {
                    self.focal_frequency
                } else {
                    *comp.next().expect("validated length")
                }
            })
            .collect()
    }

    /// Curve parameter values: `samples` equally spaced points in `(-pi, pi)`.
    pub fn curve(&self) -> Vec<f64> {
        let n = self.samples as f64;
        (0..self.samples)
            .map(|k| PI * (2.0 * k as f64 + 1.0 - n) / n)
            .collect()
    }
}

/// Closed interval over which one factor varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorRange {
    pub low: f64,
    pub high: f64,
}

impl FactorRange {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Empirical ranges of `v_nk * y_n` over the rows of `x`, one vector of `N`
/// ranges per output `k`.
pub fn factor_ranges(net: &Network, x: &Array2<f64>) -> Result<Vec<Vec<FactorRange>>> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    let h = net.hidden_activations(x)?;
    let (hmin, hmax): (Vec<f64>, Vec<f64>) = h
        .axis_iter(Axis(1))
        .map(|col| {
            col.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                    (lo.min(y), hi.max(y))
                })
        })
        .unzip();
    // v * y is monotone in y, so its extremes sit at the activation extremes
    Ok((0..net.classes())
        .map(|k| {
            (0..net.hidden())
                .map(|n| {
                    let v = net.v[[n, k]];
                    let (a, b) = (v * hmin[n], v * hmax[n]);
                    FactorRange {
                        low: a.min(b),
                        high: a.max(b),
                    }
                })
                .collect()
        })
        .collect())
}

/// Sample matrix (`samples x factor_count`) along the search curve for
/// `focal`. Each factor follows `u(s) = 1/2 + asin(sin(w s + phi)) / pi`,
/// mapped affinely onto its range, with a seeded random phase `phi`.
pub fn efast_sample(plan: &EfastPlan, ranges: &[FactorRange], focal: usize) -> Result<Array2<f64>> {
    plan.validate()?;
    if ranges.len() != plan.factor_count {
        return Err(Error::Dimension(format!(
            "{} ranges for {} factors",
            ranges.len(),
            plan.factor_count
        )));
    }
    if focal >= plan.factor_count {
        return Err(Error::Dimension(format!(
            "focal factor {focal} out of {}",
            plan.factor_count
        )));
    }
    let freqs = plan.frequencies(focal);
    let mut rng = seed::rng(seed::derive(plan.phase_seed, Stream::Phase, focal as u64));
    let phases: Vec<f64> = (0..plan.factor_count)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let s = plan.curve();
    let mut out = Array2::zeros((plan.samples, plan.factor_count));
    for (mut row, &sk) in out.axis_iter_mut(Axis(0)).zip(&s) {
        for (j, cell) in row.iter_mut().enumerate() {
            let u = 0.5 + (f64::from(freqs[j]) * sk + phases[j]).sin().asin() / PI;
            *cell = ranges[j].low + u * ranges[j].width();
        }
    }
    Ok(out)
}

/// Cosine and sine tables for the harmonics `1..=(samples-1)/2` on the
/// plan's curve.
#[derive(Debug, Clone)]
pub struct FourierBasis {
    samples: usize,
    cos: Array2<f64>,
    sin: Array2<f64>,
}

impl FourierBasis {
    pub fn new(plan: &EfastPlan) -> Self {
        let s = plan.curve();
        let harmonics = (plan.samples - 1) / 2;
        let cos = Array2::from_shape_fn((harmonics, plan.samples), |(p, k)| {
            ((p + 1) as f64 * s[k]).cos()
        });
        let sin = Array2::from_shape_fn((harmonics, plan.samples), |(p, k)| {
            ((p + 1) as f64 * s[k]).sin()
        });
        FourierBasis {
            samples: plan.samples,
            cos,
            sin,
        }
    }

    /// `A_p^2 + B_p^2` for `p = 1..=(samples-1)/2`.
    pub fn power(&self, y: &[f64]) -> Vec<f64> {
        let n = self.samples as f64;
        self.cos
            .axis_iter(Axis(0))
            .zip(self.sin.axis_iter(Axis(0)))
            .map(|(c, s)| {
                let a: f64 = c.iter().zip(y).map(|(c, y)| c * y).sum::<f64>() / n;
                let b: f64 = s.iter().zip(y).map(|(s, y)| s * y).sum::<f64>() / n;
                a * a + b * b
            })
            .collect()
    }
}

/// Total-effect index of `focal` from the spectrum of `y` sampled along its
/// search curve.
fn total_effect_from_output(y: &[f64], plan: &EfastPlan, basis: &FourierBasis) -> Result<f64> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteOutput);
    }
    let power = basis.power(y);
    let total: f64 = 2.0 * power.iter().sum::<f64>();
    if total < ZERO_VARIANCE {
        return Ok(0.0);
    }
    let cutoff = (plan.focal_frequency / 2) as usize;
    let complementary: f64 = 2.0 * power[..cutoff.min(power.len())].iter().sum::<f64>();
    Ok((1.0 - complementary / total).clamp(0.0, 1.0))
}

/// Total-effect index of factor `focal` for an arbitrary scalar model.
pub fn total_effect<F>(
    model: F,
    plan: &EfastPlan,
    ranges: &[FactorRange],
    focal: usize,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let basis = FourierBasis::new(plan);
    total_effect_with_basis(&model, plan, &basis, ranges, focal)
}

fn total_effect_with_basis<F>(
    model: &F,
    plan: &EfastPlan,
    basis: &FourierBasis,
    ranges: &[FactorRange],
    focal: usize,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let samples = efast_sample(plan, ranges, focal)?;
    if ranges[focal].width() == 0.0 {
        return Ok(0.0);
    }
    let y: Vec<f64> = samples
        .axis_iter(Axis(0))
        .map(|row| model(row.as_slice().expect("standard layout")))
        .collect();
    total_effect_from_output(&y, plan, basis)
}

/// Per-neuron sensitivity summary of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Contributions {
    /// `N x K` total effects.
    pub total_effects: Array2<f64>,
    /// Row sums of `total_effects`.
    pub row_sums: Vec<f64>,
    /// `row_sums` normalized to sum to one.
    pub contributions: Vec<f64>,
}

/// EFAST total effects for every (hidden neuron, output) pair and the
/// resulting contribution percentages. Output `k` uses phase seed
/// `derive(phase_seed, Phase, k)`.
pub fn contribution_percentages(
    net: &Network,
    x_train: &Array2<f64>,
    settings: EfastSettings,
    phase_seed: u64,
) -> Result<Contributions> {
    let (n, k) = (net.hidden(), net.classes());
    let ranges = factor_ranges(net, x_train)?;
    let plans: Vec<EfastPlan> = (0..k)
        .map(|out| {
            EfastPlan::new(
                settings,
                n,
                seed::derive(phase_seed, Stream::Phase, out as u64),
            )
        })
        .collect::<Result<_>>()?;
    let basis = FourierBasis::new(&plans[0]);

    let te: Vec<f64> = (0..n * k)
        .into_par_iter()
        .map(|idx| {
            let (neuron, out) = (idx / k, idx % k);
            let bias = net.b1[out];
            let logit = |f: &[f64]| f.iter().sum::<f64>() + bias;
            total_effect_with_basis(&logit, &plans[out], &basis, &ranges[out], neuron)
        })
        .collect::<Result<_>>()?;
    let total_effects = Array2::from_shape_vec((n, k), te).expect("n*k values");
    Ok(normalize_contributions(total_effects))
}

pub fn normalize_contributions(total_effects: Array2<f64>) -> Contributions {
    let n = total_effects.nrows();
    let row_sums: Vec<f64> = total_effects.sum_axis(Axis(1)).to_vec();
    let total: f64 = row_sums.iter().sum();
    let contributions = if total < ZERO_VARIANCE {
        vec![1.0 / n as f64; n]
    } else {
        row_sums.iter().map(|s| s / total).collect()
    };
    Contributions {
        total_effects,
        row_sums,
        contributions,
    }
}

/// Sensitivity and redundancy analysis of one network's hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub total_effects: Array2<f64>,
    pub row_sums: Vec<f64>,
    pub contributions: Vec<f64>,
    pub correlation: Array2<f64>,
}

impl AnalysisReport {
    pub fn new(c: Contributions, correlation: Array2<f64>) -> Self {
        AnalysisReport {
            total_effects: c.total_effects,
            row_sums: c.row_sums,
            contributions: c.contributions,
            correlation,
        }
    }

    pub fn hidden(&self) -> usize {
        self.contributions.len()
    }
}

/// Contribution percentages plus the activation correlation matrix, both
/// computed over `x_train`.
pub fn analyze(
    net: &Network,
    x_train: &Array2<f64>,
    settings: EfastSettings,
    phase_seed: u64,
) -> Result<AnalysisReport> {
    let c = contribution_percentages(net, x_train, settings, phase_seed)?;
    let r = crate::correlation::correlation_matrix(&net.hidden_activations(x_train)?)?;
    Ok(AnalysisReport::new(c, r))
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct ReportDoc {
    TE: Vec<Vec<f64>>,
    S: Vec<f64>,
    C: Vec<f64>,
    R: Vec<Vec<f64>>,
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.axis_iter(Axis(0)).map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, cols: usize) -> std::result::Result<Array2<f64>, String> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err("ragged matrix".into());
    }
    Array2::from_shape_vec((n, cols), rows.concat()).map_err(|e| e.to_string())
}

impl Serialize for AnalysisReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ReportDoc {
            TE: to_rows(&self.total_effects),
            S: self.row_sums.clone(),
            C: self.contributions.clone(),
            R: to_rows(&self.correlation),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AnalysisReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = ReportDoc::deserialize(d)?;
        let n = doc.C.len();
        let k = doc.TE.first().map_or(0, Vec::len);
        Ok(AnalysisReport {
            total_effects: from_rows(doc.TE, k).map_err(D::Error::custom)?,
            row_sums: doc.S,
            contributions: doc.C,
            correlation: from_rows(doc.R, n).map_err(D::Error::custom)?,
        })
    }
}
