//! Binary ant colony optimizer over hidden-neuron subsets.
//!
//! Every hidden neuron is a graph node with two sub-nodes: bit 0 (drop the
//! neuron) and bit 1 (keep it). An ant starts on a random sub-node and
//! repeatedly moves to a sub-node of an unvisited node, choosing the edge
//! `(i,a) -> (j,b)` with probability proportional to
//! `tau^alpha * eta^beta`. The sub-nodes it lands on spell out a mask.
//! Masks are scored by the reciprocal of masked validation cross-entropy,
//! and only the best-so-far ant reinforces its path.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Partition;
use crate::network::{cross_entropy, softmax_in_place, Network, PROB_FLOOR};
use crate::seed::{self, Stream};
use crate::sensitivity::AnalysisReport;
use crate::{Error, Result};

/// Cross-entropy is floored at this value before taking the reciprocal.
pub const CE_FLOOR: f64 = 1e-9;

/// Heuristic information design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum HeuristicDesign {
    /// No heuristic information; the colony runs with `beta = 0`.
    H0,
    /// Correlation only: prefer dropping neurons that duplicate the current one.
    H1,
    /// Contribution only: prefer keeping high-contribution neurons.
    H2,
    /// Product of `H1` and `H2`.
    #[default]
    H3,
}

impl fmt::Display for HeuristicDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HeuristicDesign::H0 => "H0",
            HeuristicDesign::H1 => "H1",
            HeuristicDesign::H2 => "H2",
            HeuristicDesign::H3 => "H3",
        };
        f.write_str(s)
    }
}

impl FromStr for HeuristicDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "H0" => Ok(HeuristicDesign::H0),
            "H1" => Ok(HeuristicDesign::H1),
            "H2" => Ok(HeuristicDesign::H2),
            "H3" => Ok(HeuristicDesign::H3),
            _ => Err(Error::Config(format!("unknown heuristic design {s:?}"))),
        }
    }
}

/// Dense storage for a value on every directed sub-node edge `(i,a) -> (j,b)`.
/// Entries with `i == j` exist but are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTensor {
    nodes: usize,
    data: Vec<f64>,
}

impl EdgeTensor {
    pub fn filled(nodes: usize, value: f64) -> Self {
        EdgeTensor {
            nodes,
            data: vec![value; 4 * nodes * nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    #[inline]
    fn index(&self, i: usize, a: bool, j: usize, b: bool) -> usize {
        (((i << 1) | a as usize) * self.nodes + j) * 2 + b as usize
    }

    #[inline]
    pub fn get(&self, i: usize, a: bool, j: usize, b: bool) -> f64 {
        self.data[self.index(i, a, j, b)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, a: bool, j: usize, b: bool, v: f64) {
        let idx = self.index(i, a, j, b);
        self.data[idx] = v;
    }

    /// Values on edges between distinct nodes.
    pub fn edge_values(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.nodes;
        self.data.iter().enumerate().filter_map(move |(idx, &v)| {
            let j = (idx / 2) % n;
            let i = idx / (4 * n);
            (i != j).then_some(v)
        })
    }
}

/// Static edge desirability derived from contributions and correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicMatrix {
    pub design: HeuristicDesign,
    pub values: EdgeTensor,
}

/// Builds heuristic values for every edge. Entries depend only on the
/// destination sub-node and, for the correlation-based designs, on the
/// correlation between source and destination neurons.
pub fn build_heuristics(
    design: HeuristicDesign,
    contributions: &[f64],
    correlation: &Array2<f64>,
) -> Result<HeuristicMatrix> {
    let n = contributions.len();
    if correlation.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "{n} contributions but a {:?} correlation matrix",
            correlation.dim()
        )));
    }
    let mean_c = contributions.iter().sum::<f64>() / n as f64;
    let mut values = EdgeTensor::filled(n, 1.0);
    if design == HeuristicDesign::H0 {
        return Ok(HeuristicMatrix { design, values });
    }
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let r = correlation[[i, j]].abs().min(1.0);
            let (drop, keep) = match design {
                HeuristicDesign::H1 => (r, 1.0 - r),
                HeuristicDesign::H2 => (mean_c, contributions[j]),
                HeuristicDesign::H3 => (r * mean_c, (1.0 - r) * contributions[j]),
                HeuristicDesign::H0 => unreachable!(),
            };
            for a in [false, true] {
                values.set(i, a, j, false, drop);
                values.set(i, a, j, true, keep);
            }
        }
    }
    Ok(HeuristicMatrix { design, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacoConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Evaporation rate in `(0, 1]`.
    pub rho: f64,
    pub ants: usize,
    pub generations: usize,
    pub tau0: f64,
}

impl Default for BacoConfig {
    fn default() -> Self {
        BacoConfig {
            alpha: 1.0,
            beta: 0.6,
            rho: 0.1,
            ants: 50,
            generations: 30,
            tau0: 0.1,
        }
    }
}

impl BacoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if self.ants == 0 || self.generations == 0 {
            return bad("ant count and generation count must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad(format!(
                "alpha and beta must be non-negative, got {} and {}",
                self.alpha, self.beta
            ));
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return bad(format!("tau0 must be positive, got {}", self.tau0));
        }
        Ok(())
    }
}

/// Pheromone on every edge together with its current lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneMatrix {
    pub values: EdgeTensor,
    /// Lower clamp, `tau0`.
    pub floor: f64,
}

impl PheromoneMatrix {
    pub fn new(nodes: usize, tau0: f64) -> Self {
        PheromoneMatrix {
            values: EdgeTensor::filled(nodes, tau0),
            floor: tau0,
        }
    }

    /// End-of-first-generation reset: every edge to `obj_best / N`.
    pub fn reset(&mut self, obj_best: f64) {
        let level = obj_best / self.values.nodes() as f64;
        self.values.data.fill(level);
    }

    /// Evaporates every edge, deposits `rho * obj_best` on the edges of the
    /// best path, then clamps from below at the floor.
    pub fn update(&mut self, best: &BitSolution, rho: f64, obj_best: f64) -> Result<()> {
        if best.objective.is_none() {
            return Err(Error::Config(
                "cannot deposit along an invalid solution".into(),
            ));
        }
        self.values.data.iter_mut().for_each(|t| *t *= 1.0 - rho);
        for w in best.path.windows(2) {
            let ((i, a), (j, b)) = (w[0], w[1]);
            let idx = self.values.index(i, a, j, b);
            self.values.data[idx] += rho * obj_best;
        }
        let floor = self.floor;
        self.values.data.iter_mut().for_each(|t| *t = t.max(floor));
        Ok(())
    }

    /// Smallest and largest pheromone over edges between distinct nodes;
    /// `None` for a single node, which has no edges.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.values.edge_values().fold(None, |acc, t| match acc {
            None => Some((t, t)),
            Some((lo, hi)) => Some((f64::min(lo, t), f64::max(hi, t))),
        })
    }
}

/// One ant's mask, the order it visited nodes in, and its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitSolution {
    pub bits: Vec<bool>,
    /// `(node, bit)` in visiting order, starting at the source.
    pub path: Vec<(usize, bool)>,
    /// Masked validation cross-entropy; `None` for the empty mask.
    pub ce: Option<f64>,
    /// `1 / max(ce, CE_FLOOR)`; `None` for the empty mask.
    pub objective: Option<f64>,
}

impl BitSolution {
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Objective used for comparisons; invalid solutions count as 0.
    pub fn score(&self) -> f64 {
        self.objective.unwrap_or(0.0)
    }

    /// Orders solutions best first: higher objective, then fewer selected
    /// neurons, then the lexicographically smaller bit string.
    pub fn rank(&self, other: &BitSolution) -> Ordering {
        other
            .score()
            .total_cmp(&self.score())
            .then_with(|| self.popcount().cmp(&other.popcount()))
            .then_with(|| self.bits.cmp(&other.bits))
    }
}

/// Renders a mask as a string of `0`/`1` characters.
pub fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// `tau^alpha * eta^beta` on every edge for one generation.
#[derive(Debug, Clone)]
pub struct TransitionWeights(EdgeTensor);

impl TransitionWeights {
    pub fn new(pher: &PheromoneMatrix, heur: &HeuristicMatrix, alpha: f64, beta: f64) -> Self {
        let data = pher
            .values
            .data
            .iter()
            .zip(&heur.values.data)
            .map(|(&t, &e)| t.powf(alpha) * e.powf(beta))
            .collect();
        TransitionWeights(EdgeTensor {
            nodes: pher.values.nodes,
            data,
        })
    }

    /// Normalized move probabilities from sub-node `(i, a)` to both
    /// sub-nodes of every node in `unvisited`, in candidate order
    /// `(j0, 0), (j0, 1), (j1, 0), ...`. Falls back to uniform when every
    /// weight is zero.
    pub fn probabilities(&self, from: (usize, bool), unvisited: &[usize]) -> Vec<f64> {
        let (i, a) = from;
        let mut w: Vec<f64> = unvisited
            .iter()
            .flat_map(|&j| [self.0.get(i, a, j, false), self.0.get(i, a, j, true)])
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 && total.is_finite() {
            w.iter_mut().for_each(|p| *p /= total);
        } else {
            let u = 1.0 / w.len() as f64;
            w.iter_mut().for_each(|p| *p = u);
        }
        w
    }
}

fn roulette<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return idx;
        }
    }
    // rounding left the cumulative sum just under r; take the last
    // candidate with non-zero probability
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Builds one ant's mask using precomputed transition weights.
pub fn construct_with_weights<R: Rng>(weights: &TransitionWeights, rng: &mut R) -> BitSolution {
    let n = weights.0.nodes();
    let source = rng.random_range(0..n);
    let source_bit: bool = rng.random();
    let mut bits = vec![false; n];
    bits[source] = source_bit;
    let mut path = Vec::with_capacity(n);
    path.push((source, source_bit));
    let mut unvisited: Vec<usize> = (0..n).filter(|&j| j != source).collect();
    let mut current = (source, source_bit);
    while !unvisited.is_empty() {
        let probs = weights.probabilities(current, &unvisited);
        let pick = roulette(&probs, rng);
        let (j, b) = (unvisited[pick / 2], pick % 2 == 1);
        bits[j] = b;
        path.push((j, b));
        unvisited.remove(pick / 2);
        current = (j, b);
    }
    BitSolution {
        bits,
        path,
        ce: None,
        objective: None,
    }
}

pub fn construct_solution<R: Rng>(
    pher: &PheromoneMatrix,
    heur: &HeuristicMatrix,
    cfg: &BacoConfig,
    rng: &mut R,
) -> BitSolution {
    construct_with_weights(
        &TransitionWeights::new(pher, heur, cfg.alpha, cfg.beta),
        rng,
    )
}

/// `1 / max(ce, CE_FLOOR)`.
pub fn objective_from_ce(ce: f64) -> f64 {
    1.0 / ce.max(CE_FLOOR)
}

/// Scores a mask by masked validation cross-entropy through the network's
/// own forward path. Returns `None` for the empty mask.
pub fn evaluate_solution(
    net: &Network,
    bits: &[bool],
    validation: &Partition,
) -> Result<Option<f64>> {
    if !bits.iter().any(|&b| b) {
        if bits.len() != net.hidden() {
            return Err(Error::Dimension("mask length mismatch".into()));
        }
        return Ok(None);
    }
    let probs = net.apply_mask(bits, &validation.x)?;
    Ok(Some(objective_from_ce(cross_entropy(
        &probs,
        &validation.targets,
    )?)))
}

/// Masked cross-entropy with the validation hidden activations cached, so
/// each mask costs one pass over the output layer.
#[derive(Debug, Clone)]
pub struct MaskEvaluator {
    hidden: Array2<f64>,
    v: Array2<f64>,
    b1: Array1<f64>,
    labels: Vec<usize>,
}

impl MaskEvaluator {
    pub fn new(net: &Network, validation: &Partition) -> Result<Self> {
        if validation.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(MaskEvaluator {
            hidden: net.hidden_activations(&validation.x)?,
            v: net.v.clone(),
            b1: net.b1.clone(),
            labels: validation.labels.clone(),
        })
    }

    /// Masked cross-entropy, or `None` for the empty mask.
    pub fn ce(&self, bits: &[bool]) -> Option<f64> {
        let keep: Vec<usize> = bits
            .iter()
            .enumerate()
            .filter_map(|(n, &b)| b.then_some(n))
            .collect();
        if keep.is_empty() {
            return None;
        }
        let k = self.b1.len();
        let mut logits = vec![0.0; k];
        let mut total = 0.0;
        for (row, &y) in self.hidden.axis_iter(Axis(0)).zip(&self.labels) {
            logits.copy_from_slice(self.b1.as_slice().expect("contiguous"));
            for &n in &keep {
                let h = row[n];
                logits
                    .iter_mut()
                    .zip(self.v.row(n))
                    .for_each(|(l, &v)| *l += h * v);
            }
            softmax_in_place(&mut logits);
            total -= logits[y].max(PROB_FLOOR).ln();
        }
        Some(total / self.labels.len() as f64)
    }

    pub fn score(&self, mut sol: BitSolution) -> BitSolution {
        sol.ce = self.ce(&sol.bits);
        sol.objective = sol.ce.map(objective_from_ce);
        sol
    }
}

/// Summary of one generation of the colony.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_validation_ce: f64,
    pub best_objective: f64,
    pub best_popcount: usize,
    /// Pheromone range over all edges after this generation's update;
    /// absent when the network has a single hidden neuron.
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacoOutcome {
    pub best: BitSolution,
    pub curve: Vec<GenerationRecord>,
}

/// Runs the colony for `cfg.generations` generations and returns the
/// best-so-far mask with the per-generation best-CE curve.
///
/// Ant `a` of generation `g` draws from the stream
/// `derive(seed, Colony, g * ants + a)`, so the result does not depend on
/// how ants are scheduled across threads.
pub fn run_baco(
    net: &Network,
    validation: &Partition,
    report: &AnalysisReport,
    cfg: &BacoConfig,
    design: HeuristicDesign,
    seed: u64,
) -> Result<BacoOutcome> {
    cfg.validate()?;
    let n = net.hidden();
    if report.hidden() != n {
        return Err(Error::Dimension(format!(
            "analysis covers {} neurons, network has {n}",
            report.hidden()
        )));
    }
    let heur = build_heuristics(design, &report.contributions, &report.correlation)?;
    let beta = if design == HeuristicDesign::H0 {
        0.0
    } else {
        cfg.beta
    };
    let evaluator = MaskEvaluator::new(net, validation)?;
    let mut pher = PheromoneMatrix::new(n, cfg.tau0);
    let mut best: Option<BitSolution> = None;
    let mut reset_done = false;
    let mut curve = Vec::with_capacity(cfg.generations);

    for g in 0..cfg.generations {
        let weights = TransitionWeights::new(&pher, &heur, cfg.alpha, beta);
        let ants: Vec<BitSolution> = (0..cfg.ants)
            .into_par_iter()
            .map(|a| {
                let stream = (g * cfg.ants + a) as u64;
                let mut rng = seed::rng(seed::derive(seed, Stream::Colony, stream));
                evaluator.score(construct_with_weights(&weights, &mut rng))
            })
            .collect();
        let gen_best = ants
            .into_iter()
            .filter(|s| s.objective.is_some())
            .min_by(BitSolution::rank);
        if let Some(candidate) = gen_best {
            let improved = best
                .as_ref()
                .is_none_or(|b| candidate.rank(b) == Ordering::Less);
            if improved {
                best = Some(candidate);
            }
        }
        if let Some(b) = &best {
            let obj = b.score();
            if !reset_done {
                pher.reset(obj);
                reset_done = true;
            }
            pher.update(b, cfg.rho, obj)?;
            let bounds = pher.bounds();
            curve.push(GenerationRecord {
                generation: g + 1,
                best_validation_ce: b.ce.expect("valid best"),
                best_objective: obj,
                best_popcount: b.popcount(),
                tau_min: bounds.map(|b| b.0),
                tau_max: bounds.map(|b| b.1),
            });
        }
    }
    best.map(|best| BacoOutcome { best, curve })
        .ok_or(Error::NoValidSolution)
}
