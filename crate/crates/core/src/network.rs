//! Single-hidden-layer classifier: sigmoid hidden units, softmax outputs,
//! per-sample SGD on cross-entropy, and hidden-layer masking/pruning.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Partition;
use crate::{seed, Error, Result};

/// Probabilities are floored at this value before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights and biases of an `I`-`N`-`K` network.
///
/// `w` is `I x N` (input to hidden), `v` is `N x K` (hidden to output).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub w: Array2<f64>,
    pub b0: Array1<f64>,
    pub v: Array2<f64>,
    pub b1: Array1<f64>,
}

/// Gradient of the per-sample loss, shaped like [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w: Array2<f64>,
    pub b0: Array1<f64>,
    pub v: Array2<f64>,
    pub b1: Array1<f64>,
}

impl Gradient {
    /// Flattened in the same order as [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.w
            .iter()
            .chain(self.b0.iter())
            .chain(self.v.iter())
            .chain(self.b1.iter())
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            max_epochs: 2000,
            patience: 20,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

impl Network {
    /// Draws every weight and bias i.i.d. uniform on `[-1, 1]`.
    pub fn init(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        if inputs == 0 || hidden == 0 || classes == 0 {
            return Err(Error::Dimension(format!(
                "network dimensions must be positive, got I={inputs} N={hidden} K={classes}"
            )));
        }
        let mut rng = seed::rng(seed);
        let mut draw = |shape: (usize, usize)| {
            Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..=1.0))
        };
        let w = draw((inputs, hidden));
        let b0 = draw((1, hidden)).remove_axis(Axis(0));
        let v = draw((hidden, classes));
        let b1 = draw((1, classes)).remove_axis(Axis(0));
        Ok(Network { w, b0, v, b1 })
    }

    /// All-zero network, mostly useful in tests.
    pub fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Network {
            w: Array2::zeros((inputs, hidden)),
            b0: Array1::zeros(hidden),
            v: Array2::zeros((hidden, classes)),
            b1: Array1::zeros(classes),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.b0.len()
    }

    pub fn classes(&self) -> usize {
        self.b1.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.w.len() + self.b0.len() + self.v.len() + self.b1.len()
    }

    /// Flattened parameters: `W` row-major, `B0`, `V` row-major, `B1`.
    pub fn parameters(&self) -> Vec<f64> {
        self.w
            .iter()
            .chain(self.b0.iter())
            .chain(self.v.iter())
            .chain(self.b1.iter())
            .copied()
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.parameter_count()
            )));
        }
        let mut it = params.iter().copied();
        for p in self
            .w
            .iter_mut()
            .chain(self.b0.iter_mut())
            .chain(self.v.iter_mut())
            .chain(self.b1.iter_mut())
        {
            *p = it.next().expect("length checked");
        }
        Ok(())
    }

    fn check_inputs(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.inputs() {
            return Err(Error::Dimension(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.inputs()
            )));
        }
        Ok(())
    }

    /// Sigmoid hidden activations, one row per input row.
    pub fn hidden_activations(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(x)?;
        let mut z = x.dot(&self.w) + &self.b0;
        z.mapv_inplace(sigmoid);
        Ok(z)
    }

    /// Pre-softmax output values for given hidden activations.
    pub fn logits_from_hidden(&self, hidden: &Array2<f64>) -> Array2<f64> {
        hidden.dot(&self.v) + &self.b1
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let h = self.hidden_activations(x)?;
        let mut out = self.logits_from_hidden(&h);
        softmax_rows(&mut out);
        Ok(out)
    }

    /// Forward pass with the hidden activations of deselected neurons forced
    /// to zero.
    pub fn apply_mask(&self, bits: &[bool], x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_mask(bits)?;
        let mut h = self.hidden_activations(x)?;
        for (mut col, &keep) in h.axis_iter_mut(Axis(1)).zip(bits) {
            if !keep {
                col.fill(0.0);
            }
        }
        let mut out = self.logits_from_hidden(&h);
        softmax_rows(&mut out);
        Ok(out)
    }

    fn check_mask(&self, bits: &[bool]) -> Result<()> {
        if bits.len() != self.hidden() {
            return Err(Error::Dimension(format!(
                "mask has {} bits, hidden layer has {} neurons",
                bits.len(),
                self.hidden()
            )));
        }
        Ok(())
    }

    /// Removes deselected hidden neurons, keeping every retained parameter.
    pub fn prune(&self, bits: &[bool]) -> Result<Network> {
        self.check_mask(bits)?;
        let keep: Vec<usize> = bits
            .iter()
            .enumerate()
            .filter_map(|(n, &b)| b.then_some(n))
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(Network {
            w: self
                .w
                .select(Axis(1), &keep)
                .as_standard_layout()
                .into_owned(),
            b0: self.b0.select(Axis(0), &keep),
            v: self
                .v
                .select(Axis(0), &keep)
                .as_standard_layout()
                .into_owned(),
            b1: self.b1.clone(),
        })
    }

    /// Fraction of rows whose most probable class equals the label.
    pub fn accuracy(&self, x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::EmptyInput);
        }
        if labels.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        let probs = self.forward(x)?;
        let hits = probs
            .axis_iter(Axis(0))
            .zip(labels)
            .filter(|(row, &y)| argmax(*row) == y)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Cross-entropy of the network's predictions on a partition.
    pub fn partition_ce(&self, part: &Partition) -> Result<f64> {
        cross_entropy(&self.forward(&part.x)?, &part.targets)
    }

    /// Loss and gradient of the per-sample cross-entropy.
    pub fn sample_gradient(&self, x: ArrayView1<f64>, d: ArrayView1<f64>) -> (f64, Gradient) {
        let (n, k) = (self.hidden(), self.classes());
        let y: Array1<f64> = (x.dot(&self.w) + &self.b0).mapv(sigmoid);
        let mut p = y.dot(&self.v) + &self.b1;
        softmax_in_place(p.as_slice_mut().expect("contiguous"));
        let loss = -d
            .iter()
            .zip(p.iter())
            .map(|(di, pi)| di * pi.max(PROB_FLOOR).ln())
            .sum::<f64>();

        // targets sum to one, so dL/dlogit = p - d
        let delta_out = &p - &d;
        let mut delta_hidden = self.v.dot(&delta_out);
        delta_hidden
            .iter_mut()
            .zip(y.iter())
            .for_each(|(g, yi)| *g *= yi * (1.0 - yi));

        let mut gv = Array2::zeros((n, k));
        for (mut row, yi) in gv.axis_iter_mut(Axis(0)).zip(y.iter()) {
            row.assign(&(&delta_out * *yi));
        }
        let mut gw = Array2::zeros((self.inputs(), n));
        for (mut row, xi) in gw.axis_iter_mut(Axis(0)).zip(x.iter()) {
            row.assign(&(&delta_hidden * *xi));
        }
        (
            loss,
            Gradient {
                w: gw,
                b0: delta_hidden,
                v: gv,
                b1: delta_out,
            },
        )
    }

    fn make_standard_layout(&mut self) {
        if !self.w.is_standard_layout() {
            self.w = self.w.as_standard_layout().into_owned();
        }
        if !self.v.is_standard_layout() {
            self.v = self.v.as_standard_layout().into_owned();
        }
    }

    /// One in-place SGD step on a single sample. Works directly on the
    /// parameter slices; [`Network::sample_gradient`] is the reference form.
    fn sgd_step(&mut self, x: &[f64], d: &[f64], lr: f64, y: &mut [f64], out: &mut [f64]) {
        let (i_dim, n, k) = (self.inputs(), self.hidden(), self.classes());
        let w = self.w.as_slice_mut().expect("standard layout");
        let b0 = self.b0.as_slice_mut().expect("standard layout");
        let v = self.v.as_slice_mut().expect("standard layout");
        let b1 = self.b1.as_slice_mut().expect("standard layout");

        y.copy_from_slice(b0);
        for (i, &xi) in x.iter().enumerate() {
            let wr = &w[i * n..(i + 1) * n];
            y.iter_mut().zip(wr).for_each(|(a, &wij)| *a += xi * wij);
        }
        y.iter_mut().for_each(|a| *a = sigmoid(*a));

        out.copy_from_slice(b1);
        for (j, &yj) in y.iter().enumerate() {
            let vr = &v[j * k..(j + 1) * k];
            out.iter_mut().zip(vr).for_each(|(o, &vjk)| *o += yj * vjk);
        }
        softmax_in_place(out);
        out.iter_mut().zip(d).for_each(|(o, &di)| *o -= di);

        // hidden deltas use V before its update
        for j in 0..n {
            let vr = &mut v[j * k..(j + 1) * k];
            let back: f64 = vr.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
            let yj = y[j];
            vr.iter_mut()
                .zip(out.iter())
                .for_each(|(vjk, &g)| *vjk -= lr * g * yj);
            y[j] = back * yj * (1.0 - yj);
        }
        b1.iter_mut()
            .zip(out.iter())
            .for_each(|(b, &g)| *b -= lr * g);
        for (i, &xi) in x.iter().enumerate().take(i_dim) {
            let wr = &mut w[i * n..(i + 1) * n];
            wr.iter_mut()
                .zip(y.iter())
                .for_each(|(wij, &g)| *wij -= lr * g * xi);
        }
        b0.iter_mut().zip(y.iter()).for_each(|(b, &g)| *b -= lr * g);
    }

    /// One pass over the rows in a shuffled order, updating after every
    /// sample.
    pub fn sgd_epoch<R: Rng>(
        &mut self,
        x: &Array2<f64>,
        targets: &Array2<f64>,
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<()> {
        self.check_inputs(x)?;
        if targets.nrows() != x.nrows() || targets.ncols() != self.classes() {
            return Err(Error::Dimension(format!(
                "targets are {}x{}, expected {}x{}",
                targets.nrows(),
                targets.ncols(),
                x.nrows(),
                self.classes()
            )));
        }
        self.make_standard_layout();
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        order.shuffle(rng);
        let mut y = vec![0.0; self.hidden()];
        let mut out = vec![0.0; self.classes()];
        let x = x.as_standard_layout();
        let targets = targets.as_standard_layout();
        let (xs, ds) = (x.as_slice().unwrap(), targets.as_slice().unwrap());
        let (i_dim, k) = (self.inputs(), self.classes());
        for r in order {
            self.sgd_step(
                &xs[r * i_dim..(r + 1) * i_dim],
                &ds[r * k..(r + 1) * k],
                learning_rate,
                &mut y,
                &mut out,
            );
        }
        Ok(())
    }

    /// Runs a fixed number of epochs with no stopping rule.
    pub fn train_epochs<R: Rng>(
        &mut self,
        train: &Partition,
        epochs: usize,
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<()> {
        for _ in 0..epochs {
            self.sgd_epoch(&train.x, &train.targets, learning_rate, rng)?;
        }
        Ok(())
    }
}

/// Trains until validation cross-entropy has not improved for
/// `cfg.patience` consecutive epochs (or `cfg.max_epochs` is reached) and
/// returns the snapshot with the lowest validation cross-entropy.
pub fn train_with_early_stopping(
    net: &Network,
    train: &Partition,
    validation: &Partition,
    cfg: &TrainConfig,
) -> Result<(Network, f64)> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rng = seed::rng(cfg.shuffle_seed);
    let mut current = net.clone();
    let mut best_ce = current.partition_ce(validation)?;
    let mut best = current.clone();
    let mut stalled = 0;
    for _ in 0..cfg.max_epochs {
        current.sgd_epoch(&train.x, &train.targets, cfg.learning_rate, &mut rng)?;
        let ce = current.partition_ce(validation)?;
        if ce < best_ce {
            best_ce = ce;
            best = current.clone();
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, best_ce))
}

/// Mean cross-entropy over the supplied rows.
pub fn cross_entropy(probs: &Array2<f64>, targets: &Array2<f64>) -> Result<f64> {
    if probs.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if probs.dim() != targets.dim() {
        return Err(Error::Dimension(format!(
            "probabilities are {:?}, targets are {:?}",
            probs.dim(),
            targets.dim()
        )));
    }
    let total: f64 = probs
        .iter()
        .zip(targets.iter())
        .filter(|(_, &d)| d != 0.0)
        .map(|(&p, &d)| d * p.max(PROB_FLOOR).ln())
        .sum();
    Ok(-total / probs.nrows() as f64)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.axis_iter_mut(Axis(0)) {
        match row.as_slice_mut() {
            Some(s) => softmax_in_place(s),
            None => {
                let mut tmp = row.to_vec();
                softmax_in_place(&mut tmp);
                row.assign(&Array1::from(tmp));
            }
        }
    }
}

/// JSON form of a network: dimensions plus row-major parameter arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct NetworkDoc {
    I: usize,
    N: usize,
    K: usize,
    W: Vec<Vec<f64>>,
    B0: Vec<f64>,
    V: Vec<Vec<f64>>,
    B1: Vec<f64>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.axis_iter(Axis(0)).map(|r| r.to_vec()).collect()
}

fn from_rows(r: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<Array2<f64>> {
    if r.len() != shape.0 || r.iter().any(|row| row.len() != shape.1) {
        return Err(Error::Dimension(format!(
            "{what} is not {}x{}",
            shape.0, shape.1
        )));
    }
    Array2::from_shape_vec(shape, r.concat()).map_err(|e| Error::Dimension(e.to_string()))
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDoc {
            I: self.inputs(),
            N: self.hidden(),
            K: self.classes(),
            W: rows(&self.w),
            B0: self.b0.to_vec(),
            V: rows(&self.v),
            B1: self.b1.to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = NetworkDoc::deserialize(d)?;
        let build = || -> Result<Network> {
            if doc.B0.len() != doc.N || doc.B1.len() != doc.K {
                return Err(Error::Dimension("bias length mismatch".into()));
            }
            let net = Network {
                w: from_rows(&doc.W, (doc.I, doc.N), "W")?,
                b0: Array1::from(doc.B0.clone()),
                v: from_rows(&doc.V, (doc.N, doc.K), "V")?,
                b1: Array1::from(doc.B1.clone()),
            };
            if net.parameters().iter().any(|p| !p.is_finite()) {
                return Err(Error::Dimension("non-finite parameter".into()));
            }
            Ok(net)
        };
        build().map_err(D::Error::custom)
    }
}
