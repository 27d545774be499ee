//! Pearson correlation between hidden-neuron activation sequences.

use ndarray::{Array2, Axis};

use crate::{Error, Result};

/// Variances below this are treated as zero.
const DEGENERATE_VAR: f64 = 1e-24;

/// Symmetric matrix of pairwise Pearson coefficients between the columns of
/// `activations` (rows are samples, columns are neurons).
///
/// A column with zero variance is uncorrelated with every other column; the
/// diagonal is always 1.
pub fn correlation_matrix(activations: &Array2<f64>) -> Result<Array2<f64>> {
    let (l, n) = activations.dim();
    if l < 2 {
        return Err(Error::TooFewRows {
            rows: l,
            required: 2,
        });
    }
    let mean = activations.mean_axis(Axis(0)).expect("non-empty");
    let centered = activations - &mean;
    let cov = centered.t().dot(&centered);
    let mut r = Array2::zeros((n, n));
    for i in 0..n {
        r[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let (vi, vj) = (cov[[i, i]], cov[[j, j]]);
            let rij = if vi < DEGENERATE_VAR || vj < DEGENERATE_VAR {
                0.0
            } else {
                (cov[[i, j]] / (vi.sqrt() * vj.sqrt())).clamp(-1.0, 1.0)
            };
            r[[i, j]] = rij;
            r[[j, i]] = rij;
        }
    }
    Ok(r)
}

/// Counts of `|R_ij|` for `i < j` in `bins` uniform bins over `[0, 1]`.
pub fn abs_histogram(r: &Array2<f64>, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let n = r.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = r[[i, j]].abs().min(1.0);
            let b = ((a * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
}
