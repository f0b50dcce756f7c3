use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::counts::{count_matrix, largest_connected_set, restrict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Stop once the largest change of the normalized flows drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 1_000_000,
        }
    }
}

/// `Σ C_ij ln T_ij`, with `0 · ln 0 = 0`.
pub fn log_likelihood(counts: &Array2<f64>, transition: &Array2<f64>) -> f64 {
    counts
        .iter()
        .zip(transition)
        .filter(|(c, _)| **c > 0.0)
        .map(|(c, t)| c * t.ln())
        .sum()
}

/// Reversible maximum-likelihood transition matrix and stationary
/// distribution for a strongly connected count matrix.
pub fn mle_reversible(counts: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    mle_reversible_with(counts, &MleOptions::default(), |_, _| {})
}

/// As [`mle_reversible`], calling `observer(iteration, T)` after every
/// fixed-point update.
pub fn mle_reversible_with(
    counts: &Array2<f64>,
    options: &MleOptions,
    mut observer: impl FnMut(usize, &Array2<f64>),
) -> Result<(Array2<f64>, Vec<f64>)> {
    let n = counts.nrows();
    if n == 0 || counts.ncols() != n {
        return Err(Error::Data("count matrix must be square and non-empty".into()));
    }
    if counts.iter().any(|&c| !(c.is_finite() && c >= 0.0)) {
        return Err(Error::Data("counts must be finite and non-negative".into()));
    }
    let row_sums: Vec<f64> = counts.rows().into_iter().map(|r| r.sum()).collect();
    if row_sums.iter().any(|&c| c == 0.0) {
        return Err(Error::Data(
            "every state needs outgoing counts; trim to the connected set first".into(),
        ));
    }
    let sym = counts + &counts.t();
    let total = sym.sum();
    let mut x = &sym / total;
    let mut residual = f64::INFINITY;
    for iter in 1..=options.max_iterations {
        let xs: Vec<f64> = x.rows().into_iter().map(|r| r.sum()).collect();
        let mut next = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let s = sym[[i, j]];
                if s > 0.0 {
                    let v = s / (row_sums[i] / xs[i] + row_sums[j] / xs[j]);
                    next[[i, j]] = v;
                    next[[j, i]] = v;
                }
            }
        }
        let norm = next.sum();
        next /= norm;
        residual = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        observer(iter, &flows_to_transition(&x));
        if residual < options.tolerance {
            let pi: Vec<f64> = x.rows().into_iter().map(|r| r.sum()).collect();
            return Ok((flows_to_transition(&x), pi));
        }
    }
    Err(Error::NonConvergence {
        method: "reversible MLE",
        iterations: options.max_iterations,
        residual,
    })
}

fn flows_to_transition(x: &Array2<f64>) -> Array2<f64> {
    let mut t = x.clone();
    for mut row in t.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    t
}

/// A reversible Markov state model on the connected subset of a
/// discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsmModel {
    /// Lag in frames.
    pub lag: usize,
    /// Number of labels in the discretization the model was built from.
    pub n_labels: usize,
    /// Original labels of the model states, ascending.
    pub active_set: Vec<usize>,
    /// Counts restricted to the active set.
    pub counts: Array2<f64>,
    pub transition: Array2<f64>,
    pub stationary: Vec<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Columns are right eigenvectors, normalized so `rᵀ diag(π) r = 1`.
    pub right_eigenvectors: Array2<f64>,
}

impl MsmModel {
    /// Counts transitions, trims to the largest connected set and fits the
    /// reversible MLE.
    pub fn fit(sequences: &[Vec<usize>], n_labels: usize, lag: usize) -> Result<Self> {
        let full = count_matrix(sequences, n_labels, lag)?;
        let active = largest_connected_set(&full);
        if active.is_empty() {
            return Err(Error::Data("no transitions were observed".into()));
        }
        let counts = restrict(&full, &active);
        let (transition, stationary) = mle_reversible(&counts)?;
        Self::assemble(lag, n_labels, active, counts, transition, stationary)
    }

    /// Wraps a given reversible transition matrix. The stationary
    /// distribution is the unique solution of `πT = π` when there is one,
    /// otherwise the uniform distribution if that is stationary.
    pub fn from_transition_matrix(transition: Array2<f64>, lag: usize) -> Result<Self> {
        let n = transition.nrows();
        if n == 0 || transition.ncols() != n {
            return Err(Error::Data("transition matrix must be square and non-empty".into()));
        }
        for row in transition.rows() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::Data("transition matrix must be row-stochastic".into()));
            }
        }
        let mut a = DMatrix::from_fn(n, n, |i, j| transition[[j, i]] - f64::from(i == j));
        a.row_mut(n - 1).fill(1.0);
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let solved = a.lu().solve(&b).map(|v| v.iter().copied().collect::<Vec<_>>());
        let pi = solved
            .filter(|p| p.iter().all(|&v| v > 0.0))
            .unwrap_or_else(|| vec![1.0 / n as f64; n]);
        for j in 0..n {
            let flow: f64 = (0..n).map(|i| pi[i] * transition[[i, j]]).sum();
            if (flow - pi[j]).abs() > 1e-10 {
                return Err(Error::Data("could not find a stationary distribution".into()));
            }
            for i in 0..n {
                if (pi[i] * transition[[i, j]] - pi[j] * transition[[j, i]]).abs() > 1e-10 {
                    return Err(Error::Data("transition matrix is not reversible".into()));
                }
            }
        }
        let counts = Array2::zeros((n, n));
        Self::assemble(lag, n, (0..n).collect(), counts, transition, pi)
    }

    fn assemble(
        lag: usize,
        n_labels: usize,
        active_set: Vec<usize>,
        counts: Array2<f64>,
        transition: Array2<f64>,
        stationary: Vec<f64>,
    ) -> Result<Self> {
        let n = transition.nrows();
        let sq: Vec<f64> = stationary.iter().map(|p| p.sqrt()).collect();
        let sym = DMatrix::from_fn(n, n, |i, j| {
            let a = sq[i] * transition[[i, j]] / sq[j];
            let b = sq[j] * transition[[j, i]] / sq[i];
            0.5 * (a + b)
        });
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut right = Array2::zeros((n, n));
        for (col, &k) in order.iter().enumerate() {
            let u = eig.eigenvectors.column(k);
            // the stationary vector is positive, others get a positive first entry
            let flip = if u[0] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                right[[i, col]] = flip * u[i] / sq[i];
            }
        }
        Ok(Self {
            lag,
            n_labels,
            active_set,
            counts,
            transition,
            stationary,
            eigenvalues,
            right_eigenvectors: right,
        })
    }

    pub fn n_states(&self) -> usize {
        self.active_set.len()
    }

    /// Implied timescales `−τ/ln λ_{i+1}` for `i = 1..=m`, multiplied by
    /// `frame_interval`. Eigenvalues at or above 1 give `+∞`, non-positive
    /// eigenvalues give NaN.
    pub fn timescales(&self, m: usize, frame_interval: f64) -> Result<Vec<f64>> {
        if m + 1 > self.n_states() {
            return Err(Error::Config(format!(
                "requested {m} timescales from a {}-state model",
                self.n_states()
            )));
        }
        Ok(self.eigenvalues[1..=m]
            .iter()
            .map(|&l| {
                if l >= 1.0 {
                    f64::INFINITY
                } else if l <= 0.0 {
                    f64::NAN
                } else {
                    -(self.lag as f64) / l.ln() * frame_interval
                }
            })
            .collect())
    }
}
