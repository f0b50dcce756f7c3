use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::estimate::MsmModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmrqScore {
    pub score: f64,
    /// Training states (original labels) absent from the test model.
    pub dropped_states: Vec<usize>,
}

/// Generalized matrix Rayleigh quotient of the top `m` right eigenvectors of
/// `train` on held-out state sequences.
///
/// A second reversible MSM is fitted to `test_sequences`; with `S = diag(π)`
/// and `C = S T` from that model the score is `tr[(VᵀCV)(VᵀSV)⁻¹]`. Test
/// states unknown to the training model get zero rows in `V`; training
/// states missing from the test model are dropped and listed in the result.
pub fn gmrq_score(train: &MsmModel, test_sequences: &[Vec<usize>], m: usize) -> Result<GmrqScore> {
    if m == 0 || m > train.n_states() {
        return Err(Error::Config(format!(
            "GMRQ needs 1 <= m <= {} training states, got {m}",
            train.n_states()
        )));
    }
    let test = MsmModel::fit(test_sequences, train.n_labels, train.lag)?;
    let n = test.n_states();
    let mut v = DMatrix::zeros(n, m);
    for (row, label) in test.active_set.iter().enumerate() {
        if let Ok(k) = train.active_set.binary_search(label) {
            for c in 0..m {
                v[(row, c)] = train.right_eigenvectors[[k, c]];
            }
        }
    }
    let dropped_states = train
        .active_set
        .iter()
        .copied()
        .filter(|l| test.active_set.binary_search(l).is_err())
        .collect();
    let s = DMatrix::from_fn(n, n, |i, j| if i == j { test.stationary[i] } else { 0.0 });
    let c = DMatrix::from_fn(n, n, |i, j| test.stationary[i] * test.transition[[i, j]]);
    let p = v.transpose() * c * &v;
    let q = v.transpose() * s * &v;
    let q_inv = q
        .try_inverse()
        .ok_or_else(|| Error::Numerical("GMRQ overlap matrix is singular".into()))?;
    Ok(GmrqScore {
        score: (p * q_inv).trace(),
        dropped_states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_chain(t: &ndarray::Array2<f64>, n: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = 0;
        (0..n)
            .map(|_| {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                for j in 0..t.ncols() {
                    acc += t[[s, j]];
                    if r < acc {
                        s = j;
                        break;
                    }
                }
                s
            })
            .collect()
    }

    fn chain() -> ndarray::Array2<f64> {
        array![[0.97, 0.02, 0.01], [0.02, 0.9, 0.08], [0.01, 0.08, 0.91]]
    }

    #[test]
    fn in_sample_score_is_eigenvalue_sum() {
        let seqs = vec![sample_chain(&chain(), 20_000, 1)];
        let model = MsmModel::fit(&seqs, 3, 1).unwrap();
        for m in 1..=3 {
            let s = gmrq_score(&model, &seqs, m).unwrap();
            let want: f64 = model.eigenvalues[..m].iter().sum();
            assert!((s.score - want).abs() < 1e-6, "m={m}: {} vs {want}", s.score);
            assert!(s.dropped_states.is_empty());
        }
    }

    #[test]
    fn stationary_only_scores_one() {
        let train = MsmModel::fit(&[sample_chain(&chain(), 5_000, 2)], 3, 1).unwrap();
        let s = gmrq_score(&train, &[sample_chain(&chain(), 5_000, 3)], 1).unwrap();
        assert!((s.score - 1.0).abs() < 1e-10);
    }

    #[test]
    fn held_out_score_obeys_variational_bound() {
        let t = chain();
        let truth = MsmModel::from_transition_matrix(t.clone(), 1).unwrap();
        let bound = 1.0 + truth.eigenvalues[1];
        let train = MsmModel::fit(&[sample_chain(&t, 50_000, 4)], 3, 1).unwrap();
        let s = gmrq_score(&train, &[sample_chain(&t, 50_000, 5)], 2).unwrap();
        assert!(s.score <= 2.0);
        assert!(s.score <= bound + 0.02, "{} vs {bound}", s.score);
        assert!(s.score > bound - 0.05);
    }

    #[test]
    fn missing_test_state_is_recorded() {
        let train_seq = vec![0, 1, 0, 1, 1, 0, 2, 3, 2, 2, 3, 3, 2, 1, 0, 0, 1, 2, 3, 2];
        let train = MsmModel::fit(&[train_seq], 4, 1).unwrap();
        let s = gmrq_score(&train, &[vec![0, 1, 0, 0, 1, 2, 2, 1, 0]], 2).unwrap();
        assert_eq!(s.dropped_states, vec![3]);
        assert!(s.score.is_finite());
    }
}
