use ndarray::Array2;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};

/// Sliding-window transition counts: `C[i, j]` is the number of
/// `(s_t = i, s_{t+τ} = j)` pairs inside each sequence.
pub fn count_matrix(sequences: &[Vec<usize>], n_states: usize, lag: usize) -> Result<Array2<f64>> {
    if lag == 0 {
        return Err(Error::Config("MSM lag must be at least 1".into()));
    }
    if sequences.iter().all(|s| s.len() <= lag) {
        return Err(Error::Data(format!(
            "every state sequence is shorter than lag {lag} + 1"
        )));
    }
    let mut c = Array2::zeros((n_states, n_states));
    for s in sequences {
        if let Some(&bad) = s.iter().find(|&&x| x >= n_states) {
            return Err(Error::Data(format!(
                "state label {bad} out of range for {n_states} states"
            )));
        }
        for w in 0..s.len().saturating_sub(lag) {
            c[[s[w], s[w + lag]]] += 1.0;
        }
    }
    Ok(c)
}

/// States of the strongly connected component of the count graph holding the
/// most counts, in ascending order. Ties go to the larger component, then to
/// the one with the lowest state.
pub fn largest_connected_set(counts: &Array2<f64>) -> Vec<usize> {
    let n = counts.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for ((i, j), &c) in counts.indexed_iter() {
        if c > 0.0 && i != j {
            g.add_edge(nodes[i], nodes[j], ());
        }
    }
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for comp in tarjan_scc(&g) {
        let mut states: Vec<usize> = comp.iter().map(|n| n.index()).collect();
        states.sort_unstable();
        let mass: f64 = states.iter().map(|&i| counts.row(i).sum()).sum();
        if mass == 0.0 {
            continue;
        }
        let better = match &best {
            None => true,
            Some((m, len, s)) => {
                (mass, states.len()) > (*m, *len)
                    || ((mass, states.len()) == (*m, *len) && states[0] < s[0])
            }
        };
        if better {
            best = Some((mass, states.len(), states));
        }
    }
    best.map(|b| b.2).unwrap_or_default()
}

/// Submatrix of `counts` on `states`.
pub fn restrict(counts: &Array2<f64>, states: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((states.len(), states.len()), |(a, b)| {
        counts[[states[a], states[b]]]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn hand_count() {
        let c = count_matrix(&[vec![0, 1, 0, 1]], 2, 1).unwrap();
        assert_eq!(c, array![[0.0, 2.0], [1.0, 0.0]]);
    }

    #[test]
    fn short_sequences_contribute_nothing() {
        let c = count_matrix(&[vec![0, 1, 1], vec![1, 0]], 2, 2).unwrap();
        assert_eq!(c, array![[0.0, 1.0], [0.0, 0.0]]);
        assert!(count_matrix(&[vec![0, 1]], 2, 2).is_err());
    }

    #[test]
    fn out_of_range_label() {
        assert!(count_matrix(&[vec![0, 3, 1]], 2, 1).is_err());
    }

    #[test]
    fn trimming_keeps_largest_block() {
        let c = array![
            [5.0, 1.0, 0.0, 0.0],
            [1.0, 5.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0, 1.0]
        ];
        assert_eq!(largest_connected_set(&c), vec![0, 1]);
        // a one-way edge does not join components; equal mass favors size
        let c = array![[3.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 0.0, 9.0]];
        assert_eq!(largest_connected_set(&c), vec![0, 1]);
        let c = array![[3.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 0.0, 10.0]];
        assert_eq!(largest_connected_set(&c), vec![2]);
        assert_eq!(restrict(&c, &[0, 2]), array![[3.0, 0.0], [0.0, 10.0]]);
    }

    proptest! {
        #[test]
        fn counts_add_over_sequences(
            a in proptest::collection::vec(0usize..4, 0..30),
            b in proptest::collection::vec(0usize..4, 0..30),
            lag in 1usize..4,
        ) {
            let long = vec![0usize; lag + 1];
            let both = count_matrix(&[a.clone(), b.clone(), long.clone()], 4, lag).unwrap();
            let sa = count_matrix(&[a, long.clone()], 4, lag).unwrap();
            let sb = count_matrix(&[b, long.clone()], 4, lag).unwrap();
            let sl = count_matrix(&[long], 4, lag).unwrap();
            prop_assert_eq!(both, sa + sb - sl);
        }
    }
}
