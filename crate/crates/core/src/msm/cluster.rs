//! Mini-batch k-means with k-means++ seeding.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub n_clusters: usize,
    pub batch_size: usize,
    /// Number of mini-batch updates after seeding.
    pub n_steps: usize,
    pub rng_seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_clusters: 12,
            batch_size: 1000,
            n_steps: 300,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// `n_clusters × k`.
    pub centers: Array2<f64>,
    pub rng_seed: u64,
    /// Mean squared distance of each mini-batch to its nearest center,
    /// followed by the final inertia over all points.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &Array2<f64>, x: ArrayView1<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_plus_plus(points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            // guards against landing on a zero-weight tail through rounding
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&d| d > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.row(c)));
        }
    }
    centers
}

impl ClusterModel {
    /// Fits centers to the rows of `points`.
    pub fn fit(points: ArrayView2<'_, f64>, config: &ClusterConfig) -> Result<Self> {
        let n = points.nrows();
        let k = config.n_clusters;
        if k < 2 {
            return Err(Error::Config(format!("n_clusters must be >= 2, got {k}")));
        }
        if config.batch_size == 0 {
            return Err(Error::Config("cluster batch_size must be positive".into()));
        }
        if n < k {
            return Err(Error::Data(format!("{n} points cannot form {k} clusters")));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("clustering input contains NaN or infinity".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(config.rng_seed);
        let mut centers = kmeans_plus_plus(points, k, &mut rng);
        let mut counts = vec![0usize; k];
        let mut history = Vec::with_capacity(config.n_steps + 1);
        let batch = config.batch_size.min(n);
        for _ in 0..config.n_steps {
            let idx = sample(&mut rng, n, batch);
            let assigned: Vec<(usize, usize, f64)> = idx
                .iter()
                .map(|i| {
                    let (c, d) = nearest(&centers, points.row(i));
                    (i, c, d)
                })
                .collect();
            history.push(assigned.iter().map(|a| a.2).sum::<f64>() / batch as f64);
            for (i, c, _) in assigned {
                counts[c] += 1;
                let eta = 1.0 / counts[c] as f64;
                let mut row = centers.row_mut(c);
                row.zip_mut_with(&points.row(i), |m, &x| *m += eta * (x - *m));
            }
        }
        let mut model = Self {
            centers,
            rng_seed: config.rng_seed,
            inertia_history: history,
        };
        let inertia = model.inertia(points)?;
        model.inertia_history.push(inertia);
        Ok(model)
    }

    pub fn n_clusters(&self) -> usize {
        self.centers.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.centers.ncols()
    }

    /// Nearest-center label for each row; ties go to the lower index.
    pub fn assign(&self, points: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        if points.ncols() != self.n_dims() {
            return Err(Error::Shape {
                context: "cluster assignment dimensions",
                expected: self.n_dims(),
                actual: points.ncols(),
            });
        }
        Ok(points
            .axis_iter(Axis(0))
            .map(|p| nearest(&self.centers, p).0)
            .collect())
    }

    /// Sum of squared distances of every point to its nearest center.
    pub fn inertia(&self, points: ArrayView2<'_, f64>) -> Result<f64> {
        if points.ncols() != self.n_dims() {
            return Err(Error::Shape {
                context: "cluster inertia dimensions",
                expected: self.n_dims(),
                actual: points.ncols(),
            });
        }
        Ok(points
            .axis_iter(Axis(0))
            .map(|p| nearest(&self.centers, p).1)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn distinct_points_give_zero_inertia() {
        let pts = Array2::from_shape_vec((8, 1), vec![0.0, 1.0, 5.0, 1.0, 0.0, 9.0, 5.0, 9.0]).unwrap();
        let cfg = ClusterConfig { n_clusters: 4, batch_size: 3, n_steps: 50, rng_seed: 2 };
        let m = ClusterModel::fit(pts.view(), &cfg).unwrap();
        assert_eq!(*m.inertia_history.last().unwrap(), 0.0);
        let labels = m.assign(pts.view()).unwrap();
        assert_eq!(labels[0], labels[4]);
        assert_eq!(labels[1], labels[3]);
        assert_ne!(labels[0], labels[1]);
    }

    #[test]
    fn separated_blobs_recover_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = Array2::from_shape_fn((4000, 1), |(i, _)| {
            let mean = if i % 2 == 0 { -3.0 } else { 4.0 };
            mean + 0.3 * rng.sample::<f64, _>(StandardNormal)
        });
        let cfg = ClusterConfig { n_clusters: 2, ..Default::default() };
        let m = ClusterModel::fit(pts.view(), &cfg).unwrap();
        let mut c: Vec<f64> = m.centers.iter().copied().collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] + 3.0).abs() < 0.05 && (c[1] - 4.0).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn same_seed_same_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = Array2::from_shape_simple_fn((2000, 2), || rng.sample::<f64, _>(StandardNormal));
        let cfg = ClusterConfig { n_clusters: 6, n_steps: 40, batch_size: 100, rng_seed: 9 };
        let a = ClusterModel::fit(pts.view(), &cfg).unwrap();
        let b = ClusterModel::fit(pts.view(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.assign(pts.view()).unwrap(), b.assign(pts.view()).unwrap());
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = Array2::zeros((3, 1));
        let cfg = ClusterConfig { n_clusters: 4, ..Default::default() };
        assert!(matches!(ClusterModel::fit(pts.view(), &cfg), Err(Error::Data(_))));
    }
}
