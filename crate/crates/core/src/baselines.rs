//! Linear baselines: principal component analysis and time-lagged
//! independent component analysis.
//!
//! Both fits are deterministic. Component signs are fixed so that the
//! largest-magnitude loading of each component is positive.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{pool_frames, Trajectory};

pub const FORMAT_VERSION: u32 = 1;

/// Default relative ridge added to the instantaneous covariance before the
/// tICA eigensolve, as a multiple of `trace(C₀)/F`.
pub const DEFAULT_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Pca,
    Tica,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProjection {
    pub kind: ProjectionKind,
    /// Lag in frames; `None` for PCA.
    pub lag: Option<usize>,
    pub mean: Vec<f64>,
    /// `k × F`, one component per row.
    pub components: Array2<f64>,
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionFile {
    format_version: u32,
    projection: LinearProjection,
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn check_k(k: usize, f: usize) -> Result<()> {
    if k == 0 || k > f {
        return Err(Error::Config(format!(
            "number of components must be in 1..={f}, got {k}"
        )));
    }
    Ok(())
}

/// Sorts eigenpairs descending, keeps the top `k` and fixes signs.
/// Columns of `vectors` are eigenvectors.
fn top_k(values: &[f64], vectors: &DMatrix<f64>, k: usize) -> (Array2<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let f = vectors.nrows();
    let mut comps = Array2::zeros((k, f));
    for (row, &col) in order.iter().take(k).enumerate() {
        let v = vectors.column(col);
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..f {
            comps[[row, j]] = sign * v[j];
        }
    }
    (comps, order.iter().take(k).map(|&i| values[i]).collect())
}

impl LinearProjection {
    /// Top `k` principal components of the pooled sample covariance.
    pub fn fit_pca(trajs: &[Trajectory], k: usize) -> Result<Self> {
        let x = pool_frames(trajs)?;
        let (n, f) = x.dim();
        check_k(k, f)?;
        if n < f + 1 {
            return Err(Error::Data(format!(
                "PCA needs at least {} frames for {f} features, got {n}",
                f + 1
            )));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n - 1) as f64;
        let eig = SymmetricEigen::new(to_dmatrix(&cov));
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let (components, eigenvalues) = top_k(&values, &eig.eigenvectors, k);
        let largest = eigenvalues[0].max(0.0);
        let floor = 1e-12 * largest.max(f64::MIN_POSITIVE);
        if eigenvalues[k - 1] <= floor {
            return Err(Error::Numerical(format!(
                "covariance has rank below the requested {k} components"
            )));
        }
        Ok(Self {
            kind: ProjectionKind::Pca,
            lag: None,
            mean: mean.to_vec(),
            components,
            eigenvalues,
        })
    }

    /// Top `k` solutions of `C_τ v = λ C₀ v`, normalized so `vᵀ C₀ v = 1`
    /// (with `C₀` ridge-regularized by `ridge · trace(C₀)/F`).
    pub fn fit_tica(trajs: &[Trajectory], lag: usize, k: usize, ridge: f64) -> Result<Self> {
        if lag == 0 {
            return Err(Error::Config("tICA lag must be at least 1".into()));
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::Config(format!("ridge must be >= 0, got {ridge}")));
        }
        if let Some((i, t)) = trajs.iter().enumerate().find(|(_, t)| t.n_frames() <= lag) {
            return Err(Error::Data(format!(
                "trajectory {i} has {} frames; tICA lag {lag} needs at least {}",
                t.n_frames(),
                lag + 1
            )));
        }
        let pooled = pool_frames(trajs)?;
        let f = pooled.ncols();
        check_k(k, f)?;
        let mean = pooled.mean_axis(Axis(0)).expect("non-empty");

        let mut c0 = Array2::<f64>::zeros((f, f));
        let mut ct = Array2::<f64>::zeros((f, f));
        let mut pairs = 0usize;
        for t in trajs {
            let x = &t.frames() - &mean;
            let n = x.nrows();
            let a = x.slice(ndarray::s![..n - lag, ..]);
            let b = x.slice(ndarray::s![lag.., ..]);
            c0 = c0 + a.t().dot(&a) + b.t().dot(&b);
            ct = ct + a.t().dot(&b);
            pairs += n - lag;
        }
        c0 /= 2.0 * pairs as f64;
        ct /= pairs as f64;
        let ct = (&ct + &ct.t()) * 0.5;

        let shift = ridge * c0.diag().sum() / f as f64;
        let mut c0r = to_dmatrix(&c0);
        for i in 0..f {
            c0r[(i, i)] += shift;
        }
        let chol = Cholesky::new(c0r).ok_or_else(|| {
            Error::Numerical(
                "instantaneous covariance is singular even after ridge regularization".into(),
            )
        })?;
        let l = chol.l();
        let linv_ct = l
            .solve_lower_triangular(&to_dmatrix(&ct))
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let m = l
            .solve_lower_triangular(&linv_ct.transpose())
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let vectors = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let (components, eigenvalues) = top_k(&values, &vectors, k);
        Ok(Self {
            kind: ProjectionKind::Tica,
            lag: Some(lag),
            mean: mean.to_vec(),
            components,
            eigenvalues,
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// `(x − mean) · componentsᵀ` for each row.
    pub fn project_frames(&self, frames: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if frames.ncols() != self.n_features() {
            return Err(Error::Shape {
                context: "projection input features",
                expected: self.n_features(),
                actual: frames.ncols(),
            });
        }
        let mean = Array1::from(self.mean.clone());
        Ok((&frames - &mean).dot(&self.components.t()))
    }

    pub fn project(&self, traj: &Trajectory) -> Result<Trajectory> {
        let prefix = match self.kind {
            ProjectionKind::Pca => "pc",
            ProjectionKind::Tica => "tic",
        };
        let names = (1..=self.n_components()).map(|i| format!("{prefix}{i}")).collect();
        traj.with_frames(self.project_frames(traj.frames())?, names)
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let file = ProjectionFile {
            format_version: FORMAT_VERSION,
            projection: self.clone(),
        };
        serde_json::to_writer(out, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let file: ProjectionFile = serde_json::from_reader(input)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported projection format_version {}",
                file.format_version
            )));
        }
        let p = file.projection;
        if p.components.ncols() != p.mean.len() || p.components.nrows() != p.eigenvalues.len() {
            return Err(Error::Data("projection file shapes are inconsistent".into()));
        }
        Ok(p)
    }
}
