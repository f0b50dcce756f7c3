//! Per-feature centering and scaling fitted on pooled frames.
//!
//! The default mode centers each feature on its median and divides by its
//! interquartile range. Quartiles use linear interpolation between order
//! statistics: for sorted values `v[0..n]` and probability `p`, the quantile
//! is `v[⌊h⌋] + (h − ⌊h⌋)(v[⌊h⌋+1] − v[⌊h⌋])` with `h = (n − 1) p`. This is
//! the default of R's `quantile` and of NumPy's `percentile`.

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{pool_frames, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Median / interquartile range.
    #[default]
    Robust,
    /// Mean / standard deviation.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub mode: ScalingMode,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl RobustScaler {
    /// Median / IQR scaler over the pooled frames of `trajs`.
    pub fn fit(trajs: &[Trajectory]) -> Result<Self> {
        Self::fit_with(trajs, ScalingMode::Robust)
    }

    pub fn fit_with(trajs: &[Trajectory], mode: ScalingMode) -> Result<Self> {
        let pooled = pool_frames(trajs)?;
        if pooled.nrows() == 0 {
            return Err(Error::Data("cannot fit a scaler on zero frames".into()));
        }
        let names = trajs[0].feature_names();
        let mut center = Vec::with_capacity(pooled.ncols());
        let mut scale = Vec::with_capacity(pooled.ncols());
        for (j, col) in pooled.axis_iter(Axis(1)).enumerate() {
            let (c, s) = match mode {
                ScalingMode::Robust => {
                    let mut v = col.to_vec();
                    v.sort_by(f64::total_cmp);
                    let q1 = quantile_sorted(&v, 0.25);
                    let q3 = quantile_sorted(&v, 0.75);
                    (quantile_sorted(&v, 0.5), q3 - q1)
                }
                ScalingMode::Standard => {
                    let n = col.len() as f64;
                    let mean = col.sum() / n;
                    let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt())
                }
            };
            if !(s > 0.0) {
                return Err(Error::DegenerateFeature {
                    index: j,
                    name: names[j].clone(),
                });
            }
            center.push(c);
            scale.push(s);
        }
        Ok(Self {
            mode,
            center,
            scale,
        })
    }

    /// Scaler that leaves `n` features untouched.
    pub fn identity(n: usize) -> Self {
        Self {
            mode: ScalingMode::Robust,
            center: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn n_features(&self) -> usize {
        self.center.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n == self.n_features() {
            Ok(())
        } else {
            Err(Error::Shape {
                context: "scaler features",
                expected: self.n_features(),
                actual: n,
            })
        }
    }

    /// `(x − center) / scale`, row by row.
    pub fn scale_frames(&self, frames: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(frames.ncols())?;
        let mut out = frames.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            Zip::from(&mut row)
                .and(&self.center[..])
                .and(&self.scale[..])
                .for_each(|x, c, s| *x = (*x - c) / s);
        }
        Ok(out)
    }

    pub fn unscale_frames(&self, frames: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(frames.ncols())?;
        let mut out = frames.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            Zip::from(&mut row)
                .and(&self.center[..])
                .and(&self.scale[..])
                .for_each(|x, c, s| *x = *x * s + c);
        }
        Ok(out)
    }

    pub fn transform(&self, traj: &Trajectory) -> Result<Trajectory> {
        let frames = self.scale_frames(&traj.frames().to_owned())?;
        traj.with_frames(frames, traj.feature_names().to_vec())
    }

    pub fn inverse_transform(&self, traj: &Trajectory) -> Result<Trajectory> {
        let frames = self.unscale_frames(&traj.frames().to_owned())?;
        traj.with_frames(frames, traj.feature_names().to_vec())
    }
}
