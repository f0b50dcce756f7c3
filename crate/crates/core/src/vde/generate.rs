use ndarray::{Array2, Axis};
use rand::Rng;

use super::model::VdeModel;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

impl VdeModel {
    /// One propagation through the whole network in raw feature units:
    /// `unscale(decode(λ(encode(scale(x)), α)))`.
    pub fn propagate<R: Rng + ?Sized>(
        &self,
        frames: &Array2<f64>,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        let scaled = self.scaler.scale_frames(frames)?;
        let z = self.encode(&scaled)?;
        let lambda = self.lambda_sample(&z, alpha, rng)?;
        self.scaler.unscale_frames(&self.decode(&lambda.z_prime))
    }

    /// Synthetic trajectory of `n_steps` frames starting from `x0` (raw units).
    /// Frame `k` is the state after `k + 1` propagations, so consecutive frames
    /// are one training lag apart.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        x0: &[f64],
        n_steps: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Trajectory> {
        if !(alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
        }
        if x0.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "generation start",
                expected: self.input_dim(),
                actual: x0.len(),
            });
        }
        let mut x = Array2::from_shape_vec((1, x0.len()), x0.to_vec())
            .map_err(|e| Error::Data(e.to_string()))?;
        let mut frames = Array2::zeros((n_steps, x0.len()));
        for step in 0..n_steps {
            x = self.propagate(&x, alpha, rng)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { step });
            }
            frames.row_mut(step).assign(&x.index_axis(Axis(0), 0));
        }
        let interval = self.frame_interval * self.config.lag as f64;
        let names = (0..x0.len()).map(|i| format!("f{i}")).collect();
        Trajectory::new(frames, interval, names)
    }
}
