use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{stream_rng, BatchLoss, Stream, VdeConfig, VdeModel};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Tape};
use crate::preprocess::RobustScaler;
use crate::trajectory::Trajectory;

/// Epoch means of the loss terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batches: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub mse: f64,
    pub kl: f64,
    /// Mean over the batches where the autocorrelation term was evaluated.
    pub autocorrelation: Option<f64>,
    /// Batches whose autocorrelation term was skipped (too small or constant).
    pub autocorr_skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

/// `(trajectory, frame)` starts of every lagged pair. Pairs never cross
/// trajectory boundaries.
pub fn lagged_pairs(trajs: &[Trajectory], lag: usize) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for (i, t) in trajs.iter().enumerate() {
        if t.n_frames() <= lag {
            return Err(Error::Data(format!(
                "trajectory {i} has {} frames; lag {lag} needs at least {}",
                t.n_frames(),
                lag + 1
            )));
        }
        pairs.extend((0..t.n_frames() - lag).map(|f| (i, f)));
    }
    Ok(pairs)
}

fn gather(trajs: &[Trajectory], pairs: &[(usize, usize)], offset: usize) -> Array2<f64> {
    let f = trajs[0].n_features();
    let mut out = Array2::zeros((pairs.len(), f));
    for (row, &(i, t)) in pairs.iter().enumerate() {
        out.row_mut(row).assign(&trajs[i].frame(t + offset));
    }
    out
}

impl VdeModel {
    /// Fits the scaler on `trajs`, initializes a network and trains it.
    pub fn fit(config: VdeConfig, trajs: &[Trajectory]) -> Result<Self> {
        Self::fit_with_observer(config, trajs, |_| {})
    }

    pub fn fit_with_observer(
        config: VdeConfig,
        trajs: &[Trajectory],
        observer: impl FnMut(&EpochRecord),
    ) -> Result<Self> {
        config.validate()?;
        lagged_pairs(trajs, config.lag)?;
        let scaler = RobustScaler::fit_with(trajs, config.scaling)?;
        let mut model = Self::new(config, scaler, trajs[0].frame_interval())?;
        let scaled = trajs
            .iter()
            .map(|t| model.scaler.transform(t))
            .collect::<Result<Vec<_>>>()?;
        model.train(&scaled, observer)?;
        Ok(model)
    }

    /// Runs `config.epochs` epochs of minibatch Adam on already-scaled
    /// trajectories. Pairs are reshuffled every epoch.
    pub fn train(
        &mut self,
        scaled: &[Trajectory],
        mut observer: impl FnMut(&EpochRecord),
    ) -> Result<()> {
        let cfg = self.config.clone();
        cfg.validate()?;
        if let Some(t) = scaled.iter().find(|t| t.n_features() != self.input_dim()) {
            return Err(Error::Shape {
                context: "training trajectory features",
                expected: self.input_dim(),
                actual: t.n_features(),
            });
        }
        let mut pairs = lagged_pairs(scaled, cfg.lag)?;
        // Streams are derived from the seed and the number of epochs already
        // run, so resuming training does not replay the same noise.
        let offset = self.history.epochs.len() as u64;
        let seed = cfg.rng_seed.wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut shuffle_rng = stream_rng(seed, Stream::Shuffle);
        let mut noise_rng = stream_rng(seed, Stream::LambdaNoise);
        let mut dropout_rng = stream_rng(seed, Stream::Dropout);
        let mut adam = AdamState::new(
            AdamConfig {
                learning_rate: cfg.learning_rate,
                ..Default::default()
            },
            self.parameters(),
        );

        for _ in 0..cfg.epochs {
            pairs.shuffle(&mut shuffle_rng);
            let mut sums = [0.0; 4];
            let mut auto_sum = 0.0;
            let mut auto_n = 0;
            let mut batches = 0;
            for chunk in pairs.chunks(cfg.batch_size) {
                let x_t = gather(scaled, chunk, 0);
                let x_lag = gather(scaled, chunk, cfg.lag);
                let eps = Array2::from_shape_simple_fn((chunk.len(), 1), || {
                    noise_rng.sample(StandardNormal)
                });
                let loss = self.train_step(&mut adam, x_t, x_lag, eps, &mut dropout_rng)?;
                sums[0] += loss.total;
                sums[1] += loss.reconstruction;
                sums[2] += loss.mse;
                sums[3] += loss.kl;
                if let Some(a) = loss.autocorrelation {
                    auto_sum += a;
                    auto_n += 1;
                }
                batches += 1;
            }
            if !self.all_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite parameters after epoch {}",
                    self.history.epochs.len() + 1
                )));
            }
            let n = batches as f64;
            let record = EpochRecord {
                epoch: self.history.epochs.len() + 1,
                batches,
                total: sums[0] / n,
                reconstruction: sums[1] / n,
                mse: sums[2] / n,
                kl: sums[3] / n,
                autocorrelation: (auto_n > 0).then(|| auto_sum / auto_n as f64),
                autocorr_skipped: batches - auto_n,
            };
            observer(&record);
            self.history.epochs.push(record);
        }
        Ok(())
    }

    fn train_step(
        &mut self,
        adam: &mut AdamState,
        x_t: Array2<f64>,
        x_lag: Array2<f64>,
        eps: Array2<f64>,
        dropout_rng: &mut rand_chacha::ChaCha20Rng,
    ) -> Result<BatchLoss> {
        let rate = self.config.dropout;
        let (loss, grads) = {
            let mut tape = Tape::new(self.parameters());
            let mut drop = Some((rate, dropout_rng));
            let (total, loss) = self.record_loss(&mut tape, x_t, x_lag, eps, &mut drop)?;
            (loss, tape.backward(total)?.params)
        };
        if !loss.total.is_finite() {
            return Err(Error::Numerical("training loss became non-finite".into()));
        }
        adam.step(&mut self.parameters_mut(), &grads)?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Noisy two-state switching signal in two features.
    fn toy(n: usize, seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = 1.0;
        let frames = Array2::from_shape_fn((n, 2), |(_, j)| {
            if j == 0 && rng.random::<f64>() < 0.02 {
                s = -s;
            }
            let noise: f64 = rng.sample(StandardNormal);
            if j == 0 { s + 0.3 * noise } else { 0.5 * s + 0.3 * noise }
        });
        Trajectory::from_frames(frames, 1.0).unwrap()
    }

    fn small_config() -> VdeConfig {
        VdeConfig {
            hidden_layers: 2,
            hidden_width: 16,
            lag: 2,
            batch_size: 50,
            learning_rate: 1e-3,
            epochs: 3,
            rng_seed: 1,
            ..Default::default()
        }
    }

    #[test]
    fn pairs_stay_inside_trajectories() {
        let a = toy(5, 0);
        let b = toy(3, 1);
        let pairs = lagged_pairs(&[a, b], 2).unwrap();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (0, 2), (1, 0)]);
    }

    #[test]
    fn too_short_trajectory_is_named() {
        let err = lagged_pairs(&[toy(20, 0), toy(2, 1)], 2).unwrap_err();
        assert!(err.to_string().contains("trajectory 1"), "{err}");
    }

    #[test]
    fn training_is_deterministic_and_records_history() {
        let data = vec![toy(400, 0), toy(400, 1)];
        let a = VdeModel::fit(small_config(), &data).unwrap();
        let b = VdeModel::fit(small_config(), &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.epochs.len(), 3);
        let e = &a.history.epochs[0];
        assert_eq!(e.batches, (2 * 398usize).div_ceil(50));
        assert!(e.autocorrelation.is_some());
    }

    #[test]
    fn single_pair_trains_reconstruction_only() {
        let t = Trajectory::from_frames(ndarray::array![[0.0, 1.0], [1.0, 0.0], [2.0, 3.0]], 1.0)
            .unwrap();
        let cfg = VdeConfig { lag: 2, ..small_config() };
        let m = VdeModel::fit(cfg, &[t]).unwrap();
        for e in &m.history.epochs {
            assert_eq!(e.batches, 1);
            assert_eq!(e.autocorr_skipped, 1);
            assert_eq!(e.autocorrelation, None);
        }
    }

    #[test]
    fn loss_drops_on_toy_data() {
        let data = vec![toy(1000, 3), toy(1000, 4)];
        let cfg = VdeConfig { epochs: 15, ..small_config() };
        let m = VdeModel::fit(cfg, &data).unwrap();
        let h = &m.history.epochs;
        assert!(h.last().unwrap().total < h[0].total);
        assert!(h.last().unwrap().autocorrelation.unwrap() < -0.6);
    }
}
