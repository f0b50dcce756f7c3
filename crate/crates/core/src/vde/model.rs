use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::train::TrainingHistory;
use crate::error::{Error, Result};
use crate::nn::{check_rate, dropout_mask, has_spread, Activation, DenseLayer, Tape, Var};
use crate::preprocess::{RobustScaler, ScalingMode};
use crate::trajectory::Trajectory;

/// Architecture and optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdeConfig {
    /// Number of input features; inferred from the data when absent.
    pub input_dim: Option<usize>,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Always 1.
    pub latent_dim: usize,
    /// Lag between input and target frames, in frames.
    pub lag: usize,
    pub alpha_train: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub rng_seed: u64,
    pub autocorr_weight: f64,
    pub min_batch_for_autocorr: usize,
    pub activation: Activation,
    pub scaling: ScalingMode,
}

impl Default for VdeConfig {
    fn default() -> Self {
        Self {
            input_dim: None,
            hidden_layers: 3,
            hidden_width: 256,
            latent_dim: 1,
            lag: 10,
            alpha_train: 1e-3,
            batch_size: 100,
            dropout: 0.3,
            learning_rate: 1e-4,
            epochs: 50,
            rng_seed: 0,
            autocorr_weight: 1.0,
            min_batch_for_autocorr: 10,
            activation: Activation::Swish,
            scaling: ScalingMode::Robust,
        }
    }
}

impl VdeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim != 1 {
            return bad(format!("latent_dim must be 1, got {}", self.latent_dim));
        }
        if self.lag == 0 {
            return bad("lag must be >= 1".into());
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return bad("hidden_layers and hidden_width must be positive".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.alpha_train.is_finite() && self.alpha_train >= 0.0) {
            return bad(format!("alpha_train must be >= 0, got {}", self.alpha_train));
        }
        if !(self.autocorr_weight.is_finite() && self.autocorr_weight >= 0.0) {
            return bad(format!(
                "autocorr_weight must be >= 0, got {}",
                self.autocorr_weight
            ));
        }
        if self.input_dim == Some(0) {
            return bad("input_dim must be positive".into());
        }
        check_rate(self.dropout)
    }
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Init = 0,
    Shuffle = 1,
    LambdaNoise = 2,
    Dropout = 3,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Output of the variational layer for a batch of latents.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSample {
    pub z_prime: Array1<f64>,
    pub mu: Array1<f64>,
    pub log_var: Array1<f64>,
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    /// Mean squared error plus the KL term.
    pub reconstruction: f64,
    pub mse: f64,
    pub kl: f64,
    /// `−ρ(z_t, z_{t+τ})`, absent when the batch was too small or constant.
    pub autocorrelation: Option<f64>,
}

/// Encoder, variational heads and decoder, together with the scaler fitted on
/// the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct VdeModel {
    pub config: VdeConfig,
    pub scaler: RobustScaler,
    /// Time between frames of the training data.
    pub frame_interval: f64,
    pub(crate) encoder: Vec<DenseLayer>,
    pub(crate) mu_head: DenseLayer,
    pub(crate) log_var_head: DenseLayer,
    pub(crate) decoder: Vec<DenseLayer>,
    pub history: TrainingHistory,
}

fn stack_widths(input: usize, hidden: usize, layers: usize, output: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(hidden, layers));
    dims.push(output);
    dims.windows(2).map(|w| (w[0], w[1])).collect()
}

impl VdeModel {
    /// Freshly initialized network for `config.input_dim` features.
    pub fn new(config: VdeConfig, scaler: RobustScaler, frame_interval: f64) -> Result<Self> {
        config.validate()?;
        let f = config.input_dim.unwrap_or(scaler.n_features());
        if f != scaler.n_features() {
            return Err(Error::Shape {
                context: "vde input_dim vs scaler",
                expected: scaler.n_features(),
                actual: f,
            });
        }
        let mut config = config;
        config.input_dim = Some(f);
        let mut rng = stream_rng(config.rng_seed, Stream::Init);
        let (w, l) = (config.hidden_width, config.hidden_layers);
        let encoder = stack_widths(f, w, l, 1)
            .into_iter()
            .map(|(i, o)| DenseLayer::glorot(i, o, &mut rng))
            .collect();
        let mu_head = DenseLayer::glorot(1, 1, &mut rng);
        let log_var_head = DenseLayer::glorot(1, 1, &mut rng);
        let decoder = stack_widths(1, w, l, f)
            .into_iter()
            .map(|(i, o)| DenseLayer::glorot(i, o, &mut rng))
            .collect();
        Ok(Self {
            config,
            scaler,
            frame_interval,
            encoder,
            mu_head,
            log_var_head,
            decoder,
            history: TrainingHistory::default(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.scaler.n_features()
    }

    pub fn is_trained(&self) -> bool {
        !self.history.epochs.is_empty()
    }

    /// Parameters in a fixed order: encoder (weights, bias per layer), μ head,
    /// log σ² head, decoder.
    pub fn parameters(&self) -> Vec<&Array2<f64>> {
        self.layers()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.encoder
            .iter_mut()
            .chain([&mut self.mu_head, &mut self.log_var_head])
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub(crate) fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder
            .iter()
            .chain([&self.mu_head, &self.log_var_head])
            .chain(self.decoder.iter())
    }

    pub fn all_finite(&self) -> bool {
        self.layers().all(DenseLayer::is_finite)
    }

    fn mu_slot(&self) -> usize {
        2 * self.encoder.len()
    }

    fn decoder_slot(&self) -> usize {
        2 * self.encoder.len() + 4
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() == self.input_dim() {
            Ok(())
        } else {
            Err(Error::Shape {
                context: "vde input features",
                expected: self.input_dim(),
                actual: x.ncols(),
            })
        }
    }

    fn stack_forward(&self, layers: &[DenseLayer], x: &Array2<f64>) -> Array2<f64> {
        let last = layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last && self.config.activation == Activation::Swish {
                h.mapv_inplace(crate::nn::swish);
            }
        }
        h
    }

    /// Latent coordinate of each (already scaled) row, in inference mode.
    pub fn encode(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_width(x)?;
        Ok(self.stack_forward(&self.encoder, x).remove_axis(Axis(1)))
    }

    /// `(μ, log σ²)` for each latent value.
    pub fn lambda_params(&self, z: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
        let col = z.clone().insert_axis(Axis(1));
        (
            self.mu_head.forward(&col).remove_axis(Axis(1)),
            self.log_var_head.forward(&col).remove_axis(Axis(1)),
        )
    }

    /// `z′ = μ + α σ ε` with caller-supplied standard normal draws.
    pub fn lambda_with_noise(&self, z: &Array1<f64>, alpha: f64, eps: &Array1<f64>) -> Result<LambdaSample> {
        if !(alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
        }
        if eps.len() != z.len() {
            return Err(Error::Shape {
                context: "lambda noise",
                expected: z.len(),
                actual: eps.len(),
            });
        }
        let (mu, log_var) = self.lambda_params(z);
        let z_prime = if alpha == 0.0 {
            mu.clone()
        } else {
            let mut zp = log_var.mapv(|lv| (0.5 * lv).exp());
            ndarray::Zip::from(&mut zp)
                .and(&mu)
                .and(eps)
                .for_each(|s, &m, &e| *s = m + alpha * *s * e);
            zp
        };
        Ok(LambdaSample {
            z_prime,
            mu,
            log_var,
        })
    }

    pub fn lambda_sample<R: Rng + ?Sized>(
        &self,
        z: &Array1<f64>,
        alpha: f64,
        rng: &mut R,
    ) -> Result<LambdaSample> {
        let eps = Array1::from_shape_simple_fn(z.len(), || rng.sample(StandardNormal));
        self.lambda_with_noise(z, alpha, &eps)
    }

    /// Decoder output (in scaled feature space) for each perturbed latent.
    pub fn decode(&self, z_prime: &Array1<f64>) -> Array2<f64> {
        self.stack_forward(&self.decoder, &z_prime.clone().insert_axis(Axis(1)))
    }

    /// Scales the frames and maps each one to its latent value.
    pub fn transform(&self, traj: &Trajectory) -> Result<Trajectory> {
        let scaled = self.scaler.scale_frames(&traj.frames().to_owned())?;
        let z = self.encode(&scaled)?;
        traj.with_frames(z.insert_axis(Axis(1)), vec!["z".into()])
    }

    /// Records the dense stack on the tape. `drop` carries the dropout rate and
    /// stream in training mode.
    fn stack_tape(
        &self,
        tape: &mut Tape<'_>,
        mut h: Var,
        first_slot: usize,
        n_layers: usize,
        drop: &mut Option<(f64, &mut ChaCha20Rng)>,
    ) -> Result<Var> {
        for i in 0..n_layers {
            let w = tape.param(first_slot + 2 * i);
            let b = tape.param(first_slot + 2 * i + 1);
            h = tape.affine(h, w, b)?;
            if i + 1 < n_layers {
                if self.config.activation == Activation::Swish {
                    h = tape.swish(h);
                }
                if let Some((rate, rng)) = drop.as_mut() {
                    if *rate > 0.0 {
                        let mask = dropout_mask(tape.value(h).dim(), *rate, &mut **rng)?;
                        h = tape.mask(h, mask)?;
                    }
                }
            }
        }
        Ok(h)
    }

    pub(crate) fn encode_tape(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        drop: &mut Option<(f64, &mut ChaCha20Rng)>,
    ) -> Result<Var> {
        self.stack_tape(tape, x, 0, self.encoder.len(), drop)
    }

    pub(crate) fn lambda_tape(&self, tape: &mut Tape<'_>, z: Var) -> Result<(Var, Var)> {
        let s = self.mu_slot();
        let (wm, bm) = (tape.param(s), tape.param(s + 1));
        let mu = tape.affine(z, wm, bm)?;
        let (wl, bl) = (tape.param(s + 2), tape.param(s + 3));
        let log_var = tape.affine(z, wl, bl)?;
        Ok((mu, log_var))
    }

    pub(crate) fn decode_tape(
        &self,
        tape: &mut Tape<'_>,
        z_prime: Var,
        drop: &mut Option<(f64, &mut ChaCha20Rng)>,
    ) -> Result<Var> {
        self.stack_tape(tape, z_prime, self.decoder_slot(), self.decoder.len(), drop)
    }

    /// Records the compound loss of one batch on `tape` and returns the total
    /// loss node with its components.
    ///
    /// `eps` pins the variational noise; `drop` enables dropout.
    pub(crate) fn record_loss<'m>(
        &'m self,
        tape: &mut Tape<'m>,
        x_t: Array2<f64>,
        x_lag: Array2<f64>,
        eps: Array2<f64>,
        drop: &mut Option<(f64, &mut ChaCha20Rng)>,
    ) -> Result<(Var, BatchLoss)> {
        self.check_width(&x_t)?;
        self.check_width(&x_lag)?;
        if x_t.nrows() != x_lag.nrows() {
            return Err(Error::Shape {
                context: "lagged batch rows",
                expected: x_t.nrows(),
                actual: x_lag.nrows(),
            });
        }
        let cfg = &self.config;
        let xt = tape.input(x_t);
        let target = tape.input(x_lag);
        let z_t = self.encode_tape(tape, xt, drop)?;
        let (mu, log_var) = self.lambda_tape(tape, z_t)?;
        let z_prime = tape.reparameterize(mu, log_var, eps, cfg.alpha_train)?;
        let predicted = self.decode_tape(tape, z_prime, drop)?;
        let z_lag = self.encode_tape(tape, target, drop)?;

        let mse = tape.mean_squared_error(predicted, target)?;
        let kl = tape.gaussian_kl(mu, log_var)?;
        let reconstruction = tape.combine(mse, 1.0, kl, 1.0)?;

        let rows = tape.value(z_t).nrows();
        let autocorr = if rows >= cfg.min_batch_for_autocorr.max(2)
            && has_spread(tape.value(z_t))
            && has_spread(tape.value(z_lag))
        {
            Some(tape.neg_pearson(z_t, z_lag)?)
        } else {
            None
        };
        let total = match autocorr {
            Some(a) => tape.combine(reconstruction, 1.0, a, cfg.autocorr_weight)?,
            None => reconstruction,
        };
        let loss = BatchLoss {
            total: tape.scalar(total),
            reconstruction: tape.scalar(reconstruction),
            mse: tape.scalar(mse),
            kl: tape.scalar(kl),
            autocorrelation: autocorr.map(|a| tape.scalar(a)),
        };
        Ok((total, loss))
    }

    /// Compound loss and its gradient with respect to every parameter, with
    /// dropout off and the variational noise fixed to `eps` (`batch × 1`).
    pub fn loss_and_gradients(
        &self,
        x_t: &Array2<f64>,
        x_lag: &Array2<f64>,
        eps: &Array2<f64>,
    ) -> Result<(BatchLoss, Vec<Array2<f64>>)> {
        let mut tape = Tape::new(self.parameters());
        let (total, loss) =
            self.record_loss(&mut tape, x_t.clone(), x_lag.clone(), eps.clone(), &mut None)?;
        let grads = tape.backward(total)?;
        Ok((loss, grads.params))
    }

    /// Same as [`loss_and_gradients`](Self::loss_and_gradients) without the backward pass.
    pub fn loss(&self, x_t: &Array2<f64>, x_lag: &Array2<f64>, eps: &Array2<f64>) -> Result<BatchLoss> {
        let mut tape = Tape::new(self.parameters());
        let (_, loss) =
            self.record_loss(&mut tape, x_t.clone(), x_lag.clone(), eps.clone(), &mut None)?;
        Ok(loss)
    }

    /// Deterministic pass `x → z → μ → x′` recorded on a tape, for saliency.
    pub(crate) fn propagate_tape(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let z = self.encode_tape(tape, x, &mut None)?;
        let (mu, _) = self.lambda_tape(tape, z)?;
        self.decode_tape(tape, mu, &mut None)
    }

    /// Mutable access to individual layers, for tests and tooling.
    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.encoder
            .iter_mut()
            .chain([&mut self.mu_head, &mut self.log_var_head])
            .chain(self.decoder.iter_mut())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_model(f: usize, width: usize, layers: usize, seed: u64) -> VdeModel {
        let cfg = VdeConfig {
            hidden_layers: layers,
            hidden_width: width,
            rng_seed: seed,
            dropout: 0.0,
            ..Default::default()
        };
        VdeModel::new(cfg, RobustScaler::identity(f), 1.0).unwrap()
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
    }

    #[test]
    fn shapes_and_parameter_layout() {
        let m = small_model(3, 8, 2, 0);
        // 3 encoder layers, 2 heads, 3 decoder layers → 8 (W, b) pairs
        assert_eq!(m.parameters().len(), 16);
        let x = random_batch(5, 3, 1);
        let z = m.encode(&x).unwrap();
        assert_eq!(z.len(), 5);
        assert_eq!(m.decode(&z).dim(), (5, 3));
        assert!(m.encode(&random_batch(2, 4, 0)).is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        assert_eq!(small_model(2, 6, 2, 9), small_model(2, 6, 2, 9));
        assert_ne!(small_model(2, 6, 2, 9), small_model(2, 6, 2, 10));
    }

    #[test]
    fn encode_is_a_row_wise_map() {
        let m = small_model(2, 8, 3, 1);
        let row = random_batch(1, 2, 5);
        let same = row.broadcast((4, 2)).unwrap().to_owned();
        let z = m.encode(&same).unwrap();
        assert!(z.iter().all(|&v| v == z[0]));
        let x = random_batch(6, 2, 2);
        let rev = x.slice(ndarray::s![..;-1, ..]).to_owned();
        let zf = m.encode(&x).unwrap();
        let zr = m.encode(&rev).unwrap();
        for i in 0..6 {
            assert!((zf[i] - zr[5 - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_latents_decode_identically() {
        let m = small_model(3, 8, 2, 2);
        let out = m.decode(&Array1::from_elem(4, 0.7));
        assert_eq!(out.ncols(), 3);
        for r in 1..4 {
            assert_eq!(out.row(r), out.row(0));
        }
    }

    #[test]
    fn lambda_without_noise_is_mu() {
        let m = small_model(2, 4, 1, 3);
        let z = Array1::from(vec![0.1, -2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = m.lambda_sample(&z, 0.0, &mut rng).unwrap();
        assert_eq!(s.z_prime, s.mu);
        assert!(m.lambda_sample(&z, -1.0, &mut rng).is_err());
    }

    #[test]
    fn lambda_noise_is_reproducible() {
        let m = small_model(2, 4, 1, 3);
        let z = Array1::from(vec![0.1, -2.0, 3.0]);
        let a = m.lambda_sample(&z, 0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = m.lambda_sample(&z, 0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lambda_variance_matches_alpha_sigma() {
        let m = small_model(2, 4, 1, 3);
        let z = Array1::from_elem(100_000, 0.4);
        let alpha = 0.05;
        let s = m.lambda_sample(&z, alpha, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let d: Vec<f64> = s.z_prime.iter().zip(&s.mu).map(|(a, b)| a - b).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        let expected = alpha * alpha * s.log_var[0].exp();
        assert!((var / expected - 1.0).abs() < 0.02, "{var} vs {expected}");
    }

    #[test]
    fn compound_gradient_matches_finite_differences() {
        let m = small_model(3, 6, 2, 11);
        let x_t = random_batch(16, 3, 20);
        let x_lag = &x_t * 0.8 + random_batch(16, 3, 21) * 0.3;
        let eps = random_batch(16, 1, 22);
        let (loss, grads) = m.loss_and_gradients(&x_t, &x_lag, &eps).unwrap();
        assert!(loss.autocorrelation.is_some());
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (slot, g) in grads.iter().enumerate() {
            for idx in 0..g.len() {
                let mut plus = m.clone();
                let mut minus = m.clone();
                let (r, c) = (idx / g.ncols(), idx % g.ncols());
                plus.parameters_mut()[slot][[r, c]] += h;
                minus.parameters_mut()[slot][[r, c]] -= h;
                let fd = (plus.loss(&x_t, &x_lag, &eps).unwrap().total
                    - minus.loss(&x_t, &x_lag, &eps).unwrap().total)
                    / (2.0 * h);
                let an = g[[r, c]];
                let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn loss_components_add_up() {
        let m = small_model(2, 5, 2, 4);
        let x = random_batch(12, 2, 1);
        let y = random_batch(12, 2, 2);
        let eps = random_batch(12, 1, 3);
        let l = m.loss(&x, &y, &eps).unwrap();
        let a = l.autocorrelation.unwrap();
        assert!((l.total - (l.reconstruction + m.config.autocorr_weight * a)).abs() < 1e-12);
        assert!((l.reconstruction - (l.mse + l.kl)).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn small_batches_skip_autocorrelation() {
        let m = small_model(2, 5, 1, 4);
        let x = random_batch(3, 2, 1);
        let l = m.loss(&x, &x, &random_batch(3, 1, 3)).unwrap();
        assert!(l.autocorrelation.is_none());
        assert_eq!(l.total, l.reconstruction);
    }
}
