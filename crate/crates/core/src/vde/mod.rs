//! The variational dynamics encoder.
//!
//! A frame `x_t` is encoded to a single latent value `z_t`, perturbed by the
//! variational layer to `z′ = μ(z_t) + α σ(z_t) ε`, and decoded into a
//! prediction of the frame one lag later. Training minimizes
//!
//! ```text
//! L = MSE(x′_{t+τ}, x_{t+τ}) + KL(N(μ, σ²) ‖ N(0, 1)) − w · ρ(z_t, z_{t+τ})
//! ```
//!
//! where `ρ` is the batch Pearson correlation of the latent one lag apart and
//! `w` is [`VdeConfig::autocorr_weight`]. The KL term is the usual
//! non-negative divergence, so minimizing it pulls `(μ, σ)` toward `(0, 1)`.

mod generate;
mod io;
mod loss;
mod model;
mod train;

pub use io::{LambdaHeads, LayerRecord, LayerRole, ModelFile, FORMAT_VERSION};
pub use loss::{autocorrelation_loss, reconstruction_loss};
pub use model::{BatchLoss, LambdaSample, VdeConfig, VdeModel};
pub use train::{lagged_pairs, EpochRecord, TrainingHistory};
