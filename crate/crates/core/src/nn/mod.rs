//! The small dense-network substrate the encoder is built from.

mod adam;
mod layers;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use layers::{
    check_rate, dropout, dropout_mask, sigmoid, swish, swish_derivative, Activation, DenseLayer,
};
pub use tape::{affine_forward, has_spread, pearson, Gradients, Tape, Var};
