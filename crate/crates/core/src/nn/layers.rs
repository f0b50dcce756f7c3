use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x · sigmoid(x)`
#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn swish_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

/// Hidden-layer nonlinearity. `Identity` exists for analytic checks on
/// end-to-end linear networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Swish,
    Identity,
}

/// Keep-mask for inverted dropout: each entry is `0` with probability `rate`
/// and `1 / (1 − rate)` otherwise.
pub fn dropout_mask<R: Rng + ?Sized>(
    shape: (usize, usize),
    rate: f64,
    rng: &mut R,
) -> Result<Array2<f64>> {
    check_rate(rate)?;
    let keep = 1.0 / (1.0 - rate);
    Ok(Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

pub fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")))
    }
}

/// Inverted dropout; the identity outside training or at rate 0.
pub fn dropout<R: Rng + ?Sized>(
    x: &Array2<f64>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Array2<f64>> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    Ok(x * &dropout_mask(x.dim(), rate, rng)?)
}

/// Weights are `out × in`; the bias is kept as a `1 × out` row so it
/// broadcasts over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array2<f64>,
}

impl DenseLayer {
    /// Glorot-uniform weights, `±√(6 / (fan_in + fan_out))`, and zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            weights: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.random_range(-limit..limit)
            }),
            bias: Array2::zeros((1, fan_out)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        super::tape::affine_forward(x, &self.weights, &self.bias)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}
