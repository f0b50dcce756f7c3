//! Stand-alone evaluation of the two loss terms on plain arrays.
//!
//! Training records the same operations on its tape; these helpers exist for
//! callers that only need the numbers.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::{has_spread, Tape};

/// Mean squared error over batch and features plus the batch-mean KL
/// divergence `−½ (1 + log σ² − μ² − σ²)` of `N(μ, σ²)` from `N(0, 1)`.
pub fn reconstruction_loss(
    predicted: &Array2<f64>,
    target: &Array2<f64>,
    mu: &Array1<f64>,
    log_var: &Array1<f64>,
) -> Result<f64> {
    if mu.len() != predicted.nrows() {
        return Err(Error::Shape {
            context: "reconstruction loss μ",
            expected: predicted.nrows(),
            actual: mu.len(),
        });
    }
    let mut tape = Tape::new(vec![]);
    let p = tape.input(predicted.clone());
    let t = tape.input(target.clone());
    let m = tape.input(mu.clone().insert_axis(Axis(1)));
    let lv = tape.input(log_var.clone().insert_axis(Axis(1)));
    let mse = tape.mean_squared_error(p, t)?;
    let kl = tape.gaussian_kl(m, lv)?;
    let total = tape.combine(mse, 1.0, kl, 1.0)?;
    Ok(tape.scalar(total))
}

/// `−ρ(z_t, z_{t+τ})` over the batch, or `None` when either side is constant
/// or the batch has fewer than two rows.
pub fn autocorrelation_loss(z_t: &Array1<f64>, z_lag: &Array1<f64>) -> Result<Option<f64>> {
    if z_t.len() != z_lag.len() {
        return Err(Error::Shape {
            context: "autocorrelation loss",
            expected: z_t.len(),
            actual: z_lag.len(),
        });
    }
    let a = z_t.clone().insert_axis(Axis(1));
    let b = z_lag.clone().insert_axis(Axis(1));
    if !has_spread(&a) || !has_spread(&b) {
        return Ok(None);
    }
    let mut tape = Tape::new(vec![]);
    let (av, bv) = (tape.input(a), tape.input(b));
    let r = tape.neg_pearson(av, bv)?;
    Ok(Some(tape.scalar(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn perfect_prediction_at_prior_is_zero() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let l = reconstruction_loss(&x, &x, &Array1::zeros(2), &Array1::zeros(2)).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn unit_mean_costs_half() {
        let x = array![[1.0], [2.0], [3.0]];
        let l = reconstruction_loss(&x, &x, &Array1::ones(3), &Array1::zeros(3)).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_batch_by_hand() {
        let pred = array![[0.5, -1.0], [2.0, 0.0]];
        let target = array![[0.0, -1.5], [1.0, 1.0]];
        let mu = array![0.2, -0.4];
        let lv = array![0.1, -0.3];
        // squared errors .25 .25 1 1 → mean .625
        let mse = 0.625;
        let kl = (-(0.5) * (1.0 + 0.1 - 0.04 - 0.1f64.exp())
            + -(0.5) * (1.0 - 0.3 - 0.16 - (-0.3f64).exp()))
            / 2.0;
        let l = reconstruction_loss(&pred, &target, &mu, &lv).unwrap();
        assert!((l - (mse + kl)).abs() < 1e-15);
    }

    #[test]
    fn autocorrelation_extremes() {
        let z = array![0.3, -1.0, 2.0, 0.5];
        assert!((autocorrelation_loss(&z, &z).unwrap().unwrap() + 1.0).abs() < 1e-15);
        assert!((autocorrelation_loss(&z, &(-&z)).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let a = array![1.0, 2.0, 3.0, 4.0];
        let b = array![2.0, 4.0, 6.0, 8.0];
        assert!((autocorrelation_loss(&a, &b).unwrap().unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(autocorrelation_loss(&Array1::ones(4), &a).unwrap(), None);
    }
}
