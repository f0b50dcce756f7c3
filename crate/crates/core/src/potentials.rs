//! The two-dimensional Müller-Brown surface.
//!
//! The potential is a sum of four anisotropic Gaussians
//!
//! ```text
//! V(x) = Σ_j A_j exp[ a_j (x₁ − X_j)² + b_j (x₁ − X_j)(x₂ − Y_j) + c_j (x₂ − Y_j)² ]
//! ```
//!
//! with two deep basins and a shallow intermediate well. Energies are in the
//! same units as the simulation temperature `kT`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything the Brownian integrator can move a particle on.
pub trait Potential {
    fn energy(&self, point: [f64; 2]) -> f64;
    fn gradient(&self, point: [f64; 2]) -> [f64; 2];
}

/// Coefficients of the Müller-Brown surface. The JSON keys match the usual
/// symbol names (`"A"`, `"a"`, `"b"`, `"c"`, `"X"`, `"Y"`), four entries each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MullerBrownParams {
    #[serde(rename = "A")]
    pub amplitude: [f64; 4],
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub c: [f64; 4],
    #[serde(rename = "X")]
    pub center_x: [f64; 4],
    #[serde(rename = "Y")]
    pub center_y: [f64; 4],
}

impl Default for MullerBrownParams {
    fn default() -> Self {
        Self {
            amplitude: [-200.0, -100.0, -170.0, 15.0],
            a: [-1.0, -1.0, -6.5, 0.7],
            b: [0.0, 0.0, 11.0, 0.6],
            c: [-10.0, -10.0, -6.5, 0.7],
            center_x: [1.0, 0.0, -0.5, -1.0],
            center_y: [0.0, 0.5, 1.5, 1.0],
        }
    }
}

impl MullerBrownParams {
    #[inline]
    fn term(&self, j: usize, x: f64, y: f64) -> (f64, f64, f64) {
        let dx = x - self.center_x[j];
        let dy = y - self.center_y[j];
        let e = self.amplitude[j]
            * (self.a[j] * dx * dx + self.b[j] * dx * dy + self.c[j] * dy * dy).exp();
        (e, dx, dy)
    }

    /// Reorders the four Gaussian terms.
    pub fn permuted(&self, order: [usize; 4]) -> Self {
        let pick = |v: &[f64; 4]| order.map(|j| v[j]);
        Self {
            amplitude: pick(&self.amplitude),
            a: pick(&self.a),
            b: pick(&self.b),
            c: pick(&self.c),
            center_x: pick(&self.center_x),
            center_y: pick(&self.center_y),
        }
    }
}

impl Potential for MullerBrownParams {
    #[inline]
    fn energy(&self, point: [f64; 2]) -> f64 {
        (0..4).map(|j| self.term(j, point[0], point[1]).0).sum()
    }

    #[inline]
    fn gradient(&self, point: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for j in 0..4 {
            let (e, dx, dy) = self.term(j, point[0], point[1]);
            g[0] += e * (2.0 * self.a[j] * dx + self.b[j] * dy);
            g[1] += e * (self.b[j] * dx + 2.0 * self.c[j] * dy);
        }
        g
    }
}

fn check_point(point: [f64; 2]) -> Result<()> {
    if point.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("point {point:?}")))
    }
}

/// Müller-Brown energy at `point`.
pub fn energy(point: [f64; 2], params: &MullerBrownParams) -> Result<f64> {
    check_point(point)?;
    Ok(params.energy(point))
}

/// Analytic gradient of the Müller-Brown energy.
pub fn gradient(point: [f64; 2], params: &MullerBrownParams) -> Result<[f64; 2]> {
    check_point(point)?;
    Ok(params.gradient(point))
}
