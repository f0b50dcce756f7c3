//! Overdamped Brownian dynamics, discretized with an explicit Euler scheme.
//!
//! The drift is `−∇V(x)/kT` and the random force has amplitude `√(2D)`.
//! Two discretizations of the random force are offered, see [`NoiseScaling`].
//!
//! Random numbers come from ChaCha20 ([`rand_chacha::ChaCha20Rng`]) seeded
//! with `rng_seed`; trajectory `i` uses stream `i` of that seed, so each
//! trajectory is reproducible on its own and the ensemble can be generated in
//! parallel. The initial position is the first draw of the stream.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::trajectory::Trajectory;

/// Human-readable name of the generator and stream layout, recorded in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9), seed_from_u64(rng_seed), stream = trajectory index";

/// How the random displacement of one step scales with the time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// `√(2 D dt) · ξ`, the textbook Euler–Maruyama increment.
    EulerMaruyama,
    /// `dt · √(2 D) · ξ`, the increment used by MSMBuilder's Müller-Brown
    /// integrator that produced the reference data sets.
    DtScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub kt: f64,
    pub diffusion: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub save_stride: usize,
    pub n_trajectories: usize,
    /// `[[x_min, x_max], [y_min, y_max]]` for the uniform initial positions.
    pub init_box: [[f64; 2]; 2],
    pub noise: NoiseScaling,
    /// Reflect positions that leave `init_box` back into it.
    pub reflect: bool,
    pub rng_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            kt: 1.5e4,
            diffusion: 1e-2,
            dt: 0.1,
            n_steps: 1_000_000,
            save_stride: 100,
            n_trajectories: 10,
            init_box: [[-1.5, 1.2], [-0.2, 2.0]],
            noise: NoiseScaling::DtScaled,
            reflect: true,
            rng_seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.kt.is_finite() && self.kt > 0.0) {
            return bad(format!("kt must be > 0, got {}", self.kt));
        }
        if !(self.diffusion.is_finite() && self.diffusion >= 0.0) {
            return bad(format!("diffusion must be >= 0, got {}", self.diffusion));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if self.save_stride == 0 {
            return bad("save_stride must be >= 1".into());
        }
        if self.n_steps == 0 || self.n_steps % self.save_stride != 0 {
            return bad(format!(
                "n_steps ({}) must be a positive multiple of save_stride ({})",
                self.n_steps, self.save_stride
            ));
        }
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be >= 1".into());
        }
        for (axis, [lo, hi]) in self.init_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("init_box axis {axis} is empty: [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    /// Time between saved frames.
    pub fn frame_interval(&self) -> f64 {
        self.dt * self.save_stride as f64
    }

    fn noise_amplitude(&self) -> f64 {
        match self.noise {
            NoiseScaling::EulerMaruyama => (2.0 * self.diffusion * self.dt).sqrt(),
            NoiseScaling::DtScaled => self.dt * (2.0 * self.diffusion).sqrt(),
        }
    }
}

#[inline]
fn reflect_into(v: f64, [lo, hi]: [f64; 2]) -> f64 {
    let mut v = v;
    if v > hi {
        v = 2.0 * hi - v;
    }
    if v < lo {
        v = 2.0 * lo - v;
    }
    v
}

#[inline]
fn advance<P: Potential>(
    potential: &P,
    point: [f64; 2],
    cfg: &SimulationConfig,
    amplitude: f64,
    noise: [f64; 2],
) -> [f64; 2] {
    let g = potential.gradient(point);
    let drift = cfg.dt / cfg.kt;
    let mut next = [
        point[0] - g[0] * drift + amplitude * noise[0],
        point[1] - g[1] * drift + amplitude * noise[1],
    ];
    if cfg.reflect {
        next[0] = reflect_into(next[0], cfg.init_box[0]);
        next[1] = reflect_into(next[1], cfg.init_box[1]);
    }
    next
}

/// One integrator step driven by the given standard-normal pair.
pub fn step<P: Potential>(
    potential: &P,
    point: [f64; 2],
    cfg: &SimulationConfig,
    noise: [f64; 2],
) -> [f64; 2] {
    advance(potential, point, cfg, cfg.noise_amplitude(), noise)
}

/// Random stream for trajectory `index` of an ensemble.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Simulates one trajectory. Frame 0 is the state after the first
/// `save_stride` steps; the initial position itself is not stored.
pub fn run_trajectory<P: Potential>(
    potential: &P,
    cfg: &SimulationConfig,
    index: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = trajectory_rng(cfg.rng_seed, index);
    let [bx, by] = cfg.init_box;
    let mut x = [rng.random_range(bx[0]..bx[1]), rng.random_range(by[0]..by[1])];
    let n_frames = cfg.n_steps / cfg.save_stride;
    let amplitude = cfg.noise_amplitude();
    let mut frames = Vec::with_capacity(n_frames * 2);
    for _ in 0..n_frames {
        for _ in 0..cfg.save_stride {
            let noise = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            x = advance(potential, x, cfg, amplitude, noise);
        }
        frames.extend_from_slice(&x);
    }
    let frames = Array2::from_shape_vec((n_frames, 2), frames)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Trajectory::new(
        frames,
        cfg.frame_interval(),
        vec!["x1".into(), "x2".into()],
    )
    .map_err(|_| Error::Numerical(format!("trajectory {index} left the finite range")))
}

/// All `n_trajectories` trajectories, generated in parallel on the current rayon pool.
pub fn run_ensemble<P: Potential + Sync>(
    potential: &P,
    cfg: &SimulationConfig,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| run_trajectory(potential, cfg, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::MullerBrownParams;

    struct Flat;
    impl Potential for Flat {
        fn energy(&self, _: [f64; 2]) -> f64 {
            0.0
        }
        fn gradient(&self, _: [f64; 2]) -> [f64; 2] {
            [0.0, 0.0]
        }
    }

    fn small(n_steps: usize, stride: usize) -> SimulationConfig {
        SimulationConfig {
            n_steps,
            save_stride: stride,
            n_trajectories: 3,
            rng_seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn flat_and_noiseless_is_stationary() {
        let cfg = SimulationConfig {
            diffusion: 0.0,
            ..Default::default()
        };
        assert_eq!(step(&Flat, [0.3, 0.4], &cfg, [1.0, -2.0]), [0.3, 0.4]);
    }

    #[test]
    fn noiseless_step_is_scaled_gradient_descent() {
        let p = MullerBrownParams::default();
        let cfg = SimulationConfig {
            diffusion: 0.0,
            reflect: false,
            ..Default::default()
        };
        let x = [0.2, 0.9];
        let g = p.gradient(x);
        let next = step(&p, x, &cfg, [0.5, 0.5]);
        assert_eq!(next[0], x[0] - g[0] * (cfg.dt / cfg.kt));
        assert_eq!(next[1], x[1] - g[1] * (cfg.dt / cfg.kt));
    }

    #[test]
    fn first_step_replays_recorded_noise() {
        let p = MullerBrownParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let noise: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let x0 = [0.0, 1.0];
        let g = p.gradient(x0);
        for (scaling, amp) in [
            (NoiseScaling::EulerMaruyama, (2.0f64 * 1e-2 * 0.1).sqrt()),
            (NoiseScaling::DtScaled, 0.1 * (2.0f64 * 1e-2).sqrt()),
        ] {
            let cfg = SimulationConfig {
                noise: scaling,
                ..Default::default()
            };
            let expected = [
                0.0 - g[0] * 0.1 / 1.5e4 + amp * noise[0],
                1.0 - g[1] * 0.1 / 1.5e4 + amp * noise[1],
            ];
            let got = step(&p, x0, &cfg, noise);
            assert!((got[0] - expected[0]).abs() < 1e-15);
            assert!((got[1] - expected[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn reflection_keeps_points_in_box() {
        let cfg = SimulationConfig::default();
        let next = step(&Flat, [1.19, -0.19], &cfg, [10.0, -10.0]);
        assert!(next[0] <= 1.2 && next[1] >= -0.2, "{next:?}");
    }

    #[test]
    fn ensemble_shape_and_determinism() {
        let p = MullerBrownParams::default();
        let cfg = small(2_000, 100);
        let a = run_ensemble(&p, &cfg).unwrap();
        let b = run_ensemble(&p, &cfg).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].n_frames(), 20);
        assert_eq!(a[0].n_features(), 2);
        assert_eq!(a[0].frame_interval(), 10.0);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn single_stride_gives_one_frame() {
        let p = MullerBrownParams::default();
        let t = run_ensemble(&p, &small(100, 100)).unwrap();
        assert!(t.iter().all(|t| t.n_frames() == 1));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SimulationConfig { kt: 0.0, ..small(100, 10) },
            SimulationConfig { diffusion: -1.0, ..small(100, 10) },
            SimulationConfig { dt: 0.0, ..small(100, 10) },
            SimulationConfig { save_stride: 0, ..small(100, 10) },
            small(105, 10),
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn gradient_flow_converges_in_basin() {
        let p = MullerBrownParams::default();
        let cfg = SimulationConfig {
            diffusion: 0.0,
            reflect: false,
            ..Default::default()
        };
        let mut x = [-0.4, 1.3];
        let mut last = f64::INFINITY;
        for i in 0..200_000 {
            x = step(&p, x, &cfg, [0.0, 0.0]);
            let g = p.gradient(x);
            let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if i % 1000 == 0 {
                assert!(norm <= last + 1e-12, "gradient norm rose at step {i}");
                last = norm;
            }
        }
        let g = p.gradient(x);
        assert!((g[0] * g[0] + g[1] * g[1]).sqrt() < 1e-3);
    }
}
