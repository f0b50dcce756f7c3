use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use vde::baselines::DEFAULT_RIDGE;
use vde::pipeline::{MsmParams, SplitConfig};
use vde::saliency::Pairing;
use vde::simulate::SimulationConfig;
use vde::vde::VdeConfig;

use crate::exit::ConfigError;

/// Everything a run can be configured with. Missing sections take their
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulation: SimulationConfig,
    pub vde: VdeConfig,
    pub tica: TicaParams,
    pub pca: PcaParams,
    pub msm: MsmParams,
    pub split: SplitConfig,
    pub generate: GenerateParams,
    pub salience: SalienceParams,
    pub fes: FesParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TicaParams {
    pub lag: usize,
    pub n_components: usize,
    pub ridge: f64,
}

impl Default for TicaParams {
    fn default() -> Self {
        Self { lag: 10, n_components: 1, ridge: DEFAULT_RIDGE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaParams {
    pub n_components: usize,
}

impl Default for PcaParams {
    fn default() -> Self {
        Self { n_components: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateParams {
    /// Noise scales, one output set per value.
    pub alphas: Vec<f64>,
    pub n_steps: usize,
    /// Number of start frames drawn from the input trajectories.
    pub n_starts: usize,
    pub n_bins: usize,
    pub kt: f64,
    pub rng_seed: u64,
}

impl Default for GenerateParams {
    fn default() -> Self {
        Self {
            alphas: (0..5).map(|i| 10f64.powf(-2.0 + 0.25 * i as f64)).collect(),
            n_steps: 1000,
            n_starts: 10,
            n_bins: 100,
            kt: 1.0,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SalienceParams {
    pub pairing: Pairing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FesParams {
    pub n_bins: usize,
    pub kt: f64,
    /// Histogram range; defaults to the data range.
    pub range: Option<(f64, f64)>,
}

impl Default for FesParams {
    fn default() -> Self {
        Self { n_bins: 100, kt: 1.0, range: None }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| anyhow::Error::new(ConfigError(format!("{}: {e}", path.display()))))
    }

    /// Overrides every seed in the config.
    pub fn reseed(&mut self, seed: u64) {
        self.simulation.rng_seed = seed;
        self.vde.rng_seed = seed;
        self.split.seed = seed;
        self.generate.rng_seed = seed;
    }
}
