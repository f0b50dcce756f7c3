use std::path::{Path, PathBuf};

use anyhow::Context;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use vde::baselines::LinearProjection;
use vde::pipeline::Projector;
use vde::trajectory::Trajectory;
use vde::vde::VdeModel;

/// Index written by `simulate` next to the trajectory files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub frame_interval: f64,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub n_frames: usize,
}

pub const MANIFEST: &str = "manifest.json";

/// Expands directories through their manifest.
fn expand(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let m = p.join(MANIFEST);
            let text = std::fs::read_to_string(&m)
                .with_context(|| format!("{} is a directory without {MANIFEST}", p.display()))?;
            let manifest: Manifest = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", m.display()))?;
            out.extend(manifest.files.iter().map(|e| p.join(&e.file)));
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn load_trajectories(paths: &[PathBuf]) -> anyhow::Result<Vec<(PathBuf, Trajectory)>> {
    expand(paths)?
        .into_iter()
        .map(|p| {
            let t = Trajectory::load(&p).with_context(|| format!("loading {}", p.display()))?;
            Ok((p, t))
        })
        .collect()
}

pub fn load_frames(path: &Path) -> anyhow::Result<Trajectory> {
    Ok(Trajectory::load(path).with_context(|| format!("loading {}", path.display()))?)
}

pub enum Model {
    Vde(VdeModel),
    Linear(LinearProjection),
}

impl Model {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing {}", path.display()))?;
        let model = if value.get("layers").is_some() {
            Model::Vde(VdeModel::load(&bytes[..])?)
        } else {
            Model::Linear(LinearProjection::load(&bytes[..])?)
        };
        Ok(model)
    }

    pub fn transform(&self, traj: &Trajectory) -> vde::Result<Trajectory> {
        match self {
            Model::Vde(m) => m.transform(traj),
            Model::Linear(p) => p.project(traj),
        }
    }

    pub fn vde(&self) -> Option<&VdeModel> {
        match self {
            Model::Vde(m) => Some(m),
            Model::Linear(_) => None,
        }
    }
}

impl Projector for Model {
    fn latents(&self, traj: &Trajectory) -> vde::Result<Array2<f64>> {
        match self {
            Model::Vde(m) => m.latents(traj),
            Model::Linear(p) => p.latents(traj),
        }
    }
}
