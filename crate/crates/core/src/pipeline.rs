//! Cross-validated GMRQ scoring of one-dimensional projections.
//!
//! Each split shuffles the trajectories, fits a projection on the training
//! part, clusters the training latents, estimates an MSM and scores its slow
//! eigenvectors on the held-out trajectories.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::LinearProjection;
use crate::error::{Error, Result};
use crate::msm::{gmrq_score, ClusterConfig, ClusterModel, GmrqScore, MsmModel};
use crate::trajectory::Trajectory;
use crate::vde::VdeModel;

/// Anything that maps raw frames to low-dimensional latents.
pub trait Projector: Sync {
    /// `T × k` latents for one trajectory.
    fn latents(&self, traj: &Trajectory) -> Result<Array2<f64>>;
}

impl Projector for LinearProjection {
    fn latents(&self, traj: &Trajectory) -> Result<Array2<f64>> {
        self.project_frames(traj.frames())
    }
}

impl Projector for VdeModel {
    fn latents(&self, traj: &Trajectory) -> Result<Array2<f64>> {
        let scaled = self.scaler.scale_frames(&traj.frames().to_owned())?;
        Ok(self.encode(&scaled)?.insert_axis(Axis(1)))
    }
}

impl<P: Projector + ?Sized> Projector for &P {
    fn latents(&self, traj: &Trajectory) -> Result<Array2<f64>> {
        (**self).latents(traj)
    }
}

impl<P: Projector + ?Sized + Send> Projector for Box<P> {
    fn latents(&self, traj: &Trajectory) -> Result<Array2<f64>> {
        (**self).latents(traj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vde,
    Tica,
    Pca,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Vde, Method::Tica, Method::Pca];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vde => "vde",
            Method::Tica => "tica",
            Method::Pca => "pca",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vde" => Ok(Method::Vde),
            "tica" => Ok(Method::Tica),
            "pca" => Ok(Method::Pca),
            _ => Err(Error::Config(format!("unknown method {s:?} (expected vde, tica or pca)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsmParams {
    pub n_clusters: usize,
    /// MSM lag in frames.
    pub lag: usize,
    /// Number of eigenvectors scored, including the stationary one.
    pub n_eigenvectors: usize,
    pub cluster_batch_size: usize,
    pub cluster_steps: usize,
}

impl Default for MsmParams {
    fn default() -> Self {
        Self {
            n_clusters: 12,
            lag: 10,
            n_eigenvectors: 2,
            cluster_batch_size: 1000,
            cluster_steps: 300,
        }
    }
}

impl MsmParams {
    pub fn cluster_config(&self, rng_seed: u64) -> ClusterConfig {
        ClusterConfig {
            n_clusters: self.n_clusters,
            batch_size: self.cluster_batch_size,
            n_steps: self.cluster_steps,
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub n_splits: usize,
    /// Fraction of trajectories used for training in each split.
    pub train_fraction: f64,
    /// Split `i` uses seed `seed + i`.
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_splits: 100,
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Shuffled `(train, test)` trajectory indices. Both sides are non-empty.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 trajectories to split, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// State sequences of `trajs` under a fitted projector and clustering.
pub fn discretize(
    projector: &impl Projector,
    clusters: &ClusterModel,
    trajs: &[Trajectory],
) -> Result<Vec<Vec<usize>>> {
    trajs
        .iter()
        .map(|t| clusters.assign(projector.latents(t)?.view()))
        .collect()
}

/// Clusters the training latents, fits an MSM on them and returns it with
/// the clustering.
pub fn fit_msm(
    projector: &impl Projector,
    train: &[Trajectory],
    params: &MsmParams,
    cluster_seed: u64,
) -> Result<(ClusterModel, MsmModel)> {
    let latents = train
        .iter()
        .map(|t| projector.latents(t))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = latents.iter().map(|l| l.view()).collect();
    let pooled = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::Data(format!("cannot pool latents: {e}")))?;
    let clusters = ClusterModel::fit(pooled.view(), &params.cluster_config(cluster_seed))?;
    let seqs = latents
        .iter()
        .map(|l| clusters.assign(l.view()))
        .collect::<Result<Vec<_>>>()?;
    let msm = MsmModel::fit(&seqs, params.n_clusters, params.lag)?;
    Ok((clusters, msm))
}

/// GMRQ of a projector already fitted on `train`, evaluated on `test`.
pub fn score_projection(
    projector: &impl Projector,
    train: &[Trajectory],
    test: &[Trajectory],
    params: &MsmParams,
    cluster_seed: u64,
) -> Result<GmrqScore> {
    let (clusters, msm) = fit_msm(projector, train, params, cluster_seed)?;
    let test_seqs = discretize(projector, &clusters, test)?;
    gmrq_score(&msm, &test_seqs, params.n_eigenvectors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub split_seed: u64,
    pub score: f64,
    pub dropped_states: Vec<usize>,
}

/// Runs `split.n_splits` shuffle splits in parallel. `fit` builds the
/// projector from the training trajectories of a split and its seed.
pub fn cross_validate<P, F>(
    trajs: &[Trajectory],
    split: &SplitConfig,
    params: &MsmParams,
    fit: F,
) -> Result<Vec<SplitScore>>
where
    P: Projector,
    F: Fn(&[Trajectory], u64) -> Result<P> + Sync,
{
    if split.n_splits == 0 {
        return Err(Error::Config("n_splits must be positive".into()));
    }
    (0..split.n_splits as u64)
        .into_par_iter()
        .map(|i| {
            let seed = split.seed.wrapping_add(i);
            let (tr, te) = split_indices(trajs.len(), split.train_fraction, seed)?;
            let train: Vec<Trajectory> = tr.iter().map(|&k| trajs[k].clone()).collect();
            let test: Vec<Trajectory> = te.iter().map(|&k| trajs[k].clone()).collect();
            let projector = fit(&train, seed)?;
            let s = score_projection(&projector, &train, &test, params, seed)?;
            Ok(SplitScore {
                split_seed: seed,
                score: s.score,
                dropped_states: s.dropped_states,
            })
        })
        .collect()
}

/// Mean and standard error of the split scores.
pub fn summarize(scores: &[SplitScore]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s.score).sum::<f64>() / n;
    if scores.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = scores.iter().map(|s| (s.score - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
