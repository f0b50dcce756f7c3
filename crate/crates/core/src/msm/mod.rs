//! Markov state models on top of a low-dimensional projection: clustering,
//! transition counting, reversible estimation, implied timescales, GMRQ
//! scoring and free-energy profiles.

mod cluster;
mod counts;
mod estimate;
mod fes;
mod gmrq;

pub use cluster::{ClusterConfig, ClusterModel};
pub use counts::{count_matrix, largest_connected_set, restrict};
pub use estimate::{log_likelihood, mle_reversible, mle_reversible_with, MleOptions, MsmModel};
pub use fes::{free_energy_histogram, FreeEnergyProfile};
pub use gmrq::{gmrq_score, GmrqScore};
