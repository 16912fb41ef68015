//! Threshold optimization for homogeneous and heterogeneous systems.

mod gauss_seidel;
mod homogeneous;

pub use gauss_seidel::{
    initial_values, mean_sensor, optimize_heterogeneous, optimize_heterogeneous_from,
    GaussSeidelConfig, HeterogeneousSolution, InitScheme, TraceEntry,
};
pub use homogeneous::{
    exact_loss_at, majority_rule_loss, majority_threshold, optimize_homogeneous,
    HomogeneousSolution, HomogeneousSystem,
};
