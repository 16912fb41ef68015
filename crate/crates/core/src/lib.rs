//! Cloud-cluster decentralized detection: binary sensors are grouped into
//! clusters, each cluster fuses its measurements with a weighted
//! likelihood-ratio test, and clusters that manage to reach the fusion
//! center forward a one-bit decision that is fused again.
//!
//! The crate evaluates such systems exactly or through improved Bennett
//! bounds, optimizes their thresholds and simulates them.

pub mod concentration;
pub mod error;
pub mod evaluate;
pub mod exact;
pub mod model;
pub mod optimize;
pub mod simulate;

pub use error::{Error, Result};
pub use evaluate::{evaluate_system, Estimator, EstimatorPolicy};
pub use exact::ErrorPair;
pub use model::{
    cluster_comm_prob, expected_communicating_clusters, expected_loss, fc_threshold,
    sensor_weights, ClusterQuality, ClusterSpec, EstimatorSwitch, EvalReport, LossModel,
    SensorParams, SensorWeights, SystemConfig,
};
