use std::path::Path;

use cloudclust::concentration::FcMdForm;
use cloudclust::optimize::{GaussSeidelConfig, HomogeneousSystem, InitScheme};
use cloudclust::{ClusterSpec, EstimatorPolicy, EstimatorSwitch, LossModel, SensorParams, SystemConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every knob of an experiment. Missing keys take the reference values:
/// 500 sensors in 10 clusters, `p1 = 0.65`, `L10 = 100`, `L01 = 200`,
/// sensor errors 0.2 / 0.35.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_sensors: usize,
    pub n_clusters: usize,
    pub p_com: f64,
    pub p1: f64,
    pub loss_fa: f64,
    pub loss_md: f64,
    pub p_fa: f64,
    pub p_md: f64,
    /// Half-widths of the uniform spread of each sensor's error
    /// probabilities in heterogeneous realizations.
    pub p_fa_half_width: f64,
    pub p_md_half_width: f64,
    pub realizations: usize,
    pub r_gamma_per_sensor: usize,
    pub r_p: usize,
    pub m_s: usize,
    pub m_c: usize,
    pub max_iters: Option<usize>,
    pub fc_md_form: FcMdForm,
    pub init_schemes: Vec<InitScheme>,
    pub seed: u64,
    pub trials: u64,
    pub p_com_grid: Vec<f64>,
    pub n_clusters_grid: Vec<usize>,
    pub sweep_nc_p_com: Vec<f64>,
    pub comm_prob_sizes: Vec<usize>,
    pub comm_prob_values: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_sensors: 500,
            n_clusters: 10,
            p_com: 0.15,
            p1: 0.65,
            loss_fa: 100.0,
            loss_md: 200.0,
            p_fa: 0.2,
            p_md: 0.35,
            p_fa_half_width: 0.04,
            p_md_half_width: 0.07,
            realizations: 250,
            r_gamma_per_sensor: 50,
            r_p: 100,
            m_s: 20,
            m_c: 10,
            max_iters: None,
            fc_md_form: FcMdForm::FirstMoment,
            init_schemes: InitScheme::ALL.to_vec(),
            seed: 0,
            trials: 100_000,
            p_com_grid: (1..=10).map(|k| k as f64 * 0.05).collect(),
            n_clusters_grid: vec![1, 2, 4, 5, 10, 20, 25, 50, 100, 125, 250, 500],
            sweep_nc_p_com: vec![0.1, 0.5],
            comm_prob_sizes: (1..=100).collect(),
            comm_prob_values: vec![0.05, 0.25, 0.5],
        }
    }
}

fn probability(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Canonical JSON form; parsing it back yields an identical config.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_sensors == 0 || self.n_clusters == 0 {
            return Err(CliError::Config("n_sensors and n_clusters must be positive".into()));
        }
        if self.p_com_grid.is_empty()
            || self.n_clusters_grid.is_empty()
            || self.sweep_nc_p_com.is_empty()
            || self.comm_prob_sizes.is_empty()
            || self.comm_prob_values.is_empty()
            || self.init_schemes.is_empty()
        {
            return Err(CliError::Config("sweep grids must be nonempty".into()));
        }
        if self.realizations == 0 || self.trials == 0 {
            return Err(CliError::Config("realizations and trials must be at least 1".into()));
        }
        if self.r_gamma_per_sensor == 0 || self.r_p == 0 || self.m_s == 0 || self.m_c == 0 {
            return Err(CliError::Config("r_gamma_per_sensor, r_p, m_s and m_c must be positive".into()));
        }
        if self.max_iters == Some(0) {
            return Err(CliError::Config("max_iters must be positive".into()));
        }
        for (name, v) in [("p_com", self.p_com), ("p1", self.p1)] {
            probability(name, v)?;
        }
        for v in self.p_com_grid.iter().chain(&self.sweep_nc_p_com).chain(&self.comm_prob_values) {
            probability("grid p_com", *v)?;
        }
        if self.comm_prob_sizes.contains(&0) || self.n_clusters_grid.contains(&0) {
            return Err(CliError::Config("sizes must be positive".into()));
        }
        for (name, center, hw) in [
            ("p_fa", self.p_fa, self.p_fa_half_width),
            ("p_md", self.p_md, self.p_md_half_width),
        ] {
            if !(hw >= 0.0 && center - hw > 0.0 && center + hw < 0.5) {
                return Err(CliError::Config(format!(
                    "{name} = {center} with half-width {hw} leaves the open interval (0, 0.5)"
                )));
            }
        }
        LossModel::new(self.p1, self.loss_fa, self.loss_md).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn costs(&self) -> Result<LossModel, CliError> {
        Ok(LossModel::new(self.p1, self.loss_fa, self.loss_md)?)
    }

    pub fn switch(&self) -> EstimatorSwitch {
        EstimatorSwitch {
            m_s: self.m_s,
            m_c: self.m_c,
        }
    }

    pub fn policy(&self) -> EstimatorPolicy {
        EstimatorPolicy {
            fc_md_form: self.fc_md_form,
            ..EstimatorPolicy::AUTO
        }
    }

    pub fn exact_policy(&self) -> EstimatorPolicy {
        EstimatorPolicy {
            fc_md_form: self.fc_md_form,
            ..EstimatorPolicy::EXACT
        }
    }

    pub fn homogeneous(&self, n_clusters: usize, p_com: f64) -> Result<HomogeneousSystem, CliError> {
        let s = SensorParams::new(self.p_fa, self.p_md, p_com)?;
        Ok(HomogeneousSystem::new(self.n_sensors, n_clusters, s, self.costs()?, self.switch())?)
    }

    pub fn gauss_seidel(&self, init_scheme: InitScheme) -> GaussSeidelConfig {
        GaussSeidelConfig {
            r_gamma_per_sensor: self.r_gamma_per_sensor,
            r_p: self.r_p,
            max_iters: self.max_iters,
            m_s: self.m_s,
            m_c: self.m_c,
            init_scheme,
            policy: self.policy(),
            ..GaussSeidelConfig::default()
        }
    }

    /// Heterogeneous realization `index`: every sensor's error probabilities
    /// are drawn uniformly around the nominal values. The draws depend only
    /// on the seed and index, so every sweep point sees the same sensors.
    pub fn realization(&self, n_clusters: usize, p_com: f64, index: u64) -> Result<SystemConfig, CliError> {
        if self.n_sensors % n_clusters != 0 {
            return Err(CliError::Config(format!(
                "{} sensors cannot be split into {n_clusters} equal clusters",
                self.n_sensors
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let size = self.n_sensors / n_clusters;
        let (fa, md) = (self.p_fa_half_width, self.p_md_half_width);
        let mut clusters = Vec::with_capacity(n_clusters);
        for _ in 0..n_clusters {
            let sensors = (0..size)
                .map(|_| {
                    let p_fa = self.p_fa + fa * (2.0 * rng.gen::<f64>() - 1.0);
                    let p_md = self.p_md + md * (2.0 * rng.gen::<f64>() - 1.0);
                    SensorParams::new(p_fa, p_md, p_com)
                })
                .collect::<Result<Vec<_>, _>>()?;
            clusters.push(ClusterSpec::with_midpoint_rule(sensors)?);
        }
        Ok(SystemConfig::new(clusters, self.costs()?, self.switch())?)
    }
}
