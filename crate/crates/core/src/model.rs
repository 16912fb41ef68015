//! Domain types of the cloud-cluster detection model and the closed-form
//! quantities that do not need any probability engine: log-likelihood
//! weights, cluster connectivity, the fusion-center threshold and the
//! expected loss.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative slack accepted when checking that a cluster threshold lies in
/// `[l_min, l_max]`. Grid endpoints are built by repeated addition.
const THRESHOLD_RANGE_TOL: f64 = 1e-9;

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {p} is not a probability")))
    }
}

/// Error and connectivity probabilities of one binary sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorParams {
    p_fa: f64,
    p_md: f64,
    p_com: f64,
}

impl SensorParams {
    /// `p_fa` and `p_md` must lie in the open interval (0, 0.5).
    pub fn new(p_fa: f64, p_md: f64, p_com: f64) -> Result<Self> {
        for (name, p) in [("p_fa", p_fa), ("p_md", p_md)] {
            if !(p > 0.0 && p < 0.5) {
                return Err(Error::Domain(format!(
                    "sensor {name} = {p} is outside (0, 0.5)"
                )));
            }
        }
        check_probability("p_com", p_com)?;
        Ok(Self { p_fa, p_md, p_com })
    }

    pub fn p_fa(&self) -> f64 {
        self.p_fa
    }

    pub fn p_md(&self) -> f64 {
        self.p_md
    }

    pub fn p_com(&self) -> f64 {
        self.p_com
    }

    pub fn weights(&self) -> SensorWeights {
        sensor_weights(self)
    }
}

/// Log-likelihood contributions of a binary report: the statistic adds `w1`
/// for a one and subtracts `w0` for a zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorWeights {
    pub w1: f64,
    pub w0: f64,
}

impl SensorWeights {
    /// Weights of a binary report with false-alarm probability `p_fa` and
    /// missed-detection probability `p_md`. Both must be in (0, 1).
    pub fn from_error_probs(p_fa: f64, p_md: f64) -> Result<Self> {
        if !(p_fa > 0.0 && p_fa < 1.0 && p_md > 0.0 && p_md < 1.0) {
            return Err(Error::DegenerateWeights { p_fa, p_md });
        }
        Ok(Self {
            w1: ((1.0 - p_md) / p_fa).ln(),
            w0: ((1.0 - p_fa) / p_md).ln(),
        })
    }

    /// Like [`SensorWeights::from_error_probs`] but defined on the closed unit
    /// square: `ln 0` is replaced by `ln(f64::MIN_POSITIVE)`. A report that is
    /// impossible under both hypotheses gets weight 0, a report that is
    /// impossible under exactly one hypothesis gets a finite weight of about
    /// 708 in magnitude.
    pub fn saturating(p_fa: f64, p_md: f64) -> Self {
        let sat_ln = |x: f64| x.max(f64::MIN_POSITIVE).ln();
        Self {
            w1: sat_ln(1.0 - p_md) - sat_ln(p_fa),
            w0: sat_ln(1.0 - p_fa) - sat_ln(p_md),
        }
    }

    /// `w1 + w0`, the gap between the two possible contributions.
    pub fn span(&self) -> f64 {
        self.w1 + self.w0
    }
}

/// `(ln((1 - p_md)/p_fa), ln((1 - p_fa)/p_md))`.
pub fn sensor_weights(s: &SensorParams) -> SensorWeights {
    SensorWeights {
        w1: ((1.0 - s.p_md) / s.p_fa).ln(),
        w0: ((1.0 - s.p_fa) / s.p_md).ln(),
    }
}

/// A group of sensors fused by a weighted likelihood-ratio test against
/// `gamma`.
///
/// On an exact tie the cluster reports H0 with probability `tie_prob`, which
/// is the convention under which the cluster error probabilities read
/// `P_FA = Pr(S > gamma | H0) + (1 - tie_prob) Pr(S = gamma | H0)` and
/// `P_MD = Pr(S < gamma | H1) + tie_prob Pr(S = gamma | H1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSpec {
    sensors: Vec<SensorParams>,
    gamma: f64,
    tie_prob: f64,
}

impl ClusterSpec {
    pub fn new(sensors: Vec<SensorParams>, gamma: f64, tie_prob: f64) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::Config("a cluster needs at least one sensor".into()));
        }
        let mut spec = Self {
            sensors,
            gamma: 0.0,
            tie_prob: 0.0,
        };
        spec.set_rule(gamma, tie_prob)?;
        Ok(spec)
    }

    /// Cluster with its threshold at the midpoint of `[l_min, l_max]` and a
    /// fair tie-break.
    pub fn with_midpoint_rule(sensors: Vec<SensorParams>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::Config("a cluster needs at least one sensor".into()));
        }
        let (lo, hi) = threshold_range(&sensors);
        Self::new(sensors, 0.5 * (lo + hi), 0.5)
    }

    /// Replace the decision rule. Thresholds within rounding of the range
    /// ends are snapped onto them.
    pub fn set_rule(&mut self, gamma: f64, tie_prob: f64) -> Result<()> {
        check_probability("tie_prob", tie_prob)?;
        if !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "cluster threshold {gamma} is not finite"
            )));
        }
        let (lo, hi) = self.threshold_range();
        let slack = THRESHOLD_RANGE_TOL * (hi - lo).max(1.0);
        if gamma < lo - slack || gamma > hi + slack {
            return Err(Error::Domain(format!(
                "cluster threshold {gamma} outside [{lo}, {hi}]"
            )));
        }
        self.gamma = gamma.clamp(lo, hi);
        self.tie_prob = tie_prob;
        Ok(())
    }

    pub fn with_rule(mut self, gamma: f64, tie_prob: f64) -> Result<Self> {
        self.set_rule(gamma, tie_prob)?;
        Ok(self)
    }

    pub fn sensors(&self) -> &[SensorParams] {
        &self.sensors
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tie_prob(&self) -> f64 {
        self.tie_prob
    }

    /// `(l_min, l_max) = (-sum w0, sum w1)`, the range of the weighted sum.
    pub fn threshold_range(&self) -> (f64, f64) {
        threshold_range(&self.sensors)
    }

    /// True when every sensor has the same detection quality, in which case
    /// the weighted sum is an affine function of a binomial count.
    pub fn is_homogeneous(&self) -> bool {
        let first = self.sensors[0];
        self.sensors
            .iter()
            .all(|s| s.p_fa == first.p_fa && s.p_md == first.p_md)
    }

    pub fn weights(&self) -> Vec<SensorWeights> {
        self.sensors.iter().map(sensor_weights).collect()
    }
}

fn threshold_range(sensors: &[SensorParams]) -> (f64, f64) {
    sensors
        .iter()
        .map(sensor_weights)
        .fold((0.0, 0.0), |(lo, hi), w| (lo - w.w0, hi + w.w1))
}

/// A cluster seen from the fusion center: a single noisy, intermittently
/// connected binary sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterQuality {
    pub p_fa_c: f64,
    pub p_md_c: f64,
    pub p_com_c: f64,
    /// The error probabilities are concentration bounds, not exact values.
    pub is_bound: bool,
}

impl ClusterQuality {
    pub fn new(p_fa_c: f64, p_md_c: f64, p_com_c: f64, is_bound: bool) -> Result<Self> {
        check_probability("p_fa_c", p_fa_c)?;
        check_probability("p_md_c", p_md_c)?;
        check_probability("p_com_c", p_com_c)?;
        Ok(Self {
            p_fa_c,
            p_md_c,
            p_com_c,
            is_bound,
        })
    }

    /// Fusion weights; fails when a decision probability is 0 or 1.
    pub fn fusion_weights(&self) -> Result<SensorWeights> {
        SensorWeights::from_error_probs(self.p_fa_c, self.p_md_c)
    }

    pub fn fusion_weights_saturating(&self) -> SensorWeights {
        SensorWeights::saturating(self.p_fa_c, self.p_md_c)
    }
}

/// Prior and misclassification costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossModel {
    /// Pr(H1).
    pub p1: f64,
    /// Cost of a false alarm (L10).
    pub loss_fa: f64,
    /// Cost of a missed detection (L01).
    pub loss_md: f64,
}

impl LossModel {
    pub fn new(p1: f64, loss_fa: f64, loss_md: f64) -> Result<Self> {
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(Error::Config(format!("prior p1 = {p1} is outside (0, 1)")));
        }
        if !(loss_fa > 0.0 && loss_fa.is_finite() && loss_md > 0.0 && loss_md.is_finite()) {
            return Err(Error::Config(format!(
                "losses must be positive, got L10 = {loss_fa}, L01 = {loss_md}"
            )));
        }
        Ok(Self {
            p1,
            loss_fa,
            loss_md,
        })
    }

    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }

    /// `ln(L10 p0 / (L01 p1))`.
    pub fn fc_threshold(&self) -> f64 {
        (self.loss_fa * self.p0() / (self.loss_md * self.p1)).ln()
    }

    pub fn expected_loss(&self, p_fa: f64, p_md: f64) -> f64 {
        self.p0() * p_fa * self.loss_fa + self.p1 * p_md * self.loss_md
    }
}

/// Size limits above which error probabilities are replaced by
/// concentration bounds: clusters larger than `m_s` sensors, systems with
/// more than `m_c` clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EstimatorSwitch {
    pub m_s: usize,
    pub m_c: usize,
}

impl Default for EstimatorSwitch {
    fn default() -> Self {
        Self { m_s: 20, m_c: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub clusters: Vec<ClusterSpec>,
    pub costs: LossModel,
    pub switch: EstimatorSwitch,
}

impl SystemConfig {
    pub fn new(
        clusters: Vec<ClusterSpec>,
        costs: LossModel,
        switch: EstimatorSwitch,
    ) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::Config("a system needs at least one cluster".into()));
        }
        if switch.m_s == 0 || switch.m_c == 0 {
            return Err(Error::Config(
                "estimator switches m_s and m_c must be positive".into(),
            ));
        }
        Ok(Self {
            clusters,
            costs,
            switch,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.clusters.iter().map(ClusterSpec::len).sum()
    }

    pub fn fc_threshold(&self) -> f64 {
        fc_threshold(self)
    }
}

/// Error probabilities and expected loss of one fully specified system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub p_fa: f64,
    pub p_md: f64,
    pub expected_loss: f64,
    pub used_cluster_bound: bool,
    pub used_fc_bound: bool,
}

/// `1 - prod(1 - p_com)`: a cluster reaches the fusion center when any of
/// its sensors does.
pub fn cluster_comm_prob(cluster: &ClusterSpec) -> f64 {
    comm_prob_of(cluster.sensors())
}

pub(crate) fn comm_prob_of(sensors: &[SensorParams]) -> f64 {
    1.0 - silence_prob(sensors)
}

fn silence_prob(sensors: &[SensorParams]) -> f64 {
    sensors.iter().map(|s| 1.0 - s.p_com).product()
}

/// Expected number of clusters that reach the fusion center.
pub fn expected_communicating_clusters(clusters: &[ClusterSpec]) -> f64 {
    clusters.len() as f64
        - clusters
            .iter()
            .map(|c| silence_prob(c.sensors()))
            .sum::<f64>()
}

pub fn fc_threshold(config: &SystemConfig) -> f64 {
    config.costs.fc_threshold()
}

pub fn expected_loss(p_fa: f64, p_md: f64, config: &SystemConfig) -> f64 {
    config.costs.expected_loss(p_fa, p_md)
}
