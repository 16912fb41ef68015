use serde::Serialize;

use crate::concentration::{
    cluster_fa_bound, cluster_md_bound, fa_part, md_part, FcMdForm, FcSums, FcTerm,
};
use crate::error::{Error, Result};
use crate::evaluate::{fc_bound_errors_from, EstimatorPolicy};
use crate::exact::{count_to_sum_threshold, fc_errors_homogeneous_weighted, CountTable};
use crate::model::{
    comm_prob_of, ClusterQuality, ClusterSpec, EstimatorSwitch, EvalReport, LossModel,
    SensorParams, SystemConfig,
};

/// `n_clusters` equal clusters of identical sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneousSystem {
    pub n_sensors: usize,
    pub n_clusters: usize,
    pub sensor: SensorParams,
    pub costs: LossModel,
    pub switch: EstimatorSwitch,
}

impl HomogeneousSystem {
    pub fn new(
        n_sensors: usize,
        n_clusters: usize,
        sensor: SensorParams,
        costs: LossModel,
        switch: EstimatorSwitch,
    ) -> Result<Self> {
        if n_clusters == 0 || n_sensors == 0 || n_sensors % n_clusters != 0 {
            return Err(Error::Divisibility {
                sensors: n_sensors,
                clusters: n_clusters,
            });
        }
        Ok(Self {
            n_sensors,
            n_clusters,
            sensor,
            costs,
            switch,
        })
    }

    pub fn cluster_size(&self) -> usize {
        self.n_sensors / self.n_clusters
    }

    /// Weighted-sum threshold equivalent to count threshold `gamma_c`.
    pub fn gamma_j(&self, gamma_c: f64) -> f64 {
        count_to_sum_threshold(gamma_c, self.cluster_size(), &self.sensor.weights())
    }

    pub fn cluster(&self, gamma_c: f64, tie_prob: f64) -> Result<ClusterSpec> {
        ClusterSpec::new(
            vec![self.sensor; self.cluster_size()],
            self.gamma_j(gamma_c),
            tie_prob,
        )
    }

    pub fn config(&self, gamma_c: f64, tie_prob: f64) -> Result<SystemConfig> {
        let c = self.cluster(gamma_c, tie_prob)?;
        SystemConfig::new(vec![c; self.n_clusters], self.costs, self.switch)
    }
}

/// Grid minimizer of the equal-threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneousSolution {
    pub gamma_c: usize,
    pub tie_prob: f64,
    /// The same threshold on the weighted-sum scale.
    pub gamma_j: f64,
    pub loss: f64,
    pub report: EvalReport,
}

/// Evaluates equal-threshold rules of one homogeneous system, reusing the
/// count tables across the grid.
pub(crate) struct HomogeneousEvaluator {
    sys: HomogeneousSystem,
    table: CountTable,
    base: ClusterSpec,
    p_com_c: f64,
    cluster_bound: bool,
    fc_bound: bool,
    form: FcMdForm,
}

impl HomogeneousEvaluator {
    pub fn new(sys: &HomogeneousSystem, policy: &EstimatorPolicy) -> Result<Self> {
        let n = sys.cluster_size();
        let base = sys.cluster(n as f64, 1.0)?;
        Ok(Self {
            sys: *sys,
            table: CountTable::new(n, sys.sensor.p_fa(), sys.sensor.p_md()),
            p_com_c: comm_prob_of(base.sensors()),
            base,
            cluster_bound: policy.cluster_uses_bound(n, &sys.switch),
            fc_bound: policy.fc_uses_bound(sys.n_clusters, &sys.switch),
            form: policy.fc_md_form,
        })
    }

    pub fn cluster_bound(&self) -> bool {
        self.cluster_bound
    }

    pub fn quality(&self, gamma_c: f64, tie_prob: f64) -> Result<ClusterQuality> {
        if self.cluster_bound {
            let c = self
                .base
                .clone()
                .with_rule(self.sys.gamma_j(gamma_c), tie_prob)?;
            return ClusterQuality::new(
                cluster_fa_bound(&c),
                cluster_md_bound(&c),
                self.p_com_c,
                true,
            );
        }
        let e = self.table.errors(gamma_c, tie_prob);
        ClusterQuality::new(e.p_fa, e.p_md, self.p_com_c, false)
    }

    pub fn report(&self, q: &ClusterQuality) -> EvalReport {
        let gamma = self.sys.costs.fc_threshold();
        let w = q.fusion_weights_saturating();
        let e = if self.fc_bound {
            let t = FcTerm { q: *q, w };
            let fa = FcSums::of(std::iter::repeat(fa_part(&t)).take(self.sys.n_clusters));
            let md =
                FcSums::of(std::iter::repeat(md_part(&t, self.form)).take(self.sys.n_clusters));
            fc_bound_errors_from(&fa, &md, gamma)
        } else {
            fc_errors_homogeneous_weighted(self.sys.n_clusters, q, &w, gamma)
        };
        EvalReport {
            p_fa: e.p_fa,
            p_md: e.p_md,
            expected_loss: self.sys.costs.expected_loss(e.p_fa, e.p_md),
            used_cluster_bound: self.cluster_bound,
            used_fc_bound: self.fc_bound,
        }
    }

    pub fn evaluate(&self, gamma_c: f64, tie_prob: f64) -> Result<EvalReport> {
        Ok(self.report(&self.quality(gamma_c, tie_prob)?))
    }
}

/// Equal-threshold grid search over count thresholds `0..=n` and tie
/// probabilities `0, 1/r_p, ..., 1`.
///
/// When the cluster stage is bounded the bound does not depend on the tie
/// probability, which is then fixed to 1. Ties between grid points go to
/// the smaller count threshold, then the smaller tie probability.
pub fn optimize_homogeneous(
    sys: &HomogeneousSystem,
    r_p: usize,
    policy: &EstimatorPolicy,
) -> Result<HomogeneousSolution> {
    if r_p == 0 {
        return Err(Error::Config("r_p must be positive".into()));
    }
    let ev = HomogeneousEvaluator::new(sys, policy)?;
    let ties: Vec<f64> = if ev.cluster_bound() {
        vec![1.0]
    } else {
        (0..=r_p).map(|k| k as f64 / r_p as f64).collect()
    };
    let mut best: Option<(usize, f64, EvalReport)> = None;
    for gamma_c in 0..=sys.cluster_size() {
        for &p in &ties {
            let r = ev.evaluate(gamma_c as f64, p)?;
            if best.map_or(true, |(_, _, b)| r.expected_loss < b.expected_loss) {
                best = Some((gamma_c, p, r));
            }
        }
    }
    let (gamma_c, tie_prob, report) = best.expect("grid is never empty");
    Ok(HomogeneousSolution {
        gamma_c,
        tie_prob,
        gamma_j: sys.gamma_j(gamma_c as f64),
        loss: report.expected_loss,
        report,
    })
}

/// Count threshold of the majority rule, `floor(n/2) + 1`.
pub fn majority_threshold(cluster_size: usize) -> usize {
    cluster_size / 2 + 1
}

/// Exact evaluation of every cluster deciding H1 when at least
/// `floor(n/2) + 1` of its sensors report one.
pub fn majority_rule_loss(sys: &HomogeneousSystem) -> Result<EvalReport> {
    exact_loss_at(sys, majority_threshold(sys.cluster_size()) as f64, 0.0)
}

/// Exact evaluation of an equal-threshold rule.
pub fn exact_loss_at(sys: &HomogeneousSystem, gamma_c: f64, tie_prob: f64) -> Result<EvalReport> {
    HomogeneousEvaluator::new(sys, &EstimatorPolicy::EXACT)?.evaluate(gamma_c, tie_prob)
}
