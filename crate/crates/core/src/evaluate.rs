//! Expected loss of a fully specified system, with each stage evaluated
//! either exactly or through the concentration bounds.

use serde::{Deserialize, Serialize};

use crate::concentration::{
    cluster_fa_bound, cluster_md_bound, fa_part, md_part, tail_bound_or_indicator, FcMdForm,
    FcSums, FcTerm,
};
use crate::error::Result;
use crate::exact::{
    cluster_errors_enumerate, fc_decides_h1, fc_errors_enumerate_weighted,
    fc_errors_homogeneous_weighted, CountTable, ErrorPair, HomogeneousClusterSpec,
};
use crate::model::{
    cluster_comm_prob, ClusterQuality, ClusterSpec, EstimatorSwitch, EvalReport, SensorWeights,
    SystemConfig,
};

/// How one stage of the system is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Exact when the stage is at most the configured switch size, bound otherwise.
    #[default]
    Auto,
    Exact,
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EstimatorPolicy {
    pub cluster: Estimator,
    pub fc: Estimator,
    #[serde(default)]
    pub fc_md_form: FcMdForm,
}

impl EstimatorPolicy {
    pub const AUTO: Self = Self {
        cluster: Estimator::Auto,
        fc: Estimator::Auto,
        fc_md_form: FcMdForm::FirstMoment,
    };
    pub const EXACT: Self = Self {
        cluster: Estimator::Exact,
        fc: Estimator::Exact,
        fc_md_form: FcMdForm::FirstMoment,
    };
    pub const BOUND: Self = Self {
        cluster: Estimator::Bound,
        fc: Estimator::Bound,
        fc_md_form: FcMdForm::FirstMoment,
    };

    pub fn cluster_uses_bound(&self, cluster_size: usize, switch: &EstimatorSwitch) -> bool {
        match self.cluster {
            Estimator::Auto => cluster_size > switch.m_s,
            Estimator::Exact => false,
            Estimator::Bound => true,
        }
    }

    pub fn fc_uses_bound(&self, n_clusters: usize, switch: &EstimatorSwitch) -> bool {
        match self.fc {
            Estimator::Auto => n_clusters > switch.m_c,
            Estimator::Exact => false,
            Estimator::Bound => true,
        }
    }
}

/// A cluster's error and connectivity probabilities, exact or bounded.
pub fn cluster_quality(cluster: &ClusterSpec, use_bound: bool) -> Result<ClusterQuality> {
    let p_com = cluster_comm_prob(cluster);
    if use_bound {
        return ClusterQuality::new(
            cluster_fa_bound(cluster),
            cluster_md_bound(cluster),
            p_com,
            true,
        );
    }
    let e = exact_cluster_errors(cluster)?;
    ClusterQuality::new(e.p_fa, e.p_md, p_com, false)
}

/// Binomial closed form for homogeneous clusters, enumeration otherwise.
pub fn exact_cluster_errors(cluster: &ClusterSpec) -> Result<ErrorPair> {
    match HomogeneousClusterSpec::from_cluster(cluster) {
        Some(h) => Ok(CountTable::new(h.n, h.p_fa_s, h.p_md_s).errors(h.gamma_c, h.tie_prob)),
        None => cluster_errors_enumerate(cluster),
    }
}

/// Fusion-center error probabilities for the given cluster qualities, fused
/// with their (saturated) log-likelihood weights against `gamma`.
pub fn fc_errors(
    qualities: &[ClusterQuality],
    gamma: f64,
    use_bound: bool,
    form: FcMdForm,
) -> Result<ErrorPair> {
    let weights: Vec<SensorWeights> = qualities
        .iter()
        .map(ClusterQuality::fusion_weights_saturating)
        .collect();
    if use_bound {
        let terms: Vec<FcTerm> = qualities
            .iter()
            .zip(&weights)
            .map(|(q, w)| FcTerm { q: *q, w: *w })
            .collect();
        return Ok(fc_bound_errors(&terms, gamma, form));
    }
    let first = (
        qualities[0].p_fa_c,
        qualities[0].p_md_c,
        qualities[0].p_com_c,
    );
    if qualities
        .iter()
        .all(|q| (q.p_fa_c, q.p_md_c, q.p_com_c) == first)
    {
        return Ok(fc_errors_homogeneous_weighted(
            qualities.len(),
            &qualities[0],
            &weights[0],
            gamma,
        ));
    }
    fc_errors_enumerate_weighted(qualities, &weights, gamma)
}

/// Bound estimates of the fusion-center errors.
pub(crate) fn fc_bound_errors(terms: &[FcTerm], gamma: f64, form: FcMdForm) -> ErrorPair {
    let fa = FcSums::of(terms.iter().map(fa_part));
    let md = FcSums::of(terms.iter().map(|t| md_part(t, form)));
    fc_bound_errors_from(&fa, &md, gamma)
}

/// A statistic with zero variance is constant, and its decision is read
/// off directly instead of bounded.
pub(crate) fn fc_bound_errors_from(fa: &FcSums, md: &FcSums, gamma: f64) -> ErrorPair {
    let p_fa = if fa.var > 0.0 {
        tail_bound_or_indicator(&fa.fa_inputs(gamma))
    } else if fc_decides_h1(fa.mean, gamma) {
        1.0
    } else {
        0.0
    };
    let p_md = if md.var > 0.0 {
        tail_bound_or_indicator(&md.md_inputs(gamma))
    } else if fc_decides_h1(md.mean, gamma) {
        0.0
    } else {
        1.0
    };
    ErrorPair::clamped(p_fa, p_md)
}

/// Qualities of every cluster under `policy`, plus whether any used a bound.
pub fn cluster_qualities(
    config: &SystemConfig,
    policy: &EstimatorPolicy,
) -> Result<(Vec<ClusterQuality>, bool)> {
    let mut any_bound = false;
    let qualities = config
        .clusters
        .iter()
        .map(|c| {
            let b = policy.cluster_uses_bound(c.len(), &config.switch);
            any_bound |= b;
            cluster_quality(c, b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((qualities, any_bound))
}

/// Error probabilities and expected loss of `config`, with each cluster and
/// the fusion center evaluated exactly or by bounds as `policy` dictates.
pub fn evaluate_system(config: &SystemConfig, policy: &EstimatorPolicy) -> Result<EvalReport> {
    let (qualities, used_cluster_bound) = cluster_qualities(config, policy)?;
    let used_fc_bound = policy.fc_uses_bound(qualities.len(), &config.switch);
    let e = fc_errors(
        &qualities,
        config.fc_threshold(),
        used_fc_bound,
        policy.fc_md_form,
    )?;
    Ok(EvalReport {
        p_fa: e.p_fa,
        p_md: e.p_md,
        expected_loss: config.costs.expected_loss(e.p_fa, e.p_md),
        used_cluster_bound,
        used_fc_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LossModel, SensorParams};
    use approx::assert_abs_diff_eq;

    fn costs() -> LossModel {
        LossModel::new(0.65, 100.0, 200.0).unwrap()
    }

    fn homogeneous(
        n: usize,
        n_c: usize,
        p_fa: f64,
        p_md: f64,
        p_com: f64,
        gamma_c: f64,
        tie: f64,
    ) -> SystemConfig {
        let s = SensorParams::new(p_fa, p_md, p_com).unwrap();
        let w = s.weights();
        let gamma = crate::exact::count_to_sum_threshold(gamma_c, n, &w);
        let c = ClusterSpec::new(vec![s; n], gamma, tie).unwrap();
        SystemConfig::new(vec![c; n_c], costs(), EstimatorSwitch::default()).unwrap()
    }

    #[test]
    fn small_system_is_exact() {
        let cfg = homogeneous(4, 3, 0.2, 0.35, 0.3, 2.0, 0.5);
        let r = evaluate_system(&cfg, &EstimatorPolicy::AUTO).unwrap();
        assert!(!r.used_cluster_bound && !r.used_fc_bound);
        assert_abs_diff_eq!(
            r.expected_loss,
            cfg.costs.expected_loss(r.p_fa, r.p_md),
            epsilon = 1e-15
        );
    }

    #[test]
    fn auto_switches_on_size() {
        let cfg = homogeneous(25, 12, 0.2, 0.35, 0.1, 12.0, 0.5);
        let r = evaluate_system(&cfg, &EstimatorPolicy::AUTO).unwrap();
        assert!(r.used_cluster_bound && r.used_fc_bound);
        let exact = evaluate_system(&cfg, &EstimatorPolicy::EXACT).unwrap();
        assert!(!exact.used_cluster_bound && !exact.used_fc_bound);
    }

    #[test]
    fn homogeneous_and_enumerated_fc_paths_agree() {
        let cfg = homogeneous(3, 5, 0.2, 0.35, 0.4, 1.0, 0.3);
        let (q, _) = cluster_qualities(&cfg, &EstimatorPolicy::EXACT).unwrap();
        let gamma = cfg.fc_threshold();
        let a = fc_errors(&q, gamma, false, FcMdForm::FirstMoment).unwrap();
        let w: Vec<_> = q
            .iter()
            .map(ClusterQuality::fusion_weights_saturating)
            .collect();
        let b = fc_errors_enumerate_weighted(&q, &w, gamma).unwrap();
        assert_abs_diff_eq!(a.p_fa, b.p_fa, epsilon = 1e-13);
        assert_abs_diff_eq!(a.p_md, b.p_md, epsilon = 1e-13);
    }

    #[test]
    fn reference_instance_exact_loss() {
        // 500 sensors, 10 clusters, majority-style count threshold
        let cfg = homogeneous(50, 10, 0.2, 0.35, 0.15, 26.0, 0.0);
        let r = evaluate_system(&cfg, &EstimatorPolicy::EXACT).unwrap();
        assert!(r.expected_loss > 0.0 && r.expected_loss < 165.0);
        assert!(!r.used_cluster_bound && !r.used_fc_bound);
    }

    #[test]
    fn nearly_perfect_sensors_with_full_connectivity() {
        let cfg = homogeneous(3, 3, 1e-6, 1e-6, 1.0, 1.5, 0.5);
        let r = evaluate_system(&cfg, &EstimatorPolicy::EXACT).unwrap();
        assert!(r.expected_loss < 1e-8, "{}", r.expected_loss);
    }

    #[test]
    fn degenerate_clusters_are_evaluated() {
        // every cluster always reports one: the fusion center always alarms
        let s = SensorParams::new(0.2, 0.35, 0.5).unwrap();
        let c = ClusterSpec::new(vec![s; 3], -3.0 * s.weights().w0, 0.0).unwrap();
        let cfg = SystemConfig::new(vec![c; 4], costs(), EstimatorSwitch::default()).unwrap();
        let r = evaluate_system(&cfg, &EstimatorPolicy::EXACT).unwrap();
        assert_abs_diff_eq!(r.p_fa, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_md, 0.0, epsilon = 1e-12);
        let b = evaluate_system(
            &cfg,
            &EstimatorPolicy {
                cluster: Estimator::Exact,
                ..EstimatorPolicy::BOUND
            },
        )
        .unwrap();
        assert!(b.used_fc_bound);
        assert_abs_diff_eq!(b.p_fa, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bound_policy_dominates_exact_when_valid() {
        let cfg = homogeneous(30, 8, 0.2, 0.35, 0.05, 20.0, 0.0);
        let exact = evaluate_system(&cfg, &EstimatorPolicy::EXACT).unwrap();
        let cluster_only = EstimatorPolicy {
            cluster: Estimator::Bound,
            ..EstimatorPolicy::EXACT
        };
        let (qe, _) = cluster_qualities(&cfg, &EstimatorPolicy::EXACT).unwrap();
        let (qb, _) = cluster_qualities(&cfg, &cluster_only).unwrap();
        assert!(qb[0].p_fa_c >= qe[0].p_fa_c && qb[0].p_md_c >= qe[0].p_md_c);
        assert!(exact.expected_loss.is_finite());
    }
}
