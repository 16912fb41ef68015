use serde::{Deserialize, Serialize};

use super::homogeneous::{optimize_homogeneous, HomogeneousSystem};
use crate::concentration::{
    cluster_fa_inputs, cluster_md_inputs, fa_part, md_part, tail_bound_or_indicator, BoundInputs,
    FcSums, FcTerm,
};
use crate::error::{Error, Result};
use crate::evaluate::{cluster_quality, fc_bound_errors_from, fc_errors, EstimatorPolicy};
use crate::exact::dist::{errors_from_splits, SumDistribution};
use crate::exact::ErrorPair;
use crate::model::{
    comm_prob_of, ClusterQuality, ClusterSpec, EstimatorSwitch, LossModel, SensorParams,
    SensorWeights, SystemConfig,
};

/// Starting rules for the coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Each cluster takes the equal-threshold optimum of a system made of
    /// copies of itself, with every sensor replaced by the cluster's mean
    /// sensor.
    OptimalHomogeneous,
    /// Middle of the threshold range, fair tie-break.
    Midpoint,
    /// Lowest threshold, ties to H1: the cluster always reports one.
    AllH1,
    /// Highest threshold, ties to H0: the cluster always reports zero.
    AllH0,
}

impl InitScheme {
    pub const ALL: [InitScheme; 4] = [
        Self::OptimalHomogeneous,
        Self::Midpoint,
        Self::AllH1,
        Self::AllH0,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::OptimalHomogeneous => "optimal-homogeneous",
            Self::Midpoint => "midpoint",
            Self::AllH1 => "all-h1",
            Self::AllH0 => "all-h0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussSeidelConfig {
    /// Threshold grid points per sensor of the cluster being updated.
    pub r_gamma_per_sensor: usize,
    pub r_p: usize,
    /// Threshold convergence tolerance, relative to each cluster's range.
    pub delta_gamma_tol: f64,
    pub delta_p_tol: f64,
    /// Maximum number of coordinate updates; `None` means `50 N_c`.
    pub max_iters: Option<usize>,
    pub m_s: usize,
    pub m_c: usize,
    pub init_scheme: InitScheme,
    /// Estimator choice; `Auto` switches on `m_s` and `m_c`.
    pub policy: EstimatorPolicy,
}

impl Default for GaussSeidelConfig {
    fn default() -> Self {
        Self {
            r_gamma_per_sensor: 50,
            r_p: 100,
            delta_gamma_tol: 1e-6,
            delta_p_tol: 1e-6,
            max_iters: None,
            m_s: 20,
            m_c: 10,
            init_scheme: InitScheme::OptimalHomogeneous,
            policy: EstimatorPolicy::AUTO,
        }
    }
}

impl GaussSeidelConfig {
    fn switch(&self) -> EstimatorSwitch {
        EstimatorSwitch {
            m_s: self.m_s,
            m_c: self.m_c,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.r_gamma_per_sensor == 0 || self.r_p == 0 {
            return Err(Error::Config("grid resolutions must be positive".into()));
        }
        if !(self.delta_gamma_tol > 0.0 && self.delta_p_tol > 0.0) {
            return Err(Error::Config(
                "convergence tolerances must be positive".into(),
            ));
        }
        if self.max_iters == Some(0) || self.m_s == 0 || self.m_c == 0 {
            return Err(Error::Config("T, m_s and m_c must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    /// Number of coordinate updates performed so far.
    pub update: usize,
    /// Cluster updated last; `None` for the starting point.
    pub cluster: Option<usize>,
    pub loss: f64,
    pub cluster_bound: bool,
    pub fc_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeterogeneousSolution {
    pub gammas: Vec<f64>,
    pub tie_probs: Vec<f64>,
    /// Objective at termination, with bounds wherever they were used.
    pub surrogate_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl HeterogeneousSolution {
    /// The system with the optimized rules installed.
    pub fn apply(&self, config: &SystemConfig) -> Result<SystemConfig> {
        let mut out = config.clone();
        for (c, (g, p)) in out
            .clusters
            .iter_mut()
            .zip(self.gammas.iter().zip(&self.tie_probs))
        {
            c.set_rule(*g, *p)?;
        }
        Ok(out)
    }
}

/// Arithmetic mean of the sensors' parameters.
pub fn mean_sensor(sensors: &[SensorParams]) -> Result<SensorParams> {
    let n = sensors.len() as f64;
    let (a, b, c) = sensors.iter().fold((0.0, 0.0, 0.0), |(a, b, c), s| {
        (a + s.p_fa(), b + s.p_md(), c + s.p_com())
    });
    SensorParams::new(a / n, b / n, (c / n).clamp(0.0, 1.0))
}

/// Starting `(gammas, tie_probs)` for every cluster.
pub fn initial_values(
    clusters: &[ClusterSpec],
    scheme: InitScheme,
    costs: &LossModel,
    gs: &GaussSeidelConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut gammas = Vec::with_capacity(clusters.len());
    let mut ties = Vec::with_capacity(clusters.len());
    for c in clusters {
        let (lo, hi) = c.threshold_range();
        let (g, p) = match scheme {
            InitScheme::Midpoint => (0.5 * (lo + hi), 0.5),
            InitScheme::AllH1 => (lo, 0.0),
            InitScheme::AllH0 => (hi, 1.0),
            InitScheme::OptimalHomogeneous => {
                let s = mean_sensor(c.sensors())?;
                let n_c = clusters.len();
                let sys = HomogeneousSystem::new(c.len() * n_c, n_c, s, *costs, gs.switch())?;
                let policy = EstimatorPolicy {
                    fc_md_form: gs.policy.fc_md_form,
                    ..EstimatorPolicy::AUTO
                };
                let sol = optimize_homogeneous(&sys, gs.r_p, &policy)?;
                // without a tie atom, the tie probability moves the threshold
                // into the gap next to the tying count instead
                let gamma_c = if c.is_homogeneous() {
                    sol.gamma_c as f64
                } else {
                    (sol.gamma_c as f64 + sol.tie_prob - 0.5).clamp(0.0, c.len() as f64)
                };
                (sys.gamma_j(gamma_c).clamp(lo, hi), sol.tie_prob)
            }
        };
        gammas.push(g);
        ties.push(p);
    }
    Ok((gammas, ties))
}

/// Coordinate descent on the cluster thresholds, starting from the
/// configured initialization scheme.
pub fn optimize_heterogeneous(
    config: &SystemConfig,
    gs: &GaussSeidelConfig,
) -> Result<HeterogeneousSolution> {
    gs.validate()?;
    let (g, p) = initial_values(&config.clusters, gs.init_scheme, &config.costs, gs)?;
    optimize_heterogeneous_from(config, gs, &g, &p)
}

/// How the cluster under update is evaluated during its line search.
enum ClusterModel {
    Exact(SumDistribution),
    Bound {
        fa_mean: f64,
        md_mean: f64,
        base_fa: BoundInputs,
        base_md: BoundInputs,
    },
}

struct State<'a> {
    costs: &'a LossModel,
    gs: &'a GaussSeidelConfig,
    clusters: Vec<ClusterSpec>,
    qualities: Vec<ClusterQuality>,
    cluster_bound: Vec<bool>,
    fc_bound: bool,
    fc_gamma: f64,
    exact_dists: Vec<Option<SumDistribution>>,
}

impl State<'_> {
    fn objective(&self) -> Result<f64> {
        let e = fc_errors(
            &self.qualities,
            self.fc_gamma,
            self.fc_bound,
            self.gs.policy.fc_md_form,
        )?;
        Ok(self.costs.expected_loss(e.p_fa, e.p_md))
    }

    fn model(&mut self, j: usize) -> ClusterModel {
        let c = &self.clusters[j];
        if self.cluster_bound[j] {
            let base_fa = cluster_fa_inputs(c);
            let base_md = cluster_md_inputs(c);
            return ClusterModel::Bound {
                fa_mean: c.gamma() - base_fa.alpha,
                md_mean: c.gamma() + base_md.alpha,
                base_fa,
                base_md,
            };
        }
        let d = self.exact_dists[j]
            .take()
            .unwrap_or_else(|| SumDistribution::for_cluster(c));
        ClusterModel::Exact(d)
    }

    /// Best `(gamma, p, loss, quality)` for cluster `j` with all other rules
    /// fixed. The incumbent wins unless a grid point beats it by more than
    /// rounding.
    fn line_search(&mut self, j: usize) -> Result<(f64, f64, f64, ClusterQuality)> {
        let model = self.model(j);
        let c = &self.clusters[j];
        let p_com_c = comm_prob_of(c.sensors());
        let (lo, hi) = c.threshold_range();
        let r = self.gs.r_gamma_per_sensor * c.len();
        let grid: Vec<f64> = (0..=r)
            .map(|k| {
                if k == r {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / r as f64
                }
            })
            .collect();
        let bound = matches!(model, ClusterModel::Bound { .. });
        let ties: Vec<f64> = if bound {
            vec![1.0]
        } else {
            (0..=self.gs.r_p)
                .map(|k| k as f64 / self.gs.r_p as f64)
                .collect()
        };

        let others: Vec<(ClusterQuality, SensorWeights)> = self
            .qualities
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, q)| (*q, q.fusion_weights_saturating()))
            .collect();
        let form = self.gs.policy.fc_md_form;
        enum Fc {
            Exact(SumDistribution),
            Bound(FcSums, FcSums),
        }
        let fc = if self.fc_bound {
            let terms: Vec<FcTerm> = others
                .iter()
                .map(|(q, w)| FcTerm { q: *q, w: *w })
                .collect();
            Fc::Bound(
                FcSums::of(terms.iter().map(fa_part)),
                FcSums::of(terms.iter().map(|t| md_part(t, form))),
            )
        } else {
            Fc::Exact(SumDistribution::fusion(&others))
        };
        let fc_gamma = self.fc_gamma;
        let costs = self.costs;
        let loss_of = |e: ErrorPair| -> Result<(f64, ClusterQuality)> {
            let q = ClusterQuality::new(e.p_fa, e.p_md, p_com_c, bound)?;
            let w = q.fusion_weights_saturating();
            let fe = match &fc {
                Fc::Exact(d) => d.fusion_errors_with(fc_gamma, &q, &w),
                Fc::Bound(fa, md) => {
                    let t = FcTerm { q, w };
                    fc_bound_errors_from(
                        &fa.with(&fa_part(&t)),
                        &md.with(&md_part(&t, form)),
                        fc_gamma,
                    )
                }
            };
            Ok((costs.expected_loss(fe.p_fa, fe.p_md), q))
        };
        // the tie probability only matters when the threshold sits on an atom
        type Errors<'m> = (Box<dyn Fn(f64) -> ErrorPair + 'm>, bool);
        let cluster_errors = |gamma: f64| -> Errors<'_> {
            match &model {
                ClusterModel::Exact(d) => {
                    let (h0, h1) = d.cluster_splits(gamma);
                    let atom = h0.equal > 0.0 || h1.equal > 0.0;
                    (Box::new(move |p| errors_from_splits(&h0, &h1, p)), atom)
                }
                ClusterModel::Bound {
                    fa_mean,
                    md_mean,
                    base_fa,
                    base_md,
                } => {
                    let fa = tail_bound_or_indicator(&BoundInputs {
                        alpha: gamma - fa_mean,
                        ..*base_fa
                    });
                    let md = tail_bound_or_indicator(&BoundInputs {
                        alpha: md_mean - gamma,
                        ..*base_md
                    });
                    (Box::new(move |_| ErrorPair::clamped(fa, md)), false)
                }
            }
        };

        let (g_inc, p_inc) = (c.gamma(), c.tie_prob());
        let (inc_loss, inc_q) = loss_of(cluster_errors(g_inc).0(p_inc))?;
        let mut best: Option<(f64, f64, f64, ClusterQuality)> = None;
        for &g in &grid {
            let (at, atom) = cluster_errors(g);
            for &p in if atom { &ties[..] } else { &ties[..1] } {
                let (l, q) = loss_of(at(p))?;
                if best.as_ref().map_or(true, |b| l < b.2) {
                    best = Some((g, p, l, q));
                }
            }
        }
        let best = best.expect("grid is never empty");
        let out = if best.2 < inc_loss - 1e-12 * inc_loss.abs().max(1.0) {
            best
        } else if bound {
            (g_inc, 1.0, inc_loss, inc_q)
        } else {
            (g_inc, p_inc, inc_loss, inc_q)
        };
        if let ClusterModel::Exact(d) = model {
            self.exact_dists[j] = Some(d);
        }
        Ok(out)
    }
}

/// Coordinate descent from explicit starting rules.
///
/// Clusters are visited cyclically. Each visit is a grid line search over
/// the cluster's threshold (and tie probability, when the cluster is
/// evaluated exactly) with every other rule fixed; a bounded cluster gets
/// tie probability 1. The search stops once a full pass changes no rule by
/// more than the tolerances, or after `max_iters` visits.
pub fn optimize_heterogeneous_from(
    config: &SystemConfig,
    gs: &GaussSeidelConfig,
    gammas: &[f64],
    tie_probs: &[f64],
) -> Result<HeterogeneousSolution> {
    gs.validate()?;
    let n_c = config.n_clusters();
    if gammas.len() != n_c || tie_probs.len() != n_c {
        return Err(Error::Config(
            "one starting rule per cluster is required".into(),
        ));
    }
    let switch = gs.switch();
    let mut clusters = config.clusters.clone();
    for (c, (g, p)) in clusters.iter_mut().zip(gammas.iter().zip(tie_probs)) {
        c.set_rule(*g, *p)?;
    }
    let cluster_bound: Vec<bool> = clusters
        .iter()
        .map(|c| gs.policy.cluster_uses_bound(c.len(), &switch))
        .collect();
    let qualities = clusters
        .iter()
        .zip(&cluster_bound)
        .map(|(c, b)| cluster_quality(c, *b))
        .collect::<Result<Vec<_>>>()?;
    let mut st = State {
        costs: &config.costs,
        gs,
        fc_bound: gs.policy.fc_uses_bound(n_c, &switch),
        fc_gamma: config.fc_threshold(),
        exact_dists: (0..n_c).map(|_| None).collect(),
        clusters,
        qualities,
        cluster_bound,
    };

    let ranges: Vec<f64> = st
        .clusters
        .iter()
        .map(|c| c.threshold_range())
        .map(|(lo, hi)| hi - lo)
        .collect();
    let max_iters = gs.max_iters.unwrap_or(50 * n_c);
    let mut d_gamma = vec![f64::INFINITY; n_c];
    let mut d_p = vec![f64::INFINITY; n_c];
    let mut trace = vec![TraceEntry {
        update: 0,
        cluster: None,
        loss: st.objective()?,
        cluster_bound: st.cluster_bound.iter().any(|b| *b),
        fc_bound: st.fc_bound,
    }];
    let settled = |dg: &[f64], dp: &[f64]| {
        dg.iter()
            .zip(&ranges)
            .all(|(d, r)| *d <= gs.delta_gamma_tol * r.max(f64::MIN_POSITIVE))
            && dp.iter().all(|d| *d <= gs.delta_p_tol)
    };

    let mut t = 0;
    let mut j = 0;
    while t < max_iters && !settled(&d_gamma, &d_p) {
        let (g, p, _, q) = st.line_search(j)?;
        let (g_old, p_old) = (st.clusters[j].gamma(), st.clusters[j].tie_prob());
        d_gamma[j] = (g - g_old).abs();
        d_p[j] = (p - p_old).abs();
        if g != g_old || p != p_old {
            st.clusters[j].set_rule(g, p)?;
            st.qualities[j] = q;
        }
        t += 1;
        trace.push(TraceEntry {
            update: t,
            cluster: Some(j),
            loss: st.objective()?,
            cluster_bound: st.cluster_bound[j],
            fc_bound: st.fc_bound,
        });
        j = (j + 1) % n_c;
    }

    Ok(HeterogeneousSolution {
        gammas: st.clusters.iter().map(ClusterSpec::gamma).collect(),
        tie_probs: st.clusters.iter().map(ClusterSpec::tie_prob).collect(),
        surrogate_loss: trace.last().map(|e| e.loss).unwrap_or(f64::NAN),
        iterations: t,
        converged: settled(&d_gamma, &d_p),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{evaluate_system, Estimator};
    use crate::model::EstimatorSwitch;
    use proptest::prelude::*;

    fn costs() -> LossModel {
        LossModel::new(0.65, 100.0, 200.0).unwrap()
    }

    fn heterogeneous(sizes: &[usize], p_com: f64, seed: u64) -> SystemConfig {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let clusters = sizes
            .iter()
            .map(|&n| {
                let s: Vec<SensorParams> = (0..n)
                    .map(|_| {
                        SensorParams::new(
                            rng.gen_range(0.16..0.24),
                            rng.gen_range(0.28..0.42),
                            p_com,
                        )
                        .unwrap()
                    })
                    .collect();
                ClusterSpec::with_midpoint_rule(s).unwrap()
            })
            .collect();
        SystemConfig::new(clusters, costs(), EstimatorSwitch::default()).unwrap()
    }

    fn small_grid(scheme: InitScheme) -> GaussSeidelConfig {
        GaussSeidelConfig {
            r_gamma_per_sensor: 10,
            r_p: 10,
            init_scheme: scheme,
            ..GaussSeidelConfig::default()
        }
    }

    #[test]
    fn trace_starts_at_the_initial_objective() {
        let cfg = heterogeneous(&[3, 4, 5], 0.4, 1);
        let gs = small_grid(InitScheme::Midpoint);
        let sol = optimize_heterogeneous(&cfg, &gs).unwrap();
        let start = evaluate_system(&cfg, &EstimatorPolicy::AUTO).unwrap();
        assert!((sol.trace[0].loss - start.expected_loss).abs() <= 1e-12);
        let end = evaluate_system(&sol.apply(&cfg).unwrap(), &EstimatorPolicy::AUTO).unwrap();
        assert!((sol.surrogate_loss - end.expected_loss).abs() <= 1e-12);
        assert!(sol.converged);
        assert_eq!(sol.iterations + 1, sol.trace.len());
    }

    #[test]
    fn result_is_a_coordinate_minimum_on_the_grid() {
        let cfg = heterogeneous(&[2, 3, 4], 0.5, 7);
        let gs = small_grid(InitScheme::AllH0);
        let sol = optimize_heterogeneous(&cfg, &gs).unwrap();
        let tuned = sol.apply(&cfg).unwrap();
        let best = evaluate_system(&tuned, &EstimatorPolicy::EXACT)
            .unwrap()
            .expected_loss;
        for j in 0..cfg.n_clusters() {
            let (lo, hi) = tuned.clusters[j].threshold_range();
            let r = gs.r_gamma_per_sensor * tuned.clusters[j].len();
            for k in 0..=r {
                let g = lo + (hi - lo) * k as f64 / r as f64;
                for m in 0..=gs.r_p {
                    let mut c = tuned.clone();
                    c.clusters[j].set_rule(g, m as f64 / gs.r_p as f64).unwrap();
                    let l = evaluate_system(&c, &EstimatorPolicy::EXACT)
                        .unwrap()
                        .expected_loss;
                    assert!(
                        l >= best - 1e-10 * best.max(1.0),
                        "cluster {j}: {l} < {best}"
                    );
                }
            }
        }
    }

    #[test]
    fn homogeneous_start_is_never_worsened() {
        let s = SensorParams::new(0.2, 0.35, 0.3).unwrap();
        let sys = HomogeneousSystem::new(24, 4, s, costs(), EstimatorSwitch::default()).unwrap();
        let h = optimize_homogeneous(&sys, 10, &EstimatorPolicy::AUTO).unwrap();
        let cfg = sys.config(0.0, 0.5).unwrap();
        let sol =
            optimize_heterogeneous(&cfg, &small_grid(InitScheme::OptimalHomogeneous)).unwrap();
        assert!((sol.trace[0].loss - h.loss).abs() <= 1e-12 * h.loss.max(1.0));
        assert!(sol.surrogate_loss <= h.loss + 1e-12);
    }

    #[test]
    fn bounded_clusters_use_tie_probability_one() {
        let cfg = heterogeneous(&[25, 22, 3], 0.3, 3);
        let gs = small_grid(InitScheme::Midpoint);
        let sol = optimize_heterogeneous(&cfg, &gs).unwrap();
        assert!(sol.trace.iter().any(|e| e.cluster_bound));
        // a bounded cluster is only reset to p = 1 on its first visit
        assert_eq!(sol.tie_probs[0], 1.0);
        assert_eq!(sol.tie_probs[1], 1.0);
    }

    #[test]
    fn bound_fusion_center_runs() {
        let sizes = [2; 12];
        let cfg = heterogeneous(&sizes, 0.3, 5);
        let sol = optimize_heterogeneous(&cfg, &small_grid(InitScheme::Midpoint)).unwrap();
        assert!(sol.trace.iter().all(|e| e.fc_bound));
        assert!(sol.surrogate_loss.is_finite());
        for w in sol.trace.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12 * w[0].loss.max(1.0));
        }
    }

    #[test]
    fn every_scheme_produces_valid_rules() {
        let cfg = heterogeneous(&[3, 5, 2, 4], 0.2, 11);
        for scheme in InitScheme::ALL {
            let (g, p) =
                initial_values(&cfg.clusters, scheme, &cfg.costs, &small_grid(scheme)).unwrap();
            for (c, (g, p)) in cfg.clusters.iter().zip(g.iter().zip(&p)) {
                let (lo, hi) = c.threshold_range();
                assert!(
                    *g >= lo && *g <= hi && (0.0..=1.0).contains(p),
                    "{}",
                    scheme.name()
                );
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = heterogeneous(&[2, 2], 0.5, 0);
        for gs in [
            GaussSeidelConfig {
                r_p: 0,
                ..Default::default()
            },
            GaussSeidelConfig {
                r_gamma_per_sensor: 0,
                ..Default::default()
            },
            GaussSeidelConfig {
                max_iters: Some(0),
                ..Default::default()
            },
            GaussSeidelConfig {
                delta_p_tol: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                optimize_heterogeneous(&cfg, &gs),
                Err(Error::Config(_))
            ));
        }
        assert!(
            optimize_heterogeneous_from(&cfg, &GaussSeidelConfig::default(), &[0.0], &[0.5])
                .is_err()
        );
    }

    #[test]
    fn iteration_cap_is_respected() {
        let cfg = heterogeneous(&[3, 4, 5], 0.4, 2);
        let gs = GaussSeidelConfig {
            max_iters: Some(2),
            ..small_grid(InitScheme::AllH1)
        };
        let sol = optimize_heterogeneous(&cfg, &gs).unwrap();
        assert_eq!(sol.iterations, 2);
        assert!(!sol.converged);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn objective_never_increases(seed in 0u64..1000, p_com in 0.05f64..1.0, scheme in 0usize..4) {
            let cfg = heterogeneous(&[2, 3, 4, 3], p_com, seed);
            let gs = GaussSeidelConfig {
                r_gamma_per_sensor: 6,
                r_p: 6,
                init_scheme: InitScheme::ALL[scheme],
                policy: EstimatorPolicy { cluster: Estimator::Exact, fc: Estimator::Exact, ..EstimatorPolicy::AUTO },
                ..GaussSeidelConfig::default()
            };
            let sol = optimize_heterogeneous(&cfg, &gs).unwrap();
            for w in sol.trace.windows(2) {
                prop_assert!(w[1].loss <= w[0].loss + 1e-12 * w[0].loss.max(1.0));
            }
        }
    }
}
