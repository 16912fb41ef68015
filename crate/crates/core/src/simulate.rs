//! Monte Carlo simulation of the full sensor → cluster → fusion-center
//! pipeline.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::{cluster_qualities, EstimatorPolicy};
use crate::exact::{cluster_tie_tol, fc_decides_h1, integer_count, HomogeneousClusterSpec};
use crate::model::{ClusterQuality, LossModel, SensorWeights, SystemConfig};

const CHUNK: usize = 1 << 14;

/// Bernoulli draw from one `u64`: success iff the draw is below
/// `floor(p 2^64)`, or always when `p = 1`.
#[derive(Debug, Clone, Copy)]
struct Coin {
    below: u64,
    always: bool,
}

impl Coin {
    fn new(p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self {
            below: (p * 18_446_744_073_709_551_616.0) as u64,
            always: p >= 1.0,
        }
    }

    #[inline]
    fn flip(&self, rng: &mut impl RngCore) -> bool {
        let u = rng.next_u64();
        self.always || u < self.below
    }
}

#[derive(Debug, Clone)]
enum Decider {
    /// Count of ones against a count threshold; `tie` is the integer count
    /// that ties, if any.
    Count { gamma_c: f64, tie: Option<usize> },
    Weighted {
        weights: Vec<SensorWeights>,
        gamma: f64,
    },
}

#[derive(Debug, Clone)]
struct ClusterRule {
    /// Per sensor: probability of reporting one under H0 and H1.
    ones: Vec<[Coin; 2]>,
    links: Vec<Coin>,
    decider: Decider,
    tie_to_h0: Coin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    H0,
    H1,
    Tie,
}

impl ClusterRule {
    fn verdict(&self, ones: &[bool]) -> Verdict {
        match &self.decider {
            Decider::Count { gamma_c, tie } => {
                let k = ones.iter().filter(|b| **b).count();
                match tie {
                    Some(t) if k == *t => Verdict::Tie,
                    Some(t) if k > *t => Verdict::H1,
                    Some(_) => Verdict::H0,
                    None if k as f64 > *gamma_c => Verdict::H1,
                    None => Verdict::H0,
                }
            }
            Decider::Weighted { weights, gamma } => {
                let s: f64 = ones
                    .iter()
                    .zip(weights)
                    .map(|(y, w)| if *y { w.w1 } else { -w.w0 })
                    .sum();
                let tol = cluster_tie_tol(*gamma);
                if s > gamma + tol {
                    Verdict::H1
                } else if s >= gamma - tol {
                    Verdict::Tie
                } else {
                    Verdict::H0
                }
            }
        }
    }
}

/// A system with its cluster rules and fusion weights fixed, ready to be
/// sampled.
///
/// The fusion weights come from the cluster qualities under the given
/// estimator policy, so a bounded cluster is fused with its bound-derived
/// weights.
#[derive(Debug, Clone)]
pub struct DeployedSystem {
    clusters: Vec<ClusterRule>,
    fc_weights: Vec<SensorWeights>,
    fc_gamma: f64,
    truth: Coin,
    costs: LossModel,
    pub qualities: Vec<ClusterQuality>,
    pub used_cluster_bound: bool,
    pub used_fc_bound: bool,
}

impl DeployedSystem {
    pub fn new(config: &SystemConfig, policy: &EstimatorPolicy) -> Result<Self> {
        let (qualities, used_cluster_bound) = cluster_qualities(config, policy)?;
        let used_fc_bound = policy.fc_uses_bound(qualities.len(), &config.switch);
        let clusters = config
            .clusters
            .iter()
            .map(|c| {
                let decider = match HomogeneousClusterSpec::from_cluster(c) {
                    Some(h) => Decider::Count {
                        gamma_c: h.gamma_c,
                        tie: integer_count(h.gamma_c),
                    },
                    None => Decider::Weighted {
                        weights: c.weights(),
                        gamma: c.gamma(),
                    },
                };
                ClusterRule {
                    ones: c
                        .sensors()
                        .iter()
                        .map(|s| [Coin::new(s.p_fa()), Coin::new(1.0 - s.p_md())])
                        .collect(),
                    links: c.sensors().iter().map(|s| Coin::new(s.p_com())).collect(),
                    decider,
                    tie_to_h0: Coin::new(c.tie_prob()),
                }
            })
            .collect();
        Ok(Self {
            clusters,
            fc_weights: qualities
                .iter()
                .map(ClusterQuality::fusion_weights_saturating)
                .collect(),
            fc_gamma: config.fc_threshold(),
            truth: Coin::new(config.costs.p1),
            costs: config.costs,
            qualities,
            used_cluster_bound,
            used_fc_bound,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// One trial. `decisions` receives every cluster's decision, whether or
    /// not it reached the fusion center.
    ///
    /// Draw order: hypothesis, all measurement bits cluster by cluster, all
    /// links, then one draw per tied cluster.
    fn trial_into(&self, rng: &mut impl RngCore, scratch: &mut Scratch) -> TrialOutcome {
        let truth = self.truth.flip(rng);
        let h = truth as usize;
        scratch.verdicts.clear();
        for c in &self.clusters {
            scratch.ones.clear();
            scratch
                .ones
                .extend(c.ones.iter().map(|coin| coin[h].flip(rng)));
            scratch.verdicts.push(c.verdict(&scratch.ones));
        }
        scratch.linked.clear();
        for c in &self.clusters {
            let mut up = false;
            for l in &c.links {
                up |= l.flip(rng);
            }
            scratch.linked.push(up);
        }
        scratch.decisions.clear();
        for (c, v) in self.clusters.iter().zip(&scratch.verdicts) {
            scratch.decisions.push(match v {
                Verdict::H1 => true,
                Verdict::H0 => false,
                Verdict::Tie => !c.tie_to_h0.flip(rng),
            });
        }
        let mut stat = 0.0;
        let mut num_communicating = 0;
        for ((z, up), w) in scratch
            .decisions
            .iter()
            .zip(&scratch.linked)
            .zip(&self.fc_weights)
        {
            if *up {
                num_communicating += 1;
                stat += if *z { w.w1 } else { -w.w0 };
            }
        }
        let fc_decision = fc_decides_h1(stat, self.fc_gamma);
        let loss = match (truth, fc_decision) {
            (false, true) => self.costs.loss_fa,
            (true, false) => self.costs.loss_md,
            _ => 0.0,
        };
        TrialOutcome {
            truth,
            fc_decision,
            num_communicating,
            loss,
        }
    }

    /// One trial with its cluster decisions.
    pub fn run_trial(&self, rng: &mut impl RngCore) -> (TrialOutcome, Vec<bool>) {
        let mut s = Scratch::default();
        let out = self.trial_into(rng, &mut s);
        (out, s.decisions)
    }
}

#[derive(Default)]
struct Scratch {
    ones: Vec<bool>,
    verdicts: Vec<Verdict>,
    linked: Vec<bool>,
    decisions: Vec<bool>,
}

/// Result of one simulated trial; `true` stands for H1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub truth: bool,
    pub fc_decision: bool,
    pub num_communicating: usize,
    pub loss: f64,
}

/// The generator for trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`; 0 for a single trial.
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
}

impl McEstimate {
    fn from_sums(sum: f64, sum_sq: f64, trials: u64, seed: u64) -> Self {
        if trials == 0 {
            return Self {
                mean: f64::NAN,
                std_error: 0.0,
                trials,
                seed,
            };
        }
        let n = trials as f64;
        let mean = sum / n;
        let std_error = if trials > 1 {
            ((sum_sq - n * mean * mean).max(0.0) / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            trials,
            seed,
        }
    }

    fn proportion(hits: u64, trials: u64, seed: u64) -> Self {
        Self::from_sums(hits as f64, hits as f64, trials, seed)
    }

    /// `|mean - value|` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Empirical loss, error rates and connectivity from a batch of trials.
///
/// Error rates are conditional on the drawn hypothesis, so `p_fa.trials`
/// counts H0 trials and `p_md.trials` counts H1 trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub loss: McEstimate,
    pub p_fa: McEstimate,
    pub p_md: McEstimate,
    pub communicating: McEstimate,
    pub cluster_p_fa: Vec<McEstimate>,
    pub cluster_p_md: Vec<McEstimate>,
    pub used_cluster_bound: bool,
    pub used_fc_bound: bool,
}

#[derive(Debug, Clone, Default)]
struct Counts {
    h1: u64,
    fa: u64,
    md: u64,
    comm: u64,
    comm_sq: u64,
    cluster_fa: Vec<u64>,
    cluster_md: Vec<u64>,
}

impl Counts {
    fn new(n_c: usize) -> Self {
        Self {
            cluster_fa: vec![0; n_c],
            cluster_md: vec![0; n_c],
            ..Default::default()
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.h1 += o.h1;
        self.fa += o.fa;
        self.md += o.md;
        self.comm += o.comm;
        self.comm_sq += o.comm_sq;
        for (a, b) in self.cluster_fa.iter_mut().zip(o.cluster_fa) {
            *a += b;
        }
        for (a, b) in self.cluster_md.iter_mut().zip(o.cluster_md) {
            *a += b;
        }
        self
    }
}

fn run_range(sys: &DeployedSystem, seed: u64, range: std::ops::Range<u64>) -> Counts {
    let mut c = Counts::new(sys.n_clusters());
    let mut s = Scratch::default();
    for i in range {
        let mut rng = trial_rng(seed, i);
        let t = sys.trial_into(&mut rng, &mut s);
        let k = t.num_communicating as u64;
        c.comm += k;
        c.comm_sq += k * k;
        if t.truth {
            c.h1 += 1;
            c.md += u64::from(!t.fc_decision);
            for (m, z) in c.cluster_md.iter_mut().zip(&s.decisions) {
                *m += u64::from(!*z);
            }
        } else {
            c.fa += u64::from(t.fc_decision);
            for (f, z) in c.cluster_fa.iter_mut().zip(&s.decisions) {
                *f += u64::from(*z);
            }
        }
    }
    c
}

/// Simulates `trials` independent trials of `sys`.
///
/// Trial `i` draws from its own stream, and counts are integers, so the
/// report does not depend on how many threads run it.
pub fn monte_carlo(sys: &DeployedSystem, trials: u64, seed: u64) -> Result<McReport> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let chunks = trials.div_ceil(CHUNK as u64);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|k| {
            run_range(
                sys,
                seed,
                k * CHUNK as u64..((k + 1) * CHUNK as u64).min(trials),
            )
        })
        .reduce(|| Counts::new(sys.n_clusters()), Counts::merge);

    let h0 = trials - counts.h1;
    let (l10, l01) = (sys.costs.loss_fa, sys.costs.loss_md);
    let (fa, md) = (counts.fa as f64, counts.md as f64);
    Ok(McReport {
        loss: McEstimate::from_sums(
            l10 * fa + l01 * md,
            l10 * l10 * fa + l01 * l01 * md,
            trials,
            seed,
        ),
        p_fa: McEstimate::proportion(counts.fa, h0, seed),
        p_md: McEstimate::proportion(counts.md, counts.h1, seed),
        communicating: McEstimate::from_sums(
            counts.comm as f64,
            counts.comm_sq as f64,
            trials,
            seed,
        ),
        cluster_p_fa: counts
            .cluster_fa
            .iter()
            .map(|k| McEstimate::proportion(*k, h0, seed))
            .collect(),
        cluster_p_md: counts
            .cluster_md
            .iter()
            .map(|k| McEstimate::proportion(*k, counts.h1, seed))
            .collect(),
        used_cluster_bound: sys.used_cluster_bound,
        used_fc_bound: sys.used_fc_bound,
    })
}

/// Deploys `config` under `policy` and simulates it.
pub fn simulate(
    config: &SystemConfig,
    policy: &EstimatorPolicy,
    trials: u64,
    seed: u64,
) -> Result<McReport> {
    monte_carlo(&DeployedSystem::new(config, policy)?, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{evaluate_system, exact_cluster_errors};
    use crate::exact::count_to_sum_threshold;
    use crate::model::{
        expected_communicating_clusters, ClusterSpec, EstimatorSwitch, SensorParams,
    };

    fn costs() -> LossModel {
        LossModel::new(0.65, 100.0, 200.0).unwrap()
    }

    fn homogeneous(n: usize, n_c: usize, p_com: f64, gamma_c: f64, tie: f64) -> SystemConfig {
        let s = SensorParams::new(0.2, 0.35, p_com).unwrap();
        let g = count_to_sum_threshold(gamma_c, n, &s.weights());
        let c = ClusterSpec::new(vec![s; n], g, tie).unwrap();
        SystemConfig::new(vec![c; n_c], costs(), EstimatorSwitch::default()).unwrap()
    }

    #[test]
    fn coin_edges() {
        let mut rng = trial_rng(0, 0);
        assert!((0..1000).all(|_| Coin::new(1.0).flip(&mut rng)));
        assert!((0..1000).all(|_| !Coin::new(0.0).flip(&mut rng)));
    }

    #[test]
    fn silent_network_follows_the_sign_of_the_threshold() {
        let cfg = homogeneous(3, 4, 0.0, 2.0, 0.5);
        let sys = DeployedSystem::new(&cfg, &EstimatorPolicy::EXACT).unwrap();
        let expect = cfg.fc_threshold() <= 0.0;
        for i in 0..1000 {
            let (t, _) = sys.run_trial(&mut trial_rng(9, i));
            assert_eq!(t.num_communicating, 0);
            assert_eq!(t.fc_decision, expect);
        }
    }

    #[test]
    fn perfect_sensors_recover_the_truth() {
        let s = SensorParams::new(1e-9, 1e-9, 1.0).unwrap();
        let c = ClusterSpec::with_midpoint_rule(vec![s; 3]).unwrap();
        let cfg = SystemConfig::new(vec![c; 3], costs(), EstimatorSwitch::default()).unwrap();
        let r = simulate(&cfg, &EstimatorPolicy::EXACT, 100_000, 1).unwrap();
        assert!(r.loss.mean <= 1e-6 * 200.0);
        assert_eq!(r.p_fa.mean + r.p_md.mean, 0.0);
    }

    #[test]
    fn single_trial_has_zero_standard_error() {
        let cfg = homogeneous(4, 2, 0.5, 2.0, 0.5);
        let sys = DeployedSystem::new(&cfg, &EstimatorPolicy::EXACT).unwrap();
        let r = monte_carlo(&sys, 1, 5).unwrap();
        let (t, _) = sys.run_trial(&mut trial_rng(5, 0));
        assert_eq!(r.loss.mean, t.loss);
        assert_eq!(r.loss.std_error, 0.0);
        assert!(monte_carlo(&sys, 0, 5).is_err());
    }

    #[test]
    fn reports_are_reproducible_and_thread_independent() {
        let cfg = homogeneous(5, 3, 0.3, 2.0, 0.4);
        let sys = DeployedSystem::new(&cfg, &EstimatorPolicy::EXACT).unwrap();
        let a = monte_carlo(&sys, 50_000, 17).unwrap();
        let b = monte_carlo(&sys, 50_000, 17).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c = pool.install(|| monte_carlo(&sys, 50_000, 17).unwrap());
        assert_eq!(a, c);
        let d = monte_carlo(&sys, 50_000, 18).unwrap();
        assert_ne!(a.loss.mean, d.loss.mean);
    }

    #[test]
    fn loss_is_coherent_with_conditional_rates() {
        let cfg = homogeneous(4, 3, 0.4, 2.0, 0.5);
        let r = simulate(&cfg, &EstimatorPolicy::EXACT, 40_000, 3).unwrap();
        let n = r.loss.trials as f64;
        let p0 = r.p_fa.trials as f64 / n;
        let p1 = r.p_md.trials as f64 / n;
        let l = p0 * r.p_fa.mean * 100.0 + p1 * r.p_md.mean * 200.0;
        assert!((l - r.loss.mean).abs() <= 1e-12 * l.max(1.0));
    }

    #[test]
    fn matches_exact_quantities() {
        let cfg = homogeneous(6, 3, 0.25, 3.0, 0.3);
        let exact = evaluate_system(&cfg, &EstimatorPolicy::EXACT).unwrap();
        let r = simulate(&cfg, &EstimatorPolicy::EXACT, 200_000, 11).unwrap();
        assert!(r.loss.z_score(exact.expected_loss) < 4.0);
        assert!(r.p_fa.z_score(exact.p_fa) < 4.0);
        assert!(r.p_md.z_score(exact.p_md) < 4.0);
        assert!(
            r.communicating
                .z_score(expected_communicating_clusters(&cfg.clusters))
                < 4.0
        );
        let ce = exact_cluster_errors(&cfg.clusters[0]).unwrap();
        for j in 0..3 {
            assert!(r.cluster_p_fa[j].z_score(ce.p_fa) < 4.0);
            assert!(r.cluster_p_md[j].z_score(ce.p_md) < 4.0);
        }
    }

    #[test]
    fn heterogeneous_clusters_match_enumeration() {
        let sensors = vec![
            SensorParams::new(0.15, 0.3, 0.4).unwrap(),
            SensorParams::new(0.2, 0.35, 0.2).unwrap(),
            SensorParams::new(0.25, 0.4, 0.6).unwrap(),
        ];
        let c = ClusterSpec::new(sensors, 0.1, 0.5).unwrap();
        let cfg =
            SystemConfig::new(vec![c.clone(), c], costs(), EstimatorSwitch::default()).unwrap();
        let exact = evaluate_system(&cfg, &EstimatorPolicy::EXACT).unwrap();
        let r = simulate(&cfg, &EstimatorPolicy::EXACT, 200_000, 2).unwrap();
        assert!(r.loss.z_score(exact.expected_loss) < 4.0);
        assert!(r.p_fa.z_score(exact.p_fa) < 4.0);
        assert!(r.p_md.z_score(exact.p_md) < 4.0);
    }

    #[test]
    fn reference_connectivity() {
        let cfg = homogeneous(50, 10, 0.1, 26.0, 0.0);
        let sys = DeployedSystem::new(&cfg, &EstimatorPolicy::AUTO).unwrap();
        assert!(sys.used_cluster_bound && !sys.used_fc_bound);
        let r = monte_carlo(&sys, 100_000, 4).unwrap();
        let expect = expected_communicating_clusters(&cfg.clusters);
        assert!((expect - 9.948).abs() < 5e-4);
        assert!(r.communicating.z_score(expect) < 3.0);
    }
}
