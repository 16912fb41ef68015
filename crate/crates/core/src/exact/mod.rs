//! Exact cluster-level and fusion-center error probabilities.
//!
//! Homogeneous systems reduce to binomial counts. Anything else is summed
//! over every measurement (or connectivity/report) vector, which is only
//! affordable for small clusters and few clusters; above the caps the
//! caller is expected to switch to the concentration bounds.

mod binomial;
pub(crate) mod dist;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ClusterQuality, ClusterSpec, SensorWeights};

pub(crate) use binomial::binomial_pmf;

/// Largest cluster whose 2^n measurement vectors are enumerated.
pub const MAX_ENUM_SENSORS: usize = 24;
/// Largest number of clusters whose 3^N_c fusion outcomes are enumerated.
pub const MAX_ENUM_CLUSTERS: usize = 16;

/// Relative tolerance under which a weighted sum equals its threshold.
pub const TIE_TOL: f64 = 1e-9;

pub(crate) fn cluster_tie_tol(gamma: f64) -> f64 {
    TIE_TOL * gamma.abs().max(1.0)
}

pub(crate) fn fc_tie_tol(gamma: f64) -> f64 {
    TIE_TOL * gamma.abs().max(1.0)
}

/// Fusion-center rule: ties go to H1.
#[inline]
pub(crate) fn fc_decides_h1(statistic: f64, gamma: f64) -> bool {
    statistic >= gamma - fc_tie_tol(gamma)
}

/// A false-alarm / missed-detection probability pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorPair {
    pub p_fa: f64,
    pub p_md: f64,
}

impl ErrorPair {
    pub(crate) fn clamped(p_fa: f64, p_md: f64) -> Self {
        Self {
            p_fa: p_fa.clamp(0.0, 1.0),
            p_md: p_md.clamp(0.0, 1.0),
        }
    }
}

/// A cluster of `n` identical sensors testing the report count against a
/// count threshold `gamma_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneousClusterSpec {
    pub n: usize,
    pub p_fa_s: f64,
    pub p_md_s: f64,
    pub gamma_c: f64,
    pub tie_prob: f64,
}

impl HomogeneousClusterSpec {
    pub fn new(n: usize, p_fa_s: f64, p_md_s: f64, gamma_c: f64, tie_prob: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("a cluster needs at least one sensor".into()));
        }
        for (name, p) in [
            ("p_fa_s", p_fa_s),
            ("p_md_s", p_md_s),
            ("tie_prob", tie_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("{name} = {p} is not a probability")));
            }
        }
        let slack = TIE_TOL * (n as f64);
        if !(gamma_c >= -slack && gamma_c <= n as f64 + slack) {
            return Err(Error::Domain(format!(
                "count threshold {gamma_c} outside [0, {n}]"
            )));
        }
        Ok(Self {
            n,
            p_fa_s,
            p_md_s,
            gamma_c: gamma_c.clamp(0.0, n as f64),
            tie_prob,
        })
    }

    /// The count form of a homogeneous [`ClusterSpec`]:
    /// `gamma_c = (gamma + n w0) / (w1 + w0)`.
    pub fn from_cluster(cluster: &ClusterSpec) -> Option<Self> {
        if !cluster.is_homogeneous() {
            return None;
        }
        let s = cluster.sensors()[0];
        let n = cluster.len();
        let w = s.weights();
        let gamma_c = (cluster.gamma() + n as f64 * w.w0) / w.span();
        Some(Self {
            n,
            p_fa_s: s.p_fa(),
            p_md_s: s.p_md(),
            gamma_c: gamma_c.clamp(0.0, n as f64),
            tie_prob: cluster.tie_prob(),
        })
    }
}

/// `gamma_j = gamma_c (w1 + w0) - n w0`, the weighted-sum threshold that is
/// equivalent to count threshold `gamma_c` in a cluster of `n` sensors.
pub fn count_to_sum_threshold(gamma_c: f64, n: usize, w: &SensorWeights) -> f64 {
    gamma_c * w.span() - n as f64 * w.w0
}

/// The integer a count threshold sits on, if it is one within tolerance.
pub(crate) fn integer_count(gamma_c: f64) -> Option<usize> {
    let r = gamma_c.round();
    ((gamma_c - r).abs() <= TIE_TOL * gamma_c.abs().max(1.0) && r >= 0.0).then_some(r as usize)
}

/// Binomial report-count distributions of a homogeneous cluster, with
/// cumulative sums so threshold queries are O(1).
#[derive(Debug, Clone)]
pub(crate) struct CountTable {
    pmf: [Vec<f64>; 2],
    /// `below[h][k]` = Pr(count < k).
    below: [Vec<f64>; 2],
    /// `above[h][k]` = Pr(count > k).
    above: [Vec<f64>; 2],
}

impl CountTable {
    pub fn new(n: usize, p_fa_s: f64, p_md_s: f64) -> Self {
        let pmf = [binomial_pmf(n, p_fa_s), binomial_pmf(n, 1.0 - p_md_s)];
        let below = [prefix(&pmf[0]), prefix(&pmf[1])];
        let above = [suffix_excl(&pmf[0]), suffix_excl(&pmf[1])];
        Self { pmf, below, above }
    }

    pub fn n(&self) -> usize {
        self.pmf[0].len() - 1
    }

    pub fn errors(&self, gamma_c: f64, tie_prob: f64) -> ErrorPair {
        let n = self.n();
        match integer_count(gamma_c) {
            Some(k) if k <= n => ErrorPair::clamped(
                self.above[0][k] + (1.0 - tie_prob) * self.pmf[0][k],
                self.below[1][k] + tie_prob * self.pmf[1][k],
            ),
            _ => {
                // strictly between two counts: no tie atom
                let k = (gamma_c.ceil().max(0.0) as usize).min(n + 1);
                let fa = if k > n {
                    0.0
                } else {
                    self.above[0][k] + self.pmf[0][k]
                };
                ErrorPair::clamped(
                    fa,
                    self.below[1][k.min(n)] + if k > n { self.pmf[1][n] } else { 0.0 },
                )
            }
        }
    }
}

fn prefix(pmf: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for p in pmf {
        out.push(acc);
        acc += p;
    }
    out
}

fn suffix_excl(pmf: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; pmf.len()];
    let mut acc = 0.0;
    for k in (0..pmf.len()).rev() {
        out[k] = acc;
        acc += pmf[k];
    }
    out
}

/// Cluster error probabilities of a homogeneous cluster from binomial
/// tails: a false alarm is a count above `gamma_c` (or a tie resolved to
/// H1), a miss is a count below it (or a tie resolved to H0).
pub fn cluster_errors_homogeneous(spec: &HomogeneousClusterSpec) -> ErrorPair {
    CountTable::new(spec.n, spec.p_fa_s, spec.p_md_s).errors(spec.gamma_c, spec.tie_prob)
}

/// Cluster error probabilities by summing over all `2^n` measurement
/// vectors.
pub fn cluster_errors_enumerate(cluster: &ClusterSpec) -> Result<ErrorPair> {
    let n = cluster.len();
    if n > MAX_ENUM_SENSORS {
        return Err(Error::TooLarge {
            what: "cluster",
            size: n,
            cap: MAX_ENUM_SENSORS,
        });
    }
    let sensors = cluster.sensors();
    let weights = cluster.weights();
    let gamma = cluster.gamma();
    let tol = cluster_tie_tol(gamma);

    let (mut fa_above, mut fa_tie, mut md_below, mut md_tie) = (0.0, 0.0, 0.0, 0.0);
    for mask in 0u32..(1u32 << n) {
        let mut sum = 0.0f64;
        let mut m0 = 1.0f64;
        let mut m1 = 1.0f64;
        for (i, (s, w)) in sensors.iter().zip(&weights).enumerate() {
            if mask >> i & 1 == 1 {
                sum += w.w1;
                m0 *= s.p_fa();
                m1 *= 1.0 - s.p_md();
            } else {
                sum -= w.w0;
                m0 *= 1.0 - s.p_fa();
                m1 *= s.p_md();
            }
        }
        if sum > gamma + tol {
            fa_above += m0;
        } else if sum < gamma - tol {
            md_below += m1;
        } else {
            fa_tie += m0;
            md_tie += m1;
        }
    }
    let p = cluster.tie_prob();
    Ok(ErrorPair::clamped(
        fa_above + (1.0 - p) * fa_tie,
        md_below + p * md_tie,
    ))
}

/// Fusion-center errors of `n_c` identical clusters. The number of
/// communicating clusters is `Bin(n_c, p_com_c)`; given `k` of them, the
/// statistic is `z (w1 + w0) - k w0` with `z ~ Bin(k, .)` reports of one.
pub fn fc_errors_homogeneous(
    n_c: usize,
    quality: &ClusterQuality,
    gamma: f64,
) -> Result<ErrorPair> {
    let w = quality.fusion_weights()?;
    Ok(fc_errors_homogeneous_weighted(n_c, quality, &w, gamma))
}

pub(crate) fn fc_errors_homogeneous_weighted(
    n_c: usize,
    quality: &ClusterQuality,
    w: &SensorWeights,
    gamma: f64,
) -> ErrorPair {
    let comm = binomial_pmf(n_c, quality.p_com_c);
    let (mut fa, mut md) = (0.0, 0.0);
    for (k, &pk) in comm.iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        let ones_h0 = binomial_pmf(k, quality.p_fa_c);
        let ones_h1 = binomial_pmf(k, 1.0 - quality.p_md_c);
        let (mut fa_k, mut md_k) = (0.0, 0.0);
        for z in 0..=k {
            let stat = z as f64 * w.w1 - (k - z) as f64 * w.w0;
            if fc_decides_h1(stat, gamma) {
                fa_k += ones_h0[z];
            } else {
                md_k += ones_h1[z];
            }
        }
        fa += pk * fa_k;
        md += pk * md_k;
    }
    ErrorPair::clamped(fa, md)
}

/// Fusion-center errors by summing over every connectivity pattern and,
/// within it, every report vector of the communicating clusters.
///
/// Deterministic clusters (error probability 0 or 1) are handled through
/// saturated weights, so a cluster that always reports the same bit
/// carries zero weight.
pub fn fc_errors_enumerate(qualities: &[ClusterQuality], gamma: f64) -> Result<ErrorPair> {
    let weights: Vec<SensorWeights> = qualities
        .iter()
        .map(ClusterQuality::fusion_weights_saturating)
        .collect();
    fc_errors_enumerate_weighted(qualities, &weights, gamma)
}

pub(crate) fn fc_errors_enumerate_weighted(
    qualities: &[ClusterQuality],
    weights: &[SensorWeights],
    gamma: f64,
) -> Result<ErrorPair> {
    if qualities.len() > MAX_ENUM_CLUSTERS {
        return Err(Error::TooLarge {
            what: "fusion center",
            size: qualities.len(),
            cap: MAX_ENUM_CLUSTERS,
        });
    }
    let mut acc = (0.0, 0.0);
    walk_fusion(qualities, weights, gamma, 0, 0.0, 1.0, 1.0, &mut acc);
    Ok(ErrorPair::clamped(acc.0, acc.1))
}

#[allow(clippy::too_many_arguments)]
fn walk_fusion(
    q: &[ClusterQuality],
    w: &[SensorWeights],
    gamma: f64,
    j: usize,
    sum: f64,
    m0: f64,
    m1: f64,
    acc: &mut (f64, f64),
) {
    if m0 == 0.0 && m1 == 0.0 {
        return;
    }
    if j == q.len() {
        if fc_decides_h1(sum, gamma) {
            acc.0 += m0;
        } else {
            acc.1 += m1;
        }
        return;
    }
    let c = &q[j];
    let silent = 1.0 - c.p_com_c;
    walk_fusion(q, w, gamma, j + 1, sum, m0 * silent, m1 * silent, acc);
    let (pc, fa, md) = (c.p_com_c, c.p_fa_c, c.p_md_c);
    walk_fusion(
        q,
        w,
        gamma,
        j + 1,
        sum + w[j].w1,
        m0 * pc * fa,
        m1 * pc * (1.0 - md),
        acc,
    );
    walk_fusion(
        q,
        w,
        gamma,
        j + 1,
        sum - w[j].w0,
        m0 * pc * (1.0 - fa),
        m1 * pc * md,
        acc,
    );
}
