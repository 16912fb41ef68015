//! Finite distributions of a weighted-sum statistic under both hypotheses,
//! sorted by value so that threshold queries are binary searches.

use crate::model::{ClusterQuality, ClusterSpec, SensorWeights};

use super::binomial::binomial_pmf;
use super::{cluster_tie_tol, fc_tie_tol, ErrorPair};

/// Probability mass of a statistic below, at, and above a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Split {
    pub below: f64,
    pub equal: f64,
    pub above: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct SumDistribution {
    values: Vec<f64>,
    mass: [Vec<f64>; 2],
    /// `prefix[h][i]` = mass of atoms `0..i`.
    prefix: [Vec<f64>; 2],
    /// `suffix[h][i]` = mass of atoms `i..`.
    suffix: [Vec<f64>; 2],
}

impl SumDistribution {
    /// Atoms are `(value, mass under H0, mass under H1)`.
    pub fn from_atoms(mut atoms: Vec<(f64, f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let values: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        let mass = [
            atoms.iter().map(|a| a.1).collect::<Vec<_>>(),
            atoms.iter().map(|a| a.2).collect::<Vec<_>>(),
        ];
        let prefix = [cumulative(&mass[0]), cumulative(&mass[1])];
        let suffix = [reverse_cumulative(&mass[0]), reverse_cumulative(&mass[1])];
        Self {
            values,
            mass,
            prefix,
            suffix,
        }
    }

    /// Weighted sum of a cluster's reports, by doubling the atom list one
    /// sensor at a time. The partial sums are accumulated left to right in
    /// sensor order, the same order the streaming enumeration uses.
    pub fn enumerate_cluster(cluster: &ClusterSpec) -> Self {
        let mut atoms: Vec<(f64, f64, f64)> = vec![(0.0, 1.0, 1.0)];
        for s in cluster.sensors() {
            let w = s.weights();
            let mut next = Vec::with_capacity(atoms.len() * 2);
            for &(v, m0, m1) in &atoms {
                next.push((v - w.w0, m0 * (1.0 - s.p_fa()), m1 * s.p_md()));
                next.push((v + w.w1, m0 * s.p_fa(), m1 * (1.0 - s.p_md())));
            }
            atoms = next;
        }
        Self::from_atoms(atoms)
    }

    /// Homogeneous cluster: the statistic is `k (w1 + w0) - n w0` with `k`
    /// binomial.
    pub fn homogeneous_cluster(cluster: &ClusterSpec) -> Self {
        let s = cluster.sensors()[0];
        let n = cluster.len();
        let w = s.weights();
        let pmf0 = binomial_pmf(n, s.p_fa());
        let pmf1 = binomial_pmf(n, 1.0 - s.p_md());
        let atoms = (0..=n)
            .map(|k| (k as f64 * w.span() - n as f64 * w.w0, pmf0[k], pmf1[k]))
            .collect();
        Self::from_atoms(atoms)
    }

    pub fn for_cluster(cluster: &ClusterSpec) -> Self {
        if cluster.is_homogeneous() {
            Self::homogeneous_cluster(cluster)
        } else {
            Self::enumerate_cluster(cluster)
        }
    }

    /// Fusion-center statistic contributed by a set of clusters: each one is
    /// silent, reports a one (`+w1`) or reports a zero (`-w0`).
    pub fn fusion(clusters: &[(ClusterQuality, SensorWeights)]) -> Self {
        let mut atoms: Vec<(f64, f64, f64)> = vec![(0.0, 1.0, 1.0)];
        for (q, w) in clusters {
            let mut next = Vec::with_capacity(atoms.len() * 3);
            let silent = 1.0 - q.p_com_c;
            for &(v, m0, m1) in &atoms {
                if silent > 0.0 {
                    next.push((v, m0 * silent, m1 * silent));
                }
                if q.p_com_c > 0.0 {
                    next.push((
                        v + w.w1,
                        m0 * q.p_com_c * q.p_fa_c,
                        m1 * q.p_com_c * (1.0 - q.p_md_c),
                    ));
                    next.push((
                        v - w.w0,
                        m0 * q.p_com_c * (1.0 - q.p_fa_c),
                        m1 * q.p_com_c * q.p_md_c,
                    ));
                }
            }
            atoms = next;
        }
        Self::from_atoms(atoms)
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    fn first_at_or_above(&self, x: f64) -> usize {
        self.values.partition_point(|v| *v < x)
    }

    fn first_above(&self, x: f64) -> usize {
        self.values.partition_point(|v| *v <= x)
    }

    /// Split the mass under hypothesis `h` around `gamma`, where values within
    /// `tol` of `gamma` count as ties.
    pub fn split(&self, h: usize, gamma: f64, tol: f64) -> Split {
        let lo = self.first_at_or_above(gamma - tol);
        let hi = self.first_above(gamma + tol).max(lo);
        Split {
            below: self.prefix[h][lo],
            equal: self.mass[h][lo..hi].iter().sum(),
            above: self.suffix[h][hi],
        }
    }

    /// Mass under hypothesis `h` of values `>= x - tol`.
    pub fn mass_at_least(&self, h: usize, x: f64, tol: f64) -> f64 {
        self.suffix[h][self.first_at_or_above(x - tol)]
    }

    /// Mass under hypothesis `h` of values `< x - tol`.
    pub fn mass_below(&self, h: usize, x: f64, tol: f64) -> f64 {
        self.prefix[h][self.first_at_or_above(x - tol)]
    }

    /// The H0 and H1 splits around a cluster threshold.
    pub fn cluster_splits(&self, gamma: f64) -> (Split, Split) {
        let tol = cluster_tie_tol(gamma);
        (self.split(0, gamma, tol), self.split(1, gamma, tol))
    }

    /// Cluster error probabilities of the randomized test against `gamma`
    /// with tie-break probability `tie_prob` (probability of reporting H0 on
    /// a tie).
    #[cfg(test)]
    pub fn cluster_errors(&self, gamma: f64, tie_prob: f64) -> ErrorPair {
        let (h0, h1) = self.cluster_splits(gamma);
        errors_from_splits(&h0, &h1, tie_prob)
    }

    /// Fusion-center errors when this distribution is the statistic of all
    /// other clusters and one more cluster `(q, w)` is added.
    pub fn fusion_errors_with(
        &self,
        gamma: f64,
        q: &ClusterQuality,
        w: &SensorWeights,
    ) -> ErrorPair {
        let tol = fc_tie_tol(gamma);
        let silent = 1.0 - q.p_com_c;
        let decide_h1 = |shift: f64| self.mass_at_least(0, gamma - shift, tol);
        let decide_h0 = |shift: f64| self.mass_below(1, gamma - shift, tol);
        let fa = silent * decide_h1(0.0)
            + q.p_com_c * (q.p_fa_c * decide_h1(w.w1) + (1.0 - q.p_fa_c) * decide_h1(-w.w0));
        let md = silent * decide_h0(0.0)
            + q.p_com_c * ((1.0 - q.p_md_c) * decide_h0(w.w1) + q.p_md_c * decide_h0(-w.w0));
        ErrorPair::clamped(fa, md)
    }

    /// Fusion-center errors of the statistic itself.
    #[cfg(test)]
    pub fn fusion_errors(&self, gamma: f64) -> ErrorPair {
        let tol = fc_tie_tol(gamma);
        ErrorPair::clamped(
            self.mass_at_least(0, gamma, tol),
            self.mass_below(1, gamma, tol),
        )
    }
}

pub(crate) fn errors_from_splits(h0: &Split, h1: &Split, tie_prob: f64) -> ErrorPair {
    ErrorPair::clamped(
        h0.above + (1.0 - tie_prob) * h0.equal,
        h1.below + tie_prob * h1.equal,
    )
}

fn cumulative(m: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for x in m {
        acc += x;
        out.push(acc);
    }
    out
}

fn reverse_cumulative(m: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.len() + 1];
    let mut acc = 0.0;
    for i in (0..m.len()).rev() {
        acc += m[i];
        out[i] = acc;
    }
    out
}
