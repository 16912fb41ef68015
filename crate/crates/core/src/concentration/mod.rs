//! Tail bounds for sums of bounded independent variables, and their use as
//! upper estimates of cluster and fusion-center error probabilities.

mod lambert;

use serde::Serialize;

pub use lambert::{lambert_w0, lambert_w0_of_exp};

use crate::error::{Error, Result};
use crate::model::{ClusterQuality, ClusterSpec, SensorWeights};

/// Inputs of a tail bound on `Pr(x_1 + ... + x_n >= alpha)` for independent,
/// zero-mean `x_i` with `|x_i| < big_m` and mean variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub n: usize,
    pub alpha: f64,
    pub big_m: f64,
    pub sigma2: f64,
}

/// The strict bound `|x_i| < M` is enforced by inflating the largest
/// deviation by this relative amount.
const M_SLACK: f64 = 1e-12;

fn check_shape(inp: &BoundInputs) -> Result<()> {
    if inp.n == 0 {
        return Err(Error::Domain("tail bound over zero variables".into()));
    }
    if !(inp.big_m > 0.0 && inp.big_m.is_finite()) {
        return Err(Error::Domain(format!(
            "bound M = {} must be positive",
            inp.big_m
        )));
    }
    if !(inp.sigma2 >= 0.0 && inp.sigma2.is_finite()) {
        return Err(Error::Domain(format!(
            "variance {} must be nonnegative",
            inp.sigma2
        )));
    }
    if inp.alpha.is_nan() {
        return Err(Error::Domain("alpha is NaN".into()));
    }
    Ok(())
}

/// `h(x) = (1 + x) ln(1 + x) - x`.
fn bennett_h(x: f64) -> f64 {
    (1.0 + x) * x.ln_1p() - x
}

/// Bennett's inequality `exp(-(n s^2 / M^2) h(alpha M / (n s^2)))`, for
/// `0 <= alpha < n M` and `sigma2 > 0`.
pub fn bennett_bound(inp: &BoundInputs) -> Result<f64> {
    check_shape(inp)?;
    let n = inp.n as f64;
    if !(inp.alpha >= 0.0 && inp.alpha < n * inp.big_m) {
        return Err(Error::Domain(format!(
            "Bennett's inequality needs 0 <= alpha < n M, got alpha = {}, n M = {}",
            inp.alpha,
            n * inp.big_m
        )));
    }
    if inp.sigma2 == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let v = n * inp.sigma2 / (inp.big_m * inp.big_m);
    let x = inp.alpha * inp.big_m / (n * inp.sigma2);
    Ok((-v * bennett_h(x)).exp().clamp(0.0, 1.0))
}

/// `e^l - 1 - l`, accurate for small `l`.
fn expm1_minus_id(l: f64) -> f64 {
    if l.abs() < 1e-2 {
        let l2 = l * l;
        l2 * (0.5 + l * (1.0 / 6.0 + l * (1.0 / 24.0 + l / 120.0)))
    } else {
        l.exp_m1() - l
    }
}

/// `ln U`; `lambda` is the minimizing exponent and `c = sigma2 / M^2`.
fn ln_improved(n: f64, alpha_over_m: f64, c: f64, lambda: f64) -> f64 {
    let log_mgf = if lambda > 30.0 {
        c.ln() + lambda + ((1.0 - c - c * lambda) * (-lambda).exp() / c).ln_1p()
    } else {
        (c * expm1_minus_id(lambda)).ln_1p()
    };
    -lambda * alpha_over_m + n * log_mgf
}

/// The improved Bennett bound
/// `U = exp(-L alpha / M + n ln(1 + s^2/M^2 (e^L - 1 - L)))` with
/// `A = M^2/s^2 + n M / alpha - 1`, `B = n M / alpha - 1` and
/// `L = A - W(B e^A)`.
///
/// Returns 1 for `alpha <= 0` and 0 for `alpha >= n M`.
pub fn improved_bennett_bound(inp: &BoundInputs) -> Result<f64> {
    check_shape(inp)?;
    if inp.sigma2 == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let n = inp.n as f64;
    let m = inp.big_m;
    if inp.alpha <= 0.0 {
        return Ok(1.0);
    }
    if inp.alpha >= n * m {
        return Ok(0.0);
    }
    let b = n * m / inp.alpha - 1.0;
    if b <= 0.0 {
        return Ok(0.0);
    }
    let c = inp.sigma2 / (m * m);
    let a = 1.0 / c + b;
    let w = lambert_w0_of_exp(b, a)?;
    // w e^w = b e^a, so a - w = ln(w / b)
    let lambda = w.ln() - b.ln();
    let ln_u = ln_improved(n, inp.alpha / m, c, lambda);
    Ok(ln_u.min(0.0).exp().clamp(0.0, 1.0))
}

/// Tail bound, or the indicator `alpha <= 0` when the sum is deterministic.
pub(crate) fn tail_bound_or_indicator(inp: &BoundInputs) -> f64 {
    match improved_bennett_bound(inp) {
        Ok(u) => u,
        Err(_) => {
            if inp.alpha <= 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Bound inputs for the false alarm of a cluster: the weighted sum centered
/// at its H0 mean must exceed `gamma` minus that mean.
pub fn cluster_fa_inputs(cluster: &ClusterSpec) -> BoundInputs {
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut big_m = 0.0f64;
    for (s, w) in cluster.sensors().iter().zip(cluster.weights()) {
        let p = s.p_fa();
        mean += p * w.w1 - (1.0 - p) * w.w0;
        var += p * (1.0 - p) * w.span() * w.span();
        big_m = big_m.max((1.0 - p) * w.span()).max(p * w.span());
    }
    let n = cluster.len();
    BoundInputs {
        n,
        alpha: cluster.gamma() - mean,
        big_m: big_m * (1.0 + M_SLACK),
        sigma2: var / n as f64,
    }
}

/// Bound inputs for the missed detection of a cluster, centered at the H1
/// mean.
pub fn cluster_md_inputs(cluster: &ClusterSpec) -> BoundInputs {
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut big_m = 0.0f64;
    for (s, w) in cluster.sensors().iter().zip(cluster.weights()) {
        let q = s.p_md();
        mean += (1.0 - q) * w.w1 - q * w.w0;
        var += q * (1.0 - q) * w.span() * w.span();
        big_m = big_m.max(q * w.span()).max((1.0 - q) * w.span());
    }
    let n = cluster.len();
    BoundInputs {
        n,
        alpha: mean - cluster.gamma(),
        big_m: big_m * (1.0 + M_SLACK),
        sigma2: var / n as f64,
    }
}

/// Upper estimate of a cluster's false-alarm probability.
pub fn cluster_fa_bound(cluster: &ClusterSpec) -> f64 {
    tail_bound_or_indicator(&cluster_fa_inputs(cluster))
}

/// Upper estimate of a cluster's missed-detection probability.
pub fn cluster_md_bound(cluster: &ClusterSpec) -> f64 {
    tail_bound_or_indicator(&cluster_md_inputs(cluster))
}

/// How the H1 mean of a fusion-center report is formed in the
/// missed-detection bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FcMdForm {
    /// `p_com [(1 - P_MD) w1 - P_MD w0]`, the mean of the report.
    #[default]
    FirstMoment,
    /// `p_com [(1 - P_MD) w1^2 + P_MD w0^2]`, the squared-weight expression.
    Printed,
}

/// One cluster as seen by the fusion center, with the weights it is fused
/// with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FcTerm {
    pub q: ClusterQuality,
    pub w: SensorWeights,
}

/// Moments of `tau (w1 z - w0 (1 - z))` given that `z = 1` has probability
/// `p_one`.
fn report_moments(t: &FcTerm, p_one: f64) -> (f64, f64) {
    let pc = t.q.p_com_c;
    let mean_if_sent = p_one * t.w.w1 - (1.0 - p_one) * t.w.w0;
    let var_if_sent = p_one * (1.0 - p_one) * t.w.span() * t.w.span();
    let var = pc * var_if_sent + pc * (1.0 - pc) * mean_if_sent * mean_if_sent;
    (pc * mean_if_sent, var)
}

/// Largest `|x - center|` over the three values `w1`, `-w0` and `0` the
/// report can take.
fn deviation(t: &FcTerm, center: f64) -> f64 {
    (t.w.w1 - center)
        .abs()
        .max((t.w.w0 + center).abs())
        .max(center.abs())
}

/// Contribution of one report to a fusion-center bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FcPart {
    /// Value the report is centered at.
    pub center: f64,
    /// Its actual mean, which differs from `center` only in the printed form.
    pub mean: f64,
    pub var: f64,
    pub dev: f64,
}

pub(crate) fn fa_part(t: &FcTerm) -> FcPart {
    let (e, v) = report_moments(t, t.q.p_fa_c);
    FcPart {
        center: e,
        mean: e,
        var: v,
        dev: deviation(t, e),
    }
}

pub(crate) fn md_part(t: &FcTerm, form: FcMdForm) -> FcPart {
    let p_one = 1.0 - t.q.p_md_c;
    let (e, v) = report_moments(t, p_one);
    let center = match form {
        FcMdForm::FirstMoment => e,
        FcMdForm::Printed => {
            t.q.p_com_c * (p_one * t.w.w1 * t.w.w1 + (1.0 - p_one) * t.w.w0 * t.w.w0)
        }
    };
    FcPart {
        center,
        mean: e,
        var: v,
        dev: deviation(t, center),
    }
}

/// Running sums of [`FcPart`]s over a set of clusters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct FcSums {
    pub n: usize,
    pub center: f64,
    pub mean: f64,
    pub var: f64,
    pub dev: f64,
}

impl FcSums {
    pub fn of(parts: impl IntoIterator<Item = FcPart>) -> Self {
        parts
            .into_iter()
            .fold(Self::default(), |acc, p| acc.with(&p))
    }

    pub fn with(&self, p: &FcPart) -> Self {
        Self {
            n: self.n + 1,
            center: self.center + p.center,
            mean: self.mean + p.mean,
            var: self.var + p.var,
            dev: self.dev.max(p.dev),
        }
    }

    /// Inputs for `Pr(sum - center >= gamma - center)`.
    pub fn fa_inputs(&self, gamma: f64) -> BoundInputs {
        BoundInputs {
            n: self.n,
            alpha: gamma - self.center,
            big_m: self.dev * (1.0 + M_SLACK),
            sigma2: self.var / self.n as f64,
        }
    }

    /// Inputs for `Pr(center - sum > center - gamma)`.
    pub fn md_inputs(&self, gamma: f64) -> BoundInputs {
        BoundInputs {
            alpha: self.center - gamma,
            ..self.fa_inputs(gamma)
        }
    }
}

pub(crate) fn fc_fa_inputs(terms: &[FcTerm], gamma: f64) -> BoundInputs {
    FcSums::of(terms.iter().map(fa_part)).fa_inputs(gamma)
}

pub(crate) fn fc_md_inputs(terms: &[FcTerm], gamma: f64, form: FcMdForm) -> BoundInputs {
    FcSums::of(terms.iter().map(|t| md_part(t, form))).md_inputs(gamma)
}

fn strict_terms(qualities: &[ClusterQuality]) -> Result<Vec<FcTerm>> {
    if qualities.is_empty() {
        return Err(Error::Config("no clusters".into()));
    }
    qualities
        .iter()
        .map(|q| {
            Ok(FcTerm {
                q: *q,
                w: q.fusion_weights()?,
            })
        })
        .collect()
}

/// Upper estimate of the fusion center's false-alarm probability.
pub fn fc_fa_bound(qualities: &[ClusterQuality], gamma: f64) -> Result<f64> {
    improved_bennett_bound(&fc_fa_inputs(&strict_terms(qualities)?, gamma))
}

/// Upper estimate of the fusion center's missed-detection probability,
/// with the report mean formed per `form`.
pub fn fc_md_bound_with(qualities: &[ClusterQuality], gamma: f64, form: FcMdForm) -> Result<f64> {
    improved_bennett_bound(&fc_md_inputs(&strict_terms(qualities)?, gamma, form))
}

/// Upper estimate of the fusion center's missed-detection probability.
pub fn fc_md_bound(qualities: &[ClusterQuality], gamma: f64) -> Result<f64> {
    fc_md_bound_with(qualities, gamma, FcMdForm::FirstMoment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{cluster_errors_enumerate, fc_errors_enumerate};
    use crate::model::SensorParams;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inputs(n: usize, alpha: f64, big_m: f64, sigma2: f64) -> BoundInputs {
        BoundInputs {
            n,
            alpha,
            big_m,
            sigma2,
        }
    }

    /// Direct minimization of the Chernoff exponent over a fine grid, as an
    /// oracle for the closed-form minimizer.
    fn chernoff_grid(inp: &BoundInputs) -> f64 {
        let n = inp.n as f64;
        let c = inp.sigma2 / (inp.big_m * inp.big_m);
        let mut best = 0.0f64;
        for k in 1..200_000 {
            let l = k as f64 * 1e-4;
            let v = -l * inp.alpha / inp.big_m + n * (c * (l.exp() - 1.0 - l)).ln_1p();
            best = best.min(v);
        }
        best.exp()
    }

    #[test]
    fn reference_values() {
        let inp = inputs(1, 0.5, 1.0, 0.25);
        let expected_bennett = (-0.25 * (3.0 * 3f64.ln() - 2.0)).exp();
        assert_abs_diff_eq!(
            bennett_bound(&inp).unwrap(),
            expected_bennett,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(bennett_bound(&inp).unwrap(), 0.72328, epsilon = 1e-5);

        let u = improved_bennett_bound(&inp).unwrap();
        // 30-digit evaluation
        assert_abs_diff_eq!(u, 0.700_748_093_572_402_8, epsilon = 1e-13);
        assert_abs_diff_eq!(u, 0.7008, epsilon = 1e-4);
        // L = 5 - W(e^5) and e^L = W(e^5)
        let w = 3.693_441_358_960_65f64;
        let l = 5.0 - w;
        let direct = (-0.5 * l + (1.0 + 0.25 * (w - 1.0 - l)).ln()).exp();
        assert_abs_diff_eq!(u, direct, epsilon = 1e-12);
        assert_abs_diff_eq!(u, chernoff_grid(&inp), epsilon = 1e-8);
    }

    #[test]
    fn clamps_and_errors() {
        assert_eq!(
            improved_bennett_bound(&inputs(3, -0.1, 1.0, 0.2)).unwrap(),
            1.0
        );
        assert_eq!(
            improved_bennett_bound(&inputs(3, 0.0, 1.0, 0.2)).unwrap(),
            1.0
        );
        assert_eq!(
            improved_bennett_bound(&inputs(3, 3.0, 1.0, 0.2)).unwrap(),
            0.0
        );
        assert_eq!(
            improved_bennett_bound(&inputs(3, 1.0, 1.0, 0.0)),
            Err(Error::DegenerateVariance)
        );
        assert_eq!(bennett_bound(&inputs(3, 0.0, 1.0, 0.2)).unwrap(), 1.0);
        assert!(bennett_bound(&inputs(3, 3.0, 1.0, 0.2)).is_err());
        assert!(bennett_bound(&inputs(3, -1.0, 1.0, 0.2)).is_err());
        assert!(improved_bennett_bound(&inputs(3, 1.0, 0.0, 0.2)).is_err());
    }

    #[test]
    fn huge_a_does_not_overflow() {
        // M^2 / s^2 = 1e8
        let u = improved_bennett_bound(&inputs(50, 1.0, 1.0, 1e-8)).unwrap();
        assert!((0.0..=1.0).contains(&u));
        assert_abs_diff_eq!(u, 1.345_516_385_156_673e-6, epsilon = 1e-15);
        let b = bennett_bound(&inputs(50, 1.0, 1.0, 1e-8)).unwrap();
        assert!(u <= b);
    }

    fn sensor(p_fa: f64, p_md: f64) -> SensorParams {
        SensorParams::new(p_fa, p_md, 0.5).unwrap()
    }

    #[test]
    fn cluster_bound_at_the_mean_is_vacuous() {
        let base = ClusterSpec::with_midpoint_rule(vec![sensor(0.2, 0.35); 30]).unwrap();
        let fa_mean = base.gamma() - cluster_fa_inputs(&base).alpha;
        let c = base.clone().with_rule(fa_mean, 0.5).unwrap();
        assert_eq!(cluster_fa_bound(&c), 1.0);
        let md_mean = base.gamma() + cluster_md_inputs(&base).alpha;
        let c = base.with_rule(md_mean, 0.5).unwrap();
        assert_eq!(cluster_md_bound(&c), 1.0);
    }

    #[test]
    fn cluster_bounds_dominate_homogeneous_exact_tails() {
        let base = ClusterSpec::with_midpoint_rule(vec![sensor(0.2, 0.35); 30]).unwrap();
        let (_, hi) = base.threshold_range();
        let mean = base.gamma() - cluster_fa_inputs(&base).alpha;
        for gamma in [hi, 0.5 * (mean + hi), mean + 1.0] {
            let c = base.clone().with_rule(gamma, 0.0).unwrap();
            let exact = crate::exact::cluster_errors_homogeneous(
                &crate::exact::HomogeneousClusterSpec::from_cluster(&c).unwrap(),
            );
            let u = cluster_fa_bound(&c);
            assert!(u >= exact.p_fa, "gamma {gamma}: {u} < {}", exact.p_fa);
            assert!(u < 1.0);
        }
        let md_mean = base.gamma() + cluster_md_inputs(&base).alpha;
        for gamma in [md_mean - 2.0, md_mean - 6.0] {
            let c = base.clone().with_rule(gamma, 1.0).unwrap();
            let exact = crate::exact::cluster_errors_homogeneous(
                &crate::exact::HomogeneousClusterSpec::from_cluster(&c).unwrap(),
            );
            assert!(cluster_md_bound(&c) >= exact.p_md);
        }
    }

    #[test]
    fn symmetric_sensors_give_symmetric_cluster_bounds() {
        let base = ClusterSpec::with_midpoint_rule(vec![
            sensor(0.3, 0.3),
            sensor(0.1, 0.1),
            sensor(0.2, 0.2),
        ])
        .unwrap();
        assert_abs_diff_eq!(base.gamma(), 0.0, epsilon = 1e-14);
        for g in [0.4, 1.1, 2.0] {
            let up = base.clone().with_rule(g, 0.5).unwrap();
            let down = base.clone().with_rule(-g, 0.5).unwrap();
            assert_abs_diff_eq!(
                cluster_fa_bound(&up),
                cluster_md_bound(&down),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn fc_bounds() {
        let q = ClusterQuality::new(0.15, 0.25, 0.6, false).unwrap();
        let qs = vec![q; 6];
        let terms = strict_terms(&qs).unwrap();
        let h0_mean = -fc_fa_inputs(&terms, 0.0).alpha;
        assert_eq!(fc_fa_bound(&qs, h0_mean).unwrap(), 1.0);
        let h1_mean = fc_md_inputs(&terms, 0.0, FcMdForm::FirstMoment).alpha;
        assert_eq!(fc_md_bound(&qs, h1_mean).unwrap(), 1.0);
        for gamma in [-1.31218, 0.0, 0.8, 2.5] {
            let exact = fc_errors_enumerate(&qs, gamma).unwrap();
            assert!(fc_fa_bound(&qs, gamma).unwrap() >= exact.p_fa);
            assert!(fc_md_bound(&qs, gamma).unwrap() >= exact.p_md);
        }
    }

    #[test]
    fn fc_bound_errors() {
        let silent = ClusterQuality::new(0.1, 0.1, 0.0, false).unwrap();
        assert_eq!(
            fc_fa_bound(&[silent; 4], 0.3),
            Err(Error::DegenerateVariance)
        );
        let det = ClusterQuality::new(0.0, 0.1, 0.5, false).unwrap();
        assert!(matches!(
            fc_md_bound(&[det; 2], 0.3),
            Err(Error::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn symmetric_fc_bounds_coincide() {
        let q = ClusterQuality::new(0.2, 0.2, 0.7, false).unwrap();
        let qs = [q; 5];
        assert_abs_diff_eq!(
            fc_fa_bound(&qs, 0.0).unwrap(),
            fc_md_bound(&qs, 0.0).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn printed_form_differs_only_in_centering() {
        let q = ClusterQuality::new(0.1, 0.3, 0.5, false).unwrap();
        let terms = strict_terms(&[q; 3]).unwrap();
        let a = fc_md_inputs(&terms, 0.2, FcMdForm::FirstMoment);
        let b = fc_md_inputs(&terms, 0.2, FcMdForm::Printed);
        assert_eq!(a.sigma2, b.sigma2);
        assert_ne!(a.alpha, b.alpha);
    }

    proptest! {
        #[test]
        fn improved_never_exceeds_bennett(
            n in 1usize..200,
            frac in 0.0f64..0.999,
            big_m in 0.01f64..50.0,
            var_frac in 1e-4f64..1.0,
        ) {
            let sigma2 = var_frac * big_m * big_m;
            let inp = inputs(n, frac * n as f64 * big_m, big_m, sigma2);
            let u = improved_bennett_bound(&inp).unwrap();
            let b = bennett_bound(&inp).unwrap();
            prop_assert!((0.0..=1.0).contains(&u));
            prop_assert!(u <= b * (1.0 + 1e-9) + 1e-300, "u={} b={}", u, b);
        }

        #[test]
        fn non_increasing_in_alpha(
            n in 1usize..100,
            f1 in 0.0f64..1.0,
            f2 in 0.0f64..1.0,
            var_frac in 1e-3f64..1.0,
        ) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let nm = n as f64;
            let u_lo = improved_bennett_bound(&inputs(n, lo * nm, 1.0, var_frac)).unwrap();
            let u_hi = improved_bennett_bound(&inputs(n, hi * nm, 1.0, var_frac)).unwrap();
            prop_assert!(u_hi <= u_lo * (1.0 + 1e-9) + 1e-300);
        }

        #[test]
        fn cluster_bounds_hold_on_small_clusters(
            ps in proptest::collection::vec((0.02f64..0.48, 0.02f64..0.48), 1..10),
            t in 0.0f64..=1.0,
        ) {
            let sensors: Vec<_> = ps.iter().map(|&(a, b)| sensor(a, b)).collect();
            let base = ClusterSpec::with_midpoint_rule(sensors).unwrap();
            let (lo, hi) = base.threshold_range();
            let c = base.with_rule(lo + t * (hi - lo), 0.5).unwrap();
            let exact = cluster_errors_enumerate(&c).unwrap();
            prop_assert!(cluster_fa_bound(&c) >= exact.p_fa - 1e-12);
            prop_assert!(cluster_md_bound(&c) >= exact.p_md - 1e-12);
        }
    }
}
