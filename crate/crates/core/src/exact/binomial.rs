/// `ln k!` for `k = 0..=n`.
#[cfg(test)]
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Probability mass function of `Bin(n, p)`. The mass is built outward from
/// the mode by the ratio recurrence and then normalized, so no binomial
/// coefficient is ever formed and the total is 1 to rounding.
pub(crate) fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    let odds = p / (1.0 - p);
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as usize;
    pmf[mode] = 1.0;
    for k in mode..n {
        pmf[k + 1] = pmf[k] * ((n - k) as f64 / (k + 1) as f64) * odds;
    }
    for k in (0..mode).rev() {
        pmf[k] = pmf[k + 1] * ((k + 1) as f64 / (n - k) as f64) / odds;
    }
    let total: f64 = pmf.iter().sum();
    for x in &mut pmf {
        *x /= total;
    }
    pmf
}
