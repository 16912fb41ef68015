//! Principal branch of the Lambert W function.

use std::f64::consts::E;

use crate::error::{Error, Result};

const MAX_HALLEY: usize = 50;
/// Above this value of `a + ln b`, `W(b e^a)` is solved in log space.
const LOG_SPACE_FROM: f64 = 30.0;

fn residual_ok(w: f64, x: f64) -> bool {
    (w * w.exp() - x).abs() <= 1e-12 * x.abs().max(1.0)
}

fn initial_guess(x: f64) -> f64 {
    if x < -0.32 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p() * (1.0 - x.ln_1p() / (2.0 + x.ln_1p()))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// `W0(x)`: the solution `w >= -1` of `w e^w = x`, for `x >= -1/e`.
///
/// The residual `|w e^w - x|` is at most `1e-12 max(1, |x|)`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if x.is_nan() || x < branch - 1e-15 {
        return Err(Error::Domain(format!(
            "Lambert W0 is undefined at {x} < -1/e"
        )));
    }
    if x <= branch {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let mut w = initial_guess(x);
    for _ in 0..MAX_HALLEY {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = (w - step).max(-1.0);
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1e-300);
        w = next;
        if done {
            break;
        }
    }
    if residual_ok(w, x) {
        return Ok(w);
    }
    Ok(bisect(x))
}

fn bisect(x: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0f64, x.max(1.0).ln().max(1.0));
    while hi * hi.exp() < x {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid * mid.exp() < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rl = (lo * lo.exp() - x).abs();
    let rh = (hi * hi.exp() - x).abs();
    if rl <= rh {
        lo
    } else {
        hi
    }
}

/// `W0(b e^a)` for `b > 0`, without forming `e^a` when it would overflow.
///
/// For large `a + ln b` the equation `w + ln w = a + ln b` is solved by
/// Newton's method instead.
pub fn lambert_w0_of_exp(b: f64, a: f64) -> Result<f64> {
    if !(b > 0.0) || a.is_nan() {
        return Err(Error::Domain(format!("W(b e^a) needs b > 0, got b = {b}")));
    }
    let t = a + b.ln();
    if t <= LOG_SPACE_FROM {
        let mut x = b * a.exp();
        if !x.is_finite() || x == 0.0 {
            x = t.exp();
        }
        return lambert_w0(x);
    }
    let mut w = t - t.ln();
    for _ in 0..MAX_HALLEY {
        let g = w + w.ln() - t;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    Ok(w)
}
