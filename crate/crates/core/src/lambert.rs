//! The lower branch `W₋₁` of the Lambert W function on `[−1/e, 0)`.

use crate::error::{Error, Result};

/// `−1/e` rounded to the nearest double.
pub const BRANCH_POINT: f64 = -0.367_879_441_171_442_33;

const MAX_ITERS: usize = 200;

fn check_domain(x: f64) -> Result<()> {
    if !(BRANCH_POINT..0.0).contains(&x) {
        return Err(Error::Domain(format!("W₋₁ is defined on [−1/e, 0), got {x}")));
    }
    Ok(())
}

/// Explicit lower and upper bounds on `W₋₁(x)`:
/// `e·ln(−x)/(e−1) ≤ W₋₁(x) ≤ ln(−x) − ln(−ln(−x))`.
pub fn loczi_bracket(x: f64) -> Result<(f64, f64)> {
    check_domain(x)?;
    let l = (-x).ln();
    let e = std::f64::consts::E;
    let lower = e * l / (e - 1.0);
    // At the branch point ln(−x) = −1 and the upper bound is exactly −1;
    // rounding can push it a hair above, so clamp onto the branch.
    let upper = (l - (-l).ln()).min(-1.0);
    Ok((lower.min(upper), upper))
}

/// `W₋₁(x)`, the solution `w ≤ −1` of `w·eʷ = x`.
///
/// Safeguarded Newton on `g(w) = w + ln(−w) − ln(−x)` inside the bracket of
/// [`loczi_bracket`], followed by a polish in the original variable.
pub fn lambert_w_m1(x: f64) -> Result<f64> {
    check_domain(x)?;
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }
    let (mut lo, mut hi) = loczi_bracket(x)?;
    let target = (-x).ln();
    let g = |w: f64| w + (-w).ln() - target;

    let mut w = 0.5 * (lo + hi);
    for _ in 0..MAX_ITERS {
        let gw = g(w);
        if gw == 0.0 {
            break;
        }
        // g is increasing on (−∞, −1].
        if gw < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let step = gw / (1.0 + 1.0 / w);
        let mut next = w - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 4.0 * f64::EPSILON * w.abs() || hi - lo <= 4.0 * f64::EPSILON * w.abs() {
            w = next;
            break;
        }
        w = next;
    }
    Ok(polish(w, x))
}

/// A few Newton steps on `w·eʷ − x`, kept only while the residual shrinks.
fn polish(mut w: f64, x: f64) -> f64 {
    let residual = |w: f64| (w * w.exp() - x).abs();
    let mut r = residual(w);
    for _ in 0..4 {
        let ew = w.exp();
        let d = ew * (1.0 + w);
        if d == 0.0 {
            break;
        }
        let cand = (w - (w * ew - x) / d).min(-1.0);
        let rc = residual(cand);
        if rc < r {
            w = cand;
            r = rc;
        } else {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain bisection on `w·eʷ = x` over `[−750, −1]`, where `w·eʷ` is
    /// decreasing. Shares no code with the solver.
    fn oracle(x: f64) -> f64 {
        let (mut a, mut b) = (-750.0_f64, -1.0_f64);
        for _ in 0..300 {
            let mid = 0.5 * (a + b);
            if mid * mid.exp() - x > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn branch_point_is_exact() {
        assert_eq!(lambert_w_m1(BRANCH_POINT).unwrap(), -1.0);
        assert_eq!(BRANCH_POINT, -(-1.0_f64).exp());
    }

    #[test]
    fn known_value_minus_two() {
        let x = -2.0 * (-2.0_f64).exp();
        assert!((lambert_w_m1(x).unwrap() + 2.0).abs() < 1e-13);
    }

    #[test]
    fn matches_bisection_oracle() {
        for &x in &[-0.05, -0.3, -1e-6, -1e-100, -0.36787944] {
            let w = lambert_w_m1(x).unwrap();
            let o = oracle(x);
            assert!((w - o).abs() <= 1e-9 * o.abs(), "x={x}: {w} vs {o}");
        }
    }

    #[test]
    fn oracle_value_at_minus_005_is_frozen() {
        // Oracle value, frozen: W₋₁(−0.05) = −4.4997552885...
        let w = lambert_w_m1(-0.05).unwrap();
        assert!((w - oracle(-0.05)).abs() < 1e-12);
        assert!((w + 4.499_755_288_523_487).abs() < 1e-12, "{w}");
    }

    #[test]
    fn bracket_at_branch_point() {
        let (lo, hi) = loczi_bracket(BRANCH_POINT).unwrap();
        let e = std::f64::consts::E;
        assert!((lo + e / (e - 1.0)).abs() < 1e-12);
        assert_eq!(hi, -1.0);
    }

    #[test]
    fn bracket_contains_oracle() {
        for &x in &[-0.05, -1e-6, -0.2, -1e-250] {
            let (lo, hi) = loczi_bracket(x).unwrap();
            let o = oracle(x);
            assert!(lo <= o && o <= hi, "x={x}: {lo} {o} {hi}");
        }
    }

    #[test]
    fn rejects_out_of_domain() {
        for &x in &[-0.4, 0.0, 0.1, f64::NAN] {
            assert!(matches!(lambert_w_m1(x), Err(Error::Domain(_))));
            assert!(loczi_bracket(x).is_err());
        }
    }

    #[test]
    fn decreasing_on_sorted_grid() {
        let mut prev = f64::INFINITY;
        for k in 0..400 {
            let x = BRANCH_POINT + 1e-12 + (k as f64) * (0.3678 / 400.0);
            if x >= 0.0 {
                break;
            }
            let w = lambert_w_m1(x).unwrap();
            assert!(w < prev);
            prev = w;
        }
    }
}
