//! Overflow-safe helpers for expressions of the form `log(1 + q (e^eps - 1))`.

/// Above this exponent `expm1` overflows `f64`, so we switch to log-space.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// `log(e^x - 1)` for `x > 0`.
pub fn log_expm1(x: f64) -> f64 {
    if x > 40.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `log(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `log(1 + q (e^eps - 1))`, the amplified level of an `eps`-indistinguishable
/// event that happens with probability `q`.
///
/// Stays finite for `eps` far beyond the range of `exp`.
pub fn amplify_log(eps: f64, q: f64) -> f64 {
    if eps == 0.0 || q == 0.0 {
        return 0.0;
    }
    if q == 1.0 {
        return eps;
    }
    if eps < LOG_SPACE_THRESHOLD {
        (q * eps.exp_m1()).ln_1p()
    } else {
        softplus(log_expm1(eps) + q.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_space_branch_is_continuous() {
        for &q in &[0.01, 0.3, 0.9] {
            let below = amplify_log(LOG_SPACE_THRESHOLD - 1e-9, q);
            let above = softplus(log_expm1(LOG_SPACE_THRESHOLD - 1e-9) + f64::ln(q));
            assert!((below - above).abs() < 1e-9 * below);
        }
        assert!(amplify_log(5000.0, 0.5).is_finite());
        assert!((amplify_log(5000.0, 0.5) - (5000.0 + 0.5f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn log_expm1_matches_direct_form() {
        for x in [1e-6f64, 0.5, 3.0, 39.9, 40.1, 60.0] {
            let direct = x.exp_m1().ln();
            assert!((log_expm1(x) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}
