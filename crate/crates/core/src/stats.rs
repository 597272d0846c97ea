//! Scalar helpers shared across modules.

/// Sample quantile of sorted data with linear interpolation between order
/// statistics (the "type 7" definition). `q` is clamped to [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^eta)` without overflow.
#[inline]
pub fn log1pexp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 0.1) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn expit_logit_inverse_and_stable() {
        for eta in [-12.0, -2.0, 0.0, 1.5, 12.0] {
            assert!((logit(expit(eta)) - eta).abs() < 1e-6);
        }
        assert!(expit(-800.0) >= 0.0 && expit(800.0) <= 1.0);
        assert!((log1pexp(800.0) - 800.0).abs() < 1e-12);
        assert!((log1pexp(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
