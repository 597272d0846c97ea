//! Discrimination, calibration and overall performance of binary risk
//! predictions.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::data::rcs_basis;
use crate::error::{Error, Result};
use crate::glm::fit_logistic;
use crate::linalg::Design;
use crate::optim::NewtonOptions;
use crate::stats::{logit, quantile_sorted};

fn check(pred: &[f64], y: &[f64]) -> Result<()> {
    if pred.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} outcomes",
            pred.len(),
            y.len()
        )));
    }
    if let Some(p) = pred.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(format!("prediction {p} is not finite")));
    }
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("outcome {v} is not 0/1")));
    }
    Ok(())
}

fn both_classes(y: &[f64], what: &str) -> Result<(usize, usize)> {
    let n1 = y.iter().filter(|&&v| v == 1.0).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Degenerate(format!("{what} needs both outcome classes")));
    }
    Ok((n1, n0))
}

/// Concordance probability; event/non-event ties count one half. Computed
/// from integer pair counts, so it is exact up to the final division.
pub fn auc(pred: &[f64], y: &[f64]) -> Result<f64> {
    check(pred, y)?;
    let (n1, n0) = both_classes(y, "AUC")?;
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]));
    let mut below0: u128 = 0;
    let mut twice: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut e, mut ne) = (0u128, 0u128);
        while j < order.len() && pred[order[j]] == pred[order[i]] {
            if y[order[j]] == 1.0 {
                e += 1;
            } else {
                ne += 1;
            }
            j += 1;
        }
        twice += 2 * e * below0 + e * ne;
        below0 += ne;
        i = j;
    }
    Ok(twice as f64 / (2 * n1 as u128 * n0 as u128) as f64)
}

const CLAMP: f64 = 1e-10;

fn clamped_logits(pred: &[f64]) -> Vec<f64> {
    pred.iter().map(|p| logit(p.clamp(CLAMP, 1.0 - CLAMP))).collect()
}

/// Slope of a logistic regression of the outcome on logit(prediction).
pub fn calibration_slope(pred: &[f64], y: &[f64]) -> Result<f64> {
    check(pred, y)?;
    both_classes(y, "calibration slope")?;
    let lp = clamped_logits(pred);
    if lp.iter().all(|&v| v == lp[0]) {
        return Err(Error::Degenerate("constant predictions; calibration slope undefined".into()));
    }
    let x = Design::new(vec!["lp".into()], lp.len(), lp)?;
    let fit = fit_logistic(&x, y, &NewtonOptions::default())?;
    if !fit.report.ok() {
        return Err(Error::Fit(format!(
            "calibration slope fit did not converge: {:?}",
            fit.report.warnings
        )));
    }
    Ok(fit.coef[0])
}

/// Mean outcome over mean prediction.
pub fn oe_ratio(pred: &[f64], y: &[f64]) -> Result<f64> {
    check(pred, y)?;
    if y.is_empty() {
        return Err(Error::InvalidInput("no rows".into()));
    }
    let mp = pred.iter().sum::<f64>() / pred.len() as f64;
    if !(mp > 0.0) {
        return Err(Error::Degenerate("mean prediction is zero".into()));
    }
    Ok(y.iter().sum::<f64>() / y.len() as f64 / mp)
}

/// Which calibration curve the ECI used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    Spline,
    Linear,
    InterceptOnly,
}

/// Flexible calibration curve: logistic regression of the outcome on a
/// 3-knot restricted cubic spline of logit(prediction). Falls back to a
/// linear logit curve, then to the outcome rate.
pub fn calibration_curve(pred: &[f64], y: &[f64]) -> Result<(Vec<f64>, CurveKind)> {
    check(pred, y)?;
    if y.is_empty() {
        return Err(Error::InvalidInput("no rows".into()));
    }
    let lp = clamped_logits(pred);
    let opts = NewtonOptions::default();
    let mut sorted = lp.clone();
    sorted.sort_by(f64::total_cmp);
    let knots: Vec<f64> = [0.1, 0.5, 0.9].iter().map(|&q| quantile_sorted(&sorted, q)).collect();
    if knots.windows(2).all(|k| k[1] > k[0]) {
        let rows: Vec<Vec<f64>> = lp
            .iter()
            .map(|&v| {
                let mut r = vec![v];
                r.extend(rcs_basis(v, &knots));
                r
            })
            .collect();
        let x = Design::from_rows(vec!["lp".into(), "lp'".into()], &rows)?;
        if let Ok(fit) = fit_logistic(&x, y, &opts) {
            if fit.report.ok() {
                return Ok((fit.predict(&x)?, CurveKind::Spline));
            }
        }
    }
    if lp.iter().any(|&v| v != lp[0]) {
        let x = Design::new(vec!["lp".into()], lp.len(), lp.clone())?;
        if let Ok(fit) = fit_logistic(&x, y, &opts) {
            if fit.report.ok() {
                debug!("spline calibration curve failed; using linear logit curve");
                return Ok((fit.predict(&x)?, CurveKind::Linear));
            }
        }
    }
    warn!("calibration curve reduced to the outcome rate");
    let rate = y.iter().sum::<f64>() / y.len() as f64;
    Ok((vec![rate; y.len()], CurveKind::InterceptOnly))
}

/// 100 x mean squared distance between predictions and the calibration curve.
pub fn eci(pred: &[f64], y: &[f64]) -> Result<f64> {
    let (curve, _) = calibration_curve(pred, y)?;
    let n = pred.len() as f64;
    Ok(100.0 * pred.iter().zip(&curve).map(|(p, c)| (p - c).powi(2)).sum::<f64>() / n)
}

/// `1 - Brier / Brier(null)` with the null model predicting the observed rate.
pub fn scaled_brier(pred: &[f64], y: &[f64]) -> Result<f64> {
    check(pred, y)?;
    both_classes(y, "scaled Brier score")?;
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let brier = pred.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / n;
    let null = y.iter().map(|v| (ybar - v).powi(2)).sum::<f64>() / n;
    Ok(1.0 - brier / null)
}

pub const METRIC_NAMES: [&str; 5] = ["auc", "calibration_slope", "oe_ratio", "eci", "scaled_brier"];

/// One evaluation; undefined metrics are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub calibration_slope: Option<f64>,
    pub oe_ratio: Option<f64>,
    pub eci: Option<f64>,
    pub scaled_brier: Option<f64>,
    pub n: usize,
    pub events: usize,
}

impl MetricsReport {
    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 5] {
        [self.auc, self.calibration_slope, self.oe_ratio, self.eci, self.scaled_brier]
    }
}

pub fn evaluate(pred: &[f64], y: &[f64]) -> Result<MetricsReport> {
    check(pred, y)?;
    Ok(MetricsReport {
        auc: auc(pred, y).ok(),
        calibration_slope: calibration_slope(pred, y).ok(),
        oe_ratio: oe_ratio(pred, y).ok(),
        eci: eci(pred, y).ok(),
        scaled_brier: scaled_brier(pred, y).ok(),
        n: y.len(),
        events: y.iter().filter(|&&v| v == 1.0).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    /// 2.5th percentile.
    pub lo: f64,
    /// 97.5th percentile.
    pub hi: f64,
    pub n: usize,
}

/// Mean, median and 2.5/97.5 percentiles of the finite values.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Summary {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: quantile_sorted(&v, 0.5),
        lo: quantile_sorted(&v, 0.025),
        hi: quantile_sorted(&v, 0.975),
        n: v.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::expit;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn auc_small_fixture() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        assert!(auc(&[0.3, 0.4], &[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            pred in proptest::collection::vec(0.01f64..0.99, 4..60),
            flips in proptest::collection::vec(any::<bool>(), 60),
        ) {
            let mut y: Vec<f64> = flips[..pred.len()].iter().map(|&b| b as u8 as f64).collect();
            y[0] = 0.0;
            y[1] = 1.0;
            let t: Vec<f64> = pred.iter().map(|p| (5.0 * p).exp()).collect();
            prop_assert_eq!(auc(&pred, &y).unwrap(), auc(&t, &y).unwrap());
        }

        #[test]
        fn oe_ratio_homogeneity(pred in proptest::collection::vec(0.01f64..0.5, 10), c in 0.5f64..1.9) {
            let y = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
            let a = oe_ratio(&pred, &y).unwrap();
            let scaled: Vec<f64> = pred.iter().map(|p| p * c).collect();
            let b = oe_ratio(&scaled, &y).unwrap();
            prop_assert!((a / c - b).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn oe_and_brier_arithmetic() {
        let y = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!((oe_ratio(&[0.25; 10], &y).unwrap() - 0.8).abs() < 1e-15);
        assert!((scaled_brier(&[0.8, 0.2], &[1.0, 0.0]).unwrap() - 0.84).abs() < 1e-12);
        assert_eq!(scaled_brier(&[0.2; 10], &y).unwrap(), 0.0);
        assert_eq!(scaled_brier(&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0]).unwrap(), 1.0);
        assert!(oe_ratio(&[0.0; 10], &y).is_err());
    }

    #[test]
    fn slope_of_doubled_logits_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 20000;
        let lp: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..1.0)).collect();
        let y: Vec<f64> = lp.iter().map(|&e| (rng.random::<f64>() < expit(e)) as u8 as f64).collect();
        let calibrated: Vec<f64> = lp.iter().map(|&e| expit(e)).collect();
        let doubled: Vec<f64> = lp.iter().map(|&e| expit(2.0 * e)).collect();
        assert!((calibration_slope(&calibrated, &y).unwrap() - 1.0).abs() < 0.1);
        assert!((calibration_slope(&doubled, &y).unwrap() - 0.5).abs() < 0.05);
        assert!(eci(&calibrated, &y).unwrap() < 0.1);
        assert!(calibration_slope(&[0.2; 4], &[0.0, 1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn eci_of_constant_prediction() {
        let mut y = vec![0.0; 90];
        y.extend([1.0; 10]);
        let (curve, kind) = calibration_curve(&[0.5; 100], &y).unwrap();
        assert_eq!(kind, CurveKind::InterceptOnly);
        assert!((curve[0] - 0.1).abs() < 1e-15);
        assert!((eci(&[0.5; 100], &y).unwrap() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn eci_zero_at_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 2000;
        let p0: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.6)).collect();
        let y: Vec<f64> = p0.iter().map(|&p| (rng.random::<f64>() < p) as u8 as f64).collect();
        let (curve, kind) = calibration_curve(&p0, &y).unwrap();
        assert_eq!(kind, CurveKind::Spline);
        // recalibrated predictions lie on their own curve
        let again = eci(&curve, &y).unwrap();
        assert!(again < 1e-3, "{again}");
    }

    #[test]
    fn summary_percentiles_match_sorting() {
        let vals: Vec<f64> = (0..100).map(|i| 0.6 + ((i * 37) % 100) as f64 / 1000.0).collect();
        let s = summarize(&vals).unwrap();
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // position (n - 1) q = 2.475 and 96.525
        let lo = sorted[2] + 0.475 * (sorted[3] - sorted[2]);
        let hi = sorted[96] + 0.525 * (sorted[97] - sorted[96]);
        assert!((s.lo - lo).abs() < 1e-12 && (s.hi - hi).abs() < 1e-12);
        let same = summarize(&[0.7; 5]).unwrap();
        assert_eq!(same.hi - same.lo, 0.0);
        assert!(summarize(&[f64::NAN]).is_none());
    }
}
