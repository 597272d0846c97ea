use serde::{Deserialize, Serialize};

use super::{window_risk, Intervals, StepFunction};
use crate::error::{Error, Result};
use crate::glm::check_columns;
use crate::linalg::{dot, rank_one_upper, Design};
use crate::optim::{column_sds, newton, Evaluation, FitReport, NewtonOptions};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxOptions {
    pub newton: NewtonOptions,
    /// Skip estimation and use these coefficients (baseline only).
    pub fixed: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// Breslow cumulative baseline hazard at covariates 0.
    pub baseline: StepFunction,
    pub degenerate: Vec<String>,
    /// Observed information over the estimated coefficients, row-major.
    pub information: Vec<f64>,
    pub n_events: usize,
    pub ties: String,
    pub report: FitReport,
}

/// Risk-set sweep over distinct event times in decreasing order. Calls
/// `visit(t, event_rows, s0, s1, s2_upper, shift)` where the sums run over
/// rows at risk at `t` (start < t <= stop) with terms `w exp(eta - shift)`.
struct Sweep {
    by_stop: Vec<usize>,
    by_start: Vec<usize>,
    /// Event rows grouped by time, decreasing.
    event_groups: Vec<(f64, Vec<usize>)>,
}

impl Sweep {
    fn new(iv: &Intervals) -> Self {
        let n = iv.len();
        let mut by_stop: Vec<usize> = (0..n).collect();
        by_stop.sort_by(|&a, &b| iv.stop[b].total_cmp(&iv.stop[a]));
        let mut by_start: Vec<usize> = (0..n).collect();
        by_start.sort_by(|&a, &b| iv.start[b].total_cmp(&iv.start[a]));
        let mut event_groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for &i in by_stop.iter().filter(|&&i| iv.event[i]) {
            match event_groups.last_mut() {
                Some((t, rows)) if *t == iv.stop[i] => rows.push(i),
                _ => event_groups.push((iv.stop[i], vec![i])),
            }
        }
        Sweep {
            by_stop,
            by_start,
            event_groups,
        }
    }

    fn run<F>(&self, iv: &Intervals, x: &[Vec<f64>], eta: &[f64], second: bool, mut visit: F)
    where
        F: FnMut(f64, &[usize], f64, &[f64], &[f64], f64),
    {
        let p = x.first().map_or(0, |r| r.len());
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let r: Vec<f64> = eta.iter().zip(&iv.weight).map(|(e, w)| w * (e - shift).exp()).collect();
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; if second { p * p } else { 0 }];
        let (mut ia, mut ir) = (0, 0);
        for (t, rows) in &self.event_groups {
            while ia < self.by_stop.len() && iv.stop[self.by_stop[ia]] >= *t {
                let i = self.by_stop[ia];
                s0 += r[i];
                for (a, xv) in s1.iter_mut().zip(&x[i]) {
                    *a += r[i] * xv;
                }
                if second {
                    rank_one_upper(&mut s2, &x[i], r[i]);
                }
                ia += 1;
            }
            while ir < self.by_start.len() && iv.start[self.by_start[ir]] >= *t {
                let i = self.by_start[ir];
                s0 -= r[i];
                for (a, xv) in s1.iter_mut().zip(&x[i]) {
                    *a -= r[i] * xv;
                }
                if second {
                    rank_one_upper(&mut s2, &x[i], -r[i]);
                }
                ir += 1;
            }
            visit(*t, rows, s0, &s1, &s2, shift);
        }
    }
}

fn constant_columns(x: &Design) -> Vec<bool> {
    (0..x.ncols())
        .map(|j| {
            let first = if x.nrows > 0 { x.get(0, j) } else { 0.0 };
            (0..x.nrows).all(|i| x.get(i, j) == first)
        })
        .collect()
}

/// Weighted Cox partial-likelihood fit on `(start, stop]` rows with Breslow
/// handling of ties.
pub fn fit_cox(iv: &Intervals, x: &Design, opts: &CoxOptions) -> Result<CoxFit> {
    iv.validate()?;
    if x.nrows != iv.len() {
        return Err(Error::InvalidInput(format!(
            "design has {} rows but {} intervals",
            x.nrows,
            iv.len()
        )));
    }
    if let Some(v) = x.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("design contains non-finite value {v}")));
    }
    let n_events = iv.n_events();
    if n_events == 0 {
        return Err(Error::NoEvents("no events among the fitting rows".into()));
    }
    let n = iv.len();
    let constant = constant_columns(x);
    let active: Vec<usize> = (0..x.ncols()).filter(|&j| !constant[j]).collect();
    let q = active.len();
    let means: Vec<f64> = active
        .iter()
        .map(|&j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let xc: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r = x.row(i);
            active.iter().zip(&means).map(|(&j, m)| r[j] - m).collect()
        })
        .collect();
    let sweep = Sweep::new(iv);

    let eval = |beta: &[f64]| -> Evaluation {
        let eta: Vec<f64> = xc.iter().map(|r| dot(r, beta)).collect();
        let mut e = Evaluation::zeros(q);
        sweep.run(iv, &xc, &eta, true, |_, rows, s0, s1, s2, shift| {
            let d: f64 = rows.iter().map(|&i| iv.weight[i]).sum();
            for &i in rows {
                let w = iv.weight[i];
                e.loglik += w * eta[i];
                for (s, xv) in e.score.iter_mut().zip(&xc[i]) {
                    *s += w * xv;
                }
            }
            e.loglik -= d * (s0.ln() + shift);
            for a in 0..q {
                let ma = s1[a] / s0;
                e.score[a] -= d * ma;
                for b in a..q {
                    e.info_upper[a * q + b] += d * (s2[a * q + b] / s0 - ma * s1[b] / s0);
                }
            }
        });
        e
    };

    let (theta, last, mut report) = match &opts.fixed {
        Some(beta) => {
            if beta.len() != x.ncols() {
                return Err(Error::InvalidInput(format!(
                    "{} fixed coefficients for {} columns",
                    beta.len(),
                    x.ncols()
                )));
            }
            let th: Vec<f64> = active.iter().map(|&j| beta[j]).collect();
            let last = eval(&th);
            let report = FitReport {
                converged: true,
                iterations: 0,
                loglik: last.loglik,
                max_score: last.score.iter().fold(0.0, |m, v| m.max(v.abs())),
                ..FitReport::default()
            };
            (th, last, report)
        }
        None => {
            let res = newton(q, &opts.newton, eval);
            (res.theta, res.last, res.report)
        }
    };

    let mut coef = vec![0.0; x.ncols()];
    for (k, &j) in active.iter().enumerate() {
        coef[j] = theta[k];
    }
    if let Some(beta) = &opts.fixed {
        coef.clone_from(beta);
    } else {
        let sds = column_sds(n, x.ncols(), |i, j| x.get(i, j));
        for (j, name) in x.names.iter().enumerate() {
            if (coef[j] * sds[j]).abs() > opts.newton.divergence_bound {
                report.diverged = true;
                report
                    .warnings
                    .push(format!("coefficient of `{name}` diverging ({:.3e})", coef[j]));
            }
        }
    }
    let degenerate: Vec<String> = (0..x.ncols())
        .filter(|&j| constant[j])
        .map(|j| x.names[j].clone())
        .collect();
    for d in &degenerate {
        report.warnings.push(format!("column `{d}` is constant; coefficient fixed at 0"));
    }

    // Breslow baseline at covariates 0 (uncentered linear predictor).
    let no_columns = vec![Vec::new(); n];
    let eta: Vec<f64> = (0..n).map(|i| dot(x.row(i), &coef)).collect();
    let mut jumps: Vec<(f64, f64)> = Vec::with_capacity(sweep.event_groups.len());
    sweep.run(iv, &no_columns, &eta, false, |t, rows, s0, _, _, shift| {
        let d: f64 = rows.iter().map(|&i| iv.weight[i]).sum();
        jumps.push((t, d / s0 * (-shift).exp()));
    });
    jumps.reverse();
    let mut cum = 0.0;
    let mut baseline = StepFunction::default();
    for (t, dh) in jumps {
        cum += dh;
        baseline.times.push(t);
        baseline.values.push(cum);
    }

    Ok(CoxFit {
        names: x.names.clone(),
        coef,
        baseline,
        degenerate,
        information: last.information().transpose().as_slice().to_vec(),
        n_events,
        ties: "breslow".into(),
        report,
    })
}

impl CoxFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        dot(row, &self.coef)
    }

    pub fn linear_predictors(&self, x: &Design) -> Result<Vec<f64>> {
        check_columns(&self.names, x)?;
        Ok((0..x.nrows).map(|i| self.linear_predictor(x.row(i))).collect())
    }

    /// `1 - exp(-Lambda0(horizon) exp(beta'z))`; beyond the last baseline
    /// jump the last value is used.
    pub fn predict_static(&self, x: &Design, horizon: f64) -> Result<Vec<f64>> {
        Ok(self
            .linear_predictors(x)?
            .into_iter()
            .map(|eta| window_risk(&self.baseline, eta, 0.0, horizon))
            .collect())
    }

    /// `1 - exp(-exp(eta) [Lambda0(s + w) - Lambda0(s)])` per row, where the
    /// design rows already carry the landmark terms for `s`.
    pub fn predict_window(&self, x: &Design, s: f64, w: f64) -> Result<Vec<f64>> {
        Ok(self
            .linear_predictors(x)?
            .into_iter()
            .map(|eta| window_risk(&self.baseline, eta, s, s + w))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Intervals, Design) {
        let iv = Intervals {
            start: vec![0.0; 3],
            stop: vec![1.0, 2.0, 3.0],
            event: vec![true; 3],
            weight: vec![1.0; 3],
        };
        let x = Design::from_rows(vec!["z".into()], &[vec![0.0], vec![1.0], vec![0.0]]).unwrap();
        (iv, x)
    }

    #[test]
    fn three_subject_closed_form() {
        let (iv, x) = fixture();
        let fit = fit_cox(&iv, &x, &CoxOptions::default()).unwrap();
        assert!(fit.report.converged);
        assert!((fit.coef[0] - 2f64.sqrt().ln()).abs() < 1e-9, "{}", fit.coef[0]);
        assert!(fit.report.max_score < 1e-8);
    }

    #[test]
    fn zero_coefficient_baseline_is_nelson_aalen() {
        let (iv, x) = fixture();
        let opts = CoxOptions {
            fixed: Some(vec![0.0]),
            ..CoxOptions::default()
        };
        let fit = fit_cox(&iv, &x, &opts).unwrap();
        let want = [1.0 / 3.0, 5.0 / 6.0, 11.0 / 6.0];
        for (v, w) in fit.baseline.values.iter().zip(want) {
            assert!((v - w).abs() < 1e-14);
        }
        assert_eq!(fit.report.iterations, 0);
    }

    #[test]
    fn constant_covariate_is_degenerate() {
        let (iv, _) = fixture();
        let x = Design::from_rows(vec!["z".into()], &[vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        let fit = fit_cox(&iv, &x, &CoxOptions::default()).unwrap();
        assert_eq!(fit.coef, vec![0.0]);
        assert_eq!(fit.degenerate, vec!["z".to_string()]);
    }

    #[test]
    fn no_events_is_an_error() {
        let (mut iv, x) = fixture();
        iv.event = vec![false; 3];
        assert!(matches!(fit_cox(&iv, &x, &CoxOptions::default()), Err(Error::NoEvents(_))));
    }

    #[test]
    fn late_entry_excludes_row_from_early_risk_sets() {
        // Subject b enters at 1.5, so the first risk set has a and c only.
        let iv = Intervals {
            start: vec![0.0, 1.5, 0.0],
            stop: vec![1.0, 2.0, 3.0],
            event: vec![true, true, false],
            weight: vec![1.0; 3],
        };
        let opts = CoxOptions {
            fixed: Some(vec![]),
            ..CoxOptions::default()
        };
        let fit = fit_cox(&iv, &Design::empty(3), &opts).unwrap();
        assert_eq!(fit.baseline.values, vec![0.5, 1.0]);
    }

    #[test]
    fn weights_act_as_replication() {
        let (iv, x) = fixture();
        let mut wiv = iv.clone();
        wiv.weight = vec![2.0, 1.0, 1.0];
        let mut rep = iv.clone();
        rep.start.push(0.0);
        rep.stop.push(1.0);
        rep.event.push(true);
        rep.weight.push(1.0);
        let xr = Design::from_rows(vec!["z".into()], &[vec![0.0], vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let a = fit_cox(&wiv, &x, &CoxOptions::default()).unwrap();
        let b = fit_cox(&rep, &xr, &CoxOptions::default()).unwrap();
        assert!((a.coef[0] - b.coef[0]).abs() < 1e-10);
        assert!((a.baseline.eval(3.0) - b.baseline.eval(3.0)).abs() < 1e-10);
    }
}
