//! Binary and multinomial logistic regression by Newton/IRLS, and block
//! Wald tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, rank_one_upper, Design};
use crate::optim::{column_sds, newton, Evaluation, FitReport, NewtonOptions};
use crate::stats::{expit, log1pexp};

/// Columns with a single distinct value; their coefficients are fixed at 0.
fn constant_columns(x: &Design) -> Vec<bool> {
    (0..x.ncols())
        .map(|j| {
            let first = if x.nrows > 0 { x.get(0, j) } else { 0.0 };
            (0..x.nrows).all(|i| x.get(i, j) == first)
        })
        .collect()
}

fn check_design(x: &Design, n: usize) -> Result<()> {
    if x.nrows != n {
        return Err(Error::InvalidInput(format!(
            "design has {} rows but {} labels",
            x.nrows, n
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("no rows to fit".into()));
    }
    if let Some(v) = x.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("design contains non-finite value {v}")));
    }
    Ok(())
}

pub(crate) fn check_columns(expected: &[String], x: &Design) -> Result<()> {
    if expected != x.names.as_slice() {
        return Err(Error::Schema(format!(
            "design columns {:?} do not match the training design {:?}",
            x.names, expected
        )));
    }
    Ok(())
}

/// Flags coefficients larger than the bound on the standardized scale.
fn divergence_check(report: &mut FitReport, coef: &[f64], sds: &[f64], names: &[String], bound: f64) {
    for ((b, sd), name) in coef.iter().zip(sds).zip(names) {
        if (b * sd).abs() > bound {
            report.diverged = true;
            report.warnings.push(format!(
                "coefficient of `{name}` diverging ({b:.3e}); possible separation"
            ));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub intercept: f64,
    pub coef: Vec<f64>,
    /// Constant columns whose coefficient was fixed at 0.
    pub degenerate: Vec<String>,
    /// Observed information over (intercept, active coefficients), row-major.
    pub information: Vec<f64>,
    pub report: FitReport,
}

/// Maximum-likelihood logistic regression with an intercept. `y` holds 0/1.
pub fn fit_logistic(x: &Design, y: &[f64], opts: &NewtonOptions) -> Result<LogisticFit> {
    check_design(x, y.len())?;
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("binary label must be 0 or 1, got {v}")));
    }
    let constant = constant_columns(x);
    let active: Vec<usize> = (0..x.ncols()).filter(|&j| !constant[j]).collect();
    let q = active.len() + 1;
    let n = y.len();
    let row_vec = |i: usize, buf: &mut Vec<f64>| {
        buf.clear();
        buf.push(1.0);
        let r = x.row(i);
        buf.extend(active.iter().map(|&j| r[j]));
    };
    let eval = |theta: &[f64]| -> Evaluation {
        opts.exec
            .reduce_chunks(
                n,
                |lo, hi| {
                    let mut e = Evaluation::zeros(q);
                    let mut z = Vec::with_capacity(q);
                    for i in lo..hi {
                        row_vec(i, &mut z);
                        let eta: f64 = z.iter().zip(theta).map(|(a, b)| a * b).sum();
                        let p = expit(eta);
                        e.loglik += y[i] * eta - log1pexp(eta);
                        let r = y[i] - p;
                        for (s, zj) in e.score.iter_mut().zip(&z) {
                            *s += r * zj;
                        }
                        rank_one_upper(&mut e.info_upper, &z, p * (1.0 - p));
                    }
                    e
                },
                Evaluation::add,
            )
            .unwrap_or_else(|| Evaluation::zeros(q))
    };
    let res = newton(q, opts, eval);
    let mut coef = vec![0.0; x.ncols()];
    for (k, &j) in active.iter().enumerate() {
        coef[j] = res.theta[k + 1];
    }
    let mut report = res.report;
    let sds = column_sds(n, x.ncols(), |i, j| x.get(i, j));
    divergence_check(&mut report, &coef, &sds, &x.names, opts.divergence_bound);
    let degenerate: Vec<String> = (0..x.ncols())
        .filter(|&j| constant[j])
        .map(|j| x.names[j].clone())
        .collect();
    for d in &degenerate {
        report.warnings.push(format!("column `{d}` is constant; coefficient fixed at 0"));
    }
    Ok(LogisticFit {
        names: x.names.clone(),
        intercept: res.theta[0],
        coef,
        degenerate,
        information: res.last.information().transpose().as_slice().to_vec(),
        report,
    })
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &Design) -> Result<Vec<f64>> {
        check_columns(&self.names, x)?;
        Ok((0..x.nrows).map(|i| expit(self.linear_predictor(x.row(i)))).collect())
    }

    fn active(&self) -> Vec<usize> {
        (0..self.names.len())
            .filter(|&j| !self.degenerate.contains(&self.names[j]))
            .collect()
    }

    /// Block Wald test of the named coefficients being jointly zero.
    pub fn wald_test(&self, block: &[&str]) -> Result<WaldTest> {
        let active = self.active();
        let q = active.len() + 1;
        let info = DMatrix::from_row_slice(q, q, &self.information);
        let mut idx = Vec::with_capacity(block.len());
        let mut beta = Vec::with_capacity(block.len());
        for name in block {
            let j = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Schema(format!("no coefficient named `{name}`")))?;
            let k = active.iter().position(|&a| a == j).ok_or_else(|| {
                Error::Degenerate(format!("coefficient `{name}` was not estimated (constant column)"))
            })?;
            idx.push(k + 1);
            beta.push(self.coef[j]);
        }
        wald_block(&info, &idx, &beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Wald statistic `b' V^-1 b` for a block of parameters, where `V` is the
/// matching block of the inverse information.
pub fn wald_block(info: &DMatrix<f64>, idx: &[usize], beta: &[f64]) -> Result<WaldTest> {
    if idx.is_empty() {
        return Err(Error::InvalidInput("empty Wald block".into()));
    }
    let cov = inverse_spd(info, "Wald test")?;
    let k = idx.len();
    let v = DMatrix::from_fn(k, k, |a, b| cov[(idx[a], idx[b])]);
    let vinv = inverse_spd(&v, "Wald test covariance block")?;
    let b = DVector::from_column_slice(beta);
    let statistic = (b.transpose() * vinv * &b)[(0, 0)];
    let chi = ChiSquared::new(k as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(WaldTest {
        statistic,
        df: k,
        p_value: chi.sf(statistic),
    })
}

/// Multinomial logistic regression against reference category 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialFit {
    pub names: Vec<String>,
    /// Number of categories including the reference.
    pub n_categories: usize,
    /// Non-reference categories present in the training labels, ascending.
    pub categories: Vec<usize>,
    /// Per entry of `categories`.
    pub intercepts: Vec<f64>,
    pub coefs: Vec<Vec<f64>>,
    pub degenerate: Vec<String>,
    pub report: FitReport,
}

/// Categories absent from `y` get probability 0 at prediction time.
pub fn fit_multinomial(x: &Design, y: &[usize], n_categories: usize, opts: &NewtonOptions) -> Result<MultinomialFit> {
    check_design(x, y.len())?;
    if let Some(v) = y.iter().find(|&&v| v >= n_categories) {
        return Err(Error::InvalidInput(format!(
            "category {v} outside 0..{n_categories}"
        )));
    }
    if !y.contains(&0) {
        return Err(Error::Degenerate("reference category 0 does not occur".into()));
    }
    let categories: Vec<usize> = (1..n_categories).filter(|c| y.contains(c)).collect();
    let constant = constant_columns(x);
    let active: Vec<usize> = (0..x.ncols()).filter(|&j| !constant[j]).collect();
    let m = active.len() + 1;
    let k = categories.len();
    let q = k * m;
    let n = y.len();
    let eval = |theta: &[f64]| -> Evaluation {
        opts.exec
            .reduce_chunks(
                n,
                |lo, hi| {
                    let mut e = Evaluation::zeros(q);
                    let mut z = Vec::with_capacity(m);
                    let mut eta = vec![0.0; k];
                    let mut prob = vec![0.0; k];
                    for i in lo..hi {
                        z.clear();
                        z.push(1.0);
                        let r = x.row(i);
                        z.extend(active.iter().map(|&j| r[j]));
                        for c in 0..k {
                            eta[c] = z.iter().zip(&theta[c * m..(c + 1) * m]).map(|(a, b)| a * b).sum();
                        }
                        let mx = eta.iter().cloned().fold(0.0, f64::max);
                        let denom = (-mx).exp() + eta.iter().map(|v| (v - mx).exp()).sum::<f64>();
                        let log_denom = mx + denom.ln();
                        for c in 0..k {
                            prob[c] = (eta[c] - log_denom).exp();
                        }
                        let obs = categories.iter().position(|&c| c == y[i]);
                        e.loglik += obs.map_or(0.0, |c| eta[c]) - log_denom;
                        for c in 0..k {
                            let r = (obs == Some(c)) as u8 as f64 - prob[c];
                            for (a, zj) in z.iter().enumerate() {
                                e.score[c * m + a] += r * zj;
                            }
                        }
                        for c in 0..k {
                            for d in c..k {
                                let w = prob[c] * ((c == d) as u8 as f64 - prob[d]);
                                if w == 0.0 {
                                    continue;
                                }
                                for a in 0..m {
                                    let row = (c * m + a) * q;
                                    let start = if c == d { a } else { 0 };
                                    for b in start..m {
                                        e.info_upper[row + d * m + b] += w * z[a] * z[b];
                                    }
                                }
                            }
                        }
                    }
                    e
                },
                Evaluation::add,
            )
            .unwrap_or_else(|| Evaluation::zeros(q))
    };
    let res = newton(q, opts, eval);
    let mut report = res.report;
    let sds = column_sds(n, x.ncols(), |i, j| x.get(i, j));
    let mut intercepts = Vec::with_capacity(k);
    let mut coefs = Vec::with_capacity(k);
    for c in 0..k {
        let th = &res.theta[c * m..(c + 1) * m];
        intercepts.push(th[0]);
        let mut b = vec![0.0; x.ncols()];
        for (a, &j) in active.iter().enumerate() {
            b[j] = th[a + 1];
        }
        divergence_check(&mut report, &b, &sds, &x.names, opts.divergence_bound);
        coefs.push(b);
    }
    let degenerate = (0..x.ncols())
        .filter(|&j| constant[j])
        .map(|j| x.names[j].clone())
        .collect();
    Ok(MultinomialFit {
        names: x.names.clone(),
        n_categories,
        categories,
        intercepts,
        coefs,
        degenerate,
        report,
    })
}

impl MultinomialFit {
    /// Probabilities of all `n_categories` categories for one design row.
    pub fn probabilities(&self, row: &[f64]) -> Vec<f64> {
        let eta: Vec<f64> = self
            .intercepts
            .iter()
            .zip(&self.coefs)
            .map(|(b0, b)| b0 + row.iter().zip(b).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let mx = eta.iter().cloned().fold(0.0, f64::max);
        let denom = (-mx).exp() + eta.iter().map(|v| (v - mx).exp()).sum::<f64>();
        let mut p = vec![0.0; self.n_categories];
        p[0] = (-mx).exp() / denom;
        for (e, &c) in eta.iter().zip(&self.categories) {
            p[c] = (e - mx).exp() / denom;
        }
        p
    }

    pub fn predict(&self, x: &Design) -> Result<Vec<Vec<f64>>> {
        check_columns(&self.names, x)?;
        Ok((0..x.nrows).map(|i| self.probabilities(x.row(i))).collect())
    }

    /// Probability of category `c` per row.
    pub fn predict_category(&self, x: &Design, c: usize) -> Result<Vec<f64>> {
        Ok(self.predict(x)?.into_iter().map(|p| p[c]).collect())
    }
}
