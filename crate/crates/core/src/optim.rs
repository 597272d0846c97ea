//! Damped Newton iteration shared by the likelihood-based fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::linalg::{solve_spd, symmetric_from_upper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Stop when the largest absolute score component falls below this.
    pub grad_tol: f64,
    /// Stop when the relative log-likelihood change falls below this.
    pub rel_tol: f64,
    /// Coefficients beyond this many standard deviations of their column
    /// are reported as diverging.
    pub divergence_bound: f64,
    pub exec: Exec,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 100,
            grad_tol: 1e-8,
            rel_tol: 1e-10,
            divergence_bound: 20.0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub max_score: f64,
    /// Some standardized coefficient exceeded the divergence bound.
    pub diverged: bool,
    pub warnings: Vec<String>,
}

impl FitReport {
    /// Converged without diverging coefficients.
    pub fn ok(&self) -> bool {
        self.converged && !self.diverged
    }
}

/// Log-likelihood, score and packed upper-triangular information at a point.
pub struct Evaluation {
    pub loglik: f64,
    pub score: Vec<f64>,
    pub info_upper: Vec<f64>,
}

impl Evaluation {
    pub fn zeros(p: usize) -> Self {
        Evaluation {
            loglik: 0.0,
            score: vec![0.0; p],
            info_upper: vec![0.0; p * p],
        }
    }

    pub fn add(mut self, other: Evaluation) -> Self {
        self.loglik += other.loglik;
        for (a, b) in self.score.iter_mut().zip(other.score) {
            *a += b;
        }
        for (a, b) in self.info_upper.iter_mut().zip(other.info_upper) {
            *a += b;
        }
        self
    }

    pub fn information(&self) -> DMatrix<f64> {
        symmetric_from_upper(&self.info_upper, self.score.len())
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub struct NewtonResult {
    pub theta: Vec<f64>,
    pub last: Evaluation,
    pub report: FitReport,
}

/// Maximises a concave log-likelihood from zero. Steps are halved until the
/// log-likelihood does not decrease.
pub fn newton<F>(p: usize, opts: &NewtonOptions, eval: F) -> NewtonResult
where
    F: Fn(&[f64]) -> Evaluation,
{
    let mut theta = vec![0.0; p];
    let mut cur = eval(&theta);
    let mut report = FitReport::default();
    if p == 0 {
        report.converged = true;
        report.loglik = cur.loglik;
        return NewtonResult {
            theta,
            last: cur,
            report,
        };
    }
    loop {
        if max_abs(&cur.score) < opts.grad_tol {
            report.converged = true;
            break;
        }
        if report.iterations >= opts.max_iter {
            report.warnings.push(format!("no convergence in {} iterations", opts.max_iter));
            break;
        }
        let info = cur.information();
        let Some(step) = solve_spd(&info, &DVector::from_column_slice(&cur.score)) else {
            report.warnings.push("information matrix not positive definite".into());
            break;
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let next = eval(&cand);
            let slack = 1e-12 * cur.loglik.abs().max(1.0);
            if next.loglik.is_finite() && next.loglik >= cur.loglik - slack {
                accepted = Some((cand, next));
                break;
            }
            t *= 0.5;
        }
        report.iterations += 1;
        let Some((cand, next)) = accepted else {
            report.warnings.push("step halving failed to improve the likelihood".into());
            break;
        };
        let rel = (next.loglik - cur.loglik).abs() / cur.loglik.abs().max(1e-300);
        theta = cand;
        cur = next;
        if rel < opts.rel_tol {
            report.converged = true;
            break;
        }
    }
    report.loglik = cur.loglik;
    report.max_score = max_abs(&cur.score);
    NewtonResult {
        theta,
        last: cur,
        report,
    }
}

/// Population standard deviation of each column (0 for constant columns).
pub fn column_sds(rows: usize, cols: usize, get: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..cols)
        .map(|j| {
            let mean = (0..rows).map(|i| get(i, j)).sum::<f64>() / rows.max(1) as f64;
            let var = (0..rows).map(|i| (get(i, j) - mean).powi(2)).sum::<f64>() / rows.max(1) as f64;
            var.sqrt()
        })
        .collect()
}
