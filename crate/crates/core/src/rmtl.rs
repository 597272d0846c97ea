//! Regularized multi-task logistic regression over landmark-indexed tasks
//! with a chain penalty `||W G||_F^2` that smooths coefficients between
//! neighbouring tasks.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, Design};
use crate::stats::{expit, log1pexp};

/// Chain relatedness matrix: `t x (t-1)`, column `k` is `e_k - e_{k+1}`.
pub fn build_relatedness(t: usize) -> DMatrix<f64> {
    let cols = t.saturating_sub(1);
    DMatrix::from_fn(t, cols, |i, k| {
        if i == k {
            1.0
        } else if i == k + 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// `sum_k ||w_k - w_{k+1}||^2` for task coefficient vectors `w`.
pub fn chain_penalty(w: &[Vec<f64>]) -> f64 {
    w.windows(2)
        .map(|p| p[0].iter().zip(&p[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// Landmark (or other key) identifying the task.
    pub id: u32,
    /// Standardized design.
    pub x: Design,
    /// Labels in {+1, -1}.
    pub y: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Task {
    /// Standardizes `raw` with its own column means and sample sds;
    /// constant columns are centred and left unscaled.
    pub fn new(id: u32, raw: &Design, y: Vec<f64>) -> Result<Self> {
        if raw.nrows != y.len() {
            return Err(Error::InvalidInput(format!(
                "task {id}: {} rows but {} labels",
                raw.nrows,
                y.len()
            )));
        }
        if let Some(v) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidInput(format!("task {id}: label {v} is not +1/-1")));
        }
        let n = raw.nrows as f64;
        let p = raw.ncols();
        let means: Vec<f64> = (0..p).map(|j| (0..raw.nrows).map(|i| raw.get(i, j)).sum::<f64>() / n).collect();
        let sds: Vec<f64> = (0..p)
            .map(|j| {
                let ss: f64 = (0..raw.nrows).map(|i| (raw.get(i, j) - means[j]).powi(2)).sum();
                let sd = (ss / (n - 1.0).max(1.0)).sqrt();
                if sd > 1e-12 * means[j].abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let x = standardize(raw, &means, &sds);
        Ok(Task {
            id,
            x,
            y,
            means,
            sds,
        })
    }

    pub fn has_both_classes(&self) -> bool {
        self.y.contains(&1.0) && self.y.contains(&-1.0)
    }

    fn mean_loss(&self, w: &[f64], c: f64) -> f64 {
        let n = self.y.len() as f64;
        (0..self.x.nrows)
            .map(|i| log1pexp(-self.y[i] * (dot(self.x.row(i), w) + c)))
            .sum::<f64>()
            / n
    }

    /// Mean loss and its gradient with respect to `(w, c)`.
    fn loss_grad(&self, w: &[f64], c: f64) -> (f64, Vec<f64>, f64) {
        let n = self.y.len() as f64;
        let mut gw = vec![0.0; w.len()];
        let mut gc = 0.0;
        let mut loss = 0.0;
        for i in 0..self.x.nrows {
            let row = self.x.row(i);
            let m = self.y[i] * (dot(row, w) + c);
            loss += log1pexp(-m);
            let r = -self.y[i] * expit(-m);
            gc += r;
            for (g, xv) in gw.iter_mut().zip(row) {
                *g += r * xv;
            }
        }
        gw.iter_mut().for_each(|g| *g /= n);
        (loss / n, gw, gc / n)
    }
}

fn standardize(raw: &Design, means: &[f64], sds: &[f64]) -> Design {
    let rows: Vec<Vec<f64>> = (0..raw.nrows)
        .map(|i| {
            raw.row(i)
                .iter()
                .zip(means.iter().zip(sds))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();
    Design::from_rows(raw.names.clone(), &rows).expect("row widths match")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmtlOptions {
    pub max_iter: usize,
    /// Stop once the largest gradient component is at most this.
    pub grad_tol: f64,
    /// Stop once the relative objective change stays below this for
    /// `patience` consecutive accepted steps.
    pub rel_tol: f64,
    pub patience: usize,
    pub exec: Exec,
}

impl Default for RmtlOptions {
    fn default() -> Self {
        RmtlOptions {
            max_iter: 5000,
            grad_tol: 1e-6,
            rel_tol: 1e-8,
            patience: 10,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmtlFit {
    pub names: Vec<String>,
    pub task_ids: Vec<u32>,
    /// Coefficients per task (on the standardized scale).
    pub w: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub sds: Vec<Vec<f64>>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_gradient: f64,
}

/// Solves `(a I + b Lap) x = d` for the path-graph Laplacian `Lap` of size
/// `d.len()` (Thomas algorithm).
fn solve_chain(a: f64, b: f64, d: &mut [f64]) {
    let t = d.len();
    if t == 1 || b == 0.0 {
        d.iter_mut().for_each(|v| *v /= a);
        return;
    }
    let diag = |k: usize| a + b * if k == 0 || k == t - 1 { 1.0 } else { 2.0 };
    let off = -b;
    let mut cp = vec![0.0; t];
    let mut den = diag(0);
    cp[0] = off / den;
    d[0] /= den;
    for k in 1..t {
        den = diag(k) - off * cp[k - 1];
        cp[k] = off / den;
        d[k] = (d[k] - off * d[k - 1]) / den;
    }
    for k in (0..t - 1).rev() {
        d[k] -= cp[k] * d[k + 1];
    }
}

struct State {
    w: Vec<Vec<f64>>,
    c: Vec<f64>,
}

fn penalty(s: &State, l1: f64, l2: f64) -> f64 {
    let ridge: f64 = s.w.iter().flatten().map(|v| v * v).sum();
    l1 * chain_penalty(&s.w) + l2 * ridge
}

fn objective(tasks: &[Task], s: &State, l1: f64, l2: f64, exec: Exec) -> f64 {
    let losses = exec.map_range(tasks.len(), |i| tasks[i].mean_loss(&s.w[i], s.c[i]));
    losses.iter().sum::<f64>() + penalty(s, l1, l2)
}

/// Minimizes `sum_i meanloss_i(w_i, c_i) + l1 ||W G||^2 + l2 ||W||^2` by
/// accelerated majorize-minimize steps whose quadratic model keeps the
/// penalty exact. Tasks are ordered by `id`; the chain links consecutive
/// tasks.
pub fn fit_rmtl(
    tasks: &[Task],
    lambda1: f64,
    lambda2: f64,
    opts: &RmtlOptions,
    init: Option<(&[Vec<f64>], &[f64])>,
) -> Result<RmtlFit> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "penalties must be nonnegative, got ({lambda1}, {lambda2})"
        )));
    }
    if tasks.is_empty() {
        return Err(Error::InvalidInput("no tasks".into()));
    }
    let p = tasks[0].x.ncols();
    for t in tasks {
        if t.x.ncols() != p || t.x.names != tasks[0].x.names {
            return Err(Error::Schema(format!("task {} has a different column layout", t.id)));
        }
        if !t.has_both_classes() {
            return Err(Error::Degenerate(format!("task {} does not contain both classes", t.id)));
        }
    }
    if tasks.windows(2).any(|w| w[1].id <= w[0].id) {
        return Err(Error::InvalidInput("tasks must be ordered by increasing id".into()));
    }
    let nt = tasks.len();
    let exec = opts.exec;
    let mut cur = match init {
        Some((w, c)) if w.len() == nt && c.len() == nt => State {
            w: w.to_vec(),
            c: c.to_vec(),
        },
        _ => State {
            w: vec![vec![0.0; p]; nt],
            c: vec![0.0; nt],
        },
    };

    // full gradient (loss + penalty) at a state
    let gradient = |s: &State| -> (f64, Vec<Vec<f64>>, Vec<f64>) {
        let parts = exec.map_range(nt, |i| tasks[i].loss_grad(&s.w[i], s.c[i]));
        let loss: f64 = parts.iter().map(|p| p.0).sum();
        let mut gw: Vec<Vec<f64>> = parts.iter().map(|p| p.1.clone()).collect();
        let gc: Vec<f64> = parts.iter().map(|p| p.2).collect();
        for i in 0..nt {
            for j in 0..p {
                let mut lap = 0.0;
                if i > 0 {
                    lap += s.w[i][j] - s.w[i - 1][j];
                }
                if i + 1 < nt {
                    lap += s.w[i][j] - s.w[i + 1][j];
                }
                gw[i][j] += 2.0 * lambda1 * lap + 2.0 * lambda2 * s.w[i][j];
            }
        }
        (loss, gw, gc)
    };
    let max_grad = |gw: &[Vec<f64>], gc: &[f64]| {
        gw.iter()
            .flatten()
            .chain(gc)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };

    let mut fobj = objective(tasks, &cur, lambda1, lambda2, exec);
    if !fobj.is_finite() {
        return Err(Error::Fit("objective is not finite at the starting point".into()));
    }
    let mut trace = vec![fobj];
    let mut lip = 0.25;
    let mut prev = State {
        w: cur.w.clone(),
        c: cur.c.clone(),
    };
    let mut momentum = 1.0f64;
    let mut quiet = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_grad = f64::INFINITY;

    while iterations < opts.max_iter {
        let (_, gw_cur, gc_cur) = gradient(&cur);
        last_grad = max_grad(&gw_cur, &gc_cur);
        if last_grad <= opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        // extrapolated point
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        let y = State {
            w: cur
                .w
                .iter()
                .zip(&prev.w)
                .map(|(a, b)| a.iter().zip(b).map(|(x, z)| x + beta * (x - z)).collect())
                .collect(),
            c: cur.c.iter().zip(&prev.c).map(|(x, z)| x + beta * (x - z)).collect(),
        };
        let (loss_y, gw, gc) = gradient(&y);
        // penalty gradient is exact in the model, so the step solves
        // (L I + 2 l1 Lap + 2 l2 I) dW = -grad per feature
        let (cand, loss_new) = loop {
            let mut step_w = vec![vec![0.0; p]; nt];
            let mut col = vec![0.0; nt];
            for j in 0..p {
                for i in 0..nt {
                    col[i] = -gw[i][j];
                }
                solve_chain(lip + 2.0 * lambda2, 2.0 * lambda1, &mut col);
                for i in 0..nt {
                    step_w[i][j] = col[i];
                }
            }
            let step_c: Vec<f64> = gc.iter().map(|g| -g / lip).collect();
            let cand = State {
                w: y.w.iter().zip(&step_w).map(|(a, d)| a.iter().zip(d).map(|(x, z)| x + z).collect()).collect(),
                c: y.c.iter().zip(&step_c).map(|(a, d)| a + d).collect(),
            };
            let losses = exec.map_range(nt, |i| tasks[i].mean_loss(&cand.w[i], cand.c[i]));
            let loss_new: f64 = losses.iter().sum();
            // loss-part of the majorization; the penalty part is exact
            let lin: f64 = gw
                .iter()
                .zip(&step_w)
                .map(|(g, d)| {
                    g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum::<f64>()
                + gc.iter().zip(&step_c).map(|(a, b)| a * b).sum::<f64>();
            // remove penalty part of the gradient from the linear term
            let pen_lin: f64 = {
                let mut s = 0.0;
                for i in 0..nt {
                    for j in 0..p {
                        let mut lap = 0.0;
                        if i > 0 {
                            lap += y.w[i][j] - y.w[i - 1][j];
                        }
                        if i + 1 < nt {
                            lap += y.w[i][j] - y.w[i + 1][j];
                        }
                        s += (2.0 * lambda1 * lap + 2.0 * lambda2 * y.w[i][j]) * step_w[i][j];
                    }
                }
                s
            };
            let sq: f64 = step_w.iter().flatten().chain(&step_c).map(|v| v * v).sum();
            let bound = loss_y + (lin - pen_lin) + 0.5 * lip * sq;
            if loss_new.is_finite() && loss_new <= bound + 1e-14 * loss_y.abs().max(1.0) {
                break (cand, loss_new);
            }
            lip *= 2.0;
            if lip > 1e12 {
                return Err(Error::Fit("line search failed; objective diverging".into()));
            }
        };
        let fnew = loss_new + penalty(&cand, lambda1, lambda2);
        if !fnew.is_finite() {
            return Err(Error::Fit("objective diverged".into()));
        }
        if fnew > fobj {
            // restart momentum from the current iterate
            momentum = 1.0;
            prev = State {
                w: cur.w.clone(),
                c: cur.c.clone(),
            };
            if beta == 0.0 {
                // a plain MM step cannot increase the objective beyond rounding
                quiet += 1;
                if quiet >= opts.patience {
                    converged = true;
                    break;
                }
            }
            continue;
        }
        let rel = (fobj - fnew).abs() / fobj.abs().max(1e-300);
        prev = std::mem::replace(&mut cur, cand);
        fobj = fnew;
        momentum = next_momentum;
        trace.push(fobj);
        if rel < opts.rel_tol {
            quiet += 1;
            if quiet >= opts.patience {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    if iterations >= opts.max_iter {
        let (_, gw, gc) = gradient(&cur);
        last_grad = max_grad(&gw, &gc);
    }
    Ok(RmtlFit {
        names: tasks[0].x.names.clone(),
        task_ids: tasks.iter().map(|t| t.id).collect(),
        w: cur.w,
        c: cur.c,
        means: tasks.iter().map(|t| t.means.clone()).collect(),
        sds: tasks.iter().map(|t| t.sds.clone()).collect(),
        lambda1,
        lambda2,
        objective_trace: trace,
        iterations,
        converged,
        max_gradient: last_grad,
    })
}

impl RmtlFit {
    pub fn task_index(&self, id: u32) -> Result<usize> {
        self.task_ids
            .iter()
            .position(|&t| t == id)
            .ok_or_else(|| Error::Domain(format!("no task {id}; fitted tasks {:?}", self.task_ids)))
    }

    /// Risk for raw (unstandardized) rows under task `id`.
    pub fn predict(&self, id: u32, x: &Design) -> Result<Vec<f64>> {
        crate::glm::check_columns(&self.names, x)?;
        let k = self.task_index(id)?;
        Ok((0..x.nrows)
            .map(|i| {
                let eta: f64 = x
                    .row(i)
                    .iter()
                    .zip(&self.w[k])
                    .zip(self.means[k].iter().zip(&self.sds[k]))
                    .map(|((v, w), (m, s))| w * (v - m) / s)
                    .sum();
                expit(self.c[k] + eta)
            })
            .collect())
    }
}

/// Raw per-task data for tuning: design, +1/-1 labels, group key per row.
#[derive(Debug, Clone)]
pub struct RawTask {
    pub id: u32,
    pub x: Design,
    pub y: Vec<f64>,
    pub groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub lambda1: f64,
    /// Mean validation loss per grid value (NaN when nothing was evaluated).
    pub losses: Vec<f64>,
    pub skipped: usize,
}

/// `n` points log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// K-fold cross-validation of `lambda1` with folds formed from groups, so
/// all rows of a group share a fold in every task. Ties go to the larger
/// value.
pub fn tune_lambda1(
    tasks: &[RawTask],
    grid: &[f64],
    lambda2: f64,
    k: usize,
    seed: u64,
    opts: &RmtlOptions,
) -> Result<TuningResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    if grid.len() == 1 {
        return Ok(TuningResult {
            lambda1: grid[0],
            losses: vec![f64::NAN],
            skipped: 0,
        });
    }
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let mut keys: Vec<&str> = tasks
        .iter()
        .flat_map(|t| t.groups.iter().map(String::as_str))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    keys.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.shuffle(&mut rng);
    let fold_of: HashMap<&str, usize> = keys.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();

    let mut sums = vec![0.0; grid.len()];
    let mut counts = vec![0usize; grid.len()];
    let mut skipped = 0;
    let inner = RmtlOptions {
        exec: Exec::Sequential,
        ..*opts
    };
    let per_fold = opts.exec.map_range(k, |fold| -> Result<(Vec<f64>, Vec<usize>, usize)> {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        let mut skipped = 0;
        for t in tasks {
            let (tr, va): (Vec<usize>, Vec<usize>) =
                (0..t.y.len()).partition(|&i| fold_of[t.groups[i].as_str()] != fold);
            let task = Task::new(t.id, &t.x.select_rows(&tr), tr.iter().map(|&i| t.y[i]).collect())?;
            if !task.has_both_classes() || va.is_empty() {
                skipped += 1;
                continue;
            }
            let vx = standardize(&t.x.select_rows(&va), &task.means, &task.sds);
            let vy: Vec<f64> = va.iter().map(|&i| t.y[i]).collect();
            valid.push((vx, vy));
            train.push(task);
        }
        let mut sums = vec![0.0; grid.len()];
        let mut counts = vec![0usize; grid.len()];
        if train.is_empty() {
            return Ok((sums, counts, skipped));
        }
        // path from the most to the least smoothed fit
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
        let mut warm: Option<(Vec<Vec<f64>>, Vec<f64>)> = None;
        for g in order {
            let l1 = grid[g];
            let fit = fit_rmtl(
                &train,
                l1,
                lambda2,
                &inner,
                warm.as_ref().map(|(w, c)| (w.as_slice(), c.as_slice())),
            )?;
            for (ti, (vx, vy)) in valid.iter().enumerate() {
                let loss: f64 = (0..vx.nrows)
                    .map(|i| log1pexp(-vy[i] * (dot(vx.row(i), &fit.w[ti]) + fit.c[ti])))
                    .sum::<f64>()
                    / vy.len() as f64;
                sums[g] += loss;
                counts[g] += 1;
            }
            warm = Some((fit.w, fit.c));
        }
        Ok((sums, counts, skipped))
    });
    for r in per_fold {
        let (s, c, sk) = r?;
        for g in 0..grid.len() {
            sums[g] += s[g];
            counts[g] += c[g];
        }
        skipped += sk;
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Degenerate("every fold-task lacked one class; cannot tune".into()));
    }
    let losses: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    let mut best = 0;
    for g in 0..grid.len() {
        let better = losses[g] < losses[best] || (losses[g] == losses[best] && grid[g] > grid[best]);
        if losses[best].is_nan() || better {
            best = g;
        }
    }
    Ok(TuningResult {
        lambda1: grid[best],
        losses,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::fit_logistic;
    use crate::optim::NewtonOptions;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn raw_task(n: usize, beta: &[f64], icpt: f64, rng: &mut ChaCha8Rng) -> (Design, Vec<f64>) {
        let p = beta.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| {
                let pr = expit(icpt + dot(r, beta));
                if rng.random::<f64>() < pr {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        (Design::from_rows(names, &rows).unwrap(), y)
    }

    #[test]
    fn relatedness_matrix() {
        assert_eq!(build_relatedness(1).ncols(), 0);
        let g = build_relatedness(3);
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!((w * &g).norm_squared(), 0.0);
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!((&w * build_relatedness(2)).norm_squared(), 2.0);
        assert_eq!(chain_penalty(&[vec![1.0, 0.0], vec![0.0, 1.0]]), 2.0);
    }

    #[test]
    fn chain_solver_matches_dense() {
        let mut d = vec![1.0, -2.0, 0.5, 3.0];
        let rhs = d.clone();
        solve_chain(0.7, 1.3, &mut d);
        let g = build_relatedness(4);
        let m = DMatrix::identity(4, 4) * 0.7 + (&g * g.transpose()) * 1.3;
        let back = m * nalgebra::DVector::from_vec(d);
        for (a, b) in back.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardized_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = raw_task(200, &[0.5, -0.5], -1.0, &mut rng);
        let t = Task::new(0, &x, y).unwrap();
        for j in 0..2 {
            let col = t.x.column(j);
            let m = col.iter().sum::<f64>() / 200.0;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 199.0).sqrt();
            assert!(m.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn unpenalized_fit_equals_separate_logistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tasks: Vec<Task> = (0..3)
            .map(|k| {
                let (x, y) = raw_task(300, &[0.8, -0.4, 0.2], -1.0 + 0.2 * k as f64, &mut rng);
                Task::new(k, &x, y).unwrap()
            })
            .collect();
        let opts = RmtlOptions {
            grad_tol: 1e-9,
            rel_tol: 0.0,
            ..RmtlOptions::default()
        };
        let fit = fit_rmtl(&tasks, 0.0, 0.0, &opts, None).unwrap();
        assert!(fit.converged);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        for (k, t) in tasks.iter().enumerate() {
            let y01: Vec<f64> = t.y.iter().map(|&v| (v + 1.0) / 2.0).collect();
            let lr = fit_logistic(&t.x, &y01, &NewtonOptions::default()).unwrap();
            assert!((lr.intercept - fit.c[k]).abs() < 1e-6);
            for (a, b) in lr.coef.iter().zip(&fit.w[k]) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn heavy_chain_penalty_fuses_tasks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tasks: Vec<Task> = (0..2)
            .map(|k| {
                let b = if k == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
                let (x, y) = raw_task(400, &b, -0.5, &mut rng);
                Task::new(k, &x, y).unwrap()
            })
            .collect();
        let fit = fit_rmtl(&tasks, 1e6, 0.0, &RmtlOptions::default(), None).unwrap();
        let d: f64 = fit.w[0].iter().zip(&fit.w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(d < 1e-3, "distance {d}");
    }

    #[test]
    fn heavy_ridge_shrinks_to_base_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = raw_task(500, &[1.0, 1.0], -1.0, &mut rng);
        let rate = y.iter().filter(|&&v| v == 1.0).count() as f64 / 500.0;
        let t = Task::new(0, &x, y).unwrap();
        let fit = fit_rmtl(&[t], 0.0, 1e6, &RmtlOptions::default(), None).unwrap();
        let norm: f64 = fit.w[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3);
        assert!((fit.c[0] - (rate / (1.0 - rate)).ln()).abs() < 1e-3);
    }

    #[test]
    fn one_class_task_is_named() {
        let x = Design::from_rows(vec!["a".into()], &[vec![1.0], vec![2.0]]).unwrap();
        let t = Task::new(7, &x, vec![-1.0, -1.0]).unwrap();
        let err = fit_rmtl(&[t], 0.1, 0.0, &RmtlOptions::default(), None).unwrap_err();
        assert!(err.to_string().contains("task 7"));
    }

    #[test]
    fn prediction_uses_task_standardization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = raw_task(300, &[0.7], -0.3, &mut rng);
        let t = Task::new(4, &x, y).unwrap();
        let fit = fit_rmtl(&[t.clone()], 0.0, 0.0, &RmtlOptions::default(), None).unwrap();
        let at_mean = Design::from_rows(x.names.clone(), &[vec![t.means[0]]]).unwrap();
        assert!((fit.predict(4, &at_mean).unwrap()[0] - expit(fit.c[0])).abs() < 1e-15);
        assert!(fit.predict(5, &at_mean).is_err());
        // affine rescaling of the raw input is absorbed by standardization
        let scaled = Design::from_rows(x.names.clone(), &(0..300).map(|i| vec![3.0 * x.get(i, 0) + 2.0]).collect::<Vec<_>>()).unwrap();
        let t2 = Task::new(4, &scaled, t.y.clone()).unwrap();
        let fit2 = fit_rmtl(&[t2], 0.0, 0.0, &RmtlOptions::default(), None).unwrap();
        let p1 = fit.predict(4, &x).unwrap();
        let p2 = fit2.predict(4, &scaled).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn tuning_is_deterministic_and_single_value_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tasks: Vec<RawTask> = (0..3)
            .map(|k| {
                let (x, y) = raw_task(150, &[0.6, -0.6], -0.5, &mut rng);
                RawTask {
                    id: k,
                    x,
                    y,
                    groups: (0..150).map(|i| format!("A{}", i % 60)).collect(),
                }
            })
            .collect();
        let grid = log_grid(1e-3, 1e2, 4);
        let opts = RmtlOptions::default();
        let a = tune_lambda1(&tasks, &grid, 0.0, 5, 9, &opts).unwrap();
        let b = tune_lambda1(&tasks, &grid, 0.0, 5, 9, &opts).unwrap();
        assert_eq!(a, b);
        assert!(grid.contains(&a.lambda1));
        let one = tune_lambda1(&tasks, &[0.5], 0.0, 5, 9, &opts).unwrap();
        assert_eq!(one.lambda1, 0.5);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1e2, 10);
        assert_eq!(g.len(), 10);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[9] - 1e2).abs() < 1e-10);
    }
}
