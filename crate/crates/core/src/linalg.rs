//! Small dense helpers around nalgebra for the p x p systems of the Newton
//! solvers. Design matrices themselves are row-major [`Design`]s.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub names: Vec<String>,
    pub nrows: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(names: Vec<String>, nrows: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * names.len() {
            return Err(Error::InvalidInput(format!(
                "design data has {} values, expected {} x {}",
                data.len(),
                nrows,
                names.len()
            )));
        }
        Ok(Design { names, nrows, data })
    }

    pub fn empty(nrows: usize) -> Self {
        Design {
            names: Vec::new(),
            nrows,
            data: Vec::new(),
        }
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::InvalidInput(format!(
                    "design row {i} has {} values, expected {p}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Design {
            names,
            nrows: rows.len(),
            data,
        })
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.ncols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Design {
        let mut data = Vec::with_capacity(idx.len() * self.ncols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Design {
            names: self.names.clone(),
            nrows: idx.len(),
            data,
        }
    }

    /// Appends columns computed per row.
    pub fn with_columns<F>(&self, extra: &[String], mut f: F) -> Design
    where
        F: FnMut(usize, &[f64]) -> Vec<f64>,
    {
        let p = self.ncols() + extra.len();
        let mut data = Vec::with_capacity(self.nrows * p);
        for i in 0..self.nrows {
            let row = self.row(i);
            data.extend_from_slice(row);
            let add = f(i, row);
            debug_assert_eq!(add.len(), extra.len());
            data.extend_from_slice(&add);
        }
        let mut names = self.names.clone();
        names.extend(extra.iter().cloned());
        Design {
            names,
            nrows: self.nrows,
            data,
        }
    }

    /// Keeps the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Design {
        let mut data = Vec::with_capacity(self.nrows * cols.len());
        for i in 0..self.nrows {
            let row = self.row(i);
            data.extend(cols.iter().map(|&j| row[j]));
        }
        Design {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            nrows: self.nrows,
            data,
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adds `scale * x x^T` to the upper triangle of a packed row-major p x p buffer.
#[inline]
pub fn rank_one_upper(acc: &mut [f64], x: &[f64], scale: f64) {
    let p = x.len();
    for a in 0..p {
        let s = scale * x[a];
        if s == 0.0 {
            continue;
        }
        let row = &mut acc[a * p..(a + 1) * p];
        for b in a..p {
            row[b] += s * x[b];
        }
    }
}

/// Mirrors the upper triangle of a packed p x p buffer into a full matrix.
pub fn symmetric_from_upper(upper: &[f64], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| {
        if i <= j {
            upper[i * p + j]
        } else {
            upper[j * p + i]
        }
    })
}

/// Solves `info * step = score` for a symmetric positive semi-definite
/// information matrix. Falls back to a small ridge when the Cholesky
/// factorisation fails.
pub fn solve_spd(info: &DMatrix<f64>, score: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = info.clone().cholesky() {
        let step = ch.solve(score);
        if step.iter().all(|v| v.is_finite()) {
            return Some(step);
        }
    }
    let p = info.nrows();
    let scale = (0..p).map(|i| info[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut ridge = 1e-10 * scale;
    for _ in 0..8 {
        let mut m = info.clone();
        for i in 0..p {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let step = ch.solve(score);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        ridge *= 100.0;
    }
    None
}

/// Inverse of a symmetric positive definite matrix; errors when the
/// smallest eigenvalue is not clearly positive relative to the largest.
pub fn inverse_spd(info: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let p = info.nrows();
    if p == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = info.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-10 * max {
        return Err(Error::Singular(format!(
            "{what}: eigenvalue range [{min:.3e}, {max:.3e}]; check for collinear columns"
        )));
    }
    info.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(format!("{what}: Cholesky factorisation failed")))
}
