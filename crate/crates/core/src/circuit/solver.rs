//! Sparse SPD linear algebra for the mesh.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs()))
    }

    /// Weak row diagonal dominance with positive diagonal.
    pub fn is_diagonally_dominant(&self) -> bool {
        (0..self.n).all(|i| {
            let (diag, off) = self.row(i).fold((0.0, 0.0), |(d, o), (j, v)| {
                if i == j {
                    (d + v, o)
                } else {
                    (d, o + v.abs())
                }
            });
            diag > 0.0 && diag * (1.0 + 1e-12) >= off
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn default_iteration_cap(n: usize) -> usize {
    ((50.0 * (n as f64).sqrt()).ceil() as usize).max(50)
}

/// Jacobi-preconditioned conjugate gradient.
///
/// Stops once `‖b - A x‖ <= tol ‖b‖`, checked against the true residual so the
/// reported value is not the recurrence's drifted estimate.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    let b_norm = norm(b);
    if n == 0 || b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < max_iter {
        a.mul_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        rel = norm(&r) / b_norm;
        if rel <= tol {
            // confirm with the true residual
            a.mul_into(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            rel = norm(&r) / b_norm;
            if rel <= tol {
                return Ok(CgOutcome {
                    x,
                    iterations,
                    relative_residual: rel,
                });
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver {
        iterations,
        residual: rel,
    })
}

/// Largest system the dense Cholesky path accepts.
pub const DENSE_MAX_UNKNOWNS: usize = 2_500;

/// Dense Cholesky solve; the reference path for small systems.
pub fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    if n > DENSE_MAX_UNKNOWNS {
        return Err(Error::Size(format!(
            "dense solve is limited to {DENSE_MAX_UNKNOWNS} unknowns, got {n}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let chol = a
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::Data("conductance matrix is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}
