//! Gram matrix, dropout regularization diagonal, and the regularized
//! precision matrix shared by every solver.
//!
//! The gram matrix `G = XᵀX` holds item co-occurrence counts; its diagonal
//! equals item popularity. Regularization enters as a per-item diagonal
//! `Λ_jj = p/(1−p)·G_jj + λ` derived from a dropout probability `p` (plain
//! L2 when `p = 0`). The precision matrix `P = (G + diag(Λ))⁻¹` is computed
//! with a Cholesky factorization and fully materialized: the solvers read
//! its diagonal and scale its columns.

use std::path::Path;

use nalgebra::DMatrix;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::container;
use crate::error::{Error, Result};
use crate::interactions::InteractionMatrix;

/// Dense symmetric item co-occurrence matrix `XᵀX`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
}

impl GramMatrix {
    /// Wraps a dense symmetric matrix. Symmetry is checked exactly: gram
    /// matrices are constructed symmetrically, never merely up to roundoff.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::InvalidInput(format!(
                "gram matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        for j in 0..values.ncols() {
            for i in 0..j {
                if values[(i, j)] != values[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "gram matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Diagonal of `G`, which equals the per-item interaction counts.
    pub fn diag(&self) -> Vec<f64> {
        (0..self.n()).map(|j| self.values[(j, j)]).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_matrix(path, &self.values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_values(container::read_matrix(path)?)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        container::write_matrix_csv(path, &self.values)
    }
}

fn item_user_lists(x: &InteractionMatrix) -> Vec<Vec<u32>> {
    let mut lists = vec![Vec::new(); x.num_items()];
    for (u, row) in x.rows().iter().enumerate() {
        for &i in row {
            lists[i as usize].push(u as u32);
        }
    }
    lists
}

fn fill_gram_column(x: &InteractionMatrix, users_of_item: &[u32], column: &mut [f64]) {
    for &u in users_of_item {
        for &j in x.row(u as usize) {
            column[j as usize] += 1.0;
        }
    }
}

/// Computes `G = XᵀX` with exact integer co-occurrence counts accumulated
/// in doubles. Dispatches to the parallel kernel when the `parallel`
/// feature is enabled.
pub fn gram(x: &InteractionMatrix) -> GramMatrix {
    #[cfg(feature = "parallel")]
    {
        gram_par(x)
    }
    #[cfg(not(feature = "parallel"))]
    {
        gram_seq(x)
    }
}

/// Sequential gram kernel.
pub fn gram_seq(x: &InteractionMatrix) -> GramMatrix {
    let n = x.num_items();
    let lists = item_user_lists(x);
    let mut values = DMatrix::<f64>::zeros(n, n);
    for (i, column) in values.as_mut_slice().chunks_mut(n.max(1)).enumerate() {
        fill_gram_column(x, &lists[i], column);
    }
    GramMatrix { values }
}

/// Parallel gram kernel: each item's column is filled independently.
#[cfg(feature = "parallel")]
pub fn gram_par(x: &InteractionMatrix) -> GramMatrix {
    let n = x.num_items();
    let lists = item_user_lists(x);
    let mut values = DMatrix::<f64>::zeros(n, n);
    values
        .as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, column)| fill_gram_column(x, &lists[i], column));
    GramMatrix { values }
}

/// Per-item regularization strengths `Λ_jj = p/(1−p)·G_jj + λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegDiagonal {
    values: Vec<f64>,
    lambda: f64,
    dropout_p: f64,
}

impl RegDiagonal {
    /// Constant `λ` diagonal (dropout disabled), i.e. plain L2.
    pub fn constant(lambda: f64, n: usize) -> Result<Self> {
        check_reg_params(0.0, lambda)?;
        Ok(Self {
            values: vec![lambda; n],
            lambda,
            dropout_p: 0.0,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_reg_params(dropout_p: f64, lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(Error::InvalidInput(format!(
            "dropout probability must be in [0, 1), got {dropout_p}"
        )));
    }
    if lambda.is_nan() || lambda <= 0.0 {
        // λ = 0 would leave the precision matrix without a positive
        // definiteness guarantee.
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(())
}

/// Builds the dropout-derived regularization diagonal from a gram matrix.
/// `p = 0` collapses to the constant vector `λ`.
pub fn dropout_diagonal(g: &GramMatrix, dropout_p: f64, lambda: f64) -> Result<RegDiagonal> {
    check_reg_params(dropout_p, lambda)?;
    let scale = dropout_p / (1.0 - dropout_p);
    let values = g.diag().iter().map(|&gjj| scale * gjj + lambda).collect();
    Ok(RegDiagonal {
        values,
        lambda,
        dropout_p,
    })
}

/// Symmetric positive-definite inverse `P = (G + diag(Λ))⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    values: DMatrix<f64>,
}

impl PrecisionMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n()).map(|j| self.values[(j, j)]).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_matrix(path, &self.values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let values = container::read_matrix(path)?;
        if values != values.transpose() {
            return Err(Error::InvalidInput(
                "precision matrix file is not symmetric".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        container::write_matrix_csv(path, &self.values)
    }
}

/// Inverts `G + diag(Λ)` through a Cholesky factorization. Fails with the
/// offending pivot index if the matrix is not numerically positive
/// definite (impossible for a true gram matrix and `λ > 0`).
pub fn precision(g: &GramMatrix, reg: &RegDiagonal) -> Result<PrecisionMatrix> {
    let n = g.n();
    if reg.len() != n {
        return Err(Error::InvalidInput(format!(
            "regularization diagonal has length {}, expected {n}",
            reg.len()
        )));
    }
    let mut a = g.values.clone();
    for (j, &r) in reg.values().iter().enumerate() {
        a[(j, j)] += r;
    }
    cholesky_lower_in_place(&mut a)?;
    let inv_l = invert_lower(&a);
    Ok(PrecisionMatrix {
        values: lower_inverse_gram(&inv_l),
    })
}

/// Left-looking Cholesky; overwrites the lower triangle of `a` with `L`
/// such that `L·Lᵀ = A`. Column-major friendly.
fn cholesky_lower_in_place(a: &mut DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let s = a.as_mut_slice();
    for j in 0..n {
        let (prev, rest) = s.split_at_mut(j * n);
        let col_j = &mut rest[..n];
        for k in 0..j {
            let ljk = prev[k * n + j];
            if ljk != 0.0 {
                let col_k = &prev[k * n + j..k * n + n];
                for (cj, &ck) in col_j[j..].iter_mut().zip(col_k) {
                    *cj -= ck * ljk;
                }
            }
        }
        let d = col_j[j];
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let root = d.sqrt();
        col_j[j] = root;
        let inv = 1.0 / root;
        for v in &mut col_j[j + 1..] {
            *v *= inv;
        }
    }
    Ok(())
}

fn invert_lower_column(ls: &[f64], n: usize, k: usize, column: &mut [f64]) {
    column[k] = 1.0;
    for j in k..n {
        let yj = column[j] / ls[j * n + j];
        column[j] = yj;
        if yj != 0.0 {
            let col_j = &ls[j * n + j + 1..j * n + n];
            for (c, &l) in column[j + 1..].iter_mut().zip(col_j) {
                *c -= l * yj;
            }
        }
    }
}

/// Inverse of a lower-triangular matrix, one forward solve per column.
fn invert_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let ls = l.as_slice();
    let mut inv = DMatrix::<f64>::zeros(n, n);

    #[cfg(feature = "parallel")]
    inv.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(k, column)| invert_lower_column(ls, n, k, column));

    #[cfg(not(feature = "parallel"))]
    for (k, column) in inv.as_mut_slice().chunks_mut(n.max(1)).enumerate() {
        invert_lower_column(ls, n, k, column);
    }

    inv
}

fn inverse_gram_column(ys: &[f64], n: usize, j: usize, column: &mut [f64]) {
    for (i, out) in column[..=j].iter_mut().enumerate() {
        let a = &ys[i * n + j..i * n + n];
        let b = &ys[j * n + j..j * n + n];
        *out = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    }
}

/// `P = (L⁻¹)ᵀ·(L⁻¹)`, computed on the upper triangle and mirrored so the
/// result is exactly symmetric.
fn lower_inverse_gram(inv_l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = inv_l.nrows();
    let ys = inv_l.as_slice();
    let mut p = DMatrix::<f64>::zeros(n, n);

    #[cfg(feature = "parallel")]
    p.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(j, column)| inverse_gram_column(ys, n, j, column));

    #[cfg(not(feature = "parallel"))]
    for (j, column) in p.as_mut_slice().chunks_mut(n.max(1)).enumerate() {
        inverse_gram_column(ys, n, j, column);
    }

    let ps = p.as_mut_slice();
    for j in 1..n {
        for i in 0..j {
            ps[i * n + j] = ps[j * n + i];
        }
    }
    p
}
