//! Shared helpers for the integration suites.
//!
//! The projected-gradient minimizer here is the independent oracle for the
//! constrained solvers: it descends the raw quadratic objective from a cold
//! start and never touches the closed-form path under test.

#![allow(dead_code)]

use laekit::interactions::InteractionMatrix;
use nalgebra::DMatrix;

/// Diagonal constraint imposed on the weight matrix.
#[derive(Debug, Clone, Copy)]
pub enum DiagConstraint {
    None,
    EqualZero,
    AtMost(f64),
}

impl DiagConstraint {
    fn project(&self, b: &mut DMatrix<f64>) {
        let n = b.nrows();
        match *self {
            DiagConstraint::None => {}
            DiagConstraint::EqualZero => {
                for j in 0..n {
                    b[(j, j)] = 0.0;
                }
            }
            DiagConstraint::AtMost(xi) => {
                for j in 0..n {
                    if b[(j, j)] > xi {
                        b[(j, j)] = xi;
                    }
                }
            }
        }
    }
}

pub fn x_dense(x: &InteractionMatrix) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(x.num_users(), x.num_items());
    for (u, row) in x.rows().iter().enumerate() {
        for &i in row {
            out[(u, i as usize)] = 1.0;
        }
    }
    out
}

/// `‖X − X·B‖_F² + Σ_j Λ_j·‖B_{j,·}‖²`, evaluated from the raw data.
pub fn objective(x: &DMatrix<f64>, lam: &[f64], b: &DMatrix<f64>) -> f64 {
    let residual = x - x * b;
    let fit: f64 = residual.iter().map(|v| v * v).sum();
    let mut reg = 0.0;
    for j in 0..b.nrows() {
        let mut row_sq = 0.0;
        for i in 0..b.ncols() {
            row_sq += b[(j, i)] * b[(j, i)];
        }
        reg += lam[j] * row_sq;
    }
    fit + reg
}

/// Projected-gradient descent on the quadratic objective with the diagonal
/// projected after every step, run until the projected-gradient mapping
/// falls below `tol` in max norm.
pub fn projected_gradient_minimize(
    x: &DMatrix<f64>,
    lam: &[f64],
    constraint: DiagConstraint,
    tol: f64,
) -> DMatrix<f64> {
    let n = x.ncols();
    let g = x.transpose() * x;
    let sigma_max = nalgebra::SymmetricEigen::new(g.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &v| a.max(v));
    let lam_max = lam.iter().fold(0.0f64, |a, &v| a.max(v));
    let step = 1.0 / (2.0 * (sigma_max + lam_max));

    let mut b = DMatrix::<f64>::zeros(n, n);
    let max_iters = 2_000_000usize;
    for iter in 0..max_iters {
        // ∇ = 2(G·B − G) + 2·diag(Λ)·B
        let mut grad = 2.0 * (&g * &b - &g);
        for j in 0..n {
            for i in 0..n {
                grad[(j, i)] += 2.0 * lam[j] * b[(j, i)];
            }
        }
        let mut candidate = &b - step * grad;
        constraint.project(&mut candidate);
        let mapping = (&b - &candidate)
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            / step;
        b = candidate;
        if mapping <= tol {
            return b;
        }
        assert!(iter + 1 < max_iters, "projected gradient did not converge");
    }
    b
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}
