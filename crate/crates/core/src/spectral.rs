//! Eigendecomposition of the gram matrix and the spectral view of the
//! solvers.
//!
//! Writing `G = V·diag(σ²)·Vᵀ`, the LAE solution shares the eigenvectors
//! of `G` with eigenvalues `σᵢ²/(σᵢ²+λ)`, while the zero-diagonal
//! constraint term scales as `1/(σᵢ²+λ)`. The first curve decays with
//! rank (regularization favors high-ranked principal components); the
//! second grows with rank (the constraint term penalizes low-ranked
//! components). [`verify_lae_spectrum`] and [`verify_constraint_term`]
//! check both identities numerically; [`pc_group_heatmap`] aggregates a
//! group of components into an item-by-item heatmap.
//!
//! For the dropout diagonal `Λ` the simplification does not go through
//! (`VᵀΛV` is no longer diagonal), so no such identity is asserted for
//! DLAE/EDLAE; only their defining equations hold.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::solvers::{SolverOutput, WeightMatrix};

/// Eigendecomposition of the gram matrix, eigenvalues sorted descending
/// and clamped to be nonnegative (the gram matrix is PSD; tiny negative
/// values are roundoff).
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues `σ²` in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors; column `k` pairs with eigenvalue `k`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// `V·diag(values)·Vᵀ` for arbitrary per-component values.
    pub fn recompose_with(&self, values: &[f64]) -> DMatrix<f64> {
        assert_eq!(values.len(), self.n());
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&DVector::from_row_slice(values));
        scaled * self.eigenvectors.transpose()
    }

    /// Reconstruction of the decomposed matrix.
    pub fn recompose(&self) -> DMatrix<f64> {
        self.recompose_with(&self.eigenvalues)
    }
}

/// Symmetric eigendecomposition of `G`, sorted descending.
pub fn eig_gram(g: &GramMatrix) -> Result<SpectralDecomposition> {
    let n = g.n();
    if n == 0 {
        return Err(Error::InvalidInput("empty gram matrix".into()));
    }
    let max_niter = 10_000 + 200 * n;
    let eigen = nalgebra::SymmetricEigen::try_new(g.values().clone(), f64::EPSILON, max_niter)
        .ok_or(Error::EigenNonConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));

    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&k| eigen.eigenvalues[k].max(0.0))
        .collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eigen.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Per-rank scaling applied by the two solution terms at a given `λ`:
/// `σᵢ²/(σᵢ²+λ)` for the regularized objective and `1/(σᵢ²+λ)` for the
/// diagonal-constraint term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingCurves {
    pub lambda: f64,
    pub reg_curve: Vec<f64>,
    pub constraint_curve: Vec<f64>,
}

pub fn scaling_curves(eigenvalues: &[f64], lambda: f64) -> Result<ScalingCurves> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let reg_curve = eigenvalues.iter().map(|&s| s / (s + lambda)).collect();
    let constraint_curve = eigenvalues.iter().map(|&s| 1.0 / (s + lambda)).collect();
    Ok(ScalingCurves {
        lambda,
        reg_curve,
        constraint_curve,
    })
}

/// Writes one row per rank: `rank,sigma_sq,reg_value,constraint_value`.
pub fn write_scaling_curves_csv(
    path: &Path,
    eigenvalues: &[f64],
    curves: &ScalingCurves,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "rank,sigma_sq,reg_value,constraint_value").map_err(|e| Error::io(path, e))?;
    for (rank, ((&s, &r), &c)) in eigenvalues
        .iter()
        .zip(&curves.reg_curve)
        .zip(&curves.constraint_curve)
        .enumerate()
    {
        writeln!(w, "{rank},{s},{r},{c}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Residuals of the LAE spectral identity.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumResidual {
    /// `‖B − V·diag(σᵢ²/(σᵢ²+λ))·Vᵀ‖_max`.
    pub reconstruction: f64,
    /// Largest off-diagonal entry of `Vᵀ·B·V`.
    pub off_diagonal: f64,
}

/// Checks that the LAE solution is diagonalized by the gram eigenvectors
/// with eigenvalues `σᵢ²/(σᵢ²+λ)`.
pub fn verify_lae_spectrum(
    b_lae: &WeightMatrix,
    decomposition: &SpectralDecomposition,
    lambda: f64,
) -> SpectrumResidual {
    let scaled: Vec<f64> = decomposition
        .eigenvalues()
        .iter()
        .map(|&s| s / (s + lambda))
        .collect();
    let reconstruction = (b_lae.values() - decomposition.recompose_with(&scaled))
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));

    let v = decomposition.eigenvectors();
    let rotated = v.transpose() * b_lae.values() * v;
    let mut off_diagonal = 0.0f64;
    for j in 0..rotated.ncols() {
        for i in 0..rotated.nrows() {
            if i != j {
                off_diagonal = off_diagonal.max(rotated[(i, j)].abs());
            }
        }
    }
    SpectrumResidual {
        reconstruction,
        off_diagonal,
    }
}

/// Checks the constraint-term identity
/// `B_EASE − B_LAE = −V·diag(1/(σᵢ²+λ))·Vᵀ·diagMat(μ)`;
/// returns the max-norm residual.
pub fn verify_constraint_term(
    ease: &SolverOutput,
    b_lae: &WeightMatrix,
    decomposition: &SpectralDecomposition,
    lambda: f64,
) -> f64 {
    let inv: Vec<f64> = decomposition
        .eigenvalues()
        .iter()
        .map(|&s| 1.0 / (s + lambda))
        .collect();
    let mut term = decomposition.recompose_with(&inv);
    // Right-multiplying by diagMat(μ) scales columns.
    for (j, &m) in ease.mu.iter().enumerate() {
        for i in 0..term.nrows() {
            term[(i, j)] *= m;
        }
    }
    let residual = ease.weights.values() - b_lae.values() + term;
    residual.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Which end of the spectrum a heatmap aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcGroup {
    /// Highest-ranked (largest-eigenvalue) components.
    Top,
    /// Lowest-ranked components.
    Bottom,
}

/// Weighted sum `Σ_{k ∈ group} σ²_k·v_k·v_kᵀ` restricted to an item
/// subset, in the subset's order.
#[derive(Debug, Clone)]
pub struct PcGroupHeatmap {
    pub group: PcGroup,
    pub fraction: f64,
    pub item_subset: Vec<u32>,
    pub values: DMatrix<f64>,
}

pub fn pc_group_heatmap(
    decomposition: &SpectralDecomposition,
    group_fraction: f64,
    which: PcGroup,
    items: &[u32],
) -> Result<PcGroupHeatmap> {
    let n = decomposition.n();
    if !(0.0..=1.0).contains(&group_fraction) {
        return Err(Error::InvalidInput(format!(
            "group fraction must be in [0, 1], got {group_fraction}"
        )));
    }
    let count = ((group_fraction * n as f64).ceil() as usize).min(n);
    if count == 0 {
        return Err(Error::InvalidInput(
            "principal component group is empty".into(),
        ));
    }
    let mut seen = vec![false; n];
    for &i in items {
        let idx = i as usize;
        if idx >= n {
            return Err(Error::InvalidInput(format!(
                "item index {i} out of range for {n} items"
            )));
        }
        if seen[idx] {
            return Err(Error::InvalidInput(format!("duplicate item index {i}")));
        }
        seen[idx] = true;
    }

    let range = match which {
        PcGroup::Top => 0..count,
        PcGroup::Bottom => n - count..n,
    };
    let s = items.len();
    let mut values = DMatrix::<f64>::zeros(s, s);
    let v = decomposition.eigenvectors();
    let mut restricted = vec![0.0; s];
    for k in range {
        let w = decomposition.eigenvalues()[k];
        for (r, &item) in items.iter().enumerate() {
            restricted[r] = v[(item as usize, k)];
        }
        for b in 0..s {
            let vb = w * restricted[b];
            for a in 0..s {
                values[(a, b)] += restricted[a] * vb;
            }
        }
    }
    Ok(PcGroupHeatmap {
        group: which,
        fraction: group_fraction,
        item_subset: items.to_vec(),
        values,
    })
}

impl PcGroupHeatmap {
    /// CSV grid with an item-index header row and one labeled row per item.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        write!(w, "item").map_err(io_err)?;
        for &i in &self.item_subset {
            write!(w, ",{i}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
        for (r, &i) in self.item_subset.iter().enumerate() {
            write!(w, "{i}").map_err(io_err)?;
            for c in 0..self.item_subset.len() {
                write!(w, ",{}", self.values[(r, c)]).map_err(io_err)?;
            }
            writeln!(w).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}
