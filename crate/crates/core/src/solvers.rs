//! Closed-form weight matrices for the six linear autoencoder variants.
//!
//! Every model reduces to `B = I − P·diagMat(d)` where `P` is the
//! regularized precision matrix and `d_j = Λ_jj + μ_j` combines the
//! regularization diagonal with a per-item Lagrange multiplier:
//!
//! - unconstrained (LAE/DLAE): `μ = 0`;
//! - zero diagonal (EASE/EDLAE): `μ_j = 1/P_jj − Λ_jj`, forcing `B_jj = 0`;
//! - relaxed (RLAE/RDLAE): `μ_j = 0` when `1 − P_jj·Λ_jj ≤ ξ`, otherwise
//!   `μ_j = (1−ξ)/P_jj − Λ_jj`, forcing `B_jj = ξ` exactly on the
//!   constrained items (KKT conditions of the inequality problem).
//!
//! A [`Solver`] owns one factorization and serves every constraint mode, so
//! a grid over `ξ` never refactors: `ξ` only changes the diagonal
//! post-processing.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::gram::{precision, GramMatrix, PrecisionMatrix, RegDiagonal};

/// The six linear autoencoder variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Lae,
    Ease,
    Dlae,
    Edlae,
    Rlae,
    Rdlae,
}

impl Model {
    pub const ALL: [Model; 6] = [
        Model::Lae,
        Model::Ease,
        Model::Dlae,
        Model::Edlae,
        Model::Rlae,
        Model::Rdlae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::Lae => "LAE",
            Model::Ease => "EASE",
            Model::Dlae => "DLAE",
            Model::Edlae => "EDLAE",
            Model::Rlae => "RLAE",
            Model::Rdlae => "RDLAE",
        }
    }

    /// Whether the model reads the dropout probability `p`.
    pub fn uses_dropout(self) -> bool {
        matches!(self, Model::Dlae | Model::Edlae | Model::Rdlae)
    }

    /// Whether the model reads the diagonal relaxation threshold `ξ`.
    pub fn uses_xi(self) -> bool {
        matches!(self, Model::Rlae | Model::Rdlae)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lae" => Ok(Model::Lae),
            "ease" | "ease^r" | "easer" => Ok(Model::Ease),
            "dlae" => Ok(Model::Dlae),
            "edlae" => Ok(Model::Edlae),
            "rlae" => Ok(Model::Rlae),
            "rdlae" => Ok(Model::Rdlae),
            other => Err(Error::InvalidInput(format!("unknown model `{other}`"))),
        }
    }
}

/// Hyperparameters of one solver run. `dropout_p` is only read by the
/// denoising models and `xi` only by the relaxed models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub model: Model,
    pub lambda: f64,
    pub dropout_p: f64,
    pub xi: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidInput(format!(
                "dropout probability must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.model.uses_xi() && (self.xi.is_nan() || self.xi < 0.0) {
            return Err(Error::InvalidInput(format!(
                "xi must be nonnegative, got {}",
                self.xi
            )));
        }
        Ok(())
    }
}

/// Dense item-to-item weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    values: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n()).map(|j| self.values[(j, j)]).collect()
    }

    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::InvalidInput(format!(
                "weight matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "weight matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { values })
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

/// A weight matrix together with its KKT evidence: the Lagrange vector `μ`
/// and the mask of items whose diagonal constraint is active (`μ_j > 0`).
#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub weights: WeightMatrix,
    pub mu: Vec<f64>,
    pub constrained: Vec<bool>,
}

impl SolverOutput {
    pub fn constrained_fraction(&self) -> f64 {
        if self.constrained.is_empty() {
            return 0.0;
        }
        self.constrained.iter().filter(|&&c| c).count() as f64 / self.constrained.len() as f64
    }
}

/// Run manifest for one solve, serialized as JSON by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverManifest {
    pub model: Model,
    pub lambda: f64,
    pub dropout_p: Option<f64>,
    pub xi: Option<f64>,
    pub num_items: usize,
    pub constrained_fraction: f64,
    pub wall_time_secs: f64,
}

fn scale_column(p_col: &[f64], d: f64, j: usize, out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(p_col) {
        *o = -v * d;
    }
    out[j] += 1.0;
}

/// `B = I − P·diagMat(d)`; the column scaling parallelizes over columns.
fn identity_minus_scaled_columns(p: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let n = p.nrows();
    let ps = p.as_slice();
    let mut b = DMatrix::<f64>::zeros(n, n);

    #[cfg(feature = "parallel")]
    b.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(j, col)| scale_column(&ps[j * n..(j + 1) * n], d[j], j, col));

    #[cfg(not(feature = "parallel"))]
    for (j, col) in b.as_mut_slice().chunks_mut(n.max(1)).enumerate() {
        scale_column(&ps[j * n..(j + 1) * n], d[j], j, col);
    }

    b
}

/// One factorization serving every constraint mode.
pub struct Solver {
    precision: PrecisionMatrix,
    reg: RegDiagonal,
}

impl Solver {
    /// Factors `G + diag(Λ)` once; all constraint modes reuse it.
    pub fn new(g: &GramMatrix, reg: RegDiagonal) -> Result<Self> {
        let precision = precision(g, &reg)?;
        Ok(Self { precision, reg })
    }

    /// Assembles a solver from an already-computed precision matrix.
    pub fn from_parts(precision: PrecisionMatrix, reg: RegDiagonal) -> Result<Self> {
        if precision.n() != reg.len() {
            return Err(Error::InvalidInput(format!(
                "precision matrix is {}x{} but the regularization diagonal has length {}",
                precision.n(),
                precision.n(),
                reg.len()
            )));
        }
        Ok(Self { precision, reg })
    }

    pub fn precision(&self) -> &PrecisionMatrix {
        &self.precision
    }

    pub fn reg(&self) -> &RegDiagonal {
        &self.reg
    }

    /// LAE/DLAE: `B = I − P·diagMat(Λ)`, no diagonal constraint, `μ = 0`.
    pub fn unconstrained(&self) -> SolverOutput {
        let n = self.reg.len();
        let values = identity_minus_scaled_columns(self.precision.values(), self.reg.values());
        SolverOutput {
            weights: WeightMatrix { values },
            mu: vec![0.0; n],
            constrained: vec![false; n],
        }
    }

    /// EASE/EDLAE: zero-diagonal equality constraints, with the
    /// multipliers back-solved as `μ_j = 1/P_jj − Λ_jj`.
    pub fn zero_diagonal(&self) -> SolverOutput {
        self.relaxed_inner(0.0)
    }

    /// RLAE/RDLAE: inequality constraints `diag(B) ≤ ξ`.
    pub fn relaxed(&self, xi: f64) -> Result<SolverOutput> {
        if xi.is_nan() || xi < 0.0 {
            return Err(Error::InvalidInput(format!(
                "xi must be nonnegative, got {xi}"
            )));
        }
        Ok(self.relaxed_inner(xi))
    }

    fn relaxed_inner(&self, xi: f64) -> SolverOutput {
        let n = self.reg.len();
        let pd = self.precision.diag();
        let lam = self.reg.values();
        let mut mu = vec![0.0; n];
        let mut d = vec![0.0; n];
        for j in 0..n {
            let slack = 1.0 - pd[j] * lam[j];
            if slack <= xi {
                d[j] = lam[j];
            } else {
                // Constrained case of the KKT split: d = Λ + μ = (1−ξ)/P_jj,
                // which pins B_jj to ξ exactly. μ ≥ 0 is guaranteed by the
                // case condition; the check tolerates boundary roundoff only.
                let dj = (1.0 - xi) / pd[j];
                let m = dj - lam[j];
                assert!(
                    m >= -1e-9 * lam[j].max(1.0),
                    "negative Lagrange multiplier {m} at item {j}"
                );
                mu[j] = m.max(0.0);
                d[j] = dj;
            }
        }
        let constrained = mu.iter().map(|&m| m > 0.0).collect();
        let values = identity_minus_scaled_columns(self.precision.values(), &d);
        SolverOutput {
            weights: WeightMatrix { values },
            mu,
            constrained,
        }
    }

    /// Dispatches on the model's constraint mode.
    pub fn solve_model(&self, model: Model, xi: f64) -> Result<SolverOutput> {
        match model {
            Model::Lae | Model::Dlae => Ok(self.unconstrained()),
            Model::Ease | Model::Edlae => Ok(self.zero_diagonal()),
            Model::Rlae | Model::Rdlae => self.relaxed(xi),
        }
    }
}

/// `B = (G + λI)⁻¹·G = I − λ·P`, plain ridge regression.
pub fn solve_lae(g: &GramMatrix, lambda: f64) -> Result<SolverOutput> {
    Ok(Solver::new(g, RegDiagonal::constant(lambda, g.n())?)?.unconstrained())
}

/// Zero-diagonal solution `B = I − P·diagMat(1 ⊘ diag(P))`.
pub fn solve_ease(g: &GramMatrix, lambda: f64) -> Result<SolverOutput> {
    Ok(Solver::new(g, RegDiagonal::constant(lambda, g.n())?)?.zero_diagonal())
}

/// Denoising variant: `B = I − P′·diagMat(Λ)`.
pub fn solve_dlae(g: &GramMatrix, reg: &RegDiagonal) -> Result<SolverOutput> {
    Ok(Solver::new(g, reg.clone())?.unconstrained())
}

/// Denoising variant with zero-diagonal constraints.
pub fn solve_edlae(g: &GramMatrix, reg: &RegDiagonal) -> Result<SolverOutput> {
    Ok(Solver::new(g, reg.clone())?.zero_diagonal())
}

/// Relaxed model with `diag(B) ≤ ξ` under plain L2 regularization.
pub fn solve_rlae(g: &GramMatrix, lambda: f64, xi: f64) -> Result<SolverOutput> {
    Solver::new(g, RegDiagonal::constant(lambda, g.n())?)?.relaxed(xi)
}

/// Relaxed model with `diag(B) ≤ ξ` under the dropout diagonal.
pub fn solve_rdlae(g: &GramMatrix, reg: &RegDiagonal, xi: f64) -> Result<SolverOutput> {
    Solver::new(g, reg.clone())?.relaxed(xi)
}

/// Which items' diagonals are actively constrained at threshold `ξ`,
/// i.e. `1 − P_jj·Λ_jj ≥ ξ`, plus the constrained fraction.
pub fn constrained_mask(
    precision: &PrecisionMatrix,
    reg: &RegDiagonal,
    xi: f64,
) -> (Vec<bool>, f64) {
    let mask: Vec<bool> = precision
        .diag()
        .iter()
        .zip(reg.values())
        .map(|(&pjj, &ljj)| 1.0 - pjj * ljj >= xi)
        .collect();
    let fraction = if mask.is_empty() {
        0.0
    } else {
        mask.iter().filter(|&&c| c).count() as f64 / mask.len() as f64
    };
    (mask, fraction)
}
