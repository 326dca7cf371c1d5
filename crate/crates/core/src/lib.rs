//! Closed-form linear autoencoders for top-N recommendation.
//!
//! A linear autoencoder learns an item-to-item weight matrix `B` so that
//! `X·B` reconstructs the binary user-item interaction matrix `X`. Because
//! the objective is ridge regression, the optimum is available in closed
//! form from the gram matrix `XᵀX` and a single symmetric factorization.
//! This crate implements six variants that differ only in how the diagonal
//! of `B` is treated:
//!
//! | model | regularization      | diagonal constraint |
//! |-------|---------------------|---------------------|
//! | LAE   | `λI`                | none                |
//! | EASE  | `λI`                | `diag(B) = 0`       |
//! | DLAE  | dropout diagonal `Λ`| none                |
//! | EDLAE | dropout diagonal `Λ`| `diag(B) = 0`       |
//! | RLAE  | `λI`                | `diag(B) ≤ ξ`       |
//! | RDLAE | dropout diagonal `Λ`| `diag(B) ≤ ξ`       |
//!
//! RLAE/RDLAE solve the inequality-constrained problem through its KKT
//! conditions and interpolate between the unconstrained and zero-diagonal
//! solutions as `ξ` moves from 1 to 0.
//!
//! Beyond the solvers, the crate ships:
//!
//! - [`interactions`]: ingestion of implicit-feedback files, strong/weak
//!   generalization splits, popularity statistics;
//! - [`gram`]: the dense gram matrix and the regularized precision matrix
//!   shared by every solver;
//! - [`spectral`]: eigendecomposition of the gram matrix, the scaling
//!   curves of the regularization and constraint terms, and principal
//!   component group heatmaps;
//! - [`eval`]: Recall@K / NDCG@K under plain (AOA), inverse-propensity,
//!   and head/tail views;
//! - [`synth`]: synthetic interaction generators for tests and benches.
//!
//! The hot kernels (gram construction, per-user scoring) are data-parallel
//! with `rayon` when the default `parallel` feature is enabled, and fall
//! back to sequential loops without it. Both paths produce bit-identical
//! results.

pub mod container;
pub mod error;
pub mod eval;
pub mod gram;
pub mod interactions;
pub mod solvers;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{EvalConfig, Evaluator, MetricReport, PropensityModel};
pub use gram::{GramMatrix, PrecisionMatrix, RegDiagonal};
pub use interactions::{
    DatasetStats, InputFormat, InteractionMatrix, ItemPartition, StrongSplit, WeakSplit,
};
pub use solvers::{Model, Solver, SolverConfig, SolverOutput, WeightMatrix};
pub use spectral::{PcGroup, PcGroupHeatmap, ScalingCurves, SpectralDecomposition};
