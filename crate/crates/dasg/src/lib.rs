//! Learning the edge structure of additive graphical models for discrete
//! data: exact population operators from a joint pmf, a group-penalized
//! D-trace estimator solved by ADMM, simulation generators for binary
//! graphical models, tuning by cross-validation, and recovery metrics.

pub mod block;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod io;
pub mod pmf;
pub mod population;
pub mod scheme;
pub mod simgen;
pub mod tuning;

pub use block::{block_frobenius_norms, edges_from_blocks, BlockMatrix};
pub use error::{Error, Result};
pub use estimator::{
    fit_dtrace, h_step, objective, ridge_inverse_baseline, s_step, sample_davo, DtraceSolver,
    FitResult, SolverConfig,
};
pub use graph::{graph_metrics, is_separator, Graph, GraphMetrics};
pub use pmf::{augment, ising_pmf, AugmentedScheme, IsingParams, JointPMF};
pub use population::{
    check_lcm, hs_norms, irrep_diagnostics, orthonormal_basis, orthonormal_dapo,
    orthonormal_davo, vertex_dapo, vertex_davo, IrrepReport, LcmCheck,
};
pub use scheme::{Dataset, NodeScheme};
pub use simgen::{pattern, sample_ising, sample_sign_gaussian, PatternSpec, SampleMethod};
pub use tuning::{
    cross_validate, lambda_grid, roc_auc, roc_sweep, stability_selection, CVReport, LambdaGrid,
    RocPoint, StabilityReport,
};
