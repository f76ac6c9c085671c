//! Feasibility certificates for purely resistive DC grids of interconnected
//! microgrids with constant-power loads.
//!
//! The load voltages of such a grid satisfy a quadratic power flow equation
//! that may have no solution. This crate decides solvability through
//! sufficient conditions of increasing structure:
//!
//! - a quarter bound on the open-circuit voltages ([`check_thm1`]),
//! - a directional variant driven by the block Cholesky factorization of the
//!   load admittance block, one block per microgrid in attachment order
//!   ([`check_thm6`]), and
//! - a plug-and-play interconnection certificate that admits a new microgrid
//!   by checking only the newcomer and the boundary, leaving the existing
//!   grid's certificate untouched ([`CertifiedGrid::attach`]).
//!
//! An independent fixed-point solver ([`solve_power_flow`]) witnesses every
//! claimed feasibility by actually solving the power flow equation.
//!
//! Conductances are in siemens, voltages in volts, powers in watts.

pub mod corpus;
pub mod feasibility;
pub mod formats;
pub mod grid;
pub mod interconnect;
pub mod linalg;
pub mod report;
pub mod solver;
pub mod testdata;

pub use feasibility::{
    check_thm1, check_thm6, evaluate_directional, open_circuit_voltages, Condition,
    FeasibilityError, FeasibilityReport,
};
pub use grid::{
    check_hierarchy_assumption, partition_grid, validate_membership, GridError, GridGraph,
    HierarchyEntry, HierarchyReport, HierarchyVerdict, Line, MicrogridIndex, NodeId, NodeKind,
    PartitionedGrid,
};
pub use interconnect::{
    apply_virtual_shunts, check_assumption9, compute_hat_shunts, extend_bcd, merge_grids,
    Assumption9Report, AttachCandidate, AttachError, Attachment, CertifiedGrid, CrossLine,
    ExtendedBcd, HatShunts, InterconnectError, InterconnectionSpec, MergedCertified, MergedGrid,
    ShuntEntry, ShuntLedger,
};
pub use linalg::{
    block_cholesky, is_invertible_m_matrix, is_order_preserving, schur_complement, BlockCholesky,
    BlockStructure, LinalgError, MMatrixCheck, MMatrixViolation,
};
pub use solver::{
    residual, solve_diagonal_exact, solve_power_flow, DiagonalExact, SolveOutcome, SolveStatus,
    SolverError, SolverOptions,
};

pub use nalgebra;

/// Default absolute margin for the strict inequalities of every certificate:
/// a strict comparison `lhs < rhs` is accepted when `lhs < rhs - epsilon`.
pub const DEFAULT_EPSILON: f64 = 1e-9;
