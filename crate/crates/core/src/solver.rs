//! Numerical oracle for the DC power flow equation
//! `[V_L] Y_LL V_L + [V_L] Y_LS V_S + P_L = 0`.
//!
//! The solver runs the fixed-point iteration
//! `V <- Y_LL⁻¹ (I_S* - [V]⁻¹ P_L)` started at the open-circuit voltages and
//! targets the high-voltage solution. The iteration preserves positivity
//! from above: whenever a positive solution below the start exists, the
//! iterates decrease monotonically onto it. A failure to converge is
//! inconclusive, never a proof of infeasibility; only the diagonal
//! closed-form route gives exact infeasibility verdicts.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{NodeId, PartitionedGrid};
use crate::linalg::SIGN_FLOOR;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("load admittance block is singular")]
    SingularLoadMatrix,
    #[error("open-circuit voltage is nonpositive at load nodes {0:?}; cannot start the iteration")]
    NonpositiveStart(Vec<NodeId>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("load block is not diagonal: nonzero off-diagonal at ({row}, {col})")]
    NotDiagonal { row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    NoConvergence,
    DivergedToBoundary,
}

/// Result of a power flow solve. `v_l` is present exactly when the solve
/// converged, in which case it is positive and the residual is below the
/// solver tolerance.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub v_l: Option<DVector<f64>>,
    pub iterations: usize,
    /// Infinity norm of the power flow residual at the final iterate (watts).
    pub residual_norm: f64,
    /// Whether the iterates decreased elementwise all the way from the
    /// open-circuit start; observed to hold under a passing certificate.
    pub monotone_from_start: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop when successive iterates differ by less than this (infinity norm).
    pub step_tol: f64,
    /// Residual norm below which a step-converged iterate counts as solved.
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            step_tol: 1e-12,
            residual_tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

/// Evaluates the power flow residual `[V_L] Y_LL V_L + [V_L] Y_LS V_S + P_L`.
pub fn residual(grid: &PartitionedGrid, v_l: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
    if v_l.len() != grid.load_count() {
        return Err(SolverError::DimensionMismatch {
            expected: grid.load_count(),
            got: v_l.len(),
        });
    }
    let current = grid.y_ll() * v_l + grid.y_ls() * grid.v_s();
    Ok(v_l.component_mul(&current) + grid.p_l())
}

/// Solves the power flow equation by undamped fixed-point iteration from
/// the open-circuit voltages.
///
/// With zero demand the iteration converges in one step to the open-circuit
/// voltages. An iterate leaving the positive orthant is reported as
/// `DivergedToBoundary`; exhausting `max_iter` as `NoConvergence`. Both are
/// inconclusive outcomes.
pub fn solve_power_flow(
    grid: &PartitionedGrid,
    options: &SolverOptions,
) -> Result<SolveOutcome, SolverError> {
    let n = grid.load_count();
    if n == 0 {
        return Ok(SolveOutcome {
            status: SolveStatus::Converged,
            v_l: Some(DVector::zeros(0)),
            iterations: 0,
            residual_norm: 0.0,
            monotone_from_start: true,
        });
    }

    let injection = grid.source_injection();
    let lu = grid.y_ll().clone().lu();
    let v_start = lu
        .solve(&injection)
        .ok_or(SolverError::SingularLoadMatrix)?;
    let bad: Vec<NodeId> = v_start
        .iter()
        .zip(grid.load_ids())
        .filter(|(x, _)| **x <= 0.0)
        .map(|(_, &id)| id)
        .collect();
    if !bad.is_empty() {
        return Err(SolverError::NonpositiveStart(bad));
    }

    let mut v = v_start;
    let mut monotone = true;
    for iteration in 1..=options.max_iter {
        let rhs = &injection - grid.p_l().component_div(&v);
        let v_next = lu.solve(&rhs).ok_or(SolverError::SingularLoadMatrix)?;

        if v_next.iter().any(|&x| x <= 0.0) {
            let res = residual(grid, &v)?.amax();
            return Ok(SolveOutcome {
                status: SolveStatus::DivergedToBoundary,
                v_l: None,
                iterations: iteration,
                residual_norm: res,
                monotone_from_start: monotone,
            });
        }

        let step = (&v_next - &v).amax();
        monotone = monotone && (0..n).all(|i| v_next[i] <= v[i] + SIGN_FLOOR);
        v = v_next;

        if step < options.step_tol {
            let res = residual(grid, &v)?.amax();
            let converged = res < options.residual_tol;
            return Ok(SolveOutcome {
                status: if converged {
                    SolveStatus::Converged
                } else {
                    SolveStatus::NoConvergence
                },
                v_l: converged.then_some(v),
                iterations: iteration,
                residual_norm: res,
                monotone_from_start: monotone,
            });
        }
    }

    let res = residual(grid, &v)?.amax();
    Ok(SolveOutcome {
        status: SolveStatus::NoConvergence,
        v_l: None,
        iterations: options.max_iter,
        residual_norm: res,
        monotone_from_start: monotone,
    })
}

/// Exact outcome of the per-row quadratics of a diagonal load block.
#[derive(Debug, Clone)]
pub struct DiagonalExact {
    pub feasible: bool,
    /// High roots per load row when feasible.
    pub v_l: Option<DVector<f64>>,
    /// Per-row discriminants of the quadratic in the load voltage.
    pub discriminants: DVector<f64>,
    pub infeasible_nodes: Vec<NodeId>,
}

/// Closed-form solve for grids whose load nodes share no lines: each row of
/// the power flow equation is a scalar quadratic, so feasibility is decided
/// exactly by the per-row discriminants, and the high root is returned.
pub fn solve_diagonal_exact(grid: &PartitionedGrid) -> Result<DiagonalExact, SolverError> {
    let y = grid.y_ll();
    let n = grid.load_count();
    for i in 0..n {
        for j in 0..n {
            if i != j && y[(i, j)].abs() > SIGN_FLOOR {
                return Err(SolverError::NotDiagonal { row: i, col: j });
            }
        }
    }

    let injection = grid.source_injection();
    let mut discriminants = DVector::zeros(n);
    let mut roots = DVector::zeros(n);
    let mut infeasible_nodes = Vec::new();

    for i in 0..n {
        let g = y[(i, i)];
        let b = injection[i];
        let p = grid.p_l()[i];
        if g > SIGN_FLOOR {
            // g v^2 - b v + p = 0; the high root is (b + sqrt(disc)) / (2g).
            let disc = b * b - 4.0 * g * p;
            discriminants[i] = disc;
            if disc < 0.0 {
                infeasible_nodes.push(grid.load_ids()[i]);
            } else {
                roots[i] = (b + disc.sqrt()) / (2.0 * g);
            }
        } else {
            // No self-admittance: the row is linear, p = b v.
            discriminants[i] = b * b;
            if b > SIGN_FLOOR {
                roots[i] = p / b;
            } else {
                infeasible_nodes.push(grid.load_ids()[i]);
            }
        }
    }

    let feasible = infeasible_nodes.is_empty();
    Ok(DiagonalExact {
        feasible,
        v_l: feasible.then_some(roots),
        discriminants,
        infeasible_nodes,
    })
}
