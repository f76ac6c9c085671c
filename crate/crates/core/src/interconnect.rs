//! Virtual shunts, interconnection assembly, factor extension, and the
//! plug-and-play admission certificate.
//!
//! Shunt capacity reserved at a load node is a placeholder for prospective
//! lines: the virtual grid carries the unconsumed capacity on its load
//! diagonal, so interconnecting new lines (which raises the physical
//! diagonal) leaves the virtual load matrix unchanged. A passing certificate
//! on the virtual grid therefore survives attachments, and admitting a new
//! microgrid reduces to a condition on the newcomer and the boundary: the
//! existing grid's factors and certificate are reused, never recomputed.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{
    check_thm6, evaluate_directional, Condition, FeasibilityError, FeasibilityReport,
};
use crate::grid::{
    check_hierarchy_assumption, partition_grid, GridError, GridGraph, HierarchyReport, Line,
    MicrogridIndex, NodeId, NodeKind, PartitionedGrid,
};
use crate::linalg::{BlockCholesky, LinalgError, SIGN_FLOOR};
use crate::DEFAULT_EPSILON;

#[derive(Debug, Error)]
pub enum InterconnectError {
    #[error("interconnection line references unknown grid node {0}")]
    UnknownGridNode(NodeId),
    #[error("interconnection line references unknown microgrid node {0}")]
    UnknownMicrogridNode(NodeId),
    #[error("duplicate interconnection line ({grid_node}, {microgrid_node})")]
    DuplicateCrossLine {
        grid_node: NodeId,
        microgrid_node: NodeId,
    },
    #[error(
        "interconnection line ({grid_node}, {microgrid_node}) has nonpositive conductance {value}"
    )]
    NonpositiveCrossConductance {
        grid_node: NodeId,
        microgrid_node: NodeId,
        value: f64,
    },
    #[error("shunt capacity at node {node} is negative: {value}")]
    NegativeCapacity { node: NodeId, value: f64 },
    #[error("consumed shunt at node {node} is negative: {value}")]
    NegativeConsumed { node: NodeId, value: f64 },
    #[error("consumed shunt {consumed} exceeds capacity {capacity} at node {node}")]
    ConsumedExceedsCapacity {
        node: NodeId,
        capacity: f64,
        consumed: f64,
    },
    #[error("ledger has no entry for load node {0}")]
    LedgerMissingLoad(NodeId),
    #[error("ledger entry for node {0} does not match a node of that kind")]
    LedgerUnknownNode(NodeId),
    #[error("the attaching grid must form a single microgrid, found {0}")]
    MicrogridNotSingleBlock(MicrogridIndex),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}

/// Reserved and consumed shunt capacity per load node, plus the
/// informational consumed amounts at source nodes (lines between sources
/// never constrain feasibility).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuntEntry {
    pub capacity: f64,
    pub consumed: f64,
}

impl ShuntEntry {
    pub fn fresh(capacity: f64) -> Self {
        Self {
            capacity,
            consumed: 0.0,
        }
    }

    /// Unconsumed capacity, clamped at zero against roundoff.
    pub fn remaining(&self) -> f64 {
        (self.capacity - self.consumed).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShuntLedger {
    loads: BTreeMap<NodeId, ShuntEntry>,
    sources: BTreeMap<NodeId, f64>,
}

impl ShuntLedger {
    pub fn new(
        loads: BTreeMap<NodeId, ShuntEntry>,
        sources: BTreeMap<NodeId, f64>,
    ) -> Result<Self, InterconnectError> {
        for (&node, entry) in &loads {
            if entry.capacity < 0.0 || !entry.capacity.is_finite() {
                return Err(InterconnectError::NegativeCapacity {
                    node,
                    value: entry.capacity,
                });
            }
            if entry.consumed < 0.0 || !entry.consumed.is_finite() {
                return Err(InterconnectError::NegativeConsumed {
                    node,
                    value: entry.consumed,
                });
            }
            if entry.consumed > entry.capacity + DEFAULT_EPSILON {
                return Err(InterconnectError::ConsumedExceedsCapacity {
                    node,
                    capacity: entry.capacity,
                    consumed: entry.consumed,
                });
            }
        }
        for (&node, &consumed) in &sources {
            if consumed < 0.0 || !consumed.is_finite() {
                return Err(InterconnectError::NegativeConsumed {
                    node,
                    value: consumed,
                });
            }
        }
        Ok(Self { loads, sources })
    }

    /// A ledger with zero capacity everywhere, matching the grid's nodes.
    pub fn zero_for(grid: &PartitionedGrid) -> Self {
        Self {
            loads: grid
                .load_ids()
                .iter()
                .map(|&id| (id, ShuntEntry::fresh(0.0)))
                .collect(),
            sources: grid.source_ids().iter().map(|&id| (id, 0.0)).collect(),
        }
    }

    pub fn loads(&self) -> &BTreeMap<NodeId, ShuntEntry> {
        &self.loads
    }

    pub fn sources(&self) -> &BTreeMap<NodeId, f64> {
        &self.sources
    }

    pub fn load_entry(&self, id: NodeId) -> Option<ShuntEntry> {
        self.loads.get(&id).copied()
    }

    /// Remaining capacities for the given load nodes, in their order.
    pub fn remaining_vector(&self, order: &[NodeId]) -> Result<DVector<f64>, InterconnectError> {
        let mut out = DVector::zeros(order.len());
        for (row, &id) in order.iter().enumerate() {
            let entry = self
                .loads
                .get(&id)
                .ok_or(InterconnectError::LedgerMissingLoad(id))?;
            out[row] = entry.remaining();
        }
        Ok(out)
    }
}

/// Prospective lines between a grid and a microgrid. Endpoints are named in
/// each side's own id space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossLine {
    pub grid_node: NodeId,
    pub microgrid_node: NodeId,
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectionSpec {
    lines: Vec<CrossLine>,
}

impl InterconnectionSpec {
    pub fn new(lines: Vec<CrossLine>) -> Self {
        Self { lines }
    }

    pub fn lines(&self) -> &[CrossLine] {
        &self.lines
    }

    pub fn validate(
        &self,
        grid: &GridGraph,
        microgrid: &GridGraph,
    ) -> Result<(), InterconnectError> {
        let mut seen = std::collections::BTreeSet::new();
        for line in &self.lines {
            if !grid.contains(line.grid_node) {
                return Err(InterconnectError::UnknownGridNode(line.grid_node));
            }
            if !microgrid.contains(line.microgrid_node) {
                return Err(InterconnectError::UnknownMicrogridNode(line.microgrid_node));
            }
            if line.conductance <= 0.0 || !line.conductance.is_finite() {
                return Err(InterconnectError::NonpositiveCrossConductance {
                    grid_node: line.grid_node,
                    microgrid_node: line.microgrid_node,
                    value: line.conductance,
                });
            }
            if !seen.insert((line.grid_node, line.microgrid_node)) {
                return Err(InterconnectError::DuplicateCrossLine {
                    grid_node: line.grid_node,
                    microgrid_node: line.microgrid_node,
                });
            }
        }
        Ok(())
    }
}

/// Per-node totals of prospective-line conductance crossing the boundary,
/// keyed by each side's own node ids. These are the diagonal amounts the
/// interconnection consumes from the reserved shunt capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct HatShunts {
    pub grid_loads: BTreeMap<NodeId, f64>,
    pub grid_sources: BTreeMap<NodeId, f64>,
    pub microgrid_loads: BTreeMap<NodeId, f64>,
    pub microgrid_sources: BTreeMap<NodeId, f64>,
}

impl HatShunts {
    fn vector(map: &BTreeMap<NodeId, f64>, order: &[NodeId]) -> DVector<f64> {
        DVector::from_iterator(order.len(), order.iter().map(|id| map[id]))
    }

    pub fn grid_load_vector(&self, order: &[NodeId]) -> DVector<f64> {
        Self::vector(&self.grid_loads, order)
    }

    pub fn microgrid_load_vector(&self, order: &[NodeId]) -> DVector<f64> {
        Self::vector(&self.microgrid_loads, order)
    }
}

/// Totals the conductance each node contributes to the interconnection:
/// every cross line adds its conductance to the diagonal entry of both of
/// its endpoints.
pub fn compute_hat_shunts(
    spec: &InterconnectionSpec,
    grid: &GridGraph,
    microgrid: &GridGraph,
) -> Result<HatShunts, InterconnectError> {
    spec.validate(grid, microgrid)?;
    let mut hat = HatShunts {
        grid_loads: BTreeMap::new(),
        grid_sources: BTreeMap::new(),
        microgrid_loads: BTreeMap::new(),
        microgrid_sources: BTreeMap::new(),
    };
    for &(id, kind) in grid.nodes() {
        match kind {
            NodeKind::Load => hat.grid_loads.insert(id, 0.0),
            NodeKind::Source => hat.grid_sources.insert(id, 0.0),
        };
    }
    for &(id, kind) in microgrid.nodes() {
        match kind {
            NodeKind::Load => hat.microgrid_loads.insert(id, 0.0),
            NodeKind::Source => hat.microgrid_sources.insert(id, 0.0),
        };
    }
    for line in spec.lines() {
        match grid.kind(line.grid_node).expect("validated endpoint") {
            NodeKind::Load => *hat.grid_loads.get_mut(&line.grid_node).unwrap() += line.conductance,
            NodeKind::Source => {
                *hat.grid_sources.get_mut(&line.grid_node).unwrap() += line.conductance
            }
        }
        match microgrid
            .kind(line.microgrid_node)
            .expect("validated endpoint")
        {
            NodeKind::Load => {
                *hat.microgrid_loads.get_mut(&line.microgrid_node).unwrap() += line.conductance
            }
            NodeKind::Source => {
                *hat.microgrid_sources.get_mut(&line.microgrid_node).unwrap() += line.conductance
            }
        }
    }
    Ok(hat)
}

/// The virtual counterpart of a grid: the unconsumed shunt capacity is added
/// to the load diagonal. Source blocks are untouched.
pub fn apply_virtual_shunts(
    grid: &PartitionedGrid,
    ledger: &ShuntLedger,
) -> Result<PartitionedGrid, InterconnectError> {
    let remaining = ledger.remaining_vector(grid.load_ids())?;
    Ok(grid.with_added_load_shunts(&remaining))
}

/// A grid bundled with its shunt ledger, ready to participate in an
/// interconnection (on either side).
#[derive(Debug, Clone)]
pub struct AttachCandidate {
    pub graph: GridGraph,
    pub grid: PartitionedGrid,
    pub ledger: ShuntLedger,
}

impl AttachCandidate {
    /// Validates that the ledger covers exactly the grid's nodes.
    pub fn new(
        graph: GridGraph,
        grid: PartitionedGrid,
        ledger: ShuntLedger,
    ) -> Result<Self, InterconnectError> {
        for &id in grid.load_ids() {
            if ledger.load_entry(id).is_none() {
                return Err(InterconnectError::LedgerMissingLoad(id));
            }
        }
        for &id in ledger.loads().keys() {
            if grid.load_row(id).is_none() {
                return Err(InterconnectError::LedgerUnknownNode(id));
            }
        }
        for &id in ledger.sources().keys() {
            if grid.source_row(id).is_none() {
                return Err(InterconnectError::LedgerUnknownNode(id));
            }
        }
        Ok(Self {
            graph,
            grid,
            ledger,
        })
    }

    /// The grid with its unconsumed shunt capacity applied. Errs only when
    /// the constructor's ledger-coverage invariant was bypassed through the
    /// public fields.
    pub fn virtual_grid(&self) -> Result<PartitionedGrid, InterconnectError> {
        apply_virtual_shunts(&self.grid, &self.ledger)
    }
}

/// Slack of one load node's shunt budget: `available - required`.
#[derive(Debug, Clone, Copy)]
pub struct SlackEntry {
    pub node: NodeId,
    pub required: f64,
    pub available: f64,
}

impl SlackEntry {
    pub fn slack(&self) -> f64 {
        self.available - self.required
    }

    pub fn over_budget(&self) -> bool {
        self.slack() < -SIGN_FLOOR
    }
}

/// Outcome of the interconnection admissibility test: both shunt budgets
/// hold and the merged topology satisfies the hierarchy assumption with the
/// microgrid as the last block.
#[derive(Debug, Clone)]
pub struct Assumption9Report {
    pub pass: bool,
    pub budget_ok: bool,
    pub grid_slack: Vec<SlackEntry>,
    pub microgrid_slack: Vec<SlackEntry>,
    pub merged_hierarchy: HierarchyReport,
}

impl Assumption9Report {
    pub fn over_budget_grid_nodes(&self) -> Vec<NodeId> {
        self.grid_slack
            .iter()
            .filter(|s| s.over_budget())
            .map(|s| s.node)
            .collect()
    }

    pub fn over_budget_microgrid_nodes(&self) -> Vec<NodeId> {
        self.microgrid_slack
            .iter()
            .filter(|s| s.over_budget())
            .map(|s| s.node)
            .collect()
    }
}

fn slack_entries(
    hat: &BTreeMap<NodeId, f64>,
    ledger: &ShuntLedger,
    order: &[NodeId],
) -> Result<Vec<SlackEntry>, InterconnectError> {
    order
        .iter()
        .map(|&node| {
            let entry = ledger
                .load_entry(node)
                .ok_or(InterconnectError::LedgerMissingLoad(node))?;
            Ok(SlackEntry {
                node,
                required: hat[&node],
                available: entry.remaining(),
            })
        })
        .collect()
}

/// Checks interconnection admissibility: the consumed diagonals must fit in
/// the remaining shunt capacities on both sides, and the merged grid (with
/// the microgrid as the last hierarchy block) must satisfy the hierarchy
/// assumption.
pub fn check_assumption9(
    spec: &InterconnectionSpec,
    grid: &AttachCandidate,
    microgrid: &AttachCandidate,
) -> Result<Assumption9Report, InterconnectError> {
    let hat = compute_hat_shunts(spec, &grid.graph, &microgrid.graph)?;
    let merged = merge_grids(
        &grid.graph,
        &grid.grid,
        &microgrid.graph,
        &microgrid.grid,
        spec,
    )?;
    assumption9_from_parts(&hat, grid, microgrid, &merged)
}

fn assumption9_from_parts(
    hat: &HatShunts,
    grid: &AttachCandidate,
    microgrid: &AttachCandidate,
    merged: &MergedGrid,
) -> Result<Assumption9Report, InterconnectError> {
    let grid_slack = slack_entries(&hat.grid_loads, &grid.ledger, grid.grid.load_ids())?;
    let microgrid_slack = slack_entries(
        &hat.microgrid_loads,
        &microgrid.ledger,
        microgrid.grid.load_ids(),
    )?;
    let budget_ok = grid_slack.iter().all(|s| !s.over_budget())
        && microgrid_slack.iter().all(|s| !s.over_budget());
    let merged_hierarchy = check_hierarchy_assumption(&merged.grid, &merged.graph);
    Ok(Assumption9Report {
        pass: budget_ok && merged_hierarchy.pass,
        budget_ok,
        grid_slack,
        microgrid_slack,
        merged_hierarchy,
    })
}

/// A physically merged grid. Microgrid node ids are remapped only when they
/// collide with the grid's; the mapping is always reported.
#[derive(Debug, Clone)]
pub struct MergedGrid {
    pub graph: GridGraph,
    pub grid: PartitionedGrid,
    /// Microgrid node id in its own file -> id in the merged grid.
    pub id_map: BTreeMap<NodeId, NodeId>,
}

/// Physically merges a grid and a single-block microgrid along the
/// interconnection lines. The microgrid becomes hierarchy block k+1 and the
/// load ordering invariant (grid loads first, then microgrid loads) is
/// preserved.
pub fn merge_grids(
    grid_graph: &GridGraph,
    grid: &PartitionedGrid,
    microgrid_graph: &GridGraph,
    microgrid: &PartitionedGrid,
    spec: &InterconnectionSpec,
) -> Result<MergedGrid, InterconnectError> {
    if microgrid.microgrid_count() != 1 {
        return Err(InterconnectError::MicrogridNotSingleBlock(
            microgrid.microgrid_count(),
        ));
    }
    spec.validate(grid_graph, microgrid_graph)?;

    let collision = microgrid_graph.node_ids().any(|id| grid_graph.contains(id));
    let offset = if collision {
        let max_grid = grid_graph.node_ids().max().unwrap_or(0);
        let min_mg = microgrid_graph.node_ids().min().unwrap_or(0);
        max_grid + 1 - min_mg.min(max_grid + 1)
    } else {
        0
    };
    let remap = |id: NodeId| id + offset;
    let id_map: BTreeMap<NodeId, NodeId> = microgrid_graph
        .node_ids()
        .map(|id| (id, remap(id)))
        .collect();

    let mut nodes: Vec<(NodeId, NodeKind)> = grid_graph.nodes().to_vec();
    nodes.extend(
        microgrid_graph
            .nodes()
            .iter()
            .map(|&(id, kind)| (remap(id), kind)),
    );
    let mut lines: Vec<Line> = grid_graph.lines().to_vec();
    lines.extend(microgrid_graph.lines().iter().map(|l| Line {
        i: remap(l.i),
        j: remap(l.j),
        conductance: l.conductance,
    }));
    lines.extend(spec.lines().iter().map(|l| Line {
        i: l.grid_node,
        j: remap(l.microgrid_node),
        conductance: l.conductance,
    }));
    let graph = GridGraph::new(nodes, lines)?;

    let new_block = grid.microgrid_count() + 1;
    let mut membership = grid.membership().clone();
    for &new in id_map.values() {
        membership.insert(new, new_block);
    }

    let mut voltages: BTreeMap<NodeId, f64> = grid
        .source_ids()
        .iter()
        .enumerate()
        .map(|(row, &id)| (id, grid.v_s()[row]))
        .collect();
    voltages.extend(
        microgrid
            .source_ids()
            .iter()
            .enumerate()
            .map(|(row, &id)| (remap(id), microgrid.v_s()[row])),
    );
    let mut demands: BTreeMap<NodeId, f64> = grid
        .load_ids()
        .iter()
        .enumerate()
        .map(|(row, &id)| (id, grid.p_l()[row]))
        .collect();
    demands.extend(
        microgrid
            .load_ids()
            .iter()
            .enumerate()
            .map(|(row, &id)| (remap(id), microgrid.p_l()[row])),
    );

    let merged = partition_grid(&graph, &membership, &voltages, &demands)?;
    debug_assert!(
        merged.load_ids()[..grid.load_count()] == *grid.load_ids(),
        "merged load ordering must keep the grid's loads first"
    );

    Ok(MergedGrid {
        graph,
        grid: merged,
        id_map,
    })
}

/// One-block extension of a block Cholesky factorization: the trailing
/// diagonal block `R` and the coupling action of the new rows. The base
/// factors are reused unmodified.
#[derive(Debug, Clone)]
pub struct ExtendedBcd {
    r: DMatrix<f64>,
    r_factor: Cholesky<f64, Dyn>,
    /// `Y_coupling · (C·D·Cᵀ)⁻¹`, the action of the incoming block's
    /// coupling rows on the factored matrix.
    coupling_solve: DMatrix<f64>,
}

/// Extends the factors of a grid's virtual load matrix by an attaching
/// block: computes the trailing Schur complement
/// `R = virtual_block - coupling·(C·D·Cᵀ)⁻¹·couplingᵀ` by one solve against
/// the existing factors. A singular `R` means the merged grid violates the
/// hierarchy assumption.
pub fn extend_bcd(
    base: &BlockCholesky,
    coupling: &DMatrix<f64>,
    virtual_block: &DMatrix<f64>,
) -> Result<ExtendedBcd, InterconnectError> {
    let w = base.solve_matrix(&coupling.transpose())?.transpose();
    let r = virtual_block - &w * coupling.transpose();
    let r_factor = Cholesky::new(r.clone()).ok_or(LinalgError::SingularDiagonalBlock {
        block: base.structure().block_count(),
    })?;
    Ok(ExtendedBcd {
        r,
        r_factor,
        coupling_solve: w,
    })
}

impl ExtendedBcd {
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Explicit R⁻¹, materialized for reports.
    pub fn r_inverse(&self) -> DMatrix<f64> {
        self.r_factor.inverse()
    }

    pub fn r_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.r_factor.solve(x)
    }

    pub fn coupling_solve(&self) -> &DMatrix<f64> {
        &self.coupling_solve
    }

    /// Assembles the factors of the merged virtual load matrix, embedding
    /// the base factors bit-for-bit.
    pub fn assemble(&self, base: &BlockCholesky) -> Result<BlockCholesky, LinalgError> {
        base.extended(&self.coupling_solve, self.r.clone())
    }
}

#[derive(Debug, Error)]
pub enum AttachError {
    #[error("the grid's own certificate does not pass; nothing can be attached to it")]
    CertificateNotEstablished,
    #[error("shunt budget exceeded at nodes {over:?}")]
    BudgetExceeded {
        over: Vec<NodeId>,
        report: Box<Assumption9Report>,
    },
    #[error("merged grid violates the hierarchy assumption at nodes {failing:?}")]
    HierarchyFailed {
        failing: Vec<NodeId>,
        report: Box<Assumption9Report>,
    },
    #[error("trailing block of the extended factorization is singular")]
    SingularExtension,
    #[error("directional bound vector of the merged grid is nonpositive at node {0}")]
    NonpositiveBound(NodeId),
    #[error(transparent)]
    Input(#[from] InterconnectError),
    #[error("evaluating the merged certificate failed: {0}")]
    Evaluation(FeasibilityError),
}

/// Successful admission of a microgrid.
#[derive(Debug, Clone)]
pub struct Attachment {
    /// The admission condition itself: the merged directional inequality
    /// restricted to the incoming microgrid's rows.
    pub report: FeasibilityReport,
    /// The full merged directional certificate (all rows), reusable as the
    /// merged grid's standing certificate for further attachments.
    pub merged_report: FeasibilityReport,
    pub assumption9: Assumption9Report,
    pub hat: HatShunts,
    /// Merged artifacts, present exactly when the admission condition passed.
    pub merged: Option<MergedCertified>,
}

#[derive(Debug, Clone)]
pub struct MergedCertified {
    pub certified: CertifiedGrid,
    /// Microgrid node id -> id in the merged grid.
    pub id_map: BTreeMap<NodeId, NodeId>,
}

/// A grid carrying a standing directional certificate on its virtual
/// counterpart, the factors that certificate was computed with, and the
/// shunt ledger backing the virtual diagonal.
///
/// Attaching a microgrid never mutates or recomputes any of these: a passing
/// admission yields a *new* `CertifiedGrid` whose factors embed the old ones.
#[derive(Debug, Clone)]
pub struct CertifiedGrid {
    base: AttachCandidate,
    factors: BlockCholesky,
    certificate: FeasibilityReport,
}

impl CertifiedGrid {
    /// Verifies the hierarchy assumption and evaluates the directional
    /// certificate on the candidate's virtual grid. The returned value keeps
    /// the certificate whether it passed or not; only a passing grid can
    /// accept attachments.
    pub fn establish(candidate: AttachCandidate, epsilon: f64) -> Result<Self, InterconnectError> {
        let virtual_grid = candidate.virtual_grid()?;
        let (certificate, factors) = check_thm6(&virtual_grid, &candidate.graph, epsilon)?;
        Ok(Self {
            base: candidate,
            factors,
            certificate,
        })
    }

    pub fn graph(&self) -> &GridGraph {
        &self.base.graph
    }

    /// The physical grid (no virtual shunts applied).
    pub fn grid(&self) -> &PartitionedGrid {
        &self.base.grid
    }

    pub fn ledger(&self) -> &ShuntLedger {
        &self.base.ledger
    }

    pub fn factors(&self) -> &BlockCholesky {
        &self.factors
    }

    pub fn certificate(&self) -> &FeasibilityReport {
        &self.certificate
    }

    pub fn is_certified(&self) -> bool {
        self.certificate.pass
    }

    /// Decides plug-and-play admission of `microgrid` along `spec`.
    ///
    /// Preconditions (distinguished from a condition failure): this grid's
    /// own certificate must pass, the interconnection must fit both shunt
    /// budgets, and the merged topology must satisfy the hierarchy
    /// assumption. The admission condition is then the merged directional
    /// inequality on the microgrid's rows only; the grid's own rows are
    /// covered by its standing certificate.
    ///
    /// On a pass, the returned attachment carries the merged physical grid,
    /// the updated ledger (consumed += crossing conductance), and the merged
    /// grid's own standing certificate, so attachments iterate.
    pub fn attach(
        &self,
        microgrid: &AttachCandidate,
        spec: &InterconnectionSpec,
        epsilon: f64,
    ) -> Result<Attachment, AttachError> {
        if !self.certificate.pass {
            return Err(AttachError::CertificateNotEstablished);
        }

        let hat = compute_hat_shunts(spec, &self.base.graph, &microgrid.graph)?;
        let merged = merge_grids(
            &self.base.graph,
            &self.base.grid,
            &microgrid.graph,
            &microgrid.grid,
            spec,
        )?;
        let assumption9 = assumption9_from_parts(&hat, &self.base, microgrid, &merged)?;
        if !assumption9.budget_ok {
            let mut over = assumption9.over_budget_grid_nodes();
            over.extend(assumption9.over_budget_microgrid_nodes());
            return Err(AttachError::BudgetExceeded {
                over,
                report: Box::new(assumption9),
            });
        }
        if !assumption9.merged_hierarchy.pass {
            let failing = assumption9.merged_hierarchy.failing_nodes();
            return Err(AttachError::HierarchyFailed {
                failing,
                report: Box::new(assumption9),
            });
        }

        // Coupling of the microgrid's loads to this grid's loads, from the
        // prospective lines alone.
        let n1 = self.base.grid.load_count();
        let n2 = microgrid.grid.load_count();
        let mut coupling = DMatrix::zeros(n2, n1);
        for line in spec.lines() {
            let grid_kind = self.base.graph.kind(line.grid_node).expect("validated");
            let mg_kind = microgrid
                .graph
                .kind(line.microgrid_node)
                .expect("validated");
            if grid_kind == NodeKind::Load && mg_kind == NodeKind::Load {
                let row = microgrid
                    .grid
                    .load_row(line.microgrid_node)
                    .expect("load row");
                let col = self.base.grid.load_row(line.grid_node).expect("load row");
                coupling[(row, col)] -= line.conductance;
            }
        }

        let virtual_block = microgrid.virtual_grid()?.y_ll().clone();
        let extension = match extend_bcd(&self.factors, &coupling, &virtual_block) {
            Ok(e) => e,
            Err(InterconnectError::Linalg(LinalgError::SingularDiagonalBlock { .. })) => {
                return Err(AttachError::SingularExtension)
            }
            Err(other) => return Err(AttachError::Input(other)),
        };
        let merged_factors = extension
            .assemble(&self.factors)
            .map_err(|e| AttachError::Input(InterconnectError::Linalg(e)))?;

        // Ledger after consumption, in merged ids.
        let mut loads = BTreeMap::new();
        for (&id, entry) in self.base.ledger.loads() {
            loads.insert(
                id,
                ShuntEntry {
                    capacity: entry.capacity,
                    consumed: entry.consumed + hat.grid_loads[&id],
                },
            );
        }
        for (&id, entry) in microgrid.ledger.loads() {
            loads.insert(
                merged.id_map[&id],
                ShuntEntry {
                    capacity: entry.capacity,
                    consumed: entry.consumed + hat.microgrid_loads[&id],
                },
            );
        }
        let mut sources = BTreeMap::new();
        for (&id, &consumed) in self.base.ledger.sources() {
            sources.insert(id, consumed + hat.grid_sources[&id]);
        }
        for (&id, &consumed) in microgrid.ledger.sources() {
            sources.insert(merged.id_map[&id], consumed + hat.microgrid_sources[&id]);
        }
        let merged_ledger = ShuntLedger::new(loads, sources)?;

        // Evaluate the merged directional inequality once with the assembled
        // factors; its microgrid rows are the admission condition.
        let merged_virtual = apply_virtual_shunts(&merged.grid, &merged_ledger)?;
        let merged_report = match evaluate_directional(&merged_virtual, &merged_factors, epsilon) {
            Ok(report) => report,
            Err(FeasibilityError::NonpositiveBoundEntry(node)) => {
                return Err(AttachError::NonpositiveBound(node))
            }
            Err(other) => return Err(AttachError::Evaluation(other)),
        };

        let mg_rows = n1..n1 + n2;
        let lhs = merged_report.lhs.rows(mg_rows.start, n2).into_owned();
        let rhs = merged_report.rhs.rows(mg_rows.start, n2).into_owned();
        let margin = if n2 == 0 {
            None
        } else {
            Some((&rhs - &lhs).min())
        };
        let pass = margin.is_none_or(|m| m > epsilon);
        let report = FeasibilityReport {
            condition: Condition::Thm8,
            pass,
            epsilon,
            load_ids: merged_report.load_ids.clone(),
            condition_ids: merged_report.load_ids[mg_rows].to_vec(),
            v_open: merged_report.v_open.clone(),
            bound_vector: merged_report.bound_vector.clone(),
            lhs,
            rhs,
            margin,
            source_injection: merged_report.source_injection.clone(),
            witness: None,
        };

        let merged_certified = pass.then(|| MergedCertified {
            certified: CertifiedGrid {
                base: AttachCandidate {
                    graph: merged.graph,
                    grid: merged.grid,
                    ledger: merged_ledger,
                },
                factors: merged_factors,
                certificate: merged_report.clone(),
            },
            id_map: merged.id_map,
        });

        Ok(Attachment {
            report,
            merged_report,
            assumption9,
            hat,
            merged: merged_certified,
        })
    }
}
