//! Grid topology, microgrid membership, and the partitioned admittance
//! blocks.
//!
//! Node ids are externally supplied integers; internally nodes are mapped to
//! dense indices and the ordering permutation is kept so that every report
//! speaks the user's ids. Load rows of the partitioned matrix are ordered by
//! ascending microgrid index, which makes the microgrid blocks contiguous:
//! the block order *is* the attachment hierarchy.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::BlockStructure;

pub type NodeId = u64;

/// Microgrid indices are 1-based and contiguous; the index order is the
/// order in which microgrids were attached.
pub type MicrogridIndex = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Load,
    Source,
}

/// A conductance-weighted line between two distinct nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub i: NodeId,
    pub j: NodeId,
    pub conductance: f64,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("line ({i}, {j}) is a self-loop")]
    SelfLoop { i: NodeId, j: NodeId },
    #[error("duplicate line between nodes {i} and {j}; pre-aggregate parallel lines")]
    DuplicateLine { i: NodeId, j: NodeId },
    #[error("line ({i}, {j}) has nonpositive conductance {value}")]
    NonpositiveConductance { i: NodeId, j: NodeId, value: f64 },
    #[error("line ({i}, {j}) references unknown node {missing}")]
    UnknownEndpoint {
        i: NodeId,
        j: NodeId,
        missing: NodeId,
    },
    #[error("node {0} has no microgrid membership")]
    MissingMembership(NodeId),
    #[error("membership references unknown node {0}")]
    UnknownMember(NodeId),
    #[error("microgrid indices must be contiguous 1..=k; index {missing} is absent")]
    NonContiguousHierarchy { missing: MicrogridIndex },
    #[error("microgrid index 0 is not allowed (indices are 1-based)")]
    ZeroMicrogridIndex,
    #[error("load node {0} has no power demand")]
    MissingDemand(NodeId),
    #[error("source node {0} has no voltage")]
    MissingVoltage(NodeId),
    #[error("value for node {node} targets a {expected:?} node but {node} is not one")]
    WrongNodeKind { node: NodeId, expected: NodeKind },
    #[error("node {node} has nonpositive {quantity} {value}")]
    NonpositiveValue {
        node: NodeId,
        quantity: &'static str,
        value: f64,
    },
}

/// An undirected conductance-weighted graph of load and source nodes.
///
/// Validated on construction: no self-loops, at most one line per unordered
/// node pair, strictly positive conductances, known endpoints. The grid as a
/// whole is *not* required to be connected.
#[derive(Debug, Clone)]
pub struct GridGraph {
    nodes: Vec<(NodeId, NodeKind)>,
    lines: Vec<Line>,
    index: BTreeMap<NodeId, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl GridGraph {
    pub fn new(nodes: Vec<(NodeId, NodeKind)>, lines: Vec<Line>) -> Result<Self, GridError> {
        let mut sorted = nodes;
        sorted.sort_by_key(|&(id, _)| id);
        let mut index = BTreeMap::new();
        for (pos, &(id, _)) in sorted.iter().enumerate() {
            if index.insert(id, pos).is_some() {
                return Err(GridError::DuplicateNode(id));
            }
        }

        let mut normalized: Vec<Line> = Vec::with_capacity(lines.len());
        for line in &lines {
            if line.i == line.j {
                return Err(GridError::SelfLoop {
                    i: line.i,
                    j: line.j,
                });
            }
            if line.conductance <= 0.0 || !line.conductance.is_finite() {
                return Err(GridError::NonpositiveConductance {
                    i: line.i,
                    j: line.j,
                    value: line.conductance,
                });
            }
            for endpoint in [line.i, line.j] {
                if !index.contains_key(&endpoint) {
                    return Err(GridError::UnknownEndpoint {
                        i: line.i,
                        j: line.j,
                        missing: endpoint,
                    });
                }
            }
            let (lo, hi) = if line.i < line.j {
                (line.i, line.j)
            } else {
                (line.j, line.i)
            };
            normalized.push(Line {
                i: lo,
                j: hi,
                conductance: line.conductance,
            });
        }
        normalized.sort_by_key(|l| (l.i, l.j));
        for pair in normalized.windows(2) {
            if pair[0].i == pair[1].i && pair[0].j == pair[1].j {
                return Err(GridError::DuplicateLine {
                    i: pair[0].i,
                    j: pair[0].j,
                });
            }
        }

        let mut adjacency = vec![Vec::new(); sorted.len()];
        for line in &normalized {
            let a = index[&line.i];
            let b = index[&line.j];
            adjacency[a].push((b, line.conductance));
            adjacency[b].push((a, line.conductance));
        }

        Ok(Self {
            nodes: sorted,
            lines: normalized,
            index,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node ids with their kinds, in ascending id order.
    pub fn nodes(&self) -> &[(NodeId, NodeKind)] {
        &self.nodes
    }

    /// Lines normalized to `i < j` and sorted.
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn kind(&self, id: NodeId) -> Option<NodeKind> {
        self.index.get(&id).map(|&pos| self.nodes[pos].1)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|&(id, _)| id)
    }

    fn dense_index(&self, id: NodeId) -> usize {
        self.index[&id]
    }

    /// Neighbors of a node with the conductances of the connecting lines.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.adjacency[self.dense_index(id)]
            .iter()
            .map(move |&(pos, w)| (self.nodes[pos].0, w))
    }

    /// The weighted Laplacian over all nodes in ascending id order:
    /// off-diagonals are negated conductances and each diagonal entry is the
    /// negated sum of its row's off-diagonals, accumulated in ascending
    /// column order so that summing a row's off-diagonals (ascending) and
    /// then its diagonal gives exactly zero.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut l = DMatrix::zeros(n, n);
        for line in &self.lines {
            let a = self.dense_index(line.i);
            let b = self.dense_index(line.j);
            l[(a, b)] -= line.conductance;
            l[(b, a)] -= line.conductance;
        }
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                if j != i {
                    degree -= l[(i, j)];
                }
            }
            l[(i, i)] = degree;
        }
        l
    }

    /// Nodes reachable from `start` through nodes accepted by `allow`. The
    /// start node itself is always visited.
    fn reachable(&self, start: usize, allow: impl Fn(usize) -> bool) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &self.adjacency[v] {
                if !seen[w] && allow(w) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }
}

/// Checks that `membership` covers exactly the nodes of `graph` with
/// contiguous microgrid indices `1..=k`, returning `k`.
pub fn validate_membership(
    graph: &GridGraph,
    membership: &BTreeMap<NodeId, MicrogridIndex>,
) -> Result<MicrogridIndex, GridError> {
    for &id in membership.keys() {
        if !graph.contains(id) {
            return Err(GridError::UnknownMember(id));
        }
    }
    let mut k = 0;
    for id in graph.node_ids() {
        match membership.get(&id) {
            None => return Err(GridError::MissingMembership(id)),
            Some(0) => return Err(GridError::ZeroMicrogridIndex),
            Some(&m) => k = k.max(m),
        }
    }
    for m in 1..=k {
        if !membership.values().any(|&v| v == m) {
            return Err(GridError::NonContiguousHierarchy { missing: m });
        }
    }
    Ok(k)
}

/// The admittance blocks of a grid, partitioned into loads and sources, with
/// source voltages and constant power demands.
///
/// Immutable after construction. Load rows carry an optional diagonal shunt
/// augmentation (zero for a grid built directly from its graph); the virtual
/// counterpart of a grid is the same value with a positive augmentation.
#[derive(Debug, Clone)]
pub struct PartitionedGrid {
    y_ll: DMatrix<f64>,
    y_ls: DMatrix<f64>,
    y_ss: DMatrix<f64>,
    v_s: DVector<f64>,
    p_l: DVector<f64>,
    load_ids: Vec<NodeId>,
    source_ids: Vec<NodeId>,
    membership: BTreeMap<NodeId, MicrogridIndex>,
    microgrid_count: MicrogridIndex,
    /// Load blocks in hierarchy order: (microgrid index, row range). Empty
    /// microgrids are skipped, so block ranges are contiguous and nonempty.
    blocks: Vec<(MicrogridIndex, std::ops::Range<usize>)>,
    load_shunts: DVector<f64>,
}

/// Extracts the partitioned blocks of `graph` ordered by microgrid index.
///
/// Every load node needs a strictly positive power demand in `demands`
/// (watts) and every source node a strictly positive voltage in `voltages`
/// (volts); keys must match the node kinds exactly.
pub fn partition_grid(
    graph: &GridGraph,
    membership: &BTreeMap<NodeId, MicrogridIndex>,
    voltages: &BTreeMap<NodeId, f64>,
    demands: &BTreeMap<NodeId, f64>,
) -> Result<PartitionedGrid, GridError> {
    let k = validate_membership(graph, membership)?;

    for &id in demands.keys() {
        if graph.kind(id) != Some(NodeKind::Load) {
            return Err(GridError::WrongNodeKind {
                node: id,
                expected: NodeKind::Load,
            });
        }
    }
    for &id in voltages.keys() {
        if graph.kind(id) != Some(NodeKind::Source) {
            return Err(GridError::WrongNodeKind {
                node: id,
                expected: NodeKind::Source,
            });
        }
    }

    let mut load_ids: Vec<NodeId> = Vec::new();
    let mut source_ids: Vec<NodeId> = Vec::new();
    for &(id, kind) in graph.nodes() {
        match kind {
            NodeKind::Load => load_ids.push(id),
            NodeKind::Source => source_ids.push(id),
        }
    }
    load_ids.sort_by_key(|id| (membership[id], *id));
    source_ids.sort_by_key(|id| (membership[id], *id));

    let mut p_l = DVector::zeros(load_ids.len());
    for (row, &id) in load_ids.iter().enumerate() {
        let &p = demands.get(&id).ok_or(GridError::MissingDemand(id))?;
        if p <= 0.0 || !p.is_finite() {
            return Err(GridError::NonpositiveValue {
                node: id,
                quantity: "power demand",
                value: p,
            });
        }
        p_l[row] = p;
    }
    let mut v_s = DVector::zeros(source_ids.len());
    for (row, &id) in source_ids.iter().enumerate() {
        let &v = voltages.get(&id).ok_or(GridError::MissingVoltage(id))?;
        if v <= 0.0 || !v.is_finite() {
            return Err(GridError::NonpositiveValue {
                node: id,
                quantity: "source voltage",
                value: v,
            });
        }
        v_s[row] = v;
    }

    let laplacian = graph.laplacian();
    let all_ids: Vec<NodeId> = graph.node_ids().collect();
    let pos_of = |id: NodeId| all_ids.binary_search(&id).expect("node id present");
    let load_pos: Vec<usize> = load_ids.iter().map(|&id| pos_of(id)).collect();
    let source_pos: Vec<usize> = source_ids.iter().map(|&id| pos_of(id)).collect();

    let y_ll = laplacian
        .select_rows(load_pos.iter())
        .select_columns(load_pos.iter());
    let y_ls = laplacian
        .select_rows(load_pos.iter())
        .select_columns(source_pos.iter());
    let y_ss = laplacian
        .select_rows(source_pos.iter())
        .select_columns(source_pos.iter());

    let mut blocks = Vec::new();
    let mut start = 0;
    for m in 1..=k {
        let len = load_ids.iter().filter(|id| membership[id] == m).count();
        if len > 0 {
            blocks.push((m, start..start + len));
            start += len;
        }
    }

    let n = load_ids.len();
    Ok(PartitionedGrid {
        y_ll,
        y_ls,
        y_ss,
        v_s,
        p_l,
        load_ids,
        source_ids,
        membership: membership.clone(),
        microgrid_count: k,
        blocks,
        load_shunts: DVector::zeros(n),
    })
}

impl PartitionedGrid {
    /// Load-load admittance block, including any shunt augmentation.
    pub fn y_ll(&self) -> &DMatrix<f64> {
        &self.y_ll
    }

    /// Load-source coupling block.
    pub fn y_ls(&self) -> &DMatrix<f64> {
        &self.y_ls
    }

    pub fn y_sl(&self) -> DMatrix<f64> {
        self.y_ls.transpose()
    }

    pub fn y_ss(&self) -> &DMatrix<f64> {
        &self.y_ss
    }

    pub fn v_s(&self) -> &DVector<f64> {
        &self.v_s
    }

    pub fn p_l(&self) -> &DVector<f64> {
        &self.p_l
    }

    pub fn load_count(&self) -> usize {
        self.load_ids.len()
    }

    pub fn source_count(&self) -> usize {
        self.source_ids.len()
    }

    /// Load node ids in row order (ascending microgrid index, then id).
    pub fn load_ids(&self) -> &[NodeId] {
        &self.load_ids
    }

    pub fn source_ids(&self) -> &[NodeId] {
        &self.source_ids
    }

    pub fn membership(&self) -> &BTreeMap<NodeId, MicrogridIndex> {
        &self.membership
    }

    pub fn microgrid_count(&self) -> MicrogridIndex {
        self.microgrid_count
    }

    pub fn load_row(&self, id: NodeId) -> Option<usize> {
        self.load_ids.iter().position(|&x| x == id)
    }

    pub fn source_row(&self, id: NodeId) -> Option<usize> {
        self.source_ids.iter().position(|&x| x == id)
    }

    /// Diagonal shunt augmentation currently applied to the load rows.
    pub fn load_shunts(&self) -> &DVector<f64> {
        &self.load_shunts
    }

    /// Number of nonempty load blocks.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Row range of the given nonempty load block (hierarchy order).
    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        self.blocks[block].1.clone()
    }

    /// Microgrid index owning the given load block.
    pub fn block_microgrid(&self, block: usize) -> MicrogridIndex {
        self.blocks[block].0
    }

    /// Load ids of one block.
    pub fn block_load_ids(&self, block: usize) -> &[NodeId] {
        &self.load_ids[self.block_range(block)]
    }

    /// The block partition of the load rows, one block per nonempty
    /// microgrid in hierarchy order.
    pub fn block_structure(&self) -> BlockStructure {
        BlockStructure::new(self.blocks.iter().map(|(_, r)| r.len()).collect())
            .expect("load blocks are nonempty by construction")
    }

    /// The source current injected toward neighboring loads, `-Y_LS V_S`.
    pub fn source_injection(&self) -> DVector<f64> {
        -(&self.y_ls * &self.v_s)
    }

    /// A copy of this grid with additional nonnegative diagonal shunts on
    /// the load rows.
    pub fn with_added_load_shunts(&self, added: &DVector<f64>) -> PartitionedGrid {
        assert_eq!(added.len(), self.load_count(), "shunt vector length");
        let mut out = self.clone();
        for i in 0..added.len() {
            out.y_ll[(i, i)] += added[i];
            out.load_shunts[i] += added[i];
        }
        out
    }

    /// Reassembles the full matrix `[Y_LL Y_LS; Y_SL Y_SS]`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.load_count();
        let s = self.source_count();
        let mut full = DMatrix::zeros(n + s, n + s);
        full.view_mut((0, 0), (n, n)).copy_from(&self.y_ll);
        full.view_mut((0, n), (n, s)).copy_from(&self.y_ls);
        full.view_mut((n, 0), (s, n))
            .copy_from(&self.y_ls.transpose());
        full.view_mut((n, n), (s, s)).copy_from(&self.y_ss);
        full
    }
}

/// Which of the two hierarchy conditions a load node satisfies: reaching a
/// source inside its own microgrid (island capability), reaching a
/// lower-indexed microgrid through the grid (descent), both, or neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyVerdict {
    Island,
    Descent,
    Both,
    Neither,
}

#[derive(Debug, Clone)]
pub struct HierarchyEntry {
    pub node: NodeId,
    pub verdict: HierarchyVerdict,
    /// Whether descent also holds along a path whose only node outside the
    /// load's own microgrid is the final one.
    pub strict_descent: bool,
}

#[derive(Debug, Clone)]
pub struct HierarchyReport {
    pub pass: bool,
    pub per_node: Vec<HierarchyEntry>,
    /// Loads whose descent holds as literally stated but not in the stricter
    /// single-exit path shape.
    pub strict_divergence: Vec<NodeId>,
}

impl HierarchyReport {
    pub fn failing_nodes(&self) -> Vec<NodeId> {
        self.per_node
            .iter()
            .filter(|e| e.verdict == HierarchyVerdict::Neither)
            .map(|e| e.node)
            .collect()
    }
}

/// Checks the hierarchy assumption: every load node either reaches a source
/// of its own microgrid inside that microgrid's induced subgraph, or reaches
/// some node of a lower-indexed microgrid through the whole grid.
///
/// Descent is checked as literally stated (any path through the grid); the
/// stricter shape in which only the final node leaves the load's microgrid
/// is evaluated as well and divergences are noted in the report.
pub fn check_hierarchy_assumption(grid: &PartitionedGrid, graph: &GridGraph) -> HierarchyReport {
    let membership = grid.membership();
    let ids: Vec<NodeId> = graph.node_ids().collect();
    let member_of = |pos: usize| membership[&ids[pos]];
    let kind_of = |pos: usize| graph.kind(ids[pos]).expect("known node");

    let mut per_node = Vec::with_capacity(grid.load_count());
    let mut strict_divergence = Vec::new();

    for &load in grid.load_ids() {
        let start = ids.binary_search(&load).expect("load id present");
        let m = membership[&load];

        let within = graph.reachable(start, |v| member_of(v) == m);
        let island = within
            .iter()
            .enumerate()
            .any(|(v, &seen)| seen && member_of(v) == m && kind_of(v) == NodeKind::Source);

        let everywhere = graph.reachable(start, |_| true);
        let descent = m > 1
            && everywhere
                .iter()
                .enumerate()
                .any(|(v, &seen)| seen && member_of(v) < m);

        let strict_descent = m > 1
            && within.iter().enumerate().any(|(v, &seen)| {
                seen && graph.adjacency[v].iter().any(|&(w, _)| member_of(w) < m)
            });

        let verdict = match (island, descent) {
            (true, true) => HierarchyVerdict::Both,
            (true, false) => HierarchyVerdict::Island,
            (false, true) => HierarchyVerdict::Descent,
            (false, false) => HierarchyVerdict::Neither,
        };
        if descent && !strict_descent {
            strict_divergence.push(load);
        }
        per_node.push(HierarchyEntry {
            node: load,
            verdict,
            strict_descent,
        });
    }

    HierarchyReport {
        pass: per_node
            .iter()
            .all(|e| e.verdict != HierarchyVerdict::Neither),
        per_node,
        strict_divergence,
    }
}
