//! Seeded random instances for the randomized test suites and benchmarks.
//!
//! Grids are built so the hierarchy assumption holds by construction: every
//! load is chained to a source inside its own microgrid, or wired to some
//! node of a lower-indexed microgrid. Demands are then rescaled to hit a
//! target ratio against the open-circuit quarter bound, so corpora straddle
//! the pass/fail boundary in a controlled way.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::Rng;

use crate::feasibility::check_thm1;
use crate::grid::{
    partition_grid, GridGraph, Line, MicrogridIndex, NodeId, NodeKind, PartitionedGrid,
};
use crate::interconnect::{
    compute_hat_shunts, AttachCandidate, CertifiedGrid, CrossLine, InterconnectionSpec, ShuntEntry,
    ShuntLedger,
};
use crate::linalg::BlockStructure;
use crate::DEFAULT_EPSILON;

#[derive(Debug, Clone)]
pub struct SampleOptions {
    pub max_loads: usize,
    pub max_microgrids: MicrogridIndex,
    /// Range for the target ratio of the open-circuit condition's lhs to its
    /// rhs; sampled log-uniformly. Below one tends to pass, above one fails.
    pub tightness: (f64, f64),
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            max_loads: 12,
            max_microgrids: 3,
            tightness: (0.05, 2.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSample {
    pub graph: GridGraph,
    pub grid: PartitionedGrid,
}

fn log_uniform(rng: &mut StdRng, range: (f64, f64)) -> f64 {
    (rng.gen_range(range.0.ln()..=range.1.ln())).exp()
}

/// Rebuilds a grid with every demand multiplied by `factor`.
pub fn with_scaled_demands(
    graph: &GridGraph,
    grid: &PartitionedGrid,
    factor: f64,
) -> PartitionedGrid {
    let demands: BTreeMap<NodeId, f64> = grid
        .load_ids()
        .iter()
        .enumerate()
        .map(|(row, &id)| (id, grid.p_l()[row] * factor))
        .collect();
    let voltages: BTreeMap<NodeId, f64> = grid
        .source_ids()
        .iter()
        .enumerate()
        .map(|(row, &id)| (id, grid.v_s()[row]))
        .collect();
    partition_grid(graph, grid.membership(), &voltages, &demands)
        .expect("rescaling preserves validity")
}

pub fn sample_grid(rng: &mut StdRng) -> GridSample {
    sample_grid_with(rng, &SampleOptions::default())
}

pub fn sample_grid_with(rng: &mut StdRng, opts: &SampleOptions) -> GridSample {
    let k = rng.gen_range(1..=opts.max_microgrids);
    let total_loads = rng.gen_range(k as usize..=opts.max_loads.max(k as usize));

    // Distribute loads over microgrids, at least one each.
    let mut loads_per = vec![1usize; k as usize];
    for _ in 0..total_loads - k as usize {
        let m = rng.gen_range(0..k as usize);
        loads_per[m] += 1;
    }
    let sources_per: Vec<usize> = (0..k as usize)
        .map(|m| {
            if m == 0 {
                rng.gen_range(1..=2)
            } else {
                rng.gen_range(0..=2)
            }
        })
        .collect();

    // Interleave node creation so ids do not follow microgrid order.
    let mut slots: Vec<(MicrogridIndex, NodeKind)> = Vec::new();
    for m in 0..k as usize {
        slots.extend(std::iter::repeat_n(
            (m as u32 + 1, NodeKind::Load),
            loads_per[m],
        ));
        slots.extend(std::iter::repeat_n(
            (m as u32 + 1, NodeKind::Source),
            sources_per[m],
        ));
    }
    for i in (1..slots.len()).rev() {
        slots.swap(i, rng.gen_range(0..=i));
    }

    let mut nodes: Vec<(NodeId, NodeKind)> = Vec::new();
    let mut membership: BTreeMap<NodeId, MicrogridIndex> = BTreeMap::new();
    let mut per_microgrid: Vec<Vec<NodeId>> = vec![Vec::new(); k as usize];
    let mut anchored: Vec<Vec<NodeId>> = vec![Vec::new(); k as usize];
    let mut loads: Vec<(NodeId, MicrogridIndex)> = Vec::new();
    let mut id = 0u64;
    for (m, kind) in slots {
        id += rng.gen_range(1..=3);
        nodes.push((id, kind));
        membership.insert(id, m);
        per_microgrid[(m - 1) as usize].push(id);
        match kind {
            NodeKind::Source => anchored[(m - 1) as usize].push(id),
            NodeKind::Load => loads.push((id, m)),
        }
    }

    let mut weights: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let add_line = |weights: &mut BTreeMap<(NodeId, NodeId), f64>, a: NodeId, b: NodeId, w| {
        let key = (a.min(b), a.max(b));
        weights.entry(key).or_insert(w);
    };

    // Guarantee the hierarchy assumption per load node.
    for &(load, m) in &loads {
        let mi = (m - 1) as usize;
        let island_possible = !anchored[mi].is_empty();
        let use_island = island_possible && (m == 1 || rng.gen_bool(0.6));
        let w = log_uniform(rng, (0.2, 5.0));
        if use_island {
            let target = anchored[mi][rng.gen_range(0..anchored[mi].len())];
            add_line(&mut weights, load, target, w);
            anchored[mi].push(load);
        } else {
            let lower: Vec<NodeId> = per_microgrid[..mi].iter().flatten().copied().collect();
            let target = lower[rng.gen_range(0..lower.len())];
            add_line(&mut weights, load, target, w);
        }
    }

    // Extra random lines anywhere.
    let all_ids: Vec<NodeId> = nodes.iter().map(|&(id, _)| id).collect();
    let extra = rng.gen_range(0..=all_ids.len());
    for _ in 0..extra {
        let a = all_ids[rng.gen_range(0..all_ids.len())];
        let b = all_ids[rng.gen_range(0..all_ids.len())];
        if a != b {
            add_line(&mut weights, a, b, log_uniform(rng, (0.2, 5.0)));
        }
    }

    let lines: Vec<Line> = weights
        .into_iter()
        .map(|((i, j), conductance)| Line { i, j, conductance })
        .collect();
    let graph = GridGraph::new(nodes, lines).expect("sampled graph is valid");

    let voltages: BTreeMap<NodeId, f64> = graph
        .nodes()
        .iter()
        .filter(|(_, kind)| *kind == NodeKind::Source)
        .map(|&(id, _)| (id, rng.gen_range(0.9..1.1)))
        .collect();
    let demands: BTreeMap<NodeId, f64> = loads
        .iter()
        .map(|&(id, _)| (id, rng.gen_range(0.5..1.5)))
        .collect();
    let grid =
        partition_grid(&graph, &membership, &voltages, &demands).expect("sampled grid is valid");

    // Rescale demands onto the target tightness of the open-circuit bound.
    let report = check_thm1(&grid, DEFAULT_EPSILON).expect("hierarchy implies solvable blocks");
    let ratio = report
        .lhs
        .iter()
        .zip(report.rhs.iter())
        .map(|(l, r)| l / r)
        .fold(0.0f64, f64::max);
    let target = log_uniform(rng, opts.tightness);
    let grid = with_scaled_demands(&graph, &grid, target / ratio);

    GridSample { graph, grid }
}

/// A randomized interconnection instance: a certifiable grid, a single-block
/// microgrid whose every load either reaches a source inside the microgrid
/// or gets a crossing line, ledgers with exactly sufficient (sometimes
/// surplus) capacity, and the crossing lines themselves.
#[derive(Debug, Clone)]
pub struct AttachSample {
    pub grid: AttachCandidate,
    pub microgrid: AttachCandidate,
    pub spec: InterconnectionSpec,
}

pub fn sample_attach(rng: &mut StdRng) -> AttachSample {
    // Grid 1 on the comfortable side of its own certificate.
    let base = sample_grid_with(
        rng,
        &SampleOptions {
            max_loads: 8,
            max_microgrids: 2,
            tightness: (0.05, 0.5),
        },
    );

    // Microgrid topology: one block, some loads possibly relying on crossing
    // lines for their source path.
    let mg_loads = rng.gen_range(1..=5usize);
    let mg_sources = rng.gen_range(0..=2usize);
    let grid_max_id = base.graph.node_ids().max().unwrap_or(0);
    let mut id = grid_max_id + 100;
    let mut nodes = Vec::new();
    let mut membership = BTreeMap::new();
    let mut load_ids = Vec::new();
    let mut source_ids = Vec::new();
    for _ in 0..mg_loads {
        id += rng.gen_range(1..=2);
        nodes.push((id, NodeKind::Load));
        membership.insert(id, 1);
        load_ids.push(id);
    }
    for _ in 0..mg_sources {
        id += rng.gen_range(1..=2);
        nodes.push((id, NodeKind::Source));
        membership.insert(id, 1);
        source_ids.push(id);
    }

    let mut weights: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let mut cross: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let grid_ids: Vec<NodeId> = base.graph.node_ids().collect();
    let mut anchored = source_ids.clone();
    for &load in &load_ids {
        let use_island = !anchored.is_empty() && rng.gen_bool(0.5);
        let w = log_uniform(rng, (0.3, 3.0));
        if use_island {
            let target = anchored[rng.gen_range(0..anchored.len())];
            let key = (load.min(target), load.max(target));
            weights.entry(key).or_insert(w);
            anchored.push(load);
        } else {
            let target = grid_ids[rng.gen_range(0..grid_ids.len())];
            cross.entry((target, load)).or_insert(w);
        }
    }
    // Extra internal and crossing lines.
    let all_mg: Vec<NodeId> = nodes.iter().map(|&(id, _)| id).collect();
    for _ in 0..rng.gen_range(0..=all_mg.len()) {
        let a = all_mg[rng.gen_range(0..all_mg.len())];
        let b = all_mg[rng.gen_range(0..all_mg.len())];
        if a != b {
            let key = (a.min(b), a.max(b));
            weights.entry(key).or_insert(log_uniform(rng, (0.3, 3.0)));
        }
    }
    for _ in 0..rng.gen_range(0..=3) {
        let g = grid_ids[rng.gen_range(0..grid_ids.len())];
        let m = all_mg[rng.gen_range(0..all_mg.len())];
        cross.entry((g, m)).or_insert(log_uniform(rng, (0.3, 3.0)));
    }

    let mg_graph = GridGraph::new(
        nodes,
        weights
            .into_iter()
            .map(|((i, j), conductance)| Line { i, j, conductance })
            .collect(),
    )
    .expect("sampled microgrid is valid");
    let spec = InterconnectionSpec::new(
        cross
            .into_iter()
            .map(|((grid_node, microgrid_node), conductance)| CrossLine {
                grid_node,
                microgrid_node,
                conductance,
            })
            .collect(),
    );

    let voltages: BTreeMap<NodeId, f64> = source_ids
        .iter()
        .map(|&s| (s, rng.gen_range(0.9..1.1)))
        .collect();
    let demands: BTreeMap<NodeId, f64> = load_ids
        .iter()
        .map(|&l| (l, rng.gen_range(0.5..1.5)))
        .collect();
    let mg_grid = partition_grid(&mg_graph, &membership, &voltages, &demands)
        .expect("sampled microgrid partitions");

    // Capacities exactly cover the crossing conductance, with occasional
    // surplus.
    let hat = compute_hat_shunts(&spec, &base.graph, &mg_graph).expect("spec is valid");
    let surplus = |rng: &mut StdRng| {
        if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..1.0)
        }
    };
    let ledger1 = ShuntLedger::new(
        base.grid
            .load_ids()
            .iter()
            .map(|&id| (id, ShuntEntry::fresh(hat.grid_loads[&id] + surplus(rng))))
            .collect(),
        base.grid.source_ids().iter().map(|&id| (id, 0.0)).collect(),
    )
    .unwrap();
    let ledger2 = ShuntLedger::new(
        mg_grid
            .load_ids()
            .iter()
            .map(|&id| {
                (
                    id,
                    ShuntEntry::fresh(hat.microgrid_loads[&id] + surplus(rng)),
                )
            })
            .collect(),
        mg_grid.source_ids().iter().map(|&id| (id, 0.0)).collect(),
    )
    .unwrap();

    // Rescale grid 1's demands so its virtual certificate passes at a
    // comfortable target, then rescale the microgrid's demands onto a target
    // ratio of the admission condition.
    let candidate1 = AttachCandidate::new(base.graph.clone(), base.grid.clone(), ledger1).unwrap();
    let certified = CertifiedGrid::establish(candidate1, DEFAULT_EPSILON).expect("establishes");
    let cert = certified.certificate();
    let ratio = cert
        .lhs
        .iter()
        .zip(cert.rhs.iter())
        .map(|(l, r)| l / r)
        .fold(0.0f64, f64::max);
    let target1 = log_uniform(rng, (0.05, 0.6));
    let scaled1 = with_scaled_demands(&base.graph, &base.grid, target1 / ratio);
    let candidate1 =
        AttachCandidate::new(base.graph.clone(), scaled1, certified.ledger().clone()).unwrap();
    let certified = CertifiedGrid::establish(candidate1.clone(), DEFAULT_EPSILON).unwrap();
    debug_assert!(certified.is_certified());

    let candidate2 = AttachCandidate::new(mg_graph.clone(), mg_grid, ledger2).unwrap();
    let probe = certified
        .attach(&candidate2, &spec, DEFAULT_EPSILON)
        .expect("sampled attach instance is admissible");

    // lhs is affine in the microgrid demands: split the two contributions by
    // probing a second demand level.
    let doubled = AttachCandidate::new(
        mg_graph.clone(),
        with_scaled_demands(&mg_graph, &candidate2.grid, 2.0),
        candidate2.ledger.clone(),
    )
    .unwrap();
    let probe2 = certified
        .attach(&doubled, &spec, DEFAULT_EPSILON)
        .expect("doubled demands stay admissible");
    let own_term: DVector<f64> = &probe2.report.lhs - &probe.report.lhs;
    let grid_term: DVector<f64> = &probe.report.lhs - &own_term;

    let target2 = log_uniform(rng, (0.1, 1.6));
    let mut scale = f64::INFINITY;
    for i in 0..own_term.len() {
        if own_term[i] > 1e-12 {
            let s = (target2 * probe.report.rhs[i] - grid_term[i]) / own_term[i];
            if s.is_finite() {
                scale = scale.min(s);
            }
        }
    }
    if !scale.is_finite() || scale <= 0.0 {
        scale = 0.1;
    }
    let candidate2 = AttachCandidate::new(
        mg_graph.clone(),
        with_scaled_demands(&mg_graph, &candidate2.grid, scale),
        candidate2.ledger,
    )
    .unwrap();

    AttachSample {
        grid: candidate1,
        microgrid: candidate2,
        spec,
    }
}

/// A random symmetric invertible M-matrix together with a random block
/// partition of its rows. Two flavors: strictly diagonally dominant, and
/// Laplacian-plus-diagonal-bumps (weakly chained dominance only).
pub fn sample_m_matrix(rng: &mut StdRng, max_n: usize) -> (DMatrix<f64>, BlockStructure) {
    let n = rng.gen_range(2..=max_n.max(2));
    let mut a = DMatrix::zeros(n, n);
    if rng.gen_bool(0.5) {
        for i in 0..n {
            for j in 0..i {
                if rng.gen_bool(0.4) {
                    let w = log_uniform(rng, (0.3, 3.0));
                    a[(i, j)] = -w;
                    a[(j, i)] = -w;
                }
            }
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            a[(i, i)] = off + rng.gen_range(0.05..1.0);
        }
    } else {
        // Random spanning tree keeps the graph connected, then bump a random
        // nonempty subset of diagonals.
        for i in 1..n {
            let j = rng.gen_range(0..i);
            let w = log_uniform(rng, (0.3, 3.0));
            a[(i, j)] -= w;
            a[(j, i)] -= w;
            a[(i, i)] += w;
            a[(j, j)] += w;
        }
        for i in 0..n {
            for j in 0..i {
                if a[(i, j)] == 0.0 && rng.gen_bool(0.15) {
                    let w = log_uniform(rng, (0.3, 3.0));
                    a[(i, j)] = -w;
                    a[(j, i)] = -w;
                    a[(i, i)] += w;
                    a[(j, j)] += w;
                }
            }
        }
        let bumps = rng.gen_range(1..=n);
        for _ in 0..bumps {
            let i = rng.gen_range(0..n);
            a[(i, i)] += rng.gen_range(0.1..2.0);
        }
    }
    (a, sample_structure(rng, n))
}

pub fn sample_structure(rng: &mut StdRng, n: usize) -> BlockStructure {
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let take = rng.gen_range(1..=left);
        sizes.push(take);
        left -= take;
    }
    BlockStructure::new(sizes).expect("sizes are positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sampled_grids_satisfy_hierarchy() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let sample = sample_grid(&mut rng);
            let report = crate::grid::check_hierarchy_assumption(&sample.grid, &sample.graph);
            assert!(report.pass);
            assert!(sample.grid.load_count() <= 12);
        }
    }

    #[test]
    fn sampled_m_matrices_pass_the_predicate() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let (a, structure) = sample_m_matrix(&mut rng, 20);
            assert!(crate::linalg::is_invertible_m_matrix(&a).holds);
            assert_eq!(structure.total(), a.nrows());
        }
    }

    #[test]
    fn sampled_attach_instances_are_admissible() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..10 {
            let sample = sample_attach(&mut rng);
            let certified = CertifiedGrid::establish(sample.grid.clone(), DEFAULT_EPSILON).unwrap();
            assert!(certified.is_certified());
            // Admissible means the preconditions hold; the admission verdict
            // itself may be either way.
            certified
                .attach(&sample.microgrid, &sample.spec, DEFAULT_EPSILON)
                .unwrap();
        }
    }
}
