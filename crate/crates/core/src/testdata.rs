//! Small reference grids shared by the test suite and the benchmarks.
//!
//! The running example is a grid of two microgrids with unit line
//! conductances and unit source voltages: the first has loads 1 and 2 fed by
//! source 6; the second has loads 3, 4, 5 and source 7, where load 3 has no
//! line inside its own microgrid. Interconnection adds the lines 1-3, 2-4,
//! 2-5 and 4-6.

use std::collections::BTreeMap;

use crate::grid::{
    partition_grid, GridGraph, Line, MicrogridIndex, NodeId, NodeKind, PartitionedGrid,
};
use crate::interconnect::{CrossLine, InterconnectionSpec, ShuntEntry, ShuntLedger};

/// Graph, membership, source voltages, and load demands of a reference grid.
pub type GridParts = (
    GridGraph,
    BTreeMap<NodeId, MicrogridIndex>,
    BTreeMap<NodeId, f64>,
    BTreeMap<NodeId, f64>,
);

fn line(i: NodeId, j: NodeId) -> Line {
    Line {
        i,
        j,
        conductance: 1.0,
    }
}

/// First microgrid in island mode: loads 1, 2 and source 6.
pub fn microgrid1_parts() -> GridParts {
    let graph = GridGraph::new(
        vec![
            (1, NodeKind::Load),
            (2, NodeKind::Load),
            (6, NodeKind::Source),
        ],
        vec![line(1, 6), line(2, 6)],
    )
    .expect("valid microgrid");
    let membership = BTreeMap::from([(1, 1), (2, 1), (6, 1)]);
    let voltages = BTreeMap::from([(6, 1.0)]);
    let demands = BTreeMap::from([(1, 2.0 / 25.0), (2, 2.0 / 25.0)]);
    (graph, membership, voltages, demands)
}

pub fn microgrid1_island() -> (GridGraph, PartitionedGrid) {
    let (graph, membership, voltages, demands) = microgrid1_parts();
    let grid = partition_grid(&graph, &membership, &voltages, &demands).unwrap();
    (graph, grid)
}

/// Shunt capacities reserved on the first microgrid's loads: 1 S on load 1,
/// 2 S on load 2. Nothing consumed yet.
pub fn microgrid1_ledger() -> ShuntLedger {
    ShuntLedger::new(
        BTreeMap::from([(1, ShuntEntry::fresh(1.0)), (2, ShuntEntry::fresh(2.0))]),
        BTreeMap::from([(6, 0.0)]),
    )
    .unwrap()
}

/// Second microgrid in island mode: loads 3, 4, 5 and source 7. Load 3 is
/// isolated inside the microgrid, so this grid cannot operate in island mode.
pub fn microgrid2_parts() -> GridParts {
    let graph = GridGraph::new(
        vec![
            (3, NodeKind::Load),
            (4, NodeKind::Load),
            (5, NodeKind::Load),
            (7, NodeKind::Source),
        ],
        vec![line(4, 5), line(4, 7), line(5, 7)],
    )
    .expect("valid microgrid");
    let membership = BTreeMap::from([(3, 1), (4, 1), (5, 1), (7, 1)]);
    let voltages = BTreeMap::from([(7, 1.0)]);
    let demands = BTreeMap::from([(3, 1.0 / 25.0), (4, 9.0 / 25.0), (5, 7.0 / 25.0)]);
    (graph, membership, voltages, demands)
}

pub fn microgrid2_island() -> (GridGraph, PartitionedGrid) {
    let (graph, membership, voltages, demands) = microgrid2_parts();
    let grid = partition_grid(&graph, &membership, &voltages, &demands).unwrap();
    (graph, grid)
}

/// Shunt capacities on the second microgrid's loads: 1, 2 and 1 S.
pub fn microgrid2_ledger() -> ShuntLedger {
    ShuntLedger::new(
        BTreeMap::from([
            (3, ShuntEntry::fresh(1.0)),
            (4, ShuntEntry::fresh(2.0)),
            (5, ShuntEntry::fresh(1.0)),
        ]),
        BTreeMap::from([(7, 0.0)]),
    )
    .unwrap()
}

/// The four interconnection lines of the running example, unit conductance.
pub fn interconnection_spec() -> InterconnectionSpec {
    InterconnectionSpec::new(vec![
        CrossLine {
            grid_node: 1,
            microgrid_node: 3,
            conductance: 1.0,
        },
        CrossLine {
            grid_node: 2,
            microgrid_node: 4,
            conductance: 1.0,
        },
        CrossLine {
            grid_node: 2,
            microgrid_node: 5,
            conductance: 1.0,
        },
        CrossLine {
            grid_node: 6,
            microgrid_node: 4,
            conductance: 1.0,
        },
    ])
}

/// The physically interconnected two-microgrid grid.
pub fn interconnected_figure() -> GridParts {
    let graph = GridGraph::new(
        vec![
            (1, NodeKind::Load),
            (2, NodeKind::Load),
            (3, NodeKind::Load),
            (4, NodeKind::Load),
            (5, NodeKind::Load),
            (6, NodeKind::Source),
            (7, NodeKind::Source),
        ],
        vec![
            line(1, 6),
            line(2, 6),
            line(4, 5),
            line(4, 7),
            line(5, 7),
            line(1, 3),
            line(2, 4),
            line(2, 5),
            line(4, 6),
        ],
    )
    .expect("valid grid");
    let membership = BTreeMap::from([(1, 1), (2, 1), (6, 1), (3, 2), (4, 2), (5, 2), (7, 2)]);
    let voltages = BTreeMap::from([(6, 1.0), (7, 1.0)]);
    let demands = BTreeMap::from([
        (1, 2.0 / 25.0),
        (2, 2.0 / 25.0),
        (3, 1.0 / 25.0),
        (4, 9.0 / 25.0),
        (5, 7.0 / 25.0),
    ]);
    (graph, membership, voltages, demands)
}

pub fn interconnected_figure_grid() -> (GridGraph, PartitionedGrid) {
    let (graph, membership, voltages, demands) = interconnected_figure();
    let grid = partition_grid(&graph, &membership, &voltages, &demands).unwrap();
    (graph, grid)
}

/// Same grid with the microgrid numbering interchanged; load 3 then fails
/// both hierarchy conditions.
pub fn interconnected_figure_grid_swapped() -> (GridGraph, PartitionedGrid) {
    let (graph, _, voltages, demands) = interconnected_figure();
    let membership = BTreeMap::from([(1, 2), (2, 2), (6, 2), (3, 1), (4, 1), (5, 1), (7, 1)]);
    let grid = partition_grid(&graph, &membership, &voltages, &demands).unwrap();
    (graph, grid)
}
