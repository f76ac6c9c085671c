//! JSON file formats: grids, shunt ledgers, and interconnection specs.
//!
//! Conductances are in siemens, voltages in volts, powers in watts. All
//! formats round-trip losslessly through serde and validate against the
//! domain invariants on load.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    partition_grid, GridError, GridGraph, Line, MicrogridIndex, NodeId, NodeKind, PartitionedGrid,
};
use crate::interconnect::{
    AttachCandidate, CrossLine, InterconnectError, InterconnectionSpec, ShuntEntry, ShuntLedger,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    UnsupportedSchema(u32),
    #[error("source node {0} must declare a voltage")]
    SourceWithoutVoltage(NodeId),
    #[error("load node {0} must declare a power demand")]
    LoadWithoutPower(NodeId),
    #[error("load node {0} must not declare a voltage")]
    LoadWithVoltage(NodeId),
    #[error("source node {0} must not declare power or shunt_capacity")]
    SourceWithLoadFields(NodeId),
    #[error("node {0} appears in more than one microgrid")]
    NodeInMultipleMicrogrids(NodeId),
    #[error("node {0} appears in no microgrid")]
    NodeInNoMicrogrid(NodeId),
    #[error("microgrid index {0} declared more than once")]
    DuplicateMicrogridIndex(MicrogridIndex),
    #[error("microgrid entry references unknown node {0}")]
    UnknownMicrogridMember(NodeId),
    #[error(
        "ledger capacity {ledger} for node {node} disagrees with the grid's declared {declared}"
    )]
    CapacityMismatch {
        node: NodeId,
        ledger: f64,
        declared: f64,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Interconnect(#[from] InterconnectError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shunt_capacity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub i: NodeId,
    pub j: NodeId,
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrogridRecord {
    pub index: MicrogridIndex,
    pub nodes: Vec<NodeId>,
}

/// A complete grid description: nodes with their electrical data, lines,
/// and the microgrid partition in hierarchy order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub schema_version: u32,
    pub nodes: Vec<NodeRecord>,
    pub lines: Vec<LineRecord>,
    pub microgrids: Vec<MicrogridRecord>,
}

impl GridFile {
    /// Validates and converts into the domain types. The returned candidate
    /// carries a fresh ledger built from the declared shunt capacities
    /// (nothing consumed).
    pub fn to_candidate(&self) -> Result<AttachCandidate, FormatError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(FormatError::UnsupportedSchema(self.schema_version));
        }

        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut voltages = BTreeMap::new();
        let mut demands = BTreeMap::new();
        let mut capacities = BTreeMap::new();
        let mut source_ids = Vec::new();
        for record in &self.nodes {
            nodes.push((record.id, record.kind));
            match record.kind {
                NodeKind::Source => {
                    if record.power.is_some() || record.shunt_capacity.is_some() {
                        return Err(FormatError::SourceWithLoadFields(record.id));
                    }
                    let v = record
                        .voltage
                        .ok_or(FormatError::SourceWithoutVoltage(record.id))?;
                    voltages.insert(record.id, v);
                    source_ids.push(record.id);
                }
                NodeKind::Load => {
                    if record.voltage.is_some() {
                        return Err(FormatError::LoadWithVoltage(record.id));
                    }
                    let p = record
                        .power
                        .ok_or(FormatError::LoadWithoutPower(record.id))?;
                    demands.insert(record.id, p);
                    capacities.insert(record.id, record.shunt_capacity.unwrap_or(0.0));
                }
            }
        }

        let lines = self
            .lines
            .iter()
            .map(|l| Line {
                i: l.i,
                j: l.j,
                conductance: l.conductance,
            })
            .collect();
        let graph = GridGraph::new(nodes, lines)?;

        let mut membership: BTreeMap<NodeId, MicrogridIndex> = BTreeMap::new();
        let mut seen_indices = std::collections::BTreeSet::new();
        for record in &self.microgrids {
            if !seen_indices.insert(record.index) {
                return Err(FormatError::DuplicateMicrogridIndex(record.index));
            }
            for &id in &record.nodes {
                if !graph.contains(id) {
                    return Err(FormatError::UnknownMicrogridMember(id));
                }
                if membership.insert(id, record.index).is_some() {
                    return Err(FormatError::NodeInMultipleMicrogrids(id));
                }
            }
        }
        for id in graph.node_ids() {
            if !membership.contains_key(&id) {
                return Err(FormatError::NodeInNoMicrogrid(id));
            }
        }

        let grid = partition_grid(&graph, &membership, &voltages, &demands)?;
        let ledger = ShuntLedger::new(
            capacities
                .into_iter()
                .map(|(id, capacity)| (id, ShuntEntry::fresh(capacity)))
                .collect(),
            source_ids.into_iter().map(|id| (id, 0.0)).collect(),
        )?;
        Ok(AttachCandidate::new(graph, grid, ledger)?)
    }

    /// Serializes a grid back into the file shape. Shunt capacities come
    /// from the ledger; consumed state belongs in a [`LedgerFile`].
    pub fn from_parts(graph: &GridGraph, grid: &PartitionedGrid, ledger: &ShuntLedger) -> Self {
        let nodes = graph
            .nodes()
            .iter()
            .map(|&(id, kind)| match kind {
                NodeKind::Source => NodeRecord {
                    id,
                    kind,
                    voltage: Some(grid.v_s()[grid.source_row(id).expect("source row")]),
                    power: None,
                    shunt_capacity: None,
                },
                NodeKind::Load => NodeRecord {
                    id,
                    kind,
                    voltage: None,
                    power: Some(grid.p_l()[grid.load_row(id).expect("load row")]),
                    shunt_capacity: Some(ledger.load_entry(id).map(|e| e.capacity).unwrap_or(0.0)),
                },
            })
            .collect();
        let lines = graph
            .lines()
            .iter()
            .map(|l| LineRecord {
                i: l.i,
                j: l.j,
                conductance: l.conductance,
            })
            .collect();
        let mut per_index: BTreeMap<MicrogridIndex, Vec<NodeId>> = BTreeMap::new();
        for (&id, &index) in grid.membership() {
            per_index.entry(index).or_default().push(id);
        }
        let microgrids = per_index
            .into_iter()
            .map(|(index, nodes)| MicrogridRecord { index, nodes })
            .collect();
        GridFile {
            schema_version: SCHEMA_VERSION,
            nodes,
            lines,
            microgrids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerLoadRecord {
    pub id: NodeId,
    pub capacity: f64,
    pub consumed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerSourceRecord {
    pub id: NodeId,
    pub consumed: f64,
}

/// Shunt ledger state: how much reserved capacity each load node has and
/// how much of it interconnections have consumed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerFile {
    pub schema_version: u32,
    pub loads: Vec<LedgerLoadRecord>,
    pub sources: Vec<LedgerSourceRecord>,
}

impl LedgerFile {
    pub fn to_ledger(&self) -> Result<ShuntLedger, FormatError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(FormatError::UnsupportedSchema(self.schema_version));
        }
        let loads = self
            .loads
            .iter()
            .map(|r| {
                (
                    r.id,
                    ShuntEntry {
                        capacity: r.capacity,
                        consumed: r.consumed,
                    },
                )
            })
            .collect();
        let sources = self.sources.iter().map(|r| (r.id, r.consumed)).collect();
        Ok(ShuntLedger::new(loads, sources)?)
    }

    /// Converts a ledger, cross-checking its capacities against the grid
    /// file's declared `shunt_capacity` values.
    pub fn to_ledger_checked(&self, declared: &ShuntLedger) -> Result<ShuntLedger, FormatError> {
        let ledger = self.to_ledger()?;
        for (&node, entry) in ledger.loads() {
            if let Some(declared_entry) = declared.load_entry(node) {
                if declared_entry.capacity != entry.capacity {
                    return Err(FormatError::CapacityMismatch {
                        node,
                        ledger: entry.capacity,
                        declared: declared_entry.capacity,
                    });
                }
            }
        }
        Ok(ledger)
    }

    pub fn from_ledger(ledger: &ShuntLedger) -> Self {
        LedgerFile {
            schema_version: SCHEMA_VERSION,
            loads: ledger
                .loads()
                .iter()
                .map(|(&id, e)| LedgerLoadRecord {
                    id,
                    capacity: e.capacity,
                    consumed: e.consumed,
                })
                .collect(),
            sources: ledger
                .sources()
                .iter()
                .map(|(&id, &consumed)| LedgerSourceRecord { id, consumed })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossLineRecord {
    pub grid_node: NodeId,
    pub microgrid_node: NodeId,
    pub conductance: f64,
}

/// Prospective interconnection lines between a grid file and a microgrid
/// file, each side in its own id space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterconnectionFile {
    pub schema_version: u32,
    pub lines: Vec<CrossLineRecord>,
}

impl InterconnectionFile {
    pub fn to_spec(&self) -> Result<InterconnectionSpec, FormatError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(FormatError::UnsupportedSchema(self.schema_version));
        }
        Ok(InterconnectionSpec::new(
            self.lines
                .iter()
                .map(|l| CrossLine {
                    grid_node: l.grid_node,
                    microgrid_node: l.microgrid_node,
                    conductance: l.conductance,
                })
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testdata;

    fn figure_grid_file() -> GridFile {
        let (graph, grid) = testdata::interconnected_figure_grid();
        let mut loads = std::collections::BTreeMap::new();
        for &id in grid.load_ids() {
            loads.insert(id, ShuntEntry::fresh(0.0));
        }
        let ledger = ShuntLedger::new(
            loads,
            grid.source_ids().iter().map(|&id| (id, 0.0)).collect(),
        )
        .unwrap();
        GridFile::from_parts(&graph, &grid, &ledger)
    }

    #[test]
    fn grid_file_roundtrip_through_json() {
        let file = figure_grid_file();
        let text = serde_json::to_string_pretty(&file).unwrap();
        let parsed: GridFile = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, file);
        let again = serde_json::to_string_pretty(&parsed).unwrap();
        assert_eq!(again, text);
    }

    #[test]
    fn grid_file_converts_back_to_same_partition() {
        let file = figure_grid_file();
        let candidate = file.to_candidate().unwrap();
        let (_, grid) = testdata::interconnected_figure_grid();
        assert_eq!(candidate.grid.y_ll(), grid.y_ll());
        assert_eq!(candidate.grid.load_ids(), grid.load_ids());
    }

    #[test]
    fn grid_file_rejects_wrong_fields() {
        let mut file = figure_grid_file();
        file.nodes[0].voltage = Some(1.0); // node 1 is a load
        assert!(matches!(
            file.to_candidate(),
            Err(FormatError::LoadWithVoltage(1))
        ));

        let mut file = figure_grid_file();
        file.nodes.iter_mut().find(|n| n.id == 6).unwrap().power = Some(1.0);
        assert!(matches!(
            file.to_candidate(),
            Err(FormatError::SourceWithLoadFields(6))
        ));
    }

    #[test]
    fn grid_file_requires_total_membership() {
        let mut file = figure_grid_file();
        file.microgrids[0].nodes.retain(|&id| id != 2);
        assert!(matches!(
            file.to_candidate(),
            Err(FormatError::NodeInNoMicrogrid(2))
        ));
    }

    #[test]
    fn ledger_file_roundtrip_and_capacity_check() {
        let ledger = testdata::microgrid1_ledger();
        let file = LedgerFile::from_ledger(&ledger);
        let text = serde_json::to_string(&file).unwrap();
        let parsed: LedgerFile = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, file);
        assert_eq!(parsed.to_ledger().unwrap(), ledger);

        let mut wrong = file.clone();
        wrong.loads[0].capacity = 9.0;
        assert!(matches!(
            wrong.to_ledger_checked(&ledger),
            Err(FormatError::CapacityMismatch { node: 1, .. })
        ));
    }

    #[test]
    fn interconnection_file_roundtrip() {
        let file = InterconnectionFile {
            schema_version: SCHEMA_VERSION,
            lines: vec![CrossLineRecord {
                grid_node: 1,
                microgrid_node: 3,
                conductance: 1.0,
            }],
        };
        let text = serde_json::to_string(&file).unwrap();
        let parsed: InterconnectionFile = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, file);
        assert_eq!(parsed.to_spec().unwrap().lines().len(), 1);
    }

    #[test]
    fn schema_version_is_enforced() {
        let mut file = figure_grid_file();
        file.schema_version = 2;
        assert!(matches!(
            file.to_candidate(),
            Err(FormatError::UnsupportedSchema(2))
        ));
    }
}
