//! Deterministic report rendering.
//!
//! Reports are emitted through a small JSON builder rather than serde so the
//! output is byte-deterministic: object fields keep their insertion order
//! and every floating-point number is printed with 17 significant digits,
//! enough to round-trip an f64 exactly.

use nalgebra::{DMatrix, DVector};

use crate::feasibility::FeasibilityReport;
use crate::grid::{HierarchyReport, HierarchyVerdict, NodeId};
use crate::interconnect::{Assumption9Report, HatShunts, ShuntLedger};
use crate::linalg::BlockCholesky;
use crate::solver::{DiagonalExact, SolveOutcome, SolveStatus};

/// A JSON value with deterministic rendering.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Json>),
    Object(Vec<(String, Json)>),
}

impl Json {
    pub fn object() -> Self {
        Json::Object(Vec::new())
    }

    /// Appends a field; panics if called on a non-object (programming error).
    pub fn field(mut self, key: &str, value: Json) -> Self {
        match &mut self {
            Json::Object(fields) => fields.push((key.to_string(), value)),
            _ => panic!("field() on non-object"),
        }
        self
    }

    pub fn str(s: impl Into<String>) -> Self {
        Json::Str(s.into())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, indent: usize) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => out.push_str(&i.to_string()),
            Json::Float(x) => out.push_str(&format_float(*x)),
            Json::Str(s) => write_escaped(out, s),
            Json::Array(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (pos, item) in items.iter().enumerate() {
                    if pos > 0 {
                        out.push(',');
                    }
                    newline(out, indent + 1);
                    item.write(out, indent + 1);
                }
                newline(out, indent);
                out.push(']');
            }
            Json::Object(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (pos, (key, value)) in fields.iter().enumerate() {
                    if pos > 0 {
                        out.push(',');
                    }
                    newline(out, indent + 1);
                    write_escaped(out, key);
                    out.push_str(": ");
                    value.write(out, indent + 1);
                }
                newline(out, indent);
                out.push('}');
            }
        }
    }
}

fn newline(out: &mut String, indent: usize) {
    out.push('\n');
    for _ in 0..indent {
        out.push_str("  ");
    }
}

fn write_escaped(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// 17 significant digits, the shortest count that round-trips every f64.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".to_string();
    }
    format!("{:.16e}", x)
}

fn optional_float(x: Option<f64>) -> Json {
    match x {
        Some(v) if v.is_finite() => Json::Float(v),
        _ => Json::Null,
    }
}

/// A vector rendered as `[{"node": id, "value": x}, ...]`.
pub fn vector_by_node(v: &DVector<f64>, ids: &[NodeId]) -> Json {
    debug_assert_eq!(v.len(), ids.len());
    Json::Array(
        ids.iter()
            .zip(v.iter())
            .map(|(&id, &x)| {
                Json::object()
                    .field("node", Json::Int(id as i64))
                    .field("value", Json::Float(x))
            })
            .collect(),
    )
}

pub fn matrix(m: &DMatrix<f64>) -> Json {
    Json::Array(
        (0..m.nrows())
            .map(|i| Json::Array((0..m.ncols()).map(|j| Json::Float(m[(i, j)])).collect()))
            .collect(),
    )
}

pub fn feasibility_report(report: &FeasibilityReport) -> Json {
    let mut doc = Json::object()
        .field("condition", Json::str(report.condition.as_str()))
        .field(
            "verdict",
            Json::str(if report.pass { "pass" } else { "fail" }),
        )
        .field("epsilon", Json::Float(report.epsilon))
        .field("margin", optional_float(report.margin))
        .field(
            "open_circuit_voltages",
            vector_by_node(&report.v_open, &report.load_ids),
        );
    doc = match &report.bound_vector {
        Some(bound) => doc.field("bound_vector", vector_by_node(bound, &report.load_ids)),
        None => doc.field("bound_vector", Json::Null),
    };
    doc = doc
        .field("lhs", vector_by_node(&report.lhs, &report.condition_ids))
        .field("rhs", vector_by_node(&report.rhs, &report.condition_ids))
        .field(
            "source_injection",
            vector_by_node(&report.source_injection, &report.load_ids),
        );
    doc.field(
        "witness",
        match &report.witness {
            Some(outcome) => solve_outcome(outcome, &report.load_ids),
            None => Json::Null,
        },
    )
}

pub fn hierarchy_report(report: &HierarchyReport) -> Json {
    Json::object()
        .field("pass", Json::Bool(report.pass))
        .field(
            "per_node",
            Json::Array(
                report
                    .per_node
                    .iter()
                    .map(|e| {
                        Json::object()
                            .field("node", Json::Int(e.node as i64))
                            .field(
                                "verdict",
                                Json::str(match e.verdict {
                                    HierarchyVerdict::Island => "island",
                                    HierarchyVerdict::Descent => "descent",
                                    HierarchyVerdict::Both => "both",
                                    HierarchyVerdict::Neither => "neither",
                                }),
                            )
                            .field("strict_descent", Json::Bool(e.strict_descent))
                    })
                    .collect(),
            ),
        )
        .field(
            "strict_divergence",
            Json::Array(
                report
                    .strict_divergence
                    .iter()
                    .map(|&id| Json::Int(id as i64))
                    .collect(),
            ),
        )
}

pub fn solve_outcome(outcome: &SolveOutcome, ids: &[NodeId]) -> Json {
    Json::object()
        .field(
            "status",
            Json::str(match outcome.status {
                SolveStatus::Converged => "converged",
                SolveStatus::NoConvergence => "no_convergence",
                SolveStatus::DivergedToBoundary => "diverged_to_boundary",
            }),
        )
        .field("iterations", Json::Int(outcome.iterations as i64))
        .field("residual_norm", Json::Float(outcome.residual_norm))
        .field(
            "monotone_from_start",
            Json::Bool(outcome.monotone_from_start),
        )
        .field(
            "voltages",
            match &outcome.v_l {
                Some(v) => vector_by_node(v, ids),
                None => Json::Null,
            },
        )
}

pub fn diagonal_exact(exact: &DiagonalExact, ids: &[NodeId]) -> Json {
    Json::object()
        .field("feasible", Json::Bool(exact.feasible))
        .field(
            "voltages",
            match &exact.v_l {
                Some(v) => vector_by_node(v, ids),
                None => Json::Null,
            },
        )
        .field("discriminants", vector_by_node(&exact.discriminants, ids))
        .field(
            "infeasible_nodes",
            Json::Array(
                exact
                    .infeasible_nodes
                    .iter()
                    .map(|&id| Json::Int(id as i64))
                    .collect(),
            ),
        )
}

pub fn ledger(ledger: &ShuntLedger) -> Json {
    Json::object()
        .field(
            "loads",
            Json::Array(
                ledger
                    .loads()
                    .iter()
                    .map(|(&id, e)| {
                        Json::object()
                            .field("node", Json::Int(id as i64))
                            .field("capacity", Json::Float(e.capacity))
                            .field("consumed", Json::Float(e.consumed))
                            .field("remaining", Json::Float(e.remaining()))
                    })
                    .collect(),
            ),
        )
        .field(
            "sources",
            Json::Array(
                ledger
                    .sources()
                    .iter()
                    .map(|(&id, &consumed)| {
                        Json::object()
                            .field("node", Json::Int(id as i64))
                            .field("consumed", Json::Float(consumed))
                    })
                    .collect(),
            ),
        )
}

pub fn hat_shunts(hat: &HatShunts) -> Json {
    let map = |m: &std::collections::BTreeMap<NodeId, f64>| {
        Json::Array(
            m.iter()
                .map(|(&id, &v)| {
                    Json::object()
                        .field("node", Json::Int(id as i64))
                        .field("value", Json::Float(v))
                })
                .collect(),
        )
    };
    Json::object()
        .field("grid_loads", map(&hat.grid_loads))
        .field("grid_sources", map(&hat.grid_sources))
        .field("microgrid_loads", map(&hat.microgrid_loads))
        .field("microgrid_sources", map(&hat.microgrid_sources))
}

pub fn assumption9(report: &Assumption9Report) -> Json {
    let slack = |entries: &[crate::interconnect::SlackEntry]| {
        Json::Array(
            entries
                .iter()
                .map(|s| {
                    Json::object()
                        .field("node", Json::Int(s.node as i64))
                        .field("required", Json::Float(s.required))
                        .field("available", Json::Float(s.available))
                        .field("slack", Json::Float(s.slack()))
                })
                .collect(),
        )
    };
    Json::object()
        .field("pass", Json::Bool(report.pass))
        .field("budget_ok", Json::Bool(report.budget_ok))
        .field("grid_slack", slack(&report.grid_slack))
        .field("microgrid_slack", slack(&report.microgrid_slack))
        .field(
            "merged_hierarchy",
            hierarchy_report(&report.merged_hierarchy),
        )
}

/// Canonical byte representation of a factorization: the block structure,
/// C, and the diagonal blocks of D. Two factor objects serialize identically
/// iff they hold bit-identical values.
pub fn factors(f: &BlockCholesky) -> Json {
    Json::object()
        .field(
            "structure",
            Json::Array(
                f.structure()
                    .sizes()
                    .iter()
                    .map(|&s| Json::Int(s as i64))
                    .collect(),
            ),
        )
        .field("c", matrix(f.c()))
        .field(
            "d_blocks",
            Json::Array(
                (0..f.structure().block_count())
                    .map(|b| matrix(f.d_block(b)))
                    .collect(),
            ),
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for &x in &[0.0, 1.0, -1.5, 0.1, 2.0 / 25.0, 31.0 / 150.0, 1e-300, 1e300] {
            let s = format_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let doc = Json::object()
            .field("b", Json::Float(0.1))
            .field("a", Json::Array(vec![Json::Int(1), Json::Null]));
        assert_eq!(doc.render(), doc.render());
        // Field order is insertion order, not alphabetical.
        let text = doc.render();
        assert!(text.find("\"b\"").unwrap() < text.find("\"a\"").unwrap());
    }

    #[test]
    fn rendered_report_is_valid_json() {
        let (_, grid) = crate::testdata::microgrid1_island();
        let report = crate::feasibility::check_thm1(&grid, crate::DEFAULT_EPSILON).unwrap();
        let text = feasibility_report(&report).render();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["condition"], "thm1");
        assert_eq!(parsed["verdict"], "pass");
        let lhs0 = parsed["lhs"][0]["value"].as_f64().unwrap();
        assert!((lhs0 - 0.08).abs() < 1e-15);
    }

    #[test]
    fn factor_bytes_detect_any_change() {
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 3.0]);
        let structure = crate::linalg::BlockStructure::scalar(2);
        let f1 = crate::linalg::block_cholesky(&a, &structure).unwrap();
        let f2 = crate::linalg::block_cholesky(&a, &structure).unwrap();
        assert_eq!(factors(&f1).render(), factors(&f2).render());

        let b = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 3.0 + 1e-12]);
        let f3 = crate::linalg::block_cholesky(&b, &structure).unwrap();
        assert_ne!(factors(&f1).render(), factors(&f3).render());
    }
}
