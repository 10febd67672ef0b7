//! MulVAL `VERTICES.CSV` / `ARCS.CSV` interchange.
//!
//! Vertices are `id,"label","TYPE",score` with `LEAF`, `OR` and `AND` mapped
//! to condition, derived and rule nodes. Arcs are `dst,src,weight` and point
//! from a node to its prerequisite, so they are reversed on import.

use super::{validate_graph, AttackGraph, Diagnostic, Node, NodeId, NodeKind};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MulvalError {
    #[error("{file} line {line}: {msg}")]
    Malformed {
        file: &'static str,
        line: u64,
        msg: String,
    },
    #[error("ARCS line {line}: arc references unknown vertex {id}")]
    DanglingArc { line: u64, id: NodeId },
    #[error("rule node {rule} has {successors} successors, expected 1")]
    RuleOutDegree { rule: NodeId, successors: usize },
    #[error("graph has no derived node to serve as goal")]
    NoGoal,
    #[error("invalid attack graph: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn malformed(file: &'static str, line: u64, msg: impl Into<String>) -> MulvalError {
    MulvalError::Malformed {
        file,
        line,
        msg: msg.into(),
    }
}

fn csv_error(file: &'static str, e: csv::Error) -> MulvalError {
    let line = e.position().map_or(0, |p| p.line());
    malformed(file, line, e.to_string())
}

fn field<'r>(
    rec: &'r csv::StringRecord,
    i: usize,
    file: &'static str,
    line: u64,
    what: &str,
) -> Result<&'r str, MulvalError> {
    rec.get(i)
        .ok_or_else(|| malformed(file, line, format!("missing {what} column")))
}

/// Reads a MulVAL vertex/arc pair into an [`AttackGraph`].
///
/// The goal is the derived node without successors; ties go to the smallest id.
pub fn import_mulval(vertices: &str, arcs: &str) -> Result<AttackGraph, MulvalError> {
    let mut nodes = BTreeMap::new();
    for rec in reader(vertices).records() {
        let rec = rec.map_err(|e| csv_error("VERTICES", e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(malformed(
                "VERTICES",
                line,
                format!("expected 4 columns, found {}", rec.len()),
            ));
        }
        let raw_id = field(&rec, 0, "VERTICES", line, "id")?;
        let id: NodeId = raw_id
            .parse()
            .map_err(|_| malformed("VERTICES", line, format!("bad vertex id `{raw_id}`")))?;
        let label = field(&rec, 1, "VERTICES", line, "label")?.to_string();
        let kind = match field(&rec, 2, "VERTICES", line, "type")? {
            "LEAF" => NodeKind::Condition,
            "OR" => NodeKind::Derived,
            "AND" => NodeKind::Rule,
            other => {
                return Err(malformed(
                    "VERTICES",
                    line,
                    format!("unknown vertex type `{other}`"),
                ))
            }
        };
        let raw_score = field(&rec, 3, "VERTICES", line, "score")?;
        let score: f64 = raw_score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| malformed("VERTICES", line, format!("bad score `{raw_score}`")))?;
        let node = Node {
            id,
            kind,
            label,
            score: Some(score),
            cost: None,
            damage: None,
        };
        if nodes.insert(id, node).is_some() {
            return Err(malformed("VERTICES", line, format!("duplicate vertex id {id}")));
        }
    }

    let mut edges = BTreeSet::new();
    for rec in reader(arcs).records() {
        let rec = rec.map_err(|e| csv_error("ARCS", e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(malformed(
                "ARCS",
                line,
                format!("expected 3 columns, found {}", rec.len()),
            ));
        }
        let mut ids = [0 as NodeId; 2];
        for (slot, i) in ids.iter_mut().zip([0, 1]) {
            let raw = field(&rec, i, "ARCS", line, "endpoint")?;
            *slot = raw
                .parse()
                .map_err(|_| malformed("ARCS", line, format!("bad vertex id `{raw}`")))?;
            if !nodes.contains_key(slot) {
                return Err(MulvalError::DanglingArc { line, id: *slot });
            }
        }
        let raw_w = field(&rec, 2, "ARCS", line, "weight")?;
        raw_w
            .parse::<f64>()
            .map_err(|_| malformed("ARCS", line, format!("bad weight `{raw_w}`")))?;
        let [dst, src] = ids;
        edges.insert((src, dst));
    }

    let mut graph = AttackGraph {
        nodes,
        edges,
        goal: 0,
    };
    for r in graph.rule_nodes() {
        let n = graph.succ(r).len();
        if n != 1 {
            return Err(MulvalError::RuleOutDegree {
                rule: r,
                successors: n,
            });
        }
    }
    let derived = graph.nodes_of(NodeKind::Derived);
    graph.goal = derived
        .iter()
        .copied()
        .find(|&d| graph.succ(d).is_empty())
        .or_else(|| derived.first().copied())
        .ok_or(if graph.nodes.is_empty() {
            MulvalError::Invalid(vec![Diagnostic::Empty])
        } else {
            MulvalError::NoGoal
        })?;
    let diags = validate_graph(&graph);
    if !diags.is_empty() {
        return Err(MulvalError::Invalid(diags));
    }
    Ok(graph)
}

/// Writes a graph as a `(VERTICES, ARCS)` CSV pair.
///
/// Nodes without a score are written with 1 for conditions and 0 otherwise.
pub fn export_mulval(graph: &AttackGraph) -> (String, String) {
    let mut v = csv::WriterBuilder::new()
        .has_headers(false)
        .quote_style(csv::QuoteStyle::NonNumeric)
        .from_writer(Vec::new());
    for n in graph.nodes.values() {
        let ty = match n.kind {
            NodeKind::Condition => "LEAF",
            NodeKind::Derived => "OR",
            NodeKind::Rule => "AND",
        };
        let score = n.score.unwrap_or(match n.kind {
            NodeKind::Condition => 1.0,
            _ => 0.0,
        });
        v.write_record([n.id.to_string(), n.label.clone(), ty.to_string(), score.to_string()])
            .expect("writing to memory");
    }
    let mut a = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for &(src, dst) in &graph.edges {
        a.write_record([dst.to_string(), src.to_string(), "-1".to_string()])
            .expect("writing to memory");
    }
    let finish = |w: csv::Writer<Vec<u8>>| {
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 output")
    };
    (finish(v), finish(a))
}
