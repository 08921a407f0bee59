//! JSON and DOT serialization of sum machines.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NodeKind, NodeRef, SumMachine, UnfoldStats, Unfolding};
use crate::model::{validate_system, SystemSpec};

/// Version tag carried by every JSON document this crate writes.
pub const SCHEMA: &str = "summachine/v1";

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {found:?}, expected {SCHEMA:?}")]
    Version { found: String },
    #[error("embedded system is invalid:\n{0}")]
    Spec(crate::model::ValidationReport),
    #[error("inconsistent sum machine: {0}")]
    Structure(String),
}

#[derive(Serialize, Deserialize)]
struct LocalEdge {
    parent: usize,
    action: String,
    child: usize,
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    #[serde(flatten)]
    tree: Unfolding,
    name: String,
    edges: Vec<LocalEdge>,
    sync_edges: Vec<(usize, NodeRef)>,
}

#[derive(Serialize, Deserialize)]
struct SumDoc {
    schema: String,
    seed: Option<u64>,
    spec: SystemSpec,
    machines: Vec<TreeDoc>,
    stats: UnfoldStats,
}

impl SumMachine {
    /// Full JSON document. `seed` is recorded verbatim for reproducibility.
    pub fn to_json(&self, seed: Option<u64>) -> String {
        let machines = self
            .unfoldings
            .iter()
            .map(|u| {
                let m = &self.spec.machines[u.machine];
                TreeDoc {
                    tree: u.clone(),
                    name: m.name.clone(),
                    edges: u
                        .local_edges()
                        .map(|(p, t, c)| LocalEdge {
                            parent: p,
                            action: m.transitions[t].action.name.clone(),
                            child: c,
                        })
                        .collect(),
                    sync_edges: u.sync_edges(self.machines()),
                }
            })
            .collect();
        let doc =
            SumDoc { schema: SCHEMA.to_string(), seed, spec: self.spec.clone(), machines, stats: self.stats.clone() };
        serde_json::to_string_pretty(&doc).expect("sum machine serializes")
    }

    /// Reads a document written by [`SumMachine::to_json`], checking the
    /// schema tag and the structural invariants the analyses rely on.
    pub fn from_json(text: &str) -> Result<(SumMachine, Option<u64>), SchemaError> {
        let doc: SumDoc = serde_json::from_str(text)?;
        if doc.schema != SCHEMA {
            return Err(SchemaError::Version { found: doc.schema });
        }
        let report = validate_system(&doc.spec);
        if !report.is_unfoldable() {
            return Err(SchemaError::Spec(report));
        }
        let unfoldings: Vec<Unfolding> = doc.machines.into_iter().map(|t| t.tree).collect();
        check_structure(&doc.spec, &unfoldings).map_err(SchemaError::Structure)?;
        Ok((SumMachine::from_parts(doc.spec, unfoldings), doc.seed))
    }

    /// One DOT digraph per unfolding, paired with the machine name.
    pub fn to_dot(&self) -> Vec<(String, String)> {
        self.unfoldings.iter().map(|u| (self.spec.machines[u.machine].name.clone(), self.tree_dot(u))).collect()
    }

    fn tree_dot(&self, u: &Unfolding) -> String {
        let m = &self.spec.machines[u.machine];
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", m.name);
        let _ = writeln!(out, "  rankdir=TB;");
        for (idx, n) in u.nodes.iter().enumerate() {
            let r = NodeRef::new(u.machine, idx);
            let env: Vec<String> = (0..self.machines()).map(|k| self.node_name(n.env.component(k))).collect();
            let shape = if n.cutoff { "doublecircle" } else { "circle" };
            let style = if n.dead { ", style=filled, fillcolor=lightgray" } else { "" };
            let _ = writeln!(
                out,
                "  n{idx} [label=\"{}\\n({})\", shape={shape}{style}];",
                self.node_name(r),
                env.join(",")
            );
        }
        for (p, t, c) in u.local_edges() {
            let _ = writeln!(out, "  n{p} -> n{c} [label=\"{}\"];", m.transitions[t].action.name);
        }
        for (idx, n) in u.nodes.iter().enumerate() {
            if let Some(p) = n.sync_partner {
                let ghost = format!("g{idx}");
                let _ = writeln!(out, "  {ghost} [label=\"{}\", shape=plaintext];", self.qualified_name(p));
                let _ = writeln!(out, "  n{idx} -> {ghost} [style=dashed, arrowhead=none];");
            }
        }
        out.push_str("}\n");
        out
    }
}

fn check_structure(spec: &SystemSpec, trees: &[Unfolding]) -> Result<(), String> {
    let n = spec.machines.len();
    if trees.len() != n {
        return Err(format!("{} trees for {} machines", trees.len(), n));
    }
    for (i, u) in trees.iter().enumerate() {
        let m = &spec.machines[i];
        if u.machine != i {
            return Err(format!("tree {i} claims machine {}", u.machine));
        }
        if u.nodes.is_empty() {
            return Err(format!("tree {i} has no root"));
        }
        for (idx, node) in u.nodes.iter().enumerate() {
            let at = |msg: &str| format!("machine {i} node {idx}: {msg}");
            if node.machine != i || node.base >= m.states.len() {
                return Err(at("bad machine or base state"));
            }
            if node.env.len() != n || node.env.0.iter().enumerate().any(|(k, &e)| e >= trees[k].nodes.len()) {
                return Err(at("env out of range"));
            }
            if node.env.0[i] != idx {
                return Err(at("env does not point at the node itself"));
            }
            match (idx, node.parent) {
                (0, None) if node.kind == NodeKind::Initial => {}
                (0, _) => return Err(at("root must be an initial node without parent")),
                (_, None) => return Err(at("non-root without parent")),
                (_, Some(p)) => {
                    if p.node >= u.nodes.len() || !u.nodes[p.node].children.contains(&idx) {
                        return Err(at("parent does not list the node as a child"));
                    }
                    let tr = m.transitions.get(p.transition).ok_or_else(|| at("unknown transition"))?;
                    if tr.source != u.nodes[p.node].base || tr.destination != node.base {
                        return Err(at("transition does not match endpoints"));
                    }
                    if node.depth != u.nodes[p.node].depth + 1 {
                        return Err(at("depth mismatch"));
                    }
                }
            }
            if node.children.iter().any(|&c| c >= u.nodes.len() || u.nodes[c].parent.map(|p| p.node) != Some(idx)) {
                return Err(at("child link mismatch"));
            }
            if let Some(p) = node.sync_partner {
                let back = trees.get(p.machine).and_then(|t| t.nodes.get(p.index)).and_then(|q| q.sync_partner);
                if back != Some(NodeRef::new(i, idx)) {
                    return Err(at("sync partner is not symmetric"));
                }
            }
            if (node.kind == NodeKind::SyncOutput) != node.sync_partner.is_some() {
                return Err(at("sync partner present iff sync output"));
            }
            if node.cutoff && !node.children.is_empty() {
                return Err(at("cut-off node has children"));
            }
        }
    }
    Ok(())
}
