//! Brute-force interleaving product machine, used as ground truth.
//!
//! Deliberately naive: explicit breadth-first search over state vectors, no
//! reduction of any kind.

mod bisim;
mod ctl;
mod deadlock;

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

pub use bisim::{check_behaviours, check_bisimulation, check_cutoffs, BehaviourReport, BisimReport};
pub use ctl::{eval_ctl, parse_ctl, sat_ctl, CtlFormula};
pub use deadlock::{compare_deadlocks, DeadlockComparison};

use crate::model::{ActionKind, Move, SystemSpec};
use crate::reach::ReachQuery;
use crate::unfold::SCHEMA;

/// Default state bound.
pub const DEFAULT_BOUND: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("product exploration stopped at the bound of {0} states")]
    Truncated(usize),
}

#[derive(Clone, Debug)]
pub struct ProductMachine {
    pub spec: SystemSpec,
    /// Reachable vectors in discovery order; state 0 is the initial vector.
    pub states: Vec<Vec<usize>>,
    /// Outgoing edges per state.
    pub succ: Vec<Vec<(Move, usize)>>,
    /// Breadth-first distance from the initial state.
    pub distance: Vec<usize>,
    pub truncated: bool,
    pub bound: usize,
    index: HashMap<Vec<usize>, usize>,
}

/// Every move enabled at `v`, in machine and transition order.
pub fn moves_at(spec: &SystemSpec, v: &[usize]) -> Vec<Move> {
    let mut out = Vec::new();
    for (i, m) in spec.machines.iter().enumerate() {
        for (t, tr) in m.transitions.iter().enumerate() {
            if tr.source != v[i] {
                continue;
            }
            match tr.action.kind {
                ActionKind::Async => out.push(Move::Async { machine: i, transition: t }),
                ActionKind::Sync(j) if j > i => {
                    for (u, tu) in spec.machines[j].transitions.iter().enumerate() {
                        if tu.source == v[j]
                            && tu.action.kind == ActionKind::Sync(i)
                            && tu.action.name == tr.action.name
                        {
                            out.push(Move::Sync { a: (i, t), b: (j, u) });
                        }
                    }
                }
                ActionKind::Sync(_) => {}
            }
        }
    }
    out
}

/// Breadth-first exploration from the initial vector, stopping after
/// `bound` states.
pub fn build_product(spec: &SystemSpec, bound: usize) -> ProductMachine {
    let init = spec.initial_vector();
    let mut pm = ProductMachine {
        spec: spec.clone(),
        states: vec![init.clone()],
        succ: vec![Vec::new()],
        distance: vec![0],
        truncated: false,
        bound,
        index: HashMap::from([(init, 0)]),
    };
    let mut queue = VecDeque::from([0usize]);
    while let Some(s) = queue.pop_front() {
        let v = pm.states[s].clone();
        for mv in moves_at(spec, &v) {
            let mut w = v.clone();
            mv.apply(spec, &mut w);
            let t = match pm.index.get(&w) {
                Some(&t) => t,
                None => {
                    if pm.states.len() >= bound {
                        pm.truncated = true;
                        continue;
                    }
                    let t = pm.states.len();
                    pm.index.insert(w.clone(), t);
                    pm.states.push(w);
                    pm.succ.push(Vec::new());
                    pm.distance.push(pm.distance[s] + 1);
                    queue.push_back(t);
                    t
                }
            };
            pm.succ[s].push((mv, t));
        }
    }
    pm
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProductStats {
    pub schema: &'static str,
    pub states: usize,
    pub edges: usize,
    pub diameter: usize,
    pub deadlocks: usize,
    pub truncated: bool,
}

impl ProductMachine {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn state_of(&self, v: &[usize]) -> Option<usize> {
        self.index.get(v).copied()
    }

    /// Largest breadth-first distance from the initial state.
    pub fn diameter(&self) -> usize {
        self.distance.iter().copied().max().unwrap_or(0)
    }

    pub fn require_complete(&self) -> Result<(), OracleError> {
        if self.truncated {
            Err(OracleError::Truncated(self.bound))
        } else {
            Ok(())
        }
    }

    /// States without successors in which some machine could still move on
    /// its own (some component is not a terminal state).
    pub fn deadlocks(&self) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&s| {
                self.succ[s].is_empty()
                    && self.states[s].iter().enumerate().any(|(i, &q)| !self.spec.machines[i].is_terminal(q))
            })
            .collect()
    }

    pub fn stats(&self) -> ProductStats {
        ProductStats {
            schema: SCHEMA,
            states: self.len(),
            edges: self.edge_count(),
            diameter: self.diameter(),
            deadlocks: self.deadlocks().len(),
            truncated: self.truncated,
        }
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}_product\" {{", self.spec.name);
        for (s, v) in self.states.iter().enumerate() {
            let shape = if s == 0 { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  s{s} [label=\"{}\", shape={shape}];", self.spec.format_vector(v));
        }
        for (s, edges) in self.succ.iter().enumerate() {
            for (mv, t) in edges {
                let _ = writeln!(out, "  s{s} -> s{t} [label=\"{}\"];", mv.action(&self.spec));
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Answer of a product query. `exact` is false when exploration was
/// truncated, in which case a negative answer is only a lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProductAnswer {
    pub holds: bool,
    pub exact: bool,
}

/// Whether some explored state matches every constrained component.
pub fn product_reachable(pm: &ProductMachine, q: &ReachQuery) -> ProductAnswer {
    let holds = pm.states.iter().any(|v| q.targets.iter().all(|(&i, &s)| v[i] == s));
    ProductAnswer { holds, exact: !pm.truncated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::fixture;

    fn product(name: &str) -> ProductMachine {
        build_product(&fixture(name).spec, DEFAULT_BOUND)
    }

    #[test]
    fn fixture_sizes() {
        let pm = product("pingpong");
        assert_eq!((pm.len(), pm.edge_count()), (2, 2));
        let pm = product("async");
        assert_eq!((pm.len(), pm.edge_count()), (4, 4));
        let pm = product("mismatch");
        assert_eq!((pm.len(), pm.edge_count()), (1, 0));
        assert_eq!(pm.deadlocks(), vec![0]);
        assert_eq!(pm.diameter(), 0);
    }

    #[test]
    fn reachability() {
        let pm = product("conflict");
        let sum = fixture("conflict");
        let q = |pairs: &[(&str, &str)]| ReachQuery::from_names(&sum.spec, pairs.iter().copied()).unwrap();
        assert!(!product_reachable(&pm, &q(&[("F1", "B"), ("F2", "Z")])).holds);
        assert!(product_reachable(&pm, &q(&[("F1", "B"), ("F2", "Y")])).holds);
        assert!(product_reachable(&pm, &ReachQuery::full(&sum.spec.initial_vector())).holds);
        assert_eq!(pm.len(), 3);
    }

    #[test]
    fn truncation_is_reported() {
        let pm = build_product(&fixture("async").spec, 2);
        assert!(pm.truncated);
        assert_eq!(pm.len(), 2);
        assert_eq!(pm.require_complete(), Err(OracleError::Truncated(2)));
        assert!(!product_reachable(&pm, &ReachQuery::full(&[1, 1])).exact);
    }

    #[test]
    fn dot_lists_states_and_edges() {
        let dot = product("pingpong").to_dot();
        assert!(dot.contains("(A,X)") && dot.contains("(B,Y)"));
        assert_eq!(dot.matches("->").count(), 2);
    }
}
