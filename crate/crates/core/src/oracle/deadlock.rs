//! Dead-leaf diagnoses against product deadlocks.

use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::Serialize;

use super::ProductMachine;
use crate::unfold::{NodeRef, SumMachine};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DeadlockComparison {
    pub dead_leaves: usize,
    pub product_deadlocks: usize,
    /// Dead leaves whose machine can still move from the leaf's environment.
    pub unconfirmed: Vec<NodeRef>,
    /// Product deadlocks not reachable from the environment of any dead leaf
    /// sharing the blocked component.
    pub missed: Vec<Vec<usize>>,
}

impl DeadlockComparison {
    pub fn mismatches(&self) -> usize {
        self.unconfirmed.len() + self.missed.len()
    }
}

fn reachable_from(pm: &ProductMachine, s: usize) -> HashSet<usize> {
    let mut seen = HashSet::from([s]);
    let mut queue = VecDeque::from([s]);
    while let Some(x) = queue.pop_front() {
        for &(_, t) in &pm.succ[x] {
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    seen
}

/// A dead leaf is confirmed when, from the vector of its environment, no
/// product path ever moves its machine again. A product deadlock is covered
/// when it is reachable from a dead leaf's environment vector and agrees
/// with the leaf on the leaf's machine.
pub fn compare_deadlocks(pm: &ProductMachine, sum: &SumMachine) -> DeadlockComparison {
    let mut out = DeadlockComparison::default();
    let mut covered = BTreeSet::new();
    for s in sum.dead_leaves() {
        out.dead_leaves += 1;
        let v = sum.fvec_of(sum.env(s));
        let Some(start) = pm.state_of(&v) else {
            out.unconfirmed.push(s);
            continue;
        };
        let future = reachable_from(pm, start);
        let moves_again = future.iter().any(|&x| pm.succ[x].iter().any(|(mv, _)| mv.machines().contains(&s.machine)));
        if moves_again {
            out.unconfirmed.push(s);
        }
        let base = sum.node(s).base;
        covered.extend(future.into_iter().filter(|&x| pm.states[x][s.machine] == base));
    }
    for d in pm.deadlocks() {
        out.product_deadlocks += 1;
        if !covered.contains(&d) {
            out.missed.push(pm.states[d].clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{build_product, DEFAULT_BOUND};
    use crate::testutil::fixture;

    #[test]
    fn fixtures_agree() {
        for name in ["pingpong", "async", "conflict", "chain3", "stuck", "selfloop", "mismatch"] {
            let sum = fixture(name);
            let pm = build_product(&sum.spec, DEFAULT_BOUND);
            let c = compare_deadlocks(&pm, &sum);
            assert_eq!(c.mismatches(), 0, "{name}: {c:?}");
        }
        let sum = fixture("mismatch");
        let c = compare_deadlocks(&build_product(&sum.spec, DEFAULT_BOUND), &sum);
        assert_eq!((c.dead_leaves, c.product_deadlocks), (2, 1));
    }

    #[test]
    fn blocked_inner_node_is_missed() {
        // F2 waits at P#0 after F3 chose F1, but P#0 has a child in the
        // other branch, so no leaf marks the deadlock.
        let sum = fixture("relay");
        let c = compare_deadlocks(&build_product(&sum.spec, DEFAULT_BOUND), &sum);
        assert_eq!(c.dead_leaves, 0);
        assert_eq!(c.missed, vec![vec![1, 0, 1], vec![0, 1, 2]]);
    }
}
