//! Comparison of the sum machine's configuration system with the product
//! machine.

use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::Serialize;

use super::ProductMachine;
use crate::model::Move;
use crate::transition::{ConfigSystem, Cut};
use crate::unfold::{NodeRef, SumMachine};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BisimReport {
    /// Distinct configurations visited.
    pub configurations: usize,
    /// Distinct state vectors among them.
    pub classes: usize,
    /// Related (configuration, product state) pairs checked.
    pub pairs: usize,
    /// Sum moves without a product counterpart.
    pub forward_failures: usize,
    /// Product moves the sum machine cannot match.
    pub backward_failures: usize,
    pub violations: Vec<String>,
}

impl BisimReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relates every configuration reachable through product moves to the
/// product state with the same vector, and checks in both directions that
/// each move of one side is matched by the other with related targets.
/// Also checks that each component's environment lies below the
/// configuration, so every environment vector stands for a class of
/// configurations with consistent history.
pub fn check_bisimulation(pm: &ProductMachine, sum: &SumMachine) -> BisimReport {
    let sys = ConfigSystem::new(sum);
    let mut report = BisimReport::default();
    let init = sys.initial();
    let mut seen: HashSet<Cut> = HashSet::from([init.clone()]);
    let mut classes: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut queue = VecDeque::from([init]);
    while let Some(c) = queue.pop_front() {
        report.pairs += 1;
        let v = sys.vector(&c);
        classes.insert(v.clone());
        let Some(s) = pm.state_of(&v) else {
            report
                .violations
                .push(format!("configuration {c:?} has unreachable vector {}", sum.spec.format_vector(&v)));
            continue;
        };
        for (k, &node) in c.iter().enumerate() {
            let env = sum.env(NodeRef::new(k, node));
            if !(0..c.len()).all(|m| sum.is_ancestor_or_eq(m, env.0[m], c[m])) {
                report
                    .violations
                    .push(format!("environment of {} is not below {c:?}", sum.qualified_name(NodeRef::new(k, node))));
            }
        }
        let product_moves: Vec<(Move, usize)> = pm.succ[s].clone();
        for (mv, next) in sys.successors(&c) {
            let target = sys.vector(&next);
            if !product_moves.iter().any(|(m, t)| *m == mv && pm.states[*t] == target) {
                report.forward_failures += 1;
                report.violations.push(format!(
                    "sum move {} at {} has no product counterpart",
                    mv.action(&sum.spec),
                    sum.spec.format_vector(&v)
                ));
            }
        }
        for (mv, t) in &product_moves {
            match sys.fire(&c, mv) {
                Some(next) if sys.vector(&next) == pm.states[*t] => {
                    if seen.insert(next.clone()) {
                        queue.push_back(next);
                    }
                }
                Some(next) => {
                    report.backward_failures += 1;
                    report.violations.push(format!(
                        "move {} at {} leads to {} in the sum machine",
                        mv.action(&sum.spec),
                        sum.spec.format_vector(&v),
                        sum.spec.format_vector(&sys.vector(&next))
                    ))
                }
                None => {
                    report.backward_failures += 1;
                    report.violations.push(format!(
                        "product move {} at {} has no sum counterpart from {c:?}",
                        mv.action(&sum.spec),
                        sum.spec.format_vector(&v)
                    ))
                }
            }
        }
    }
    report.configurations = seen.len();
    report.classes = classes.len();
    report
}

/// Every cut-off's environment projects to the same vector as the
/// environment of the node it repeats. Returns the offending cut-offs.
pub fn check_cutoffs(sum: &SumMachine) -> Vec<NodeRef> {
    sum.all_nodes()
        .filter(|&r| sum.is_cutoff(r))
        .filter(|&r| match sum.node(r).cutoff_match {
            Some(m) => sum.fvec_of(sum.env(r)) != sum.fvec_of(sum.env(NodeRef::new(r.machine, m))),
            None => true,
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BehaviourReport {
    /// Product paths followed, counted as (state, configuration) pairs.
    pub pairs: usize,
    pub max_length: usize,
    /// Product paths (as vectors) the sum machine could not follow.
    pub failures: Vec<Vec<Vec<usize>>>,
}

/// Follows every product path of at most `max_length` moves in the sum
/// machine, shifting at cut-offs as needed. Paths are explored through
/// distinct (product state, configuration) pairs, which covers all of them.
pub fn check_behaviours(pm: &ProductMachine, sum: &SumMachine, max_length: usize) -> BehaviourReport {
    let sys = ConfigSystem::new(sum);
    let mut report = BehaviourReport { max_length, ..BehaviourReport::default() };
    let start = (0usize, sys.initial());
    let mut seen: HashSet<(usize, Cut)> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, vec![pm.states[0].clone()])]);
    while let Some(((s, c), path)) = queue.pop_front() {
        report.pairs += 1;
        if path.len() > max_length {
            continue;
        }
        for (mv, t) in &pm.succ[s] {
            let mut next_path = path.clone();
            next_path.push(pm.states[*t].clone());
            match sys.fire(&c, mv) {
                Some(d) if sys.vector(&d) == pm.states[*t] => {
                    if seen.insert((*t, d.clone())) {
                        queue.push_back(((*t, d), next_path));
                    }
                }
                _ => report.failures.push(next_path),
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{build_product, DEFAULT_BOUND};
    use crate::testutil::fixture;

    #[test]
    fn fixtures_are_bisimilar() {
        for name in ["pingpong", "async", "conflict", "chain3", "relay", "stuck", "selfloop", "mismatch"] {
            let sum = fixture(name);
            let pm = build_product(&sum.spec, DEFAULT_BOUND);
            let report = check_bisimulation(&pm, &sum);
            assert!(report.passed(), "{name}: {:?}", report.violations);
            assert_eq!(report.classes, pm.len(), "{name}");
            assert!(check_cutoffs(&sum).is_empty());
            let b = check_behaviours(&pm, &sum, pm.diameter() + 2);
            assert!(b.failures.is_empty(), "{name}: {:?}", b.failures);
        }
    }

    #[test]
    fn pingpong_counts() {
        let sum = fixture("pingpong");
        let pm = build_product(&sum.spec, DEFAULT_BOUND);
        let report = check_bisimulation(&pm, &sum);
        assert_eq!(report.classes, 2);
        let sum = fixture("async");
        let pm = build_product(&sum.spec, DEFAULT_BOUND);
        assert_eq!(check_bisimulation(&pm, &sum).configurations, 4);
    }

    #[test]
    fn dropped_sync_edge_is_detected() {
        let mut sum = fixture("pingpong");
        assert!(sum.drop_sync_edge(sum.find(0, "B", 0).unwrap()));
        let pm = build_product(&sum.spec, DEFAULT_BOUND);
        let report = check_bisimulation(&pm, &sum);
        assert!(report.forward_failures > 0 && report.backward_failures > 0);
    }
}
