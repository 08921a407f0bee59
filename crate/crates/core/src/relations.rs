//! Causality and the seq / conf / co relations over sum-machine nodes.
//!
//! `s ≤ t` holds when `t` is reachable from `s` along tree edges and, in
//! either direction, rendezvous links (initial nodes count as mutually
//! synchronized). The index contracts rendezvous-connected nodes into
//! simultaneity classes and stores, per class, the set of nodes below it as a
//! bitset.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::unfold::{NodeRef, SumMachine, Unfolding};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Identity,
    SeqForward,
    SeqBackward,
    Conf,
    Co,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Identity => "identity",
            RelationKind::SeqForward => "seq_forward",
            RelationKind::SeqBackward => "seq_backward",
            RelationKind::Conf => "conf",
            RelationKind::Co => "co",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelationError {
    #[error("{0:?} and {1:?} belong to the same machine")]
    SameMachine(NodeRef, NodeRef),
}

/// Result of [`Relations::classify_pair`]. `holders` lists every relation
/// that holds; more than one entry is an overlap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub kind: Option<RelationKind>,
    pub holders: Vec<RelationKind>,
}

impl Classification {
    pub fn is_overlap(&self) -> bool {
        self.holders.len() > 1
    }

    pub fn is_uncovered(&self) -> bool {
        self.kind.is_none()
    }
}

#[derive(Clone)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn new(len: usize) -> Self {
        BitSet(vec![0; len.div_ceil(64)])
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    fn union_with(&mut self, other: &BitSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

/// Precomputed causality index over one sum machine.
pub struct Relations<'a> {
    sum: &'a SumMachine,
    offsets: Vec<usize>,
    class_of: Vec<usize>,
    /// Per class: the nodes `x` with `x ≤` (any member of) the class.
    below: Vec<BitSet>,
    /// Per node, per machine: maxima of the node's down-set within that tree.
    maxima: Vec<Vec<Vec<usize>>>,
    /// Whether the contracted graph was acyclic.
    acyclic: bool,
}

impl<'a> Relations<'a> {
    pub fn new(sum: &'a SumMachine) -> Self {
        let n = sum.machines();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut total = 0;
        for u in &sum.unfoldings {
            offsets.push(total);
            total += u.nodes.len();
        }
        offsets.push(total);
        let gid = |r: NodeRef| offsets[r.machine] + r.index;

        // simultaneity classes
        let mut uf: Vec<usize> = (0..total).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        let union = |uf: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(uf, a), find(uf, b));
            if ra != rb {
                uf[ra.max(rb)] = ra.min(rb);
            }
        };
        for k in 1..n {
            union(&mut uf, gid(sum.root(0)), gid(sum.root(k)));
        }
        for r in sum.all_nodes() {
            if let Some(p) = sum.node(r).sync_partner {
                union(&mut uf, gid(r), gid(p));
            }
        }
        let mut class_id = vec![usize::MAX; total];
        let mut classes = 0;
        let mut class_of = vec![0; total];
        for (g, class) in class_of.iter_mut().enumerate() {
            let root = find(&mut uf, g);
            if class_id[root] == usize::MAX {
                class_id[root] = classes;
                classes += 1;
            }
            *class = class_id[root];
        }

        // class DAG from tree edges
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); classes];
        let mut indeg = vec![0usize; classes];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for r in sum.all_nodes() {
            let c = class_of[gid(r)];
            members[c].push(gid(r));
            if let Some(p) = sum.node(r).parent {
                let pc = class_of[gid(NodeRef::new(r.machine, p.node))];
                if pc != c {
                    succ[pc].push(c);
                    indeg[c] += 1;
                }
            }
        }
        let mut below: Vec<BitSet> = (0..classes)
            .map(|c| {
                let mut b = BitSet::new(total);
                for &g in &members[c] {
                    b.insert(g);
                }
                b
            })
            .collect();
        let mut ready: Vec<usize> = (0..classes).filter(|&c| indeg[c] == 0).collect();
        let mut done = 0;
        while let Some(c) = ready.pop() {
            done += 1;
            for &d in &succ[c] {
                let src = below[c].clone();
                below[d].union_with(&src);
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    ready.push(d);
                }
            }
        }
        let acyclic = done == classes;

        let mut rel = Relations { sum, offsets, class_of, below, maxima: Vec::new(), acyclic };
        rel.maxima = sum
            .all_nodes()
            .map(|s| {
                (0..n)
                    .map(|k| {
                        let u = &sum.unfoldings[k];
                        (0..u.nodes.len())
                            .filter(|&x| {
                                rel.leq(NodeRef::new(k, x), s)
                                    && !u.nodes[x].children.iter().any(|&c| rel.leq(NodeRef::new(k, c), s))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        rel
    }

    pub fn sum(&self) -> &SumMachine {
        self.sum
    }

    /// False when rendezvous links close a causal cycle between different
    /// simultaneity classes, i.e. ≤ is not antisymmetric modulo simultaneity.
    pub fn is_acyclic(&self) -> bool {
        self.acyclic
    }

    fn gid(&self, r: NodeRef) -> usize {
        self.offsets[r.machine] + r.index
    }

    /// Causality: `t` is reachable from `s`.
    pub fn leq(&self, s: NodeRef, t: NodeRef) -> bool {
        self.below[self.class_of[self.gid(t)]].contains(self.gid(s))
    }

    /// Whether `s` and `t` are rendezvous-simultaneous.
    pub fn simultaneous(&self, s: NodeRef, t: NodeRef) -> bool {
        self.class_of[self.gid(s)] == self.class_of[self.gid(t)]
    }

    /// Some tree child of `s` is causally below `t`.
    pub fn seq_rel(&self, s: NodeRef, t: NodeRef) -> bool {
        self.sum.node(s).children.iter().any(|&c| self.leq(NodeRef::new(s.machine, c), t))
    }

    /// Local conflict within one tree, or inherited conflict between the
    /// down-sets of nodes of different trees.
    pub fn conf_rel(&self, s: NodeRef, t: NodeRef) -> bool {
        if s.machine == t.machine {
            return !self.sum.comparable(s.machine, s.index, t.index);
        }
        let (ms, mt) = (&self.maxima[self.gid(s)], &self.maxima[self.gid(t)]);
        (0..self.sum.machines()).any(|k| ms[k].iter().any(|&a| mt[k].iter().any(|&b| !self.sum.comparable(k, a, b))))
    }

    pub fn co_definitional(&self, s: NodeRef, t: NodeRef) -> Result<bool, RelationError> {
        if s.machine == t.machine {
            return Err(RelationError::SameMachine(s, t));
        }
        Ok(!self.seq_rel(s, t) && !self.seq_rel(t, s) && !self.conf_rel(s, t))
    }

    pub fn classify_pair(&self, s: NodeRef, t: NodeRef) -> Classification {
        if s == t {
            return Classification { kind: Some(RelationKind::Identity), holders: vec![RelationKind::Identity] };
        }
        let mut holders = Vec::new();
        if self.seq_rel(s, t) {
            holders.push(RelationKind::SeqForward);
        }
        if self.seq_rel(t, s) {
            holders.push(RelationKind::SeqBackward);
        }
        let conf = self.conf_rel(s, t);
        if conf {
            holders.push(RelationKind::Conf);
        }
        if s.machine != t.machine && holders.is_empty() {
            holders.push(RelationKind::Co);
        }
        Classification { kind: holders.first().copied(), holders }
    }

    /// Tab-separated `node, node, relation` for every ordered pair of
    /// distinct nodes. Overlaps list all holders joined by `+`.
    pub fn dump_tsv(&self) -> String {
        let mut out = String::from("left\tright\trelation\n");
        let nodes: Vec<NodeRef> = self.sum.all_nodes().collect();
        for &s in &nodes {
            for &t in &nodes {
                if s == t {
                    continue;
                }
                let c = self.classify_pair(s, t);
                let rel = if c.holders.is_empty() {
                    "uncovered".to_string()
                } else {
                    c.holders.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+")
                };
                let _ = writeln!(out, "{}\t{}\t{}", self.sum.qualified_name(s), self.sum.qualified_name(t), rel);
            }
        }
        out
    }
}

/// Anchored concurrency test: `env_i(t)` is an ancestor of `s` in tree `i`
/// and `env_j(s)` is an ancestor of `t` in tree `j`. Returns the verdict and
/// the number of parent steps walked.
pub fn co_fast(sum: &SumMachine, s: NodeRef, t: NodeRef) -> Result<(bool, usize), RelationError> {
    if s.machine == t.machine {
        return Err(RelationError::SameMachine(s, t));
    }
    let (i, j) = (s.machine, t.machine);
    let (ok_i, steps_i) = ancestor_walk(&sum.unfoldings[i], sum.env(t).0[i], s.index);
    if !ok_i {
        return Ok((false, steps_i));
    }
    let (ok_j, steps_j) = ancestor_walk(&sum.unfoldings[j], sum.env(s).0[j], t.index);
    Ok((ok_j, steps_i + steps_j))
}

fn ancestor_walk(u: &Unfolding, a: usize, b: usize) -> (bool, usize) {
    let target = u.nodes[a].depth;
    let mut cur = b;
    let mut steps = 0;
    while u.nodes[cur].depth > target {
        cur = u.nodes[cur].parent.expect("non-root has a parent").node;
        steps += 1;
    }
    (cur == a, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load_system;
    use crate::unfold::{unfold, ExecMode, Limits};

    fn build(text: &str) -> SumMachine {
        unfold(&load_system(text).unwrap(), Limits::default(), ExecMode::Sequential).unwrap()
    }

    const PINGPONG: &str = include_str!("../fixtures/pingpong.sm");
    const CONFLICT: &str = include_str!("../fixtures/conflict.sm");
    const ASYNC: &str = include_str!("../fixtures/async.sm");

    #[test]
    fn pingpong_order() {
        let sum = build(PINGPONG);
        let rel = Relations::new(&sum);
        let a0 = sum.find(0, "A", 0).unwrap();
        let b0 = sum.find(0, "B", 0).unwrap();
        let y0 = sum.find(1, "Y", 0).unwrap();
        assert!(rel.leq(a0, a0));
        assert!(rel.leq(a0, y0));
        assert!(!rel.leq(y0, a0));
        assert!(rel.seq_rel(a0, b0));
        assert!(rel.seq_rel(a0, y0));
        assert_eq!(rel.co_definitional(b0, y0), Ok(true));
        assert_eq!(rel.classify_pair(a0, b0).kind, Some(RelationKind::SeqForward));
        assert!(rel.is_acyclic());
    }

    #[test]
    fn conflict_fixture() {
        let sum = build(CONFLICT);
        let rel = Relations::new(&sum);
        let b0 = sum.find(0, "B", 0).unwrap();
        let c0 = sum.find(0, "C", 0).unwrap();
        let z0 = sum.find(1, "Z", 0).unwrap();
        assert!(rel.conf_rel(b0, c0));
        assert!(rel.conf_rel(b0, z0));
        assert!(!rel.conf_rel(b0, b0));
        assert_eq!(rel.co_definitional(b0, z0), Ok(false));
        assert!(!co_fast(&sum, b0, z0).unwrap().0);
        assert_eq!(rel.classify_pair(b0, c0).kind, Some(RelationKind::Conf));
    }

    #[test]
    fn async_fixture() {
        let sum = build(ASYNC);
        let rel = Relations::new(&sum);
        let b0 = sum.find(0, "B", 0).unwrap();
        let y0 = sum.find(1, "Y", 0).unwrap();
        assert!(co_fast(&sum, b0, y0).unwrap().0);
        assert_eq!(rel.classify_pair(b0, y0).kind, Some(RelationKind::Co));
        assert!(co_fast(&sum, sum.root(0), sum.root(1)).unwrap().0);
        assert!(co_fast(&sum, b0, b0).is_err());
    }

    #[test]
    fn tsv_has_every_ordered_pair() {
        let sum = build(PINGPONG);
        let rel = Relations::new(&sum);
        let lines = rel.dump_tsv().lines().count();
        assert_eq!(lines, 1 + 6 * 5);
    }
}
