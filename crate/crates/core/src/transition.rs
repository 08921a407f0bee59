//! The sum machine as a transition system over full configurations.
//!
//! A configuration holds one node per machine. A move fires when the
//! components it involves have the matching child in their trees (for a
//! rendezvous, two children that are each other's partners). Cut-off nodes
//! have no children; a move blocked by one is retried after *shifting* the
//! configuration: the part of the history beyond the cut-off's environment is
//! replayed from the environment of the node the cut-off repeats. Both
//! environments project to the same state vector, so the shifted
//! configuration has the same vector as the original.

use crate::model::Move;
use crate::unfold::{NodeRef, SumMachine, Unfolding};

/// One node index per machine.
pub type Cut = Vec<usize>;

/// Shifts nest at most this deep before a move is declared impossible.
const SHIFT_BUDGET: usize = 32;

pub struct ConfigSystem<'a> {
    sum: &'a SumMachine,
}

impl<'a> ConfigSystem<'a> {
    pub fn new(sum: &'a SumMachine) -> Self {
        ConfigSystem { sum }
    }

    pub fn initial(&self) -> Cut {
        vec![Unfolding::ROOT; self.sum.machines()]
    }

    pub fn vector(&self, c: &[usize]) -> Vec<usize> {
        c.iter().enumerate().map(|(k, &n)| self.sum.unfoldings[k].nodes[n].base).collect()
    }

    /// Moves enabled directly at `c`, without shifting, in machine order.
    pub fn enabled(&self, c: &[usize]) -> Vec<(Move, Cut)> {
        let mut out = Vec::new();
        for (k, &node) in c.iter().enumerate() {
            let tree = &self.sum.unfoldings[k];
            for &ch in &tree.nodes[node].children {
                let child = &tree.nodes[ch];
                let t = child.parent.expect("child has a parent").transition;
                match child.sync_partner {
                    None => {
                        let mut next = c.to_vec();
                        next[k] = ch;
                        out.push((Move::Async { machine: k, transition: t }, next));
                    }
                    Some(p) if p.machine > k => {
                        let partner = self.sum.node(p);
                        let pp = partner.parent.expect("sync node has a parent");
                        if pp.node == c[p.machine] {
                            let mut next = c.to_vec();
                            next[k] = ch;
                            next[p.machine] = p.index;
                            out.push((Move::sync((k, t), (p.machine, pp.transition)), next));
                        }
                    }
                    Some(_) => {}
                }
            }
        }
        out
    }

    /// Direct moves plus the moves of every configuration reachable by one
    /// shift at a cut-off component.
    pub fn successors(&self, c: &[usize]) -> Vec<(Move, Cut)> {
        let mut out = self.enabled(c);
        for k in self.cutoff_components(c) {
            if let Some(d) = self.shift(c, k, SHIFT_BUDGET) {
                out.extend(self.enabled(&d));
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Fires `mv` at `c`, shifting at cut-offs when needed.
    pub fn fire(&self, c: &[usize], mv: &Move) -> Option<Cut> {
        self.fire_within(c, mv, SHIFT_BUDGET)
    }

    fn fire_within(&self, c: &[usize], mv: &Move, budget: usize) -> Option<Cut> {
        if let Some(next) = self.fire_direct(c, mv) {
            return Some(next);
        }
        if budget == 0 {
            return None;
        }
        self.cutoff_components(c)
            .into_iter()
            .filter_map(|k| self.shift(c, k, budget - 1))
            .find_map(|d| self.fire_within(&d, mv, budget - 1))
    }

    fn fire_direct(&self, c: &[usize], mv: &Move) -> Option<Cut> {
        let child_via = |k: usize, t: usize| -> Option<usize> {
            let tree = &self.sum.unfoldings[k];
            tree.nodes[c[k]].children.iter().copied().find(|&ch| tree.nodes[ch].parent.map(|p| p.transition) == Some(t))
        };
        let mut next = c.to_vec();
        match *mv {
            Move::Async { machine, transition } => {
                let ch = child_via(machine, transition)?;
                if self.sum.unfoldings[machine].nodes[ch].sync_partner.is_some() {
                    return None;
                }
                next[machine] = ch;
            }
            Move::Sync { a, b } => {
                let tree = &self.sum.unfoldings[a.0];
                let (ch, partner) = tree.nodes[c[a.0]].children.iter().find_map(|&ch| {
                    let node = &tree.nodes[ch];
                    let p = node.sync_partner?;
                    let pn = self.sum.node(p);
                    let ok = node.parent?.transition == a.1
                        && p.machine == b.0
                        && pn.parent.map(|q| (q.node, q.transition)) == Some((c[b.0], b.1));
                    ok.then_some((ch, p.index))
                })?;
                next[a.0] = ch;
                next[b.0] = partner;
            }
        }
        Some(next)
    }

    fn cutoff_components(&self, c: &[usize]) -> Vec<usize> {
        (0..c.len()).filter(|&k| self.sum.unfoldings[k].nodes[c[k]].cutoff).collect()
    }

    /// Replays the history of `c` beyond `env(c[k])` from the environment of
    /// the node `c[k]` repeats.
    pub fn shift(&self, c: &[usize], k: usize, budget: usize) -> Option<Cut> {
        let s = NodeRef::new(k, c[k]);
        let target = self.sum.node(s).cutoff_match?;
        let from = self.sum.env(s).0.clone();
        let moves = linearize(self.sum, &from, c)?;
        let mut d = self.sum.env(NodeRef::new(k, target)).0.clone();
        for (mv, _) in moves {
            d = self.fire_within(&d, &mv, budget)?;
        }
        Some(d)
    }
}

/// An interleaving from cut `from` to cut `to`, where every component of
/// `from` is an ancestor-or-equal of the one in `to`. At each step the lowest
/// machine with an enabled tree edge moves. Returns `None` when the
/// components cannot be reached together.
pub fn linearize(sum: &SumMachine, from: &[usize], to: &[usize]) -> Option<Vec<(Move, Cut)>> {
    let n = sum.machines();
    let mut paths: Vec<Vec<usize>> = Vec::with_capacity(n);
    for k in 0..n {
        let tree = &sum.unfoldings[k];
        let mut p = vec![to[k]];
        let mut cur = to[k];
        while cur != from[k] {
            cur = tree.nodes[cur].parent?.node;
            p.push(cur);
        }
        p.reverse();
        paths.push(p);
    }
    let mut at = vec![0usize; n];
    let mut out = Vec::new();
    while (0..n).any(|k| at[k] + 1 < paths[k].len()) {
        let (mv, movers) = (0..n).find_map(|k| {
            let next = *paths[k].get(at[k] + 1)?;
            let node = &sum.unfoldings[k].nodes[next];
            let t = node.parent?.transition;
            match node.sync_partner {
                None => Some((Move::Async { machine: k, transition: t }, vec![k])),
                Some(p) => {
                    let ready = paths[p.machine].get(at[p.machine] + 1) == Some(&p.index);
                    let pt = sum.node(p).parent?.transition;
                    ready.then(|| (Move::sync((k, t), (p.machine, pt)), vec![k, p.machine]))
                }
            }
        })?;
        for k in movers {
            at[k] += 1;
        }
        out.push((mv, (0..n).map(|k| paths[k][at[k]]).collect()));
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::fixture;

    #[test]
    fn async_square() {
        let sum = fixture("async");
        let sys = ConfigSystem::new(&sum);
        let moves = sys.enabled(&sys.initial());
        assert_eq!(moves.len(), 2);
        let (mv, next) = &moves[0];
        assert_eq!(mv.machines(), vec![0]);
        assert_eq!(sys.vector(next), vec![1, 0]);
    }

    #[test]
    fn pingpong_cycle_needs_a_shift() {
        let sum = fixture("pingpong");
        let sys = ConfigSystem::new(&sum);
        let init = sys.initial();
        let (ping, at_b) = sys.enabled(&init).remove(0);
        let (pong, back) = sys.enabled(&at_b).remove(0);
        assert_eq!(sys.vector(&back), sys.vector(&init));
        assert!(sys.enabled(&back).is_empty());
        let again = sys.fire(&back, &ping).expect("lasso continues");
        assert_eq!(again, at_b);
        assert_eq!(sys.fire(&again, &pong), Some(back.clone()));
        assert_eq!(sys.successors(&back).len(), 1);
    }

    #[test]
    fn linearize_orders_by_machine() {
        let sum = fixture("async");
        let steps = linearize(&sum, &[0, 0], &[1, 1]).unwrap();
        assert_eq!(steps.iter().map(|(m, _)| m.machines()).collect::<Vec<_>>(), vec![vec![0], vec![1]]);
        assert!(linearize(&sum, &[1, 0], &[0, 0]).is_none());
    }
}
