//! Canonical node numbering.
//!
//! Arena indices depend on the order in which nodes were created, which is
//! scheduling dependent in parallel mode. The final numbering is derived from
//! structure alone: nodes are numbered in rounds, a node becoming ready once
//! its parent (and, for a rendezvous output, its partner's parent) has a
//! number. Ready nodes of one machine are ordered by
//! `(parent, transition, partner machine, partner parent, partner transition)`
//! in the new numbering, which identifies a node uniquely.

use super::{EnvVector, ParentLink, UnfoldedState, Unfolding};

type Key = (usize, usize, usize, usize, usize);

pub(crate) fn canonicalize(trees: Vec<Vec<UnfoldedState>>) -> Vec<Unfolding> {
    let n = trees.len();
    let mut map: Vec<Vec<Option<usize>>> = trees.iter().map(|t| vec![None; t.len()]).collect();
    let mut next = vec![1usize; n];
    for m in map.iter_mut() {
        if !m.is_empty() {
            m[0] = Some(0);
        }
    }
    let mut remaining: usize = trees.iter().map(|t| t.len().saturating_sub(1)).sum();
    while remaining > 0 {
        let mut ready: Vec<Vec<(Key, usize)>> = vec![Vec::new(); n];
        for (m, tree) in trees.iter().enumerate() {
            for (idx, node) in tree.iter().enumerate() {
                if map[m][idx].is_some() {
                    continue;
                }
                let Some(key) = key_of(&trees, &map, node) else { continue };
                ready[m].push((key, idx));
            }
        }
        let mut progressed = false;
        for (m, mut list) in ready.into_iter().enumerate() {
            list.sort_unstable();
            for (_, idx) in list {
                map[m][idx] = Some(next[m]);
                next[m] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        assert!(progressed, "canonical numbering stalled: orphan nodes");
    }

    let map: Vec<Vec<usize>> = map.into_iter().map(|m| m.into_iter().map(|x| x.expect("numbered")).collect()).collect();
    trees
        .into_iter()
        .enumerate()
        .map(|(m, tree)| {
            let mut slots: Vec<Option<UnfoldedState>> = vec![None; tree.len()];
            for (old, mut node) in tree.into_iter().enumerate() {
                node.parent = node.parent.map(|p| ParentLink { node: map[m][p.node], transition: p.transition });
                node.children = node.children.iter().map(|&c| map[m][c]).collect();
                node.children.sort_unstable();
                node.env = EnvVector(node.env.0.iter().enumerate().map(|(k, &e)| map[k][e]).collect());
                if let Some(p) = node.sync_partner.as_mut() {
                    p.index = map[p.machine][p.index];
                }
                slots[map[m][old]] = Some(node);
            }
            Unfolding { machine: m, nodes: slots.into_iter().map(|s| s.expect("bijective numbering")).collect() }
        })
        .collect()
}

fn key_of(trees: &[Vec<UnfoldedState>], map: &[Vec<Option<usize>>], node: &UnfoldedState) -> Option<Key> {
    let p = node.parent?;
    let parent = map[node.machine][p.node]?;
    match node.sync_partner {
        None => Some((parent, p.transition, usize::MAX, 0, 0)),
        Some(q) => {
            let partner = &trees[q.machine][q.index];
            let pp = partner.parent?;
            let pparent = map[q.machine][pp.node]?;
            Some((parent, p.transition, q.machine, pparent, pp.transition))
        }
    }
}
