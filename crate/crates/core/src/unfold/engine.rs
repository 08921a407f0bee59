//! The unfolding engine.
//!
//! Trees live behind per-tree read/write locks and the rendezvous waitlist
//! behind a single mutex, so the same expansion step drives both the
//! sequential reference mode and the parallel mode. A pending sync transition
//! is posted to `waitlist[i][j]` and stays there; every later compatible
//! entry of `waitlist[j][i]` with the same action produces one synchronized
//! child pair. Posting and matching happen under the same lock, so every pair
//! is matched exactly once.
//!
//! Nodes are expanded in rounds of equal weight. A node's children are always
//! heavier than the node, so when a round starts every lighter node already
//! exists and the cut-off decision, taken when a node is expanded, does not
//! depend on scheduling. Within a round the parallel mode splits nodes among
//! workers by machine.
//!
//! Lock order: the waitlist mutex may be held while taking tree read locks;
//! tree write locks are taken in ascending machine order and never while
//! holding the waitlist.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, RwLock};

use super::{
    canon, CutoffRule, EnvVector, Limits, NodeKind, NodeRef, ParentLink, SumMachine, UnfoldError, UnfoldedState,
    Unfolding,
};
use crate::model::{ActionKind, CfsmTransition, SystemSpec};

/// Walks from `b` towards the root. Returns whether `a` was met, and how
/// many parent steps were taken.
pub(crate) fn ancestor_steps(tree: &[UnfoldedState], a: usize, b: usize) -> (bool, usize) {
    let target = tree[a].depth;
    let mut cur = b;
    let mut steps = 0;
    while tree[cur].depth > target {
        cur = match tree[cur].parent {
            Some(p) => p.node,
            None => break,
        };
        steps += 1;
    }
    (cur == a, steps)
}

pub(crate) fn desc_in(tree: &[UnfoldedState], a: usize, b: usize) -> Option<usize> {
    if ancestor_steps(tree, a, b).0 {
        Some(b)
    } else if ancestor_steps(tree, b, a).0 {
        Some(a)
    } else {
        None
    }
}

/// Read access to the trees, however they are stored.
pub(crate) trait Forest {
    fn with_tree<R>(&self, k: usize, f: impl FnOnce(&[UnfoldedState]) -> R) -> R;
}

impl Forest for [Unfolding] {
    fn with_tree<R>(&self, k: usize, f: impl FnOnce(&[UnfoldedState]) -> R) -> R {
        f(&self[k].nodes)
    }
}

pub(crate) fn sync_compatible<F: Forest + ?Sized>(
    forest: &F,
    i: usize,
    env_i: &[usize],
    j: usize,
    env_j: &[usize],
) -> bool {
    if i == j {
        return false;
    }
    (0..env_i.len()).all(|k| {
        forest.with_tree(k, |tree| {
            if k == i {
                ancestor_steps(tree, env_j[k], env_i[k]).0
            } else if k == j {
                ancestor_steps(tree, env_i[k], env_j[k]).0
            } else {
                desc_in(tree, env_i[k], env_j[k]).is_some()
            }
        })
    })
}

/// Merged environment for a rendezvous of `i` and `j`. Positions `i` and `j`
/// are left for the caller to fill in.
fn merge_env<F: Forest + ?Sized>(
    forest: &F,
    i: usize,
    env_i: &[usize],
    j: usize,
    env_j: &[usize],
) -> Option<Vec<usize>> {
    (0..env_i.len())
        .map(|k| {
            if k == i || k == j {
                Some(usize::MAX)
            } else {
                forest.with_tree(k, |tree| desc_in(tree, env_i[k], env_j[k]))
            }
        })
        .collect()
}

struct NewNode {
    base: usize,
    env: Vec<usize>,
    parent: ParentLink,
    kind: NodeKind,
    fvec: Vec<usize>,
    weight: usize,
}

#[derive(Clone, Copy, Debug)]
struct WaitEntry {
    node: usize,
    transition: usize,
}

#[derive(Default)]
struct Waitlist {
    /// (from machine, to machine, action) -> entries posted by `from`.
    entries: HashMap<(usize, usize, String), Vec<WaitEntry>>,
}

/// One tree under construction.
struct Tree {
    nodes: Vec<UnfoldedState>,
    /// Smallest weight seen for each `fvec`.
    lightest: HashMap<Vec<usize>, usize>,
}

/// Incremental sum-machine construction. The individual generation steps are
/// public so they can be driven by hand; [`Builder::run_sequential`] and
/// [`Builder::run_parallel`] drive them to the fixpoint.
pub struct Builder {
    spec: SystemSpec,
    limits: Limits,
    trees: Vec<RwLock<Tree>>,
    waitlist: Mutex<Waitlist>,
}

impl Forest for Builder {
    fn with_tree<R>(&self, k: usize, f: impl FnOnce(&[UnfoldedState]) -> R) -> R {
        f(&self.trees[k].read().expect("tree lock poisoned").nodes)
    }
}

impl Builder {
    /// Creates the n roots. Every root's environment is the vector of roots.
    pub fn new(spec: SystemSpec, limits: Limits) -> Result<Self, UnfoldError> {
        let n = spec.machines.len();
        let roots = vec![Unfolding::ROOT; n];
        let fvec = spec.initial_vector();
        let trees = spec
            .machines
            .iter()
            .enumerate()
            .map(|(i, m)| {
                RwLock::new(Tree {
                    nodes: vec![UnfoldedState {
                        machine: i,
                        base: m.initial,
                        instance: 0,
                        env: EnvVector(roots.clone()),
                        parent: None,
                        kind: NodeKind::Initial,
                        sync_partner: None,
                        cutoff: false,
                        cutoff_match: None,
                        dead: false,
                        depth: 0,
                        weight: 0,
                        children: Vec::new(),
                        fvec: fvec.clone(),
                    }],
                    lightest: HashMap::from([(fvec.clone(), 0)]),
                })
            })
            .collect();
        Ok(Builder { spec, limits, trees, waitlist: Mutex::new(Waitlist::default()) })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn node(&self, r: NodeRef) -> Result<UnfoldedState, UnfoldError> {
        self.trees
            .get(r.machine)
            .and_then(|t| t.read().expect("tree lock poisoned").nodes.get(r.index).cloned())
            .ok_or(UnfoldError::UnknownNode(r))
    }

    pub fn len(&self, machine: usize) -> usize {
        self.trees[machine].read().expect("tree lock poisoned").nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    fn transition(&self, machine: usize, t: usize) -> &CfsmTransition {
        &self.spec.machines[machine].transitions[t]
    }

    fn check_limits(&self, machine: usize, len: usize, depth: usize) -> Result<(), UnfoldError> {
        if len >= self.limits.max_nodes {
            return Err(UnfoldError::LimitExceeded {
                machine: self.spec.machines[machine].name.clone(),
                limit: "max_nodes",
                value: self.limits.max_nodes,
            });
        }
        if depth > self.limits.max_depth {
            return Err(UnfoldError::LimitExceeded {
                machine: self.spec.machines[machine].name.clone(),
                limit: "max_depth",
                value: self.limits.max_depth,
            });
        }
        Ok(())
    }

    fn insert(&self, tree: &mut Tree, machine: usize, idx: usize, new: NewNode, partner: Option<NodeRef>) {
        let depth = tree.nodes[new.parent.node].depth + 1;
        tree.nodes[new.parent.node].children.push(idx);
        let best = tree.lightest.entry(new.fvec.clone()).or_insert(new.weight);
        *best = (*best).min(new.weight);
        tree.nodes.push(UnfoldedState {
            machine,
            base: new.base,
            instance: 0,
            env: EnvVector(new.env),
            parent: Some(new.parent),
            kind: new.kind,
            sync_partner: partner,
            cutoff: false,
            cutoff_match: None,
            dead: false,
            depth,
            weight: new.weight,
            children: Vec::new(),
            fvec: new.fvec,
        });
    }

    /// Fires asynchronous transition `t` from node `s`. The child inherits
    /// the parent's environment with its own slot replaced by itself.
    pub fn gen_next_async(&self, s: NodeRef, t: usize) -> Result<NodeRef, UnfoldError> {
        let i = s.machine;
        let tr = self.spec.machines.get(i).and_then(|m| m.transitions.get(t)).ok_or(UnfoldError::UnknownNode(s))?;
        let parent = self.node(s)?;
        if tr.source != parent.base {
            return Err(UnfoldError::SourceMismatch { machine: i, node: s.index, transition: t });
        }
        if tr.action.is_sync() {
            return Err(UnfoldError::NotAsync { machine: i, transition: t });
        }
        let mut fvec = parent.fvec.clone();
        fvec[i] = tr.destination;
        let mut tree = self.trees[i].write().expect("tree lock poisoned");
        let idx = tree.nodes.len();
        self.check_limits(i, idx, parent.depth + 1)?;
        let mut env = parent.env.0.clone();
        env[i] = idx;
        let new = NewNode {
            base: tr.destination,
            env,
            parent: ParentLink { node: s.index, transition: t },
            kind: NodeKind::AsyncOutput,
            fvec,
            weight: parent.weight + 1,
        };
        self.insert(&mut tree, i, idx, new, None);
        Ok(NodeRef::new(i, idx))
    }

    /// Fires the rendezvous of `t_i` from `s_i` with `t_j` from `s_j`.
    /// Coordinates other than `i` and `j` take the later of the two inputs'
    /// components; the two children become each other's partners.
    pub fn gen_next_sync(
        &self,
        s_i: NodeRef,
        s_j: NodeRef,
        t_i: usize,
        t_j: usize,
    ) -> Result<(NodeRef, NodeRef), UnfoldError> {
        let (i, j) = (s_i.machine, s_j.machine);
        let ni = self.node(s_i)?;
        let nj = self.node(s_j)?;
        let tri = self.spec.machines[i].transitions.get(t_i).ok_or(UnfoldError::UnknownNode(s_i))?;
        let trj = self.spec.machines[j].transitions.get(t_j).ok_or(UnfoldError::UnknownNode(s_j))?;
        if tri.source != ni.base {
            return Err(UnfoldError::SourceMismatch { machine: i, node: s_i.index, transition: t_i });
        }
        if trj.source != nj.base {
            return Err(UnfoldError::SourceMismatch { machine: j, node: s_j.index, transition: t_j });
        }
        if tri.action.kind != ActionKind::Sync(j) {
            return Err(UnfoldError::NotSync { machine: i, transition: t_i });
        }
        if trj.action.kind != ActionKind::Sync(i) {
            return Err(UnfoldError::NotSync { machine: j, transition: t_j });
        }
        if tri.action.name != trj.action.name {
            return Err(UnfoldError::ActionMismatch);
        }
        if !sync_compatible(self, i, &ni.env.0, j, &nj.env.0) {
            return Err(UnfoldError::Incompatible { a: s_i, b: s_j });
        }
        self.fire_sync(s_i, &ni, t_i, s_j, &nj, t_j)
    }

    fn fire_sync(
        &self,
        s_i: NodeRef,
        ni: &UnfoldedState,
        t_i: usize,
        s_j: NodeRef,
        nj: &UnfoldedState,
        t_j: usize,
    ) -> Result<(NodeRef, NodeRef), UnfoldError> {
        let (i, j) = (s_i.machine, s_j.machine);
        let env = merge_env(self, i, &ni.env.0, j, &nj.env.0).ok_or(UnfoldError::Incompatible { a: s_i, b: s_j })?;
        let mut fvec: Vec<usize> = (0..env.len())
            .map(|k| if k == i || k == j || env[k] == ni.env.0[k] { ni.fvec[k] } else { nj.fvec[k] })
            .collect();
        fvec[i] = self.transition(i, t_i).destination;
        fvec[j] = self.transition(j, t_j).destination;
        let others: usize =
            (0..env.len()).filter(|&k| k != i && k != j).map(|k| self.with_tree(k, |tree| tree[env[k]].depth)).sum();
        let weight = others + ni.depth + nj.depth + 2;

        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let mut tree_lo = self.trees[lo].write().expect("tree lock poisoned");
        let mut tree_hi = self.trees[hi].write().expect("tree lock poisoned");
        let (tree_i, tree_j) = if i < j { (&mut *tree_lo, &mut *tree_hi) } else { (&mut *tree_hi, &mut *tree_lo) };
        let (idx_i, idx_j) = (tree_i.nodes.len(), tree_j.nodes.len());
        self.check_limits(i, idx_i, ni.depth + 1)?;
        self.check_limits(j, idx_j, nj.depth + 1)?;
        let mut env = env;
        env[i] = idx_i;
        env[j] = idx_j;
        let make = |base, parent: &NodeRef, t| NewNode {
            base,
            env: env.clone(),
            parent: ParentLink { node: parent.index, transition: t },
            kind: NodeKind::SyncOutput,
            fvec: fvec.clone(),
            weight,
        };
        let new_i = make(fvec[i], &s_i, t_i);
        let new_j = make(fvec[j], &s_j, t_j);
        self.insert(tree_i, i, idx_i, new_i, Some(NodeRef::new(j, idx_j)));
        self.insert(tree_j, j, idx_j, new_j, Some(NodeRef::new(i, idx_i)));
        Ok((NodeRef::new(i, idx_i), NodeRef::new(j, idx_j)))
    }

    /// Whether two existing nodes could rendezvous.
    pub fn is_sync_compatible(&self, a: NodeRef, b: NodeRef) -> Result<bool, UnfoldError> {
        let na = self.node(a)?;
        let nb = self.node(b)?;
        Ok(sync_compatible(self, a.machine, &na.env.0, b.machine, &nb.env.0))
    }

    pub fn desc(&self, k: usize, a: usize, b: usize) -> Result<usize, UnfoldError> {
        self.with_tree(k, |t| desc_in(t, a, b)).ok_or(UnfoldError::Conflict { machine: k, a, b })
    }

    /// Evaluates the configured cut-off rule against the nodes built so far.
    /// Under [`CutoffRule::Marking`] the answer is final only once every
    /// lighter node exists, which the round-based drivers guarantee.
    pub fn is_cutoff(&self, r: NodeRef) -> Result<bool, UnfoldError> {
        let tree = self.trees.get(r.machine).ok_or(UnfoldError::UnknownNode(r))?;
        let tree = tree.read().expect("tree lock poisoned");
        let node = tree.nodes.get(r.index).ok_or(UnfoldError::UnknownNode(r))?;
        Ok(match self.limits.cutoff {
            CutoffRule::Ancestor => matching_ancestor(&tree.nodes, r.index).is_some(),
            CutoffRule::Marking => tree.lightest.get(&node.fvec).is_some_and(|&w| w < node.weight),
        })
    }

    /// Expands one node: decides whether it is a cut-off, and if not fires
    /// its asynchronous transitions and posts its synchronous ones to the
    /// waitlist, firing every compatible match. Returns the created nodes.
    fn expand(&self, s: NodeRef) -> Result<Vec<NodeRef>, UnfoldError> {
        if self.is_cutoff(s)? {
            self.trees[s.machine].write().expect("tree lock poisoned").nodes[s.index].cutoff = true;
            return Ok(Vec::new());
        }
        let node = self.node(s)?;
        let i = s.machine;
        let mut created = Vec::new();
        let outgoing: Vec<usize> = self.spec.machines[i].outgoing(node.base).map(|(t, _)| t).collect();
        for t in outgoing {
            let tr = self.transition(i, t);
            match tr.action.kind {
                ActionKind::Async => created.push(self.gen_next_async(s, t)?),
                ActionKind::Sync(j) => {
                    let matches = {
                        let mut wl = self.waitlist.lock().expect("waitlist poisoned");
                        wl.entries
                            .entry((i, j, tr.action.name.clone()))
                            .or_default()
                            .push(WaitEntry { node: s.index, transition: t });
                        wl.entries.get(&(j, i, tr.action.name.clone())).cloned().unwrap_or_default()
                    };
                    // Entries posted after our own post will match against us
                    // from the other side, so only the snapshot is ours to fire.
                    for m in matches {
                        let nj = self.node(NodeRef::new(j, m.node))?;
                        if sync_compatible(self, i, &node.env.0, j, &nj.env.0) {
                            let (a, b) = self.fire_sync(s, &node, t, NodeRef::new(j, m.node), &nj, m.transition)?;
                            created.push(a);
                            created.push(b);
                        }
                    }
                }
            }
        }
        Ok(created)
    }

    fn weight(&self, r: NodeRef) -> usize {
        self.trees[r.machine].read().expect("tree lock poisoned").nodes[r.index].weight
    }

    /// Drives rounds of equal weight until no node is left to expand.
    /// `expand_round` must expand every node it is given.
    fn run_rounds(
        &self,
        mut expand_round: impl FnMut(Vec<NodeRef>) -> Result<Vec<NodeRef>, UnfoldError>,
    ) -> Result<(), UnfoldError> {
        let mut rounds: BTreeMap<usize, Vec<NodeRef>> = BTreeMap::new();
        rounds.insert(0, (0..self.spec.machines.len()).map(|i| NodeRef::new(i, Unfolding::ROOT)).collect());
        while let Some((_, round)) = rounds.pop_first() {
            for c in expand_round(round)? {
                rounds.entry(self.weight(c)).or_default().push(c);
            }
        }
        Ok(())
    }

    /// Reference mode: one thread, nodes of a round in creation order.
    pub fn run_sequential(&self) -> Result<(), UnfoldError> {
        self.run_rounds(|round| {
            let mut created = Vec::new();
            for r in round {
                created.extend(self.expand(r)?);
            }
            Ok(created)
        })
    }

    /// Each round is split among at most `workers` threads, machine `m`
    /// going to worker `m % workers`.
    pub fn run_parallel(&self, workers: usize) -> Result<(), UnfoldError> {
        let workers = workers.clamp(1, self.spec.machines.len().max(1));
        self.run_rounds(|round| {
            let mut shares: Vec<Vec<NodeRef>> = vec![Vec::new(); workers];
            for r in round {
                shares[r.machine % workers].push(r);
            }
            shares.retain(|s| !s.is_empty());
            if shares.len() == 1 {
                return shares[0].iter().map(|&r| self.expand(r)).collect::<Result<Vec<_>, _>>().map(|v| v.concat());
            }
            std::thread::scope(|scope| {
                let handles: Vec<_> = shares
                    .into_iter()
                    .map(|share| {
                        scope.spawn(move || -> Result<Vec<NodeRef>, UnfoldError> {
                            let mut created = Vec::new();
                            for r in share {
                                created.extend(self.expand(r)?);
                            }
                            Ok(created)
                        })
                    })
                    .collect();
                let mut created = Vec::new();
                let mut first_err = None;
                for h in handles {
                    match h.join().expect("unfolding worker panicked") {
                        Ok(c) => created.extend(c),
                        Err(e) => {
                            first_err.get_or_insert(e);
                        }
                    }
                }
                match first_err {
                    Some(e) => Err(e),
                    None => Ok(created),
                }
            })
        })
    }

    /// Canonically renumbers the trees, links cut-offs to the node they
    /// repeat, marks dead leaves and assigns instance numbers.
    pub fn finish(self) -> SumMachine {
        let spec = self.spec;
        let rule = self.limits.cutoff;
        let trees: Vec<Vec<UnfoldedState>> =
            self.trees.into_iter().map(|t| t.into_inner().expect("tree lock poisoned").nodes).collect();
        let mut unfoldings = canon::canonicalize(trees);
        for u in &mut unfoldings {
            let matches: Vec<Option<usize>> = (0..u.nodes.len())
                .map(|idx| match (u.nodes[idx].cutoff, rule) {
                    (false, _) => None,
                    (true, CutoffRule::Ancestor) => matching_ancestor(&u.nodes, idx),
                    (true, CutoffRule::Marking) => lightest_match(&u.nodes, idx),
                })
                .collect();
            for (n, m) in u.nodes.iter_mut().zip(matches) {
                n.cutoff_match = m;
            }
        }
        let dead: Vec<Vec<bool>> = unfoldings
            .iter()
            .map(|u| (0..u.nodes.len()).map(|idx| is_dead(&spec, &unfoldings, u.machine, idx)).collect())
            .collect();
        for u in &mut unfoldings {
            let m = &spec.machines[u.machine];
            let mut counters = vec![0usize; m.states.len()];
            for (idx, n) in u.nodes.iter_mut().enumerate() {
                n.instance = counters[n.base];
                counters[n.base] += 1;
                n.dead = dead[u.machine][idx];
            }
        }
        SumMachine::from_parts(spec, unfoldings)
    }
}

/// Nearest strict ancestor with the same `fvec`.
fn matching_ancestor(tree: &[UnfoldedState], idx: usize) -> Option<usize> {
    let fvec = &tree[idx].fvec;
    std::iter::successors(tree[idx].parent.map(|p| p.node), |&n| tree[n].parent.map(|p| p.node))
        .find(|&n| &tree[n].fvec == fvec)
}

/// Lightest node with the same `fvec` and a strictly smaller weight, lowest
/// index first among equals.
fn lightest_match(tree: &[UnfoldedState], idx: usize) -> Option<usize> {
    let (fvec, weight) = (&tree[idx].fvec, tree[idx].weight);
    (0..tree.len()).filter(|&x| tree[x].weight < weight && &tree[x].fvec == fvec).min_by_key(|&x| (tree[x].weight, x))
}

/// A non-cut-off leaf of a non-terminal state is dead unless one of its
/// pending rendezvous has a compatible partner that was simply not expanded
/// because it is a cut-off, and whose machine can still get to a state
/// offering the action. Such a leaf is truncated, not stuck.
fn is_dead(spec: &SystemSpec, trees: &[Unfolding], i: usize, idx: usize) -> bool {
    let node = &trees[i].nodes[idx];
    let m = &spec.machines[i];
    if node.cutoff || !node.children.is_empty() || m.is_terminal(node.base) {
        return false;
    }
    !m.outgoing(node.base).any(|(_, t)| {
        let ActionKind::Sync(j) = t.action.kind else { return true };
        let offering = offering_region(spec, j, i, &t.action.name);
        trees[j]
            .nodes
            .iter()
            .any(|y| y.cutoff && offering[y.base] && sync_compatible(trees, i, &node.env.0, j, &y.env.0))
    })
}

/// States of machine `j` from which some local path leads to a state offering
/// `action` to machine `i`.
fn offering_region(spec: &SystemSpec, j: usize, i: usize, action: &str) -> Vec<bool> {
    let m = &spec.machines[j];
    let mut region: Vec<bool> = (0..m.states.len())
        .map(|q| m.outgoing(q).any(|(_, u)| u.action.name == action && u.action.kind == ActionKind::Sync(i)))
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for t in &m.transitions {
            if region[t.destination] && !region[t.source] {
                region[t.source] = true;
                changed = true;
            }
        }
    }
    region
}
