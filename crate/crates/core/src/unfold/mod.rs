//! Construction of the sum machine: one unfolded tree per machine.
//!
//! Every tree node is an instance of a machine state and carries an
//! environment vector: for its own machine the node itself, and for every
//! other machine the most recent synchronization output that must have been
//! entered before the node can be entered. Unfolding stops at cut-off nodes,
//! whose environment vector projects to the same state vector as that of a
//! local ancestor. Non-cut-off leaves of non-terminal states are dead: the
//! machine is stuck there for good.

mod canon;
mod engine;
mod export;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_system, SystemSpec, ValidationReport};

pub use engine::Builder;
pub use export::{SchemaError, SCHEMA};

/// A node of the sum machine: tree `machine`, arena slot `index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub machine: usize,
    pub index: usize,
}

impl NodeRef {
    pub fn new(machine: usize, index: usize) -> Self {
        NodeRef { machine, index }
    }
}

/// One node index per machine; component `k` lives in tree `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvVector(pub Vec<usize>);

impl EnvVector {
    pub fn component(&self, k: usize) -> NodeRef {
        NodeRef::new(k, self.0[k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Initial,
    AsyncOutput,
    SyncOutput,
}

/// The tree edge that produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentLink {
    pub node: usize,
    /// Index into the machine's transition list.
    pub transition: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnfoldedState {
    pub machine: usize,
    pub base: usize,
    pub instance: usize,
    pub env: EnvVector,
    pub parent: Option<ParentLink>,
    pub kind: NodeKind,
    pub sync_partner: Option<NodeRef>,
    pub cutoff: bool,
    /// For a cut-off, the node of the same tree it repeats: equal `fvec` and
    /// smaller weight. Under [`CutoffRule::Ancestor`] this is an ancestor.
    pub cutoff_match: Option<usize>,
    pub dead: bool,
    pub depth: usize,
    /// Number of non-initial nodes in the local history of the node: the sum
    /// of `depth` over its environment.
    pub weight: usize,
    pub children: Vec<usize>,
    /// `fvec` of `env`, cached.
    pub fvec: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unfolding {
    pub machine: usize,
    pub nodes: Vec<UnfoldedState>,
}

impl Unfolding {
    pub const ROOT: usize = 0;

    pub fn root(&self) -> usize {
        Self::ROOT
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The local relation R_i as (parent, transition, child) triples.
    pub fn local_edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(c, n)| n.parent.map(|p| (p.node, p.transition, c)))
    }

    /// Cross-tree synchronization pairs involving this tree. Roots are
    /// related to every other root.
    pub fn sync_edges(&self, machines: usize) -> Vec<(usize, NodeRef)> {
        let mut out: Vec<(usize, NodeRef)> =
            (0..machines).filter(|&j| j != self.machine).map(|j| (Self::ROOT, NodeRef::new(j, Self::ROOT))).collect();
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.sync_partner {
                out.push((i, p));
            }
        }
        out
    }

    /// `a` R_i* `b`: `a` is `b` or one of its ancestors.
    pub fn is_ancestor_or_eq(&self, a: usize, b: usize) -> bool {
        engine::ancestor_steps(&self.nodes, a, b).0
    }

    /// Ancestors of `node`, nearest first, excluding the node itself.
    pub fn ancestors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.nodes[node].parent.map(|p| p.node), |&n| self.nodes[n].parent.map(|p| p.node))
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Nodes in depth-first pre-order (children in index order).
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![Self::ROOT];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }
}

/// When a node stops being expanded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffRule {
    /// Some strict ancestor in the same tree has the same `fvec`.
    Ancestor,
    /// Some node of the same tree has the same `fvec` and a smaller weight.
    /// Every ancestor cut-off is also a marking cut-off, so prefixes are
    /// never larger than under [`CutoffRule::Ancestor`] and usually much
    /// smaller once several machines interleave.
    #[default]
    Marking,
}

/// Construction settings. Cut-off detection terminates every finite system on
/// its own; the size bounds only guard against pathological inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_nodes: usize,
    pub max_depth: usize,
    #[serde(default)]
    pub cutoff: CutoffRule,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_nodes: 100_000, max_depth: 500, cutoff: CutoffRule::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MachineStats {
    pub name: String,
    pub nodes: usize,
    pub cutoffs: usize,
    pub dead: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnfoldStats {
    pub machines: Vec<MachineStats>,
    pub total_nodes: usize,
    pub total_cutoffs: usize,
    pub total_dead: usize,
    /// Largest state count of any machine (N_f).
    pub max_machine_states: usize,
    /// max_i nodes_i / N_f.
    pub coupling_factor: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnfoldError {
    #[error("invalid system:\n{0}")]
    InvalidSpec(ValidationReport),
    #[error("machine {machine}: {limit} limit of {value} exceeded")]
    LimitExceeded { machine: String, limit: &'static str, value: usize },
    #[error("transition {transition} of machine {machine} does not leave the state of node {node}")]
    SourceMismatch { machine: usize, node: usize, transition: usize },
    #[error("transition {transition} of machine {machine} is synchronous")]
    NotAsync { machine: usize, transition: usize },
    #[error("transition {transition} of machine {machine} is not a rendezvous with the given partner")]
    NotSync { machine: usize, transition: usize },
    #[error("transitions carry different action names")]
    ActionMismatch,
    #[error("nodes {a} and {b} of machine {machine} are in local conflict")]
    Conflict { machine: usize, a: usize, b: usize },
    #[error("nodes {a:?} and {b:?} cannot rendezvous")]
    Incompatible { a: NodeRef, b: NodeRef },
    #[error("node {0:?} does not exist")]
    UnknownNode(NodeRef),
}

/// The n unfolded trees together with the system they came from. Immutable
/// once built; all analyses read it concurrently.
#[derive(Clone, Debug, PartialEq)]
pub struct SumMachine {
    pub spec: SystemSpec,
    pub unfoldings: Vec<Unfolding>,
    pub stats: UnfoldStats,
    /// Per machine, per base state: nodes in depth-first order.
    by_base: Vec<Vec<Vec<usize>>>,
}

/// Builds the sum machine of a system. Unmatched sync actions are tolerated
/// (they never fire); every other validation failure is an error.
pub fn unfold(spec: &SystemSpec, limits: Limits, mode: ExecMode) -> Result<SumMachine, UnfoldError> {
    let report = validate_system(spec);
    if !report.is_unfoldable() {
        return Err(UnfoldError::InvalidSpec(report));
    }
    let builder = Builder::new(spec.clone(), limits)?;
    match mode {
        ExecMode::Sequential => builder.run_sequential()?,
        ExecMode::Parallel => builder.run_parallel(worker_cap())?,
    }
    Ok(builder.finish())
}

/// Worker count for parallel runs, capped by `SUMMACHINE_THREADS`.
pub fn worker_cap() -> usize {
    std::env::var("SUMMACHINE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Projects an environment vector onto base states, dropping instances.
pub fn fvec_of(sum: &SumMachine, env: &EnvVector) -> Vec<usize> {
    env.0.iter().enumerate().map(|(k, &n)| sum.unfoldings[k].nodes[n].base).collect()
}

impl SumMachine {
    pub(crate) fn from_parts(spec: SystemSpec, unfoldings: Vec<Unfolding>) -> Self {
        let mut sum = SumMachine { spec, unfoldings, stats: UnfoldStats::default(), by_base: Vec::new() };
        sum.refresh_derived();
        sum
    }

    pub(crate) fn refresh_derived(&mut self) {
        let nf = self.spec.max_states();
        let mut machines = Vec::new();
        self.by_base = Vec::new();
        for (i, u) in self.unfoldings.iter().enumerate() {
            let mut lists = vec![Vec::new(); self.spec.machines[i].states.len()];
            for n in u.preorder() {
                lists[u.nodes[n].base].push(n);
            }
            self.by_base.push(lists);
            machines.push(MachineStats {
                name: self.spec.machines[i].name.clone(),
                nodes: u.nodes.len(),
                cutoffs: u.nodes.iter().filter(|n| n.cutoff).count(),
                dead: u.nodes.iter().filter(|n| n.dead).count(),
                depth: u.depth(),
            });
        }
        let max_nodes = machines.iter().map(|m| m.nodes).max().unwrap_or(0);
        self.stats = UnfoldStats {
            total_nodes: machines.iter().map(|m| m.nodes).sum(),
            total_cutoffs: machines.iter().map(|m| m.cutoffs).sum(),
            total_dead: machines.iter().map(|m| m.dead).sum(),
            max_machine_states: nf,
            coupling_factor: if nf == 0 { 0.0 } else { max_nodes as f64 / nf as f64 },
            machines,
        };
    }

    pub fn machines(&self) -> usize {
        self.unfoldings.len()
    }

    pub fn node(&self, r: NodeRef) -> &UnfoldedState {
        &self.unfoldings[r.machine].nodes[r.index]
    }

    pub fn get(&self, r: NodeRef) -> Option<&UnfoldedState> {
        self.unfoldings.get(r.machine).and_then(|u| u.nodes.get(r.index))
    }

    pub fn env(&self, r: NodeRef) -> &EnvVector {
        &self.node(r).env
    }

    pub fn root(&self, machine: usize) -> NodeRef {
        NodeRef::new(machine, Unfolding::ROOT)
    }

    /// Every node, machine by machine.
    pub fn all_nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.unfoldings.iter().enumerate().flat_map(|(m, u)| (0..u.nodes.len()).map(move |i| NodeRef::new(m, i)))
    }

    /// Nodes of `machine` whose base state is `state`, in depth-first order.
    pub fn nodes_with_base(&self, machine: usize, state: usize) -> &[usize] {
        &self.by_base[machine][state]
    }

    /// `A#0` style name of a node.
    pub fn node_name(&self, r: NodeRef) -> String {
        let n = self.node(r);
        format!("{}#{}", self.spec.machines[r.machine].states[n.base], n.instance)
    }

    /// `F1:A#0` style name of a node.
    pub fn qualified_name(&self, r: NodeRef) -> String {
        format!("{}:{}", self.spec.machines[r.machine].name, self.node_name(r))
    }

    /// Finds the node with the given base name and instance number.
    pub fn find(&self, machine: usize, state: &str, instance: usize) -> Option<NodeRef> {
        let s = self.spec.machines.get(machine)?.state_index(state)?;
        self.by_base[machine][s]
            .iter()
            .find(|&&n| self.unfoldings[machine].nodes[n].instance == instance)
            .map(|&n| NodeRef::new(machine, n))
    }

    pub fn fvec_of(&self, env: &EnvVector) -> Vec<usize> {
        fvec_of(self, env)
    }

    /// Whether `a` R_k* `b` in tree `k`.
    pub fn is_ancestor_or_eq(&self, k: usize, a: usize, b: usize) -> bool {
        self.unfoldings[k].is_ancestor_or_eq(a, b)
    }

    /// Whether two nodes of tree `k` lie on one root path.
    pub fn comparable(&self, k: usize, a: usize, b: usize) -> bool {
        self.is_ancestor_or_eq(k, a, b) || self.is_ancestor_or_eq(k, b, a)
    }

    /// The R_k*-later of two nodes of tree `k`.
    pub fn desc(&self, k: usize, a: usize, b: usize) -> Result<usize, UnfoldError> {
        engine::desc_in(&self.unfoldings[k].nodes, a, b).ok_or(UnfoldError::Conflict { machine: k, a, b })
    }

    /// Whether two nodes of distinct machines may rendezvous: every
    /// environment coordinate is comparable, and neither node's environment
    /// has already moved past the other node in its own tree.
    pub fn is_sync_compatible(&self, a: NodeRef, b: NodeRef) -> bool {
        engine::sync_compatible(self.unfoldings.as_slice(), a.machine, &self.env(a).0, b.machine, &self.env(b).0)
    }

    pub fn is_cutoff(&self, r: NodeRef) -> bool {
        self.node(r).cutoff
    }

    /// Recomputes the ancestor cut-off condition from scratch: some strict
    /// ancestor's environment projects to the same vector.
    pub fn has_matching_ancestor(&self, r: NodeRef) -> Option<usize> {
        let u = &self.unfoldings[r.machine];
        let f = self.fvec_of(&u.nodes[r.index].env);
        u.ancestors(r.index).find(|&a| self.fvec_of(&u.nodes[a].env) == f)
    }

    /// Recomputes the marking cut-off condition from scratch: the lightest
    /// node of the same tree with the same projected vector and a strictly
    /// smaller weight.
    pub fn has_lighter_match(&self, r: NodeRef) -> Option<usize> {
        let u = &self.unfoldings[r.machine];
        let f = self.fvec_of(&u.nodes[r.index].env);
        let w = self.weight_of(&u.nodes[r.index].env);
        (0..u.nodes.len())
            .filter(|&x| self.weight_of(&u.nodes[x].env) < w && self.fvec_of(&u.nodes[x].env) == f)
            .min_by_key(|&x| (self.weight_of(&u.nodes[x].env), x))
    }

    /// Sum of tree depths over an environment.
    pub fn weight_of(&self, env: &EnvVector) -> usize {
        env.0.iter().enumerate().map(|(k, &n)| self.unfoldings[k].nodes[n].depth).sum()
    }

    pub fn dead_leaves(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.all_nodes().filter(|&r| self.node(r).dead)
    }

    /// The vector of roots.
    pub fn initial_configuration(&self) -> Vec<usize> {
        vec![Unfolding::ROOT; self.machines()]
    }

    /// Fault injection for harness tests: forgets the rendezvous link between
    /// `node` and its partner, as if the synchronization edge were missing.
    pub fn drop_sync_edge(&mut self, node: NodeRef) -> bool {
        let Some(partner) = self.node(node).sync_partner else {
            return false;
        };
        self.unfoldings[node.machine].nodes[node.index].sync_partner = None;
        self.unfoldings[partner.machine].nodes[partner.index].sync_partner = None;
        true
    }
}

impl fmt::Display for UnfoldStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.machines {
            writeln!(f, "{}: {} nodes, {} cut-offs, {} dead, depth {}", m.name, m.nodes, m.cutoffs, m.dead, m.depth)?;
        }
        write!(
            f,
            "total: {} nodes, {} cut-offs, {} dead; d = {:.3} (N_f = {})",
            self.total_nodes, self.total_cutoffs, self.total_dead, self.coupling_factor, self.max_machine_states
        )
    }
}
