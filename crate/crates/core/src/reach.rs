//! Global reachability from local searches plus concurrency certification.
//!
//! A query names a state for some machines. Each constrained machine's tree
//! is searched for nodes of that state (the candidates), then one candidate
//! per machine is chosen so that every pair passes [`co_fast`]. Candidate
//! pairs are tested lazily and memoized, so a search never performs more
//! than k² tests per machine pair however much it backtracks.
//!
//! `co_fast` only inspects the two machines involved. When some machine is
//! unconstrained, two candidates can still be in conflict through it, so
//! partial queries also require every unconstrained coordinate of the two
//! environments to be comparable. For full-vector queries that gate is
//! implied by the pairwise tests.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SystemSpec;
use crate::relations::co_fast;
use crate::transition::linearize;
use crate::unfold::{worker_cap, NodeRef, SumMachine, Unfolding};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReachError {
    #[error("unknown machine {0:?}")]
    UnknownMachine(String),
    #[error("machine {machine} has no state {state:?}")]
    UnknownState { machine: String, state: String },
    #[error("malformed query: {0}")]
    Json(String),
    #[error("configuration components {0:?} and {1:?} are not concurrent")]
    NotConcurrent(NodeRef, NodeRef),
    #[error("configuration names machine {0} twice or out of range")]
    BadConfiguration(usize),
}

/// Target state per constrained machine, by index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachQuery {
    pub targets: BTreeMap<usize, usize>,
}

#[derive(Deserialize)]
struct QueryDoc {
    targets: BTreeMap<String, String>,
}

impl ReachQuery {
    /// Resolves machine and state names.
    pub fn from_names<'a>(
        spec: &SystemSpec,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ReachError> {
        let mut targets = BTreeMap::new();
        for (machine, state) in pairs {
            let i = spec.machine_index(machine).ok_or_else(|| ReachError::UnknownMachine(machine.to_string()))?;
            let s = spec.machines[i]
                .state_index(state)
                .ok_or_else(|| ReachError::UnknownState { machine: machine.to_string(), state: state.to_string() })?;
            targets.insert(i, s);
        }
        Ok(ReachQuery { targets })
    }

    /// Parses `{"targets": {"F1": "B", "F2": "Y"}}`.
    pub fn from_json(spec: &SystemSpec, text: &str) -> Result<Self, ReachError> {
        let doc: QueryDoc = serde_json::from_str(text).map_err(|e| ReachError::Json(e.to_string()))?;
        Self::from_names(spec, doc.targets.iter().map(|(m, s)| (m.as_str(), s.as_str())))
    }

    /// The query fixing every machine.
    pub fn full(vector: &[usize]) -> Self {
        ReachQuery { targets: vector.iter().copied().enumerate().collect() }
    }

    pub fn is_full(&self, machines: usize) -> bool {
        self.targets.len() == machines
    }

    pub fn check(&self, spec: &SystemSpec) -> Result<(), ReachError> {
        for (&i, &s) in &self.targets {
            let m = spec.machines.get(i).ok_or_else(|| ReachError::UnknownMachine(format!("#{}", i + 1)))?;
            if s >= m.states.len() {
                return Err(ReachError::UnknownState { machine: m.name.clone(), state: format!("#{s}") });
            }
        }
        Ok(())
    }
}

/// Candidate nodes per constrained machine, machines in ascending order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateMatrix {
    pub rows: Vec<(usize, Vec<NodeRef>)>,
    /// Rows cut short by the per-machine cap.
    pub truncated: bool,
}

impl CandidateMatrix {
    /// Largest row length (k).
    pub fn k_max(&self) -> usize {
        self.rows.iter().map(|(_, r)| r.len()).max().unwrap_or(0)
    }

    pub fn k_total(&self) -> usize {
        self.rows.iter().map(|(_, r)| r.len()).sum()
    }
}

/// One node per machine, keyed by machine index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub components: BTreeMap<usize, usize>,
}

impl Configuration {
    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.components.iter().map(|(&m, &i)| NodeRef::new(m, i))
    }

    pub fn from_nodes(nodes: impl IntoIterator<Item = NodeRef>) -> Self {
        Configuration { components: nodes.into_iter().map(|r| (r.machine, r.index)).collect() }
    }

    /// Base state per component.
    pub fn vector(&self, sum: &SumMachine) -> BTreeMap<usize, usize> {
        self.nodes().map(|r| (r.machine, sum.node(r).base)).collect()
    }

    pub fn display(&self, sum: &SumMachine) -> String {
        let parts: Vec<String> = self.nodes().map(|r| sum.node_name(r)).collect();
        format!("({})", parts.join(", "))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyMode {
    /// Every pair of constrained machines is tested. Authoritative.
    #[default]
    Pairwise,
    /// Consecutive machines only, relying on transitivity of concurrency.
    /// The verdict is still decided pairwise; the chain outcome is recorded.
    Chain,
    /// Like `Chain`, but the chain outcome decides. For experiments only.
    ChainOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReachOptions {
    pub mode: CertifyMode,
    /// Per-machine candidate cap; `None` keeps every candidate.
    pub cap: Option<usize>,
    /// Run the local searches on worker threads.
    pub parallel: bool,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions { mode: CertifyMode::Pairwise, cap: None, parallel: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mode: CertifyMode,
    /// (machine, number of local matches) per constrained machine.
    pub local_matches: Vec<(usize, usize)>,
    /// Largest candidate list.
    pub k_max: usize,
    /// Sum of candidate list lengths.
    pub k_total: usize,
    pub candidates_truncated: bool,
    /// Calls to `co_fast`.
    pub pairwise_checks: usize,
    /// Parent steps walked by those calls.
    pub ancestor_steps: usize,
    /// Comparability tests on unconstrained coordinates.
    pub gate_checks: usize,
    /// Chain outcome and its cost, when chain certification ran.
    pub chain_reachable: Option<bool>,
    pub chain_checks: usize,
    /// Chain accepted an assignment that fails pairwise.
    pub chain_disagreement: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub reachable: bool,
    pub witness: Option<Configuration>,
    pub diagnostics: Diagnostics,
}

/// Every node of tree `i` whose base is `target`, in depth-first order.
pub fn local_search(sum: &SumMachine, i: usize, target: usize) -> Result<Vec<NodeRef>, ReachError> {
    let m = sum.spec.machines.get(i).ok_or_else(|| ReachError::UnknownMachine(format!("#{}", i + 1)))?;
    if target >= m.states.len() {
        return Err(ReachError::UnknownState { machine: m.name.clone(), state: format!("#{target}") });
    }
    Ok(sum.nodes_with_base(i, target).iter().map(|&idx| NodeRef::new(i, idx)).collect())
}

/// Memoized pair tests over one candidate matrix.
struct PairCache<'a> {
    sum: &'a SumMachine,
    /// Machines without a row.
    free: Vec<usize>,
    memo: HashMap<(NodeRef, NodeRef), bool>,
    checks: usize,
    steps: usize,
    gates: usize,
}

impl<'a> PairCache<'a> {
    fn new(sum: &'a SumMachine, matrix: &CandidateMatrix) -> Self {
        let free = (0..sum.machines()).filter(|k| !matrix.rows.iter().any(|(m, _)| m == k)).collect();
        PairCache { sum, free, memo: HashMap::new(), checks: 0, steps: 0, gates: 0 }
    }

    fn concurrent(&mut self, a: NodeRef, b: NodeRef) -> bool {
        if let Some(&v) = self.memo.get(&(a, b)) {
            return v;
        }
        self.checks += 1;
        let (mut ok, steps) = co_fast(self.sum, a, b).expect("candidates of distinct machines");
        self.steps += steps;
        if ok {
            let (ea, eb) = (self.sum.env(a), self.sum.env(b));
            for &k in &self.free {
                self.gates += 1;
                if !self.sum.comparable(k, ea.0[k], eb.0[k]) {
                    ok = false;
                    break;
                }
            }
        }
        self.memo.insert((a, b), ok);
        ok
    }
}

/// First assignment, in candidate order, whose pairs are all concurrent.
/// Returns it with the number of `co_fast` calls made.
pub fn certify_concurrent(
    sum: &SumMachine,
    candidates: &CandidateMatrix,
    mode: CertifyMode,
) -> (Option<Configuration>, usize) {
    let mut cache = PairCache::new(sum, candidates);
    let found = match mode {
        CertifyMode::Pairwise => search_pairwise(&mut cache, candidates),
        CertifyMode::Chain | CertifyMode::ChainOnly => search_chain(&mut cache, candidates),
    };
    (found, cache.checks)
}

fn search_pairwise(cache: &mut PairCache, matrix: &CandidateMatrix) -> Option<Configuration> {
    if matrix.rows.iter().any(|(_, r)| r.is_empty()) {
        return None;
    }
    let rows: Vec<&Vec<NodeRef>> = matrix.rows.iter().map(|(_, r)| r).collect();
    let mut chosen: Vec<NodeRef> = Vec::with_capacity(rows.len());
    let mut cursor = vec![0usize; rows.len()];
    let mut level = 0;
    loop {
        if level == rows.len() {
            return Some(Configuration::from_nodes(chosen));
        }
        let mut advanced = false;
        while cursor[level] < rows[level].len() {
            let c = rows[level][cursor[level]];
            cursor[level] += 1;
            if chosen.iter().all(|&p| cache.concurrent(p, c)) {
                chosen.push(c);
                level += 1;
                advanced = true;
                break;
            }
        }
        if !advanced {
            if level == 0 {
                return None;
            }
            cursor[level] = 0;
            level -= 1;
            chosen.pop();
        }
    }
}

/// Tests only consecutive rows; a path through the rows is accepted.
fn search_chain(cache: &mut PairCache, matrix: &CandidateMatrix) -> Option<Configuration> {
    let rows: Vec<&Vec<NodeRef>> = matrix.rows.iter().map(|(_, r)| r).collect();
    if rows.iter().any(|r| r.is_empty()) {
        return None;
    }
    // viable[l][c]: candidate c of row l extends to a path through the later rows
    let mut viable: Vec<Vec<bool>> = rows.iter().map(|r| vec![true; r.len()]).collect();
    for l in (0..rows.len().saturating_sub(1)).rev() {
        for c in 0..rows[l].len() {
            viable[l][c] =
                (0..rows[l + 1].len()).any(|d| viable[l + 1][d] && cache.concurrent(rows[l][c], rows[l + 1][d]));
        }
    }
    let mut chosen = Vec::new();
    let mut prev: Option<NodeRef> = None;
    for (l, row) in rows.iter().enumerate() {
        let pick = (0..row.len()).find(|&c| viable[l][c] && prev.is_none_or(|p| cache.concurrent(p, row[c])))?;
        chosen.push(row[pick]);
        prev = Some(row[pick]);
    }
    Some(Configuration::from_nodes(chosen))
}

/// Local searches for every constrained machine followed by certification.
pub fn global_reachable(sum: &SumMachine, q: &ReachQuery, opts: ReachOptions) -> Result<Verdict, ReachError> {
    q.check(&sum.spec)?;
    let targets: Vec<(usize, usize)> = q.targets.iter().map(|(&i, &s)| (i, s)).collect();
    let found: Vec<Vec<NodeRef>> = if opts.parallel && targets.len() > 1 {
        let workers = worker_cap().clamp(1, targets.len());
        let chunk = targets.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = targets
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|&(i, s)| local_search(sum, i, s)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("local search panicked")).collect::<Result<_, _>>()
        })?
    } else {
        targets.iter().map(|&(i, s)| local_search(sum, i, s)).collect::<Result<_, _>>()?
    };

    let mut diagnostics = Diagnostics { mode: opts.mode, ..Diagnostics::default() };
    let mut matrix = CandidateMatrix::default();
    for (&(i, _), mut row) in targets.iter().zip(found) {
        diagnostics.local_matches.push((i, row.len()));
        if let Some(cap) = opts.cap {
            if row.len() > cap {
                row.truncate(cap);
                matrix.truncated = true;
            }
        }
        matrix.rows.push((i, row));
    }
    diagnostics.k_max = matrix.k_max();
    diagnostics.k_total = matrix.k_total();
    diagnostics.candidates_truncated = matrix.truncated;

    let mut cache = PairCache::new(sum, &matrix);
    let pairwise = search_pairwise(&mut cache, &matrix);
    diagnostics.pairwise_checks = cache.checks;
    diagnostics.ancestor_steps = cache.steps;
    diagnostics.gate_checks = cache.gates;

    let mut witness = pairwise;
    if opts.mode != CertifyMode::Pairwise {
        let mut chain_cache = PairCache::new(sum, &matrix);
        let chain = search_chain(&mut chain_cache, &matrix);
        diagnostics.chain_checks = chain_cache.checks;
        diagnostics.chain_reachable = Some(chain.is_some());
        if let Some(c) = &chain {
            diagnostics.chain_disagreement = !is_configuration(sum, c);
        }
        if opts.mode == CertifyMode::ChainOnly {
            witness = chain;
        }
    }
    Ok(Verdict { reachable: witness.is_some(), witness, diagnostics })
}

/// Whether the components are pairwise concurrent (with the gate on
/// coordinates the configuration leaves open).
pub fn is_configuration(sum: &SumMachine, c: &Configuration) -> bool {
    check_configuration(sum, c).is_ok()
}

fn check_configuration(sum: &SumMachine, c: &Configuration) -> Result<(), ReachError> {
    for r in c.nodes() {
        if sum.get(r).is_none() {
            return Err(ReachError::BadConfiguration(r.machine));
        }
    }
    let matrix = CandidateMatrix { rows: c.nodes().map(|r| (r.machine, vec![r])).collect(), truncated: false };
    let mut cache = PairCache::new(sum, &matrix);
    let nodes: Vec<NodeRef> = c.nodes().collect();
    for (x, &a) in nodes.iter().enumerate() {
        for &b in &nodes[x + 1..] {
            if !cache.concurrent(a, b) {
                return Err(ReachError::NotConcurrent(a, b));
            }
        }
    }
    Ok(())
}

/// One step of an interleaving: the machines that moved and the global
/// state vector after the step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Action name, empty for the initial vector.
    pub action: String,
    pub machines: Vec<usize>,
    pub vector: Vec<usize>,
    /// Tree position per machine after the step.
    pub configuration: Vec<usize>,
}

/// A concrete interleaving from the initial vector to a configuration. The
/// first step is the initial vector itself.
pub fn materialize_configuration(sum: &SumMachine, c: &Configuration) -> Result<Vec<TraceStep>, ReachError> {
    check_configuration(sum, c)?;
    let n = sum.machines();
    // Per tree, the deepest node any component's history reaches.
    let mut goal = vec![Unfolding::ROOT; n];
    for r in c.nodes() {
        for (k, &e) in sum.env(r).0.iter().enumerate() {
            if sum.is_ancestor_or_eq(k, goal[k], e) {
                goal[k] = e;
            }
        }
    }
    let vector = |cut: &[usize]| -> Vec<usize> { (0..n).map(|k| sum.unfoldings[k].nodes[cut[k]].base).collect() };
    let init = vec![Unfolding::ROOT; n];
    let steps = linearize(sum, &init, &goal).expect("a pairwise concurrent configuration always has an enabled step");
    let mut trace =
        vec![TraceStep { action: String::new(), machines: Vec::new(), vector: vector(&init), configuration: init }];
    for (mv, cut) in steps {
        trace.push(TraceStep {
            action: mv.action(&sum.spec).to_string(),
            machines: mv.machines(),
            vector: vector(&cut),
            configuration: cut,
        });
    }
    Ok(trace)
}

/// A dead leaf with its environment, the least configuration stuck there.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deadlock {
    pub leaves: Vec<NodeRef>,
    pub configuration: Vec<usize>,
    pub vector: Vec<usize>,
}

/// Dead leaves grouped by environment, in environment order.
pub fn list_deadlocks(sum: &SumMachine) -> Vec<Deadlock> {
    let mut by_env: BTreeMap<Vec<usize>, Vec<NodeRef>> = BTreeMap::new();
    for r in sum.dead_leaves() {
        by_env.entry(sum.env(r).0.clone()).or_default().push(r);
    }
    by_env
        .into_iter()
        .map(|(env, leaves)| {
            let vector = (0..env.len()).map(|k| sum.unfoldings[k].nodes[env[k]].base).collect();
            Deadlock { leaves, configuration: env, vector }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::fixture;

    fn query(sum: &SumMachine, pairs: &[(&str, &str)]) -> ReachQuery {
        ReachQuery::from_names(&sum.spec, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn local_search_pingpong() {
        let sum = fixture("pingpong");
        let b = sum.spec.machines[0].state_index("B").unwrap();
        assert_eq!(local_search(&sum, 0, b).unwrap(), vec![sum.find(0, "B", 0).unwrap()]);
        let roots = local_search(&sum, 0, 0).unwrap();
        assert_eq!(roots[0], sum.root(0));
    }

    #[test]
    fn conflict_queries() {
        let sum = fixture("conflict");
        let v = global_reachable(&sum, &query(&sum, &[("F1", "B"), ("F2", "Z")]), ReachOptions::default()).unwrap();
        assert!(!v.reachable && v.witness.is_none());
        let v = global_reachable(&sum, &query(&sum, &[("F1", "B"), ("F2", "Y")]), ReachOptions::default()).unwrap();
        let w = v.witness.unwrap();
        assert_eq!(w.display(&sum), "(B#0, Y#0)");
        assert_eq!(v.diagnostics.pairwise_checks, 1);
    }

    #[test]
    fn single_machine_needs_no_checks() {
        let sum = fixture("conflict");
        let v = global_reachable(&sum, &query(&sum, &[("F1", "C")]), ReachOptions::default()).unwrap();
        assert!(v.reachable);
        assert_eq!(v.diagnostics.pairwise_checks, 0);
    }

    #[test]
    fn partial_query_gate_catches_third_machine_conflict() {
        let sum = fixture("relay");
        let q = query(&sum, &[("F1", "B"), ("F2", "Q")]);
        let v = global_reachable(&sum, &q, ReachOptions::default()).unwrap();
        assert!(!v.reachable);
        assert_eq!(v.diagnostics.pairwise_checks, 1);
        assert!(v.diagnostics.gate_checks >= 1);
    }

    #[test]
    fn initial_vector_is_reachable() {
        let sum = fixture("chain3");
        let v = global_reachable(&sum, &ReachQuery::full(&sum.spec.initial_vector()), ReachOptions::default()).unwrap();
        let w = v.witness.unwrap();
        assert_eq!(w.nodes().collect::<Vec<_>>(), (0..3).map(|k| sum.root(k)).collect::<Vec<_>>());
    }

    #[test]
    fn async_trace_fires_machine_one_first() {
        let sum = fixture("async");
        let v = global_reachable(&sum, &query(&sum, &[("F1", "B"), ("F2", "Y")]), ReachOptions::default()).unwrap();
        let trace = materialize_configuration(&sum, &v.witness.unwrap()).unwrap();
        let vectors: Vec<String> = trace.iter().map(|s| sum.spec.format_vector(&s.vector)).collect();
        assert_eq!(vectors, ["(A,X)", "(B,X)", "(B,Y)"]);
    }

    #[test]
    fn sync_trace_is_atomic() {
        let sum = fixture("pingpong");
        let c = Configuration::from_nodes([sum.find(0, "B", 0).unwrap(), sum.find(1, "Y", 0).unwrap()]);
        let trace = materialize_configuration(&sum, &c).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[1].machines, vec![0, 1]);
        let init = Configuration::from_nodes([sum.root(0), sum.root(1)]);
        assert_eq!(materialize_configuration(&sum, &init).unwrap().len(), 1);
    }

    #[test]
    fn non_concurrent_configuration_rejected() {
        let sum = fixture("conflict");
        let c = Configuration::from_nodes([sum.find(0, "B", 0).unwrap(), sum.find(1, "Z", 0).unwrap()]);
        assert!(matches!(materialize_configuration(&sum, &c), Err(ReachError::NotConcurrent(..))));
    }

    #[test]
    fn deadlocks() {
        let sum = fixture("pingpong");
        assert!(list_deadlocks(&sum).is_empty());
        let sum = fixture("mismatch");
        let d = list_deadlocks(&sum);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].configuration, vec![0, 0]);
        assert_eq!(d[0].leaves, vec![sum.root(0), sum.root(1)]);
    }

    #[test]
    fn mismatch_blocks_everything() {
        let sum = fixture("mismatch");
        assert!(local_search(&sum, 0, 1).unwrap().is_empty());
        let v = global_reachable(&sum, &query(&sum, &[("F1", "B"), ("F2", "Y")]), ReachOptions::default()).unwrap();
        assert!(!v.reachable);
        assert_eq!(v.diagnostics.local_matches, vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn json_query() {
        let sum = fixture("async");
        let q = ReachQuery::from_json(&sum.spec, r#"{"targets": {"F1": "B"}}"#).unwrap();
        assert_eq!(q.targets, BTreeMap::from([(0, 1)]));
        assert!(matches!(
            ReachQuery::from_json(&sum.spec, r#"{"targets": {"F9": "B"}}"#),
            Err(ReachError::UnknownMachine(_))
        ));
        assert!(matches!(
            ReachQuery::from_json(&sum.spec, r#"{"targets": {"F1": "Q"}}"#),
            Err(ReachError::UnknownState { .. })
        ));
    }
}
