//! Cross-validation of sum-machine answers against the product oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::SystemSpec;
use crate::oracle::{
    build_product, check_bisimulation, compare_deadlocks, product_reachable, BisimReport, DeadlockComparison,
    DEFAULT_BOUND,
};
use crate::reach::{global_reachable, CertifyMode, ReachOptions, ReachQuery};
use crate::unfold::{SumMachine, SCHEMA};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    pub bound: usize,
    /// Compare this many random full vectors instead of all of them.
    pub sample: Option<usize>,
    pub seed: u64,
    /// Also run chain certification and log where it disagrees.
    pub chain: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { bound: DEFAULT_BOUND, sample: None, seed: 0, chain: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueryMismatch {
    pub vector: Vec<usize>,
    pub sum: bool,
    pub product: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeRow {
    pub product_states: usize,
    pub product_edges: usize,
    pub sum_nodes: usize,
    pub sum_cutoffs: usize,
    /// Largest per-machine node count over N_f.
    pub coupling_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub schema: &'static str,
    pub seed: u64,
    pub queries: usize,
    pub reachable: usize,
    pub mismatches: Vec<QueryMismatch>,
    /// Vectors where chain certification accepted an assignment that fails
    /// pairwise.
    pub chain_disagreements: Vec<Vec<usize>>,
    pub sizes: SizeRow,
    pub truncated: bool,
    /// Skipped when the product was truncated.
    pub bisimulation: Option<BisimReport>,
    pub deadlocks: Option<DeadlockComparison>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        !self.truncated && self.mismatches.is_empty()
    }
}

/// Every full state vector of `spec`, in lexicographic order.
pub fn all_vectors(spec: &SystemSpec) -> impl Iterator<Item = Vec<usize>> + '_ {
    let n = spec.len();
    let mut next = (n > 0).then(|| vec![0usize; n]);
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut v = current.clone();
        for k in (0..n).rev() {
            v[k] += 1;
            if v[k] < spec.machines[k].states.len() {
                next = Some(v);
                break;
            }
            v[k] = 0;
        }
        Some(current)
    })
}

/// Compares `global_reachable` with the product on full-vector queries,
/// then runs the bisimulation and deadlock comparisons.
pub fn cross_check(sum: &SumMachine, opts: &CheckOptions) -> CheckReport {
    let spec = &sum.spec;
    let pm = build_product(spec, opts.bound);
    let vectors: Vec<Vec<usize>> = match opts.sample {
        None => all_vectors(spec).collect(),
        Some(count) => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (0..count).map(|_| spec.machines.iter().map(|m| rng.gen_range(0..m.states.len())).collect()).collect()
        }
    };
    let mode = if opts.chain { CertifyMode::Chain } else { CertifyMode::Pairwise };
    let ropts = ReachOptions { mode, ..ReachOptions::default() };
    let mut report = CheckReport {
        schema: SCHEMA,
        seed: opts.seed,
        queries: 0,
        reachable: 0,
        mismatches: Vec::new(),
        chain_disagreements: Vec::new(),
        sizes: SizeRow {
            product_states: pm.len(),
            product_edges: pm.edge_count(),
            sum_nodes: sum.stats.total_nodes,
            sum_cutoffs: sum.stats.total_cutoffs,
            coupling_factor: sum.stats.coupling_factor,
        },
        truncated: pm.truncated,
        bisimulation: None,
        deadlocks: None,
    };
    for v in vectors {
        let q = ReachQuery::full(&v);
        let verdict = global_reachable(sum, &q, ropts).expect("full vectors are well formed");
        let product = product_reachable(&pm, &q);
        report.queries += 1;
        report.reachable += usize::from(verdict.reachable);
        if verdict.diagnostics.chain_disagreement {
            report.chain_disagreements.push(v.clone());
        }
        // a truncated product can only confirm reachability
        if verdict.reachable != product.holds && (product.exact || !verdict.reachable) {
            report.mismatches.push(QueryMismatch { vector: v, sum: verdict.reachable, product: product.holds });
        }
    }
    if !pm.truncated {
        report.bisimulation = Some(check_bisimulation(&pm, sum));
        report.deadlocks = Some(compare_deadlocks(&pm, sum));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::fixture;

    #[test]
    fn pingpong_report() {
        let r = cross_check(&fixture("pingpong"), &CheckOptions::default());
        assert_eq!(r.queries, 4);
        assert!(r.passed());
        assert_eq!((r.sizes.product_states, r.sizes.sum_nodes), (2, 6));
        assert!(r.bisimulation.unwrap().passed());
    }

    #[test]
    fn conflict_pair_unreachable_on_both_sides() {
        let sum = fixture("conflict");
        let r = cross_check(&sum, &CheckOptions::default());
        assert!(r.passed());
        assert_eq!(r.reachable, 3);
    }

    #[test]
    fn sampling_is_seeded() {
        let sum = fixture("chain3");
        let opts = CheckOptions { sample: Some(5), seed: 7, ..CheckOptions::default() };
        let a = cross_check(&sum, &opts);
        assert_eq!(a.queries, 5);
        assert_eq!(a, cross_check(&sum, &opts));
    }

    #[test]
    fn vectors_enumerate_the_grid() {
        let spec = fixture("chain3").spec;
        let total: usize = spec.machines.iter().map(|m| m.states.len()).product();
        assert_eq!(all_vectors(&spec).count(), total);
    }
}
