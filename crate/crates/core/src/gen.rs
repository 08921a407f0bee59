//! Seeded random systems for test campaigns.
//!
//! Every machine has a spanning tree rooted at its initial state, so all of
//! its states are locally reachable, plus random extra edges up to the
//! conflict width (maximum out-degree). Machines are wired into a random
//! partner graph of bounded degree; each partner pair owns one or two action
//! names, each used by at least one transition on both sides, so the output
//! always satisfies sync completeness.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{validate_system, ActionLabel, CfsmSpec, CfsmTransition, SystemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    pub seed: u64,
    pub machines: usize,
    /// States per machine.
    pub states: usize,
    /// Maximum number of distinct sync partners per machine.
    pub coupling: usize,
    /// Maximum number of transitions leaving one state.
    pub conflict_width: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("at least one machine with at least one state is required")]
    Empty,
    #[error("coupling {coupling} exceeds the {available} possible partners")]
    Coupling { coupling: usize, available: usize },
    #[error("conflict width must be at least 1")]
    Width,
}

impl GenParams {
    /// The test campaign family: 2 to 4 machines, 2 to 5 states each,
    /// coupling 0 to 3 (at most n - 1) and conflict width 1 to 3, all
    /// derived from the seed.
    pub fn campaign(seed: u64) -> Self {
        let machines = 2 + (seed % 3) as usize;
        GenParams {
            seed,
            machines,
            states: 2 + (seed / 3 % 4) as usize,
            coupling: ((seed / 12 % 4) as usize).min(machines - 1),
            conflict_width: 1 + (seed / 48 % 3) as usize,
        }
    }
}

pub fn generate(params: &GenParams) -> Result<SystemSpec, GenError> {
    let &GenParams { seed, machines: n, states: m, coupling, conflict_width: w } = params;
    if n == 0 || m == 0 {
        return Err(GenError::Empty);
    }
    if coupling > n - 1 {
        return Err(GenError::Coupling { coupling, available: n - 1 });
    }
    if w == 0 {
        return Err(GenError::Width);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.shuffle(&mut rng);
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    for (i, j) in pairs {
        if degree[i] < coupling && degree[j] < coupling {
            degree[i] += 1;
            degree[j] += 1;
            edges.push((i, j));
        }
    }
    edges.sort_unstable();

    let mut machines: Vec<(Vec<String>, Vec<CfsmTransition>)> = (0..n).map(|i| skeleton(&mut rng, i, m, w)).collect();

    // (pair, action names) for every partner edge
    let mut actions: Vec<((usize, usize), Vec<String>)> = Vec::new();
    for &(i, j) in &edges {
        let count = rng.gen_range(1..=2);
        let names: Vec<String> = (0..count).map(|x| format!("m{}_{}_{}", i + 1, j + 1, x)).collect();
        for name in &names {
            for (me, other) in [(i, j), (j, i)] {
                relabel_one(&mut rng, &mut machines[me].1, m, ActionLabel::synchronous(name.clone(), other));
            }
        }
        actions.push(((i, j), names));
    }

    // extra rendezvous on remaining async edges
    for (me, (_, transitions)) in machines.iter_mut().enumerate() {
        let mine: Vec<(usize, &String)> = actions
            .iter()
            .filter(|((a, b), _)| *a == me || *b == me)
            .flat_map(|((a, b), names)| names.iter().map(move |nm| (if *a == me { *b } else { *a }, nm)))
            .collect();
        if mine.is_empty() {
            continue;
        }
        for t in 0..transitions.len() {
            if transitions[t].action.is_sync() || !rng.gen_bool(0.3) {
                continue;
            }
            let &(other, name) = mine.choose(&mut rng).expect("non-empty");
            let label = ActionLabel::synchronous(name.clone(), other);
            let clash = transitions.iter().any(|u| {
                u.source == transitions[t].source && u.destination == transitions[t].destination && u.action == label
            });
            if !clash {
                transitions[t].action = label;
            }
        }
    }

    let machines = machines
        .into_iter()
        .enumerate()
        .map(|(i, (states, transitions))| CfsmSpec::new(i, format!("F{}", i + 1), states, 0, transitions))
        .collect();
    let spec = SystemSpec { name: format!("gen_{seed}"), machines };
    debug_assert!(validate_system(&spec).is_ok());
    Ok(spec)
}

fn skeleton(rng: &mut ChaCha8Rng, i: usize, m: usize, w: usize) -> (Vec<String>, Vec<CfsmTransition>) {
    let prefix = (b'a' + (i % 26) as u8) as char;
    let states: Vec<String> = (0..m).map(|k| format!("{prefix}{k}")).collect();
    let mut out = vec![0usize; m];
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut transitions = Vec::new();
    let push = |out: &mut Vec<usize>,
                used: &mut BTreeSet<(usize, usize)>,
                s: usize,
                d: usize,
                transitions: &mut Vec<CfsmTransition>| {
        out[s] += 1;
        used.insert((s, d));
        let name = format!("t{}", transitions.len());
        transitions.push(CfsmTransition { source: s, action: ActionLabel::asynchronous(name), destination: d });
    };
    for k in 1..m {
        let open: Vec<usize> = (0..k).filter(|&s| out[s] < w).collect();
        let parent = *open.choose(rng).unwrap_or(&(k - 1));
        push(&mut out, &mut used, parent, k, &mut transitions);
    }
    for s in 0..m {
        if rng.gen_bool(0.2) {
            continue;
        }
        let target = rng.gen_range(1..=w);
        let mut attempts = 0;
        while out[s] < target && attempts < 4 * m {
            attempts += 1;
            let d = rng.gen_range(0..m);
            if !used.contains(&(s, d)) {
                push(&mut out, &mut used, s, d, &mut transitions);
            }
        }
    }
    (states, transitions)
}

/// Turns a random async transition into a sync one, or adds a fresh
/// transition when none is left.
fn relabel_one(rng: &mut ChaCha8Rng, transitions: &mut Vec<CfsmTransition>, m: usize, label: ActionLabel) {
    let asyncs: Vec<usize> = (0..transitions.len()).filter(|&t| !transitions[t].action.is_sync()).collect();
    match asyncs.choose(rng) {
        Some(&t) => transitions[t].action = label,
        None => {
            let source = rng.gen_range(0..m);
            let destination = rng.gen_range(0..m);
            transitions.push(CfsmTransition { source, action: label, destination });
        }
    }
}

/// SHA-256 of the textual rendering; identifies a generated system.
pub fn spec_hash(spec: &SystemSpec) -> String {
    hex::encode(Sha256::digest(crate::dsl::pretty_print(spec).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64, machines: usize, states: usize, coupling: usize, conflict_width: usize) -> GenParams {
        GenParams { seed, machines, states, coupling, conflict_width }
    }

    #[test]
    fn always_valid() {
        for seed in 0..300 {
            for n in 1..=4 {
                let p = params(seed, n, 1 + (seed as usize % 5), (seed as usize % 4).min(n - 1), 1 + seed as usize % 3);
                let spec = generate(&p).unwrap();
                assert!(validate_system(&spec).is_ok(), "{p:?}");
            }
        }
    }

    #[test]
    fn deterministic_from_seed() {
        let p = params(42, 3, 4, 2, 2);
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        assert_eq!(spec_hash(&generate(&p).unwrap()), spec_hash(&generate(&p).unwrap()));
        assert_ne!(generate(&p).unwrap(), generate(&params(43, 3, 4, 2, 2)).unwrap());
    }

    #[test]
    fn no_coupling_means_no_sync() {
        let spec = generate(&params(1, 2, 2, 0, 2)).unwrap();
        assert!(spec.machines.iter().flat_map(|m| &m.transitions).all(|t| !t.action.is_sync()));
    }

    #[test]
    fn single_machine() {
        let spec = generate(&params(7, 1, 3, 0, 2)).unwrap();
        assert_eq!(spec.len(), 1);
    }

    #[test]
    fn infeasible_coupling() {
        assert_eq!(generate(&params(0, 2, 3, 2, 2)), Err(GenError::Coupling { coupling: 2, available: 1 }));
        assert_eq!(generate(&params(0, 0, 3, 0, 2)), Err(GenError::Empty));
    }

    #[test]
    fn partner_degree_bounded() {
        for seed in 0..50 {
            let spec = generate(&params(seed, 4, 4, 2, 3)).unwrap();
            for m in &spec.machines {
                let partners: BTreeSet<usize> = m.transitions.iter().filter_map(|t| t.action.partner()).collect();
                assert!(partners.len() <= 2);
            }
        }
    }
}
