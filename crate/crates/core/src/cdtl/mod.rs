//! Local branching-time logic over single unfoldings, and the three global
//! forms deduced from local ones plus concurrency certification.
//!
//! A tree is read as a transition structure whose edges are the tree edges
//! plus one back-edge from every cut-off leaf to the node it repeats. Every
//! other leaf ends its maximal paths: there `AX φ` holds vacuously, `EX φ`
//! fails, and `EG φ` / `AG φ` only need `φ` at the leaf itself.

mod formula;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use formula::{parse_atoms, parse_formula, Formula, ParseError, RawAtom};

use crate::reach::{certify_concurrent, CandidateMatrix, CertifyMode, Configuration};
use crate::unfold::{NodeRef, SumMachine, Unfolding};

/// A formula over the propositions of one machine.
pub type LocalFormula = Formula<String>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CdtlError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("machine {machine} has no proposition {prop:?}")]
    UndeclaredProposition { machine: String, prop: String },
    #[error("unknown machine {0:?}")]
    UnknownMachine(String),
    #[error("atom {atom} refers to machine {atom_machine}, formula is bound to {bound}")]
    WrongMachine { atom: String, atom_machine: String, bound: String },
    #[error("malformed global form: {0}")]
    Form(String),
    #[error("node {0:?} does not exist")]
    UnknownNode(NodeRef),
}

/// Parses a local formula and checks its atoms against machine `i`.
/// Qualified atoms must name `i` itself.
pub fn parse_local(sum: &SumMachine, i: usize, text: &str) -> Result<LocalFormula, CdtlError> {
    let m = sum.spec.machines.get(i).ok_or_else(|| CdtlError::UnknownMachine(format!("#{}", i + 1)))?;
    parse_formula(text)?.try_map(&mut |a: RawAtom| {
        if let Some(name) = &a.machine {
            if name != &m.name {
                return Err(CdtlError::WrongMachine {
                    atom: a.to_string(),
                    atom_machine: name.clone(),
                    bound: m.name.clone(),
                });
            }
        }
        if !m.has_proposition(&a.prop) {
            return Err(CdtlError::UndeclaredProposition { machine: m.name.clone(), prop: a.prop });
        }
        Ok(a.prop)
    })
}

/// One unfolding read as a finite transition structure with lasso edges.
pub struct LocalModel<'a> {
    sum: &'a SumMachine,
    tree: &'a Unfolding,
    succ: Vec<Vec<usize>>,
}

impl<'a> LocalModel<'a> {
    pub fn new(sum: &'a SumMachine, machine: usize) -> Self {
        let tree = &sum.unfoldings[machine];
        let succ = tree
            .nodes
            .iter()
            .map(|n| match (n.cutoff, n.cutoff_match) {
                (true, Some(m)) => vec![m],
                _ => n.children.clone(),
            })
            .collect();
        LocalModel { sum, tree, succ }
    }

    /// Successors of a node, including the lasso edge of a cut-off.
    pub fn successors(&self, node: usize) -> &[usize] {
        &self.succ[node]
    }

    fn labelled(&self, node: usize, prop: &str) -> bool {
        let m = &self.sum.spec.machines[self.tree.machine];
        m.labels[self.tree.nodes[node].base].contains(prop)
    }

    /// Satisfaction set of `f` over all nodes.
    pub fn sat(&self, f: &LocalFormula) -> Vec<bool> {
        use Formula::*;
        let n = self.succ.len();
        let ex = |x: &[bool]| -> Vec<bool> { (0..n).map(|s| self.succ[s].iter().any(|&t| x[t])).collect() };
        let ax = |x: &[bool]| -> Vec<bool> { (0..n).map(|s| self.succ[s].iter().all(|&t| x[t])).collect() };
        match f {
            True => vec![true; n],
            False => vec![false; n],
            Atom(p) => (0..n).map(|s| self.labelled(s, p)).collect(),
            Not(x) => self.sat(x).into_iter().map(|b| !b).collect(),
            And(x, y) => zip(self.sat(x), self.sat(y), |a, b| a && b),
            Or(x, y) => zip(self.sat(x), self.sat(y), |a, b| a || b),
            Implies(x, y) => zip(self.sat(x), self.sat(y), |a, b| !a || b),
            EX(x) => ex(&self.sat(x)),
            AX(x) => ax(&self.sat(x)),
            EF(x) => self.until(&vec![true; n], &self.sat(x), false),
            AF(x) => self.until(&vec![true; n], &self.sat(x), true),
            EU(x, y) => self.until(&self.sat(x), &self.sat(y), false),
            AU(x, y) => self.until(&self.sat(x), &self.sat(y), true),
            EG(x) => self.globally(&self.sat(x), false),
            AG(x) => self.globally(&self.sat(x), true),
        }
    }

    /// Least fixpoint of `Z = ψ ∨ (φ ∧ step Z)`, where the universal step
    /// also demands a successor.
    fn until(&self, phi: &[bool], psi: &[bool], all: bool) -> Vec<bool> {
        let mut z = psi.to_vec();
        loop {
            let mut changed = false;
            for s in 0..z.len() {
                if z[s] || !phi[s] {
                    continue;
                }
                let succ = &self.succ[s];
                let step =
                    if all { !succ.is_empty() && succ.iter().all(|&t| z[t]) } else { succ.iter().any(|&t| z[t]) };
                if step {
                    z[s] = true;
                    changed = true;
                }
            }
            if !changed {
                return z;
            }
        }
    }

    /// Greatest fixpoint of `Z = φ ∧ (end ∨ step Z)`.
    fn globally(&self, phi: &[bool], all: bool) -> Vec<bool> {
        let mut z = phi.to_vec();
        loop {
            let mut changed = false;
            for s in 0..z.len() {
                if !z[s] {
                    continue;
                }
                let succ = &self.succ[s];
                let keep = succ.is_empty() || if all { succ.iter().all(|&t| z[t]) } else { succ.iter().any(|&t| z[t]) };
                if !keep {
                    z[s] = false;
                    changed = true;
                }
            }
            if !changed {
                return z;
            }
        }
    }
}

fn zip(a: Vec<bool>, b: Vec<bool>, f: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

/// Whether node `s` satisfies `f` in its own unfolding.
pub fn eval_local(sum: &SumMachine, s: NodeRef, f: &LocalFormula) -> Result<bool, CdtlError> {
    if sum.get(s).is_none() {
        return Err(CdtlError::UnknownNode(s));
    }
    Ok(LocalModel::new(sum, s.machine).sat(f)[s.index])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalKind {
    /// Some reachable configuration satisfies every atom.
    AtomConj,
    /// Every local successor of each root satisfies its atom, and concurrent
    /// successors satisfying them exist.
    AXConj,
    /// Each machine inevitably reaches its atom, and concurrent strict
    /// descendants of the roots satisfying them exist.
    AFConj,
}

/// A conjunction of one proposition per constrained machine.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalForm {
    pub kind: GlobalKind,
    /// (machine, proposition), machines ascending and distinct.
    pub atoms: Vec<(usize, String)>,
}

impl GlobalForm {
    /// Parses `conj-atoms F1:"B" F2:"Y"`, `conj-AX …` or `conj-AF …`.
    pub fn parse(sum: &SumMachine, text: &str) -> Result<Self, CdtlError> {
        let text = text.trim();
        let (head, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let kind = match head {
            "conj-atoms" => GlobalKind::AtomConj,
            "conj-AX" => GlobalKind::AXConj,
            "conj-AF" => GlobalKind::AFConj,
            other => return Err(CdtlError::Form(format!("unknown form {other:?}"))),
        };
        let mut atoms = Vec::new();
        for a in parse_atoms(rest)? {
            let name = a.machine.clone().ok_or_else(|| CdtlError::Form(format!("atom {a} names no machine")))?;
            let i = sum.spec.machine_index(&name).ok_or(CdtlError::UnknownMachine(name))?;
            if !sum.spec.machines[i].has_proposition(&a.prop) {
                return Err(CdtlError::UndeclaredProposition {
                    machine: sum.spec.machines[i].name.clone(),
                    prop: a.prop,
                });
            }
            atoms.push((i, a.prop));
        }
        GlobalForm::new(kind, atoms)
    }

    pub fn new(kind: GlobalKind, mut atoms: Vec<(usize, String)>) -> Result<Self, CdtlError> {
        atoms.sort();
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CdtlError::Form("more than one atom for a machine".into()));
        }
        Ok(GlobalForm { kind, atoms })
    }

    /// The equivalent product-machine formula over qualified atoms.
    pub fn to_ctl(&self) -> Formula<(usize, String)> {
        let conj = self.atoms.iter().map(|a| Formula::Atom(a.clone())).reduce(|x, y| x.and(y)).unwrap_or(Formula::True);
        match self.kind {
            GlobalKind::AtomConj => Formula::EF(Box::new(conj)),
            GlobalKind::AXConj => Formula::AX(Box::new(conj)),
            GlobalKind::AFConj => Formula::AF(Box::new(conj)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalVerdict {
    pub holds: bool,
    /// Per constrained machine, the local part at the root (always true for
    /// `AtomConj`, which has none).
    pub local: Vec<(usize, bool)>,
    pub witness: Option<Configuration>,
    pub pairwise_checks: usize,
}

/// Evaluates a global form at the initial configuration.
pub fn eval_global(sum: &SumMachine, g: &GlobalForm) -> Result<GlobalVerdict, CdtlError> {
    let mut local = Vec::new();
    let mut matrix = CandidateMatrix::default();
    for (i, prop) in &g.atoms {
        let i = *i;
        if i >= sum.machines() {
            return Err(CdtlError::UnknownMachine(format!("#{}", i + 1)));
        }
        let model = LocalModel::new(sum, i);
        let q = model.sat(&Formula::Atom(prop.clone()));
        let tree = &sum.unfoldings[i];
        let root = Unfolding::ROOT;
        let row: Vec<usize> = match g.kind {
            GlobalKind::AtomConj => tree.preorder().into_iter().filter(|&s| q[s]).collect(),
            GlobalKind::AXConj => {
                local.push((i, model.successors(root).iter().all(|&t| q[t])));
                model.successors(root).iter().copied().filter(|&t| q[t]).collect()
            }
            GlobalKind::AFConj => {
                let af = model.sat(&Formula::AF(Box::new(Formula::Atom(prop.clone()))));
                local.push((i, af[root]));
                tree.preorder().into_iter().skip(1).filter(|&s| q[s]).collect()
            }
        };
        matrix.rows.push((i, row.into_iter().map(|s| NodeRef::new(i, s)).collect()));
    }
    let (witness, checks) = certify_concurrent(sum, &matrix, CertifyMode::Pairwise);
    let holds = witness.is_some() && local.iter().all(|&(_, b)| b);
    Ok(GlobalVerdict { holds, local, witness, pairwise_checks: checks })
}
