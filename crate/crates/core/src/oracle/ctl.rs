//! CTL labeling over the product machine.
//!
//! Backward worklist algorithms over predecessor lists. A state without
//! successors ends its paths: `AX` holds there vacuously, `EX` fails, and
//! `EG` / `AG` need their argument only at that state.

use std::collections::VecDeque;

use super::{OracleError, ProductMachine};
use crate::cdtl::{parse_formula, CdtlError, Formula, RawAtom};
use crate::model::SystemSpec;

/// Atoms are (machine, proposition), evaluated on that machine's component.
pub type CtlFormula = Formula<(usize, String)>;

/// Parses a formula whose atoms all name a machine, as in `EF F1:"B"`.
pub fn parse_ctl(spec: &SystemSpec, text: &str) -> Result<CtlFormula, CdtlError> {
    parse_formula(text)?.try_map(&mut |a: RawAtom| {
        let name = a.machine.clone().ok_or_else(|| CdtlError::Form(format!("atom {a} names no machine")))?;
        let i = spec.machine_index(&name).ok_or(CdtlError::UnknownMachine(name))?;
        if !spec.machines[i].has_proposition(&a.prop) {
            return Err(CdtlError::UndeclaredProposition { machine: spec.machines[i].name.clone(), prop: a.prop });
        }
        Ok((i, a.prop))
    })
}

struct Graph<'a> {
    pm: &'a ProductMachine,
    pred: Vec<Vec<usize>>,
    out_degree: Vec<usize>,
}

impl<'a> Graph<'a> {
    fn new(pm: &'a ProductMachine) -> Self {
        // one entry per edge, so counters drop once per parallel edge too
        let mut pred = vec![Vec::new(); pm.len()];
        for (s, edges) in pm.succ.iter().enumerate() {
            for &(_, t) in edges {
                pred[t].push(s);
            }
        }
        let out_degree = pm.succ.iter().map(Vec::len).collect();
        Graph { pm, pred, out_degree }
    }

    fn label(&self, f: &CtlFormula) -> Vec<bool> {
        use Formula::*;
        let n = self.pm.len();
        match f {
            True => vec![true; n],
            False => vec![false; n],
            Atom((i, p)) => {
                self.pm.states.iter().map(|v| self.pm.spec.machines[*i].labels[v[*i]].contains(p)).collect()
            }
            Not(x) => self.label(x).iter().map(|b| !b).collect(),
            And(x, y) => pointwise(self.label(x), self.label(y), |a, b| a && b),
            Or(x, y) => pointwise(self.label(x), self.label(y), |a, b| a || b),
            Implies(x, y) => pointwise(self.label(x), self.label(y), |a, b| !a || b),
            EX(x) => {
                let x = self.label(x);
                (0..n).map(|s| self.pm.succ[s].iter().any(|&(_, t)| x[t])).collect()
            }
            AX(x) => {
                let x = self.label(x);
                (0..n).map(|s| self.pm.succ[s].iter().all(|&(_, t)| x[t])).collect()
            }
            EF(x) => self.eu(&vec![true; n], &self.label(x)),
            EU(x, y) => self.eu(&self.label(x), &self.label(y)),
            AF(x) => self.au(&vec![true; n], &self.label(x)),
            AU(x, y) => self.au(&self.label(x), &self.label(y)),
            EG(x) => self.eg(&self.label(x)),
            AG(x) => self
                .eu(&vec![true; n], &self.label(x).iter().map(|b| !b).collect::<Vec<_>>())
                .iter()
                .map(|b| !b)
                .collect(),
        }
    }

    /// Backward search from ψ-states through φ-states.
    fn eu(&self, phi: &[bool], psi: &[bool]) -> Vec<bool> {
        let mut sat = psi.to_vec();
        let mut queue: VecDeque<usize> = (0..sat.len()).filter(|&s| sat[s]).collect();
        while let Some(t) = queue.pop_front() {
            for &s in &self.pred[t] {
                if !sat[s] && phi[s] {
                    sat[s] = true;
                    queue.push_back(s);
                }
            }
        }
        sat
    }

    /// Counts, per φ-state, the successors not yet known to satisfy the
    /// formula; a state is added when its count reaches zero. States without
    /// successors qualify only through ψ.
    fn au(&self, phi: &[bool], psi: &[bool]) -> Vec<bool> {
        let mut sat = psi.to_vec();
        let mut pending = self.out_degree.clone();
        let mut queue: VecDeque<usize> = (0..sat.len()).filter(|&s| sat[s]).collect();
        while let Some(t) = queue.pop_front() {
            for &s in &self.pred[t] {
                pending[s] -= 1;
                if pending[s] == 0 && !sat[s] && phi[s] {
                    sat[s] = true;
                    queue.push_back(s);
                }
            }
        }
        sat
    }

    /// Removes φ-states whose successors have all been removed, unless they
    /// had none to begin with.
    fn eg(&self, phi: &[bool]) -> Vec<bool> {
        let mut sat = phi.to_vec();
        let mut alive = self.out_degree.clone();
        let mut queue: VecDeque<usize> = (0..sat.len()).filter(|&s| !sat[s]).collect();
        while let Some(t) = queue.pop_front() {
            for &s in &self.pred[t] {
                alive[s] -= 1;
                if alive[s] == 0 && sat[s] {
                    sat[s] = false;
                    queue.push_back(s);
                }
            }
        }
        sat
    }
}

fn pointwise(a: Vec<bool>, b: Vec<bool>, f: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

/// Satisfaction set over all explored states.
pub fn sat_ctl(pm: &ProductMachine, f: &CtlFormula) -> Result<Vec<bool>, OracleError> {
    pm.require_complete()?;
    Ok(Graph::new(pm).label(f))
}

/// Whether the initial state satisfies `f`.
pub fn eval_ctl(pm: &ProductMachine, f: &CtlFormula) -> Result<bool, OracleError> {
    Ok(sat_ctl(pm, f)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{build_product, DEFAULT_BOUND};
    use crate::testutil::fixture;

    fn check(name: &str, text: &str) -> bool {
        let spec = fixture(name).spec;
        let pm = build_product(&spec, DEFAULT_BOUND);
        eval_ctl(&pm, &parse_ctl(&spec, text).unwrap()).unwrap()
    }

    #[test]
    fn product_formulas() {
        assert!(check("pingpong", r#"EF F1:"B""#));
        assert!(check("pingpong", r#"AG (F1:"A" | F1:"B")"#));
        assert!(!check("conflict", r#"EF (F1:"B" & F2:"Z")"#));
        assert!(check("conflict", r#"AF (F1:"B" | F1:"C")"#));
        assert!(!check("conflict", r#"AF F1:"B""#));
        assert!(check("pingpong", r#"EG F2:"X" -> false | AG AF F2:"X""#));
    }

    #[test]
    fn deadlock_ends_paths() {
        assert!(check("mismatch", r#"AX false"#));
        assert!(!check("mismatch", r#"EX true"#));
        assert!(check("mismatch", r#"EG F1:"A""#));
        assert!(!check("mismatch", r#"AF F1:"B""#));
        assert!(check("mismatch", r#"A[F1:"A" U F2:"X"]"#));
    }

    #[test]
    fn atoms_need_machines() {
        let spec = fixture("pingpong").spec;
        assert!(parse_ctl(&spec, "EF B").is_err());
        assert!(parse_ctl(&spec, "EF F3:B").is_err());
        assert!(parse_ctl(&spec, "EF F1:Q").is_err());
    }
}
