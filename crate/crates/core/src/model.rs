//! Data model for systems of communicating finite state machines.
//!
//! A [`SystemSpec`] is an ordered list of machines. Each machine owns a set of
//! named states, an initial state, a transition relation and a labelling of
//! states with atomic propositions. Transitions are either asynchronous (local
//! to one machine) or synchronous, in which case they name exactly one partner
//! machine and fire together with a partner transition carrying the same
//! action name.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Whether an action fires alone or as a pairwise rendezvous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "partner")]
pub enum ActionKind {
    Async,
    /// Rendezvous with the machine at this (zero-based) index.
    Sync(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionLabel {
    pub name: String,
    pub kind: ActionKind,
}

impl ActionLabel {
    pub fn asynchronous(name: impl Into<String>) -> Self {
        ActionLabel { name: name.into(), kind: ActionKind::Async }
    }

    pub fn synchronous(name: impl Into<String>, partner: usize) -> Self {
        ActionLabel { name: name.into(), kind: ActionKind::Sync(partner) }
    }

    pub fn partner(&self) -> Option<usize> {
        match self.kind {
            ActionKind::Async => None,
            ActionKind::Sync(j) => Some(j),
        }
    }

    pub fn is_sync(&self) -> bool {
        matches!(self.kind, ActionKind::Sync(_))
    }
}

/// One edge of a machine's transition relation. States are indices into the
/// owning machine's state list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CfsmTransition {
    pub source: usize,
    pub action: ActionLabel,
    pub destination: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfsmSpec {
    /// Zero-based position in the system. Displayed one-based.
    pub index: usize,
    pub name: String,
    pub states: Vec<String>,
    pub initial: usize,
    pub transitions: Vec<CfsmTransition>,
    /// Atomic propositions per state. Always contains the state's own name.
    pub labels: Vec<BTreeSet<String>>,
}

impl CfsmSpec {
    /// Builds a machine whose labels are the default ones (each state is
    /// labelled with its own name).
    pub fn new(
        index: usize,
        name: impl Into<String>,
        states: Vec<String>,
        initial: usize,
        transitions: Vec<CfsmTransition>,
    ) -> Self {
        let labels = states.iter().map(|s| BTreeSet::from([s.clone()])).collect();
        CfsmSpec { index, name: name.into(), states, initial, transitions, labels }
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Transitions leaving `state`, paired with their index in `transitions`.
    pub fn outgoing(&self, state: usize) -> impl Iterator<Item = (usize, &CfsmTransition)> {
        self.transitions.iter().enumerate().filter(move |(_, t)| t.source == state)
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.outgoing(state).next().is_none()
    }

    /// Every proposition used by at least one state.
    pub fn propositions(&self) -> BTreeSet<&str> {
        self.labels.iter().flatten().map(String::as_str).collect()
    }

    pub fn has_proposition(&self, prop: &str) -> bool {
        self.labels.iter().any(|l| l.contains(prop))
    }
}

/// One global step: a single machine's asynchronous transition, or a
/// rendezvous of two machines' matching transitions. Transitions are indices
/// into the machines' transition lists; in `Sync`, `a.0 < b.0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Async { machine: usize, transition: usize },
    Sync { a: (usize, usize), b: (usize, usize) },
}

impl Move {
    /// Orders the two halves of a rendezvous.
    pub fn sync(x: (usize, usize), y: (usize, usize)) -> Self {
        if x.0 < y.0 {
            Move::Sync { a: x, b: y }
        } else {
            Move::Sync { a: y, b: x }
        }
    }

    pub fn machines(&self) -> Vec<usize> {
        match *self {
            Move::Async { machine, .. } => vec![machine],
            Move::Sync { a, b } => vec![a.0, b.0],
        }
    }

    pub fn action<'a>(&self, spec: &'a SystemSpec) -> &'a str {
        let (m, t) = match *self {
            Move::Async { machine, transition } => (machine, transition),
            Move::Sync { a, .. } => a,
        };
        &spec.machines[m].transitions[t].action.name
    }

    /// Applies the move to a state vector without checking enabledness.
    pub fn apply(&self, spec: &SystemSpec, vector: &mut [usize]) {
        let parts: &[(usize, usize)] = match self {
            Move::Async { machine, transition } => &[(*machine, *transition)],
            Move::Sync { a, b } => &[*a, *b],
        };
        for &(m, t) in parts {
            vector[m] = spec.machines[m].transitions[t].destination;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub machines: Vec<CfsmSpec>,
}

impl SystemSpec {
    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }

    pub fn machine_index(&self, name: &str) -> Option<usize> {
        self.machines.iter().position(|m| m.name == name)
    }

    pub fn initial_vector(&self) -> Vec<usize> {
        self.machines.iter().map(|m| m.initial).collect()
    }

    /// Largest number of states of any machine.
    pub fn max_states(&self) -> usize {
        self.machines.iter().map(|m| m.states.len()).max().unwrap_or(0)
    }

    /// Renders a vector of state indices as `(A,X,...)`.
    pub fn format_vector(&self, vector: &[usize]) -> String {
        let parts: Vec<&str> = vector.iter().zip(&self.machines).map(|(&s, m)| m.states[s].as_str()).collect();
        format!("({})", parts.join(","))
    }
}

/// Where a violation was found.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Location {
    pub machine: usize,
    pub transition: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    EmptySystem,
    MachineIndexMismatch { location: Location, found: usize },
    InitialOutOfRange { location: Location },
    EndpointOutOfRange { location: Location },
    LabelTableMismatch { location: Location },
    MissingSelfLabel { location: Location, state: usize },
    EmptyActionName { location: Location },
    DuplicateTransition { location: Location },
    SyncPartnerOutOfRange { location: Location, partner: usize },
    UnmatchedSyncAction { location: Location, action: String, partner: usize },
}

impl Violation {
    pub fn location(&self) -> Option<&Location> {
        match self {
            Violation::EmptySystem => None,
            Violation::MachineIndexMismatch { location, .. }
            | Violation::InitialOutOfRange { location }
            | Violation::EndpointOutOfRange { location }
            | Violation::LabelTableMismatch { location }
            | Violation::MissingSelfLabel { location, .. }
            | Violation::EmptyActionName { location }
            | Violation::DuplicateTransition { location }
            | Violation::SyncPartnerOutOfRange { location, .. }
            | Violation::UnmatchedSyncAction { location, .. } => Some(location),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = |l: &Location| match l.transition {
            Some(t) => format!("machine {} transition {}", l.machine + 1, t),
            None => format!("machine {}", l.machine + 1),
        };
        match self {
            Violation::EmptySystem => write!(f, "system has no machines"),
            Violation::MachineIndexMismatch { location, found } => {
                write!(f, "{}: index field is {}", at(location), found)
            }
            Violation::InitialOutOfRange { location } => {
                write!(f, "{}: initial state out of range", at(location))
            }
            Violation::EndpointOutOfRange { location } => {
                write!(f, "{}: transition endpoint out of range", at(location))
            }
            Violation::LabelTableMismatch { location } => {
                write!(f, "{}: label table length differs from state count", at(location))
            }
            Violation::MissingSelfLabel { location, state } => {
                write!(f, "{}: state {} lacks its own name as a label", at(location), state)
            }
            Violation::EmptyActionName { location } => write!(f, "{}: empty action name", at(location)),
            Violation::DuplicateTransition { location } => {
                write!(f, "{}: duplicate action name for the same source and destination", at(location))
            }
            Violation::SyncPartnerOutOfRange { location, partner } => {
                write!(f, "{}: sync partner out of range ({})", at(location), partner + 1)
            }
            Violation::UnmatchedSyncAction { location, action, partner } => write!(
                f,
                "{}: unmatched sync action '{}' (machine {} has no reciprocal transition)",
                at(location),
                action,
                partner + 1
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// No violation other than unmatched sync actions. Such systems can still
    /// be unfolded: the unmatched transitions never fire.
    pub fn is_unfoldable(&self) -> bool {
        self.violations.iter().all(|v| matches!(v, Violation::UnmatchedSyncAction { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a system and the sync-completeness
/// rule. Violations are collected, never raised.
pub fn validate_system(spec: &SystemSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let n = spec.machines.len();
    if n == 0 {
        violations.push(Violation::EmptySystem);
    }
    for (i, m) in spec.machines.iter().enumerate() {
        let here = Location { machine: i, transition: None };
        if m.index != i {
            violations.push(Violation::MachineIndexMismatch { location: here.clone(), found: m.index });
        }
        if m.initial >= m.states.len() {
            violations.push(Violation::InitialOutOfRange { location: here.clone() });
        }
        if m.labels.len() != m.states.len() {
            violations.push(Violation::LabelTableMismatch { location: here.clone() });
        } else {
            for (s, name) in m.states.iter().enumerate() {
                if !m.labels[s].contains(name) {
                    violations.push(Violation::MissingSelfLabel { location: here.clone(), state: s });
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (t, tr) in m.transitions.iter().enumerate() {
            let location = Location { machine: i, transition: Some(t) };
            if tr.source >= m.states.len() || tr.destination >= m.states.len() {
                violations.push(Violation::EndpointOutOfRange { location: location.clone() });
            }
            if tr.action.name.is_empty() {
                violations.push(Violation::EmptyActionName { location: location.clone() });
            }
            if !seen.insert((tr.source, tr.action.name.as_str(), tr.destination)) {
                violations.push(Violation::DuplicateTransition { location: location.clone() });
            }
            if let ActionKind::Sync(j) = tr.action.kind {
                if j >= n || j == i {
                    violations.push(Violation::SyncPartnerOutOfRange { location, partner: j });
                    continue;
                }
                let reciprocal = spec.machines[j]
                    .transitions
                    .iter()
                    .any(|u| u.action.name == tr.action.name && u.action.kind == ActionKind::Sync(i));
                if !reciprocal {
                    violations.push(Violation::UnmatchedSyncAction {
                        location,
                        action: tr.action.name.clone(),
                        partner: j,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pingpong() -> SystemSpec {
        let f1 = CfsmSpec::new(
            0,
            "F1",
            vec!["A".into(), "B".into()],
            0,
            vec![
                CfsmTransition { source: 0, action: ActionLabel::synchronous("ping", 1), destination: 1 },
                CfsmTransition { source: 1, action: ActionLabel::synchronous("pong", 1), destination: 0 },
            ],
        );
        let f2 = CfsmSpec::new(
            1,
            "F2",
            vec!["X".into(), "Y".into()],
            0,
            vec![
                CfsmTransition { source: 0, action: ActionLabel::synchronous("ping", 0), destination: 1 },
                CfsmTransition { source: 1, action: ActionLabel::synchronous("pong", 0), destination: 0 },
            ],
        );
        SystemSpec { name: "pingpong".into(), machines: vec![f1, f2] }
    }

    #[test]
    fn pingpong_is_valid() {
        assert!(validate_system(&pingpong()).is_ok());
    }

    #[test]
    fn missing_reciprocal_is_one_violation() {
        let mut spec = pingpong();
        spec.machines[1].transitions.remove(0);
        let report = validate_system(&spec);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            &report.violations[0],
            Violation::UnmatchedSyncAction { action, partner: 1, .. } if action == "ping"
        ));
        assert!(report.to_string().contains("unmatched sync action"));
    }

    #[test]
    fn self_sync_in_single_machine_is_out_of_range() {
        let m = CfsmSpec::new(
            0,
            "F1",
            vec!["A".into()],
            0,
            vec![CfsmTransition { source: 0, action: ActionLabel::synchronous("a", 0), destination: 0 }],
        );
        let spec = SystemSpec { name: "solo".into(), machines: vec![m] };
        let report = validate_system(&spec);
        assert_eq!(report.violations.len(), 1);
        assert!(report.to_string().contains("sync partner out of range"));
    }

    #[test]
    fn duplicate_triples_are_reported() {
        let mut spec = pingpong();
        let dup = spec.machines[0].transitions[0].clone();
        spec.machines[0].transitions.push(dup);
        let report = validate_system(&spec);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::DuplicateTransition { .. })));
    }

    #[test]
    fn endpoints_and_initial_checked() {
        let mut spec = pingpong();
        spec.machines[0].initial = 7;
        spec.machines[1].transitions[0].destination = 9;
        let report = validate_system(&spec);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::InitialOutOfRange { .. })));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::EndpointOutOfRange { .. })));
    }
}
