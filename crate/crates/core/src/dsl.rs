//! Text format for system specifications.
//!
//! ```text
//! system pingpong
//! machine F1 {
//!   init A
//!   states A B
//!   trans A -> B : ping with F2
//!   trans B -> A : pong with F2
//! }
//! machine F2 { init X states X Y trans X -> Y : ping with F1 trans Y -> X : pong with F1 }
//! ```
//!
//! Whitespace is insignificant and `#` starts a line comment. `with` turns a
//! transition into a rendezvous with the named machine, which may be declared
//! later in the file.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{validate_system, ActionLabel, CfsmSpec, CfsmTransition, SystemSpec, ValidationReport};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{line}:{column}: unknown machine '{name}'")]
    UnknownMachine { line: usize, column: usize, name: String },
    #[error("{line}:{column}: unknown state '{name}' in machine '{machine}'")]
    UnknownState { line: usize, column: usize, machine: String, name: String },
    #[error("{line}:{column}: duplicate machine '{name}'")]
    DuplicateMachine { line: usize, column: usize, name: String },
    #[error("{line}:{column}: duplicate state '{name}' in machine '{machine}'")]
    DuplicateState { line: usize, column: usize, machine: String, name: String },
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid system:\n{0}")]
    Invalid(ValidationReport),
}

const KEYWORDS: &[&str] = &["system", "machine", "init", "states", "trans", "with", "label"];

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LBrace,
    RBrace,
    Arrow,
    Colon,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (lno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (line, column) = (lno + 1, i + 1);
            if c.is_whitespace() {
                i += 1;
            } else if c == '{' {
                out.push(Token { tok: Tok::LBrace, line, column });
                i += 1;
            } else if c == '}' {
                out.push(Token { tok: Tok::RBrace, line, column });
                i += 1;
            } else if c == ':' {
                out.push(Token { tok: Tok::Colon, line, column });
                i += 1;
            } else if c == '-' && chars.get(i + 1) == Some(&'>') {
                out.push(Token { tok: Tok::Arrow, line, column });
                i += 2;
            } else if c.is_alphanumeric() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line, column });
            } else {
                return Err(ParseError::Syntax { line, column, message: format!("unexpected character '{c}'") });
            }
        }
    }
    Ok(out)
}

struct RawTrans {
    from: (String, usize, usize),
    to: (String, usize, usize),
    action: String,
    with: Option<(String, usize, usize)>,
}

struct RawMachine {
    name: String,
    pos: (usize, usize),
    init: (String, usize, usize),
    states: Vec<(String, usize, usize)>,
    trans: Vec<RawTrans>,
    labels: Vec<((String, usize, usize), Vec<String>)>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn end_pos(&self) -> (usize, usize) {
        self.toks.last().map(|t| (t.line, t.column + 1)).unwrap_or((1, 1))
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.peek().map(|t| (t.line, t.column)).unwrap_or_else(|| self.end_pos());
        Err(ParseError::Syntax { line, column, message: message.into() })
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{kw}'"))
        }
    }

    fn punct(&mut self, p: Tok, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t.tok == p => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected '{what}'")),
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), ParseError> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), line, column }) if !KEYWORDS.contains(&s.as_str()) => {
                let r = (s.clone(), *line, *column);
                self.pos += 1;
                Ok(r)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn at_ident(&self) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if !KEYWORDS.contains(&s.as_str()))
    }

    fn machine(&mut self) -> Result<RawMachine, ParseError> {
        self.keyword("machine")?;
        let (name, l, c) = self.ident()?;
        self.punct(Tok::LBrace, "{")?;
        self.keyword("init")?;
        let init = self.ident()?;
        self.keyword("states")?;
        let mut states = vec![self.ident()?];
        while self.at_ident() {
            states.push(self.ident()?);
        }
        let mut trans = Vec::new();
        while self.is_keyword("trans") {
            self.pos += 1;
            let from = self.ident()?;
            self.punct(Tok::Arrow, "->")?;
            let to = self.ident()?;
            self.punct(Tok::Colon, ":")?;
            let (action, _, _) = self.ident()?;
            let with = if self.is_keyword("with") {
                self.pos += 1;
                Some(self.ident()?)
            } else {
                None
            };
            trans.push(RawTrans { from, to, action, with });
        }
        let mut labels = Vec::new();
        while self.is_keyword("label") {
            self.pos += 1;
            let state = self.ident()?;
            self.punct(Tok::Colon, ":")?;
            let mut props = vec![self.ident()?.0];
            while self.at_ident() {
                props.push(self.ident()?.0);
            }
            labels.push((state, props));
        }
        self.punct(Tok::RBrace, "}")?;
        Ok(RawMachine { name, pos: (l, c), init, states, trans, labels })
    }
}

/// Parses a system description. Names are resolved, but sync completeness is
/// left to [`validate_system`]; see [`load_system`] for both.
pub fn parse_system(text: &str) -> Result<SystemSpec, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    p.keyword("system")?;
    let (name, _, _) = p.ident()?;
    let mut raws = Vec::new();
    while p.peek().is_some() {
        raws.push(p.machine()?);
    }
    if raws.is_empty() {
        return p.err("expected at least one machine");
    }

    let mut machine_ids = HashMap::new();
    for (i, m) in raws.iter().enumerate() {
        if machine_ids.insert(m.name.clone(), i).is_some() {
            return Err(ParseError::DuplicateMachine { line: m.pos.0, column: m.pos.1, name: m.name.clone() });
        }
    }

    let mut machines = Vec::with_capacity(raws.len());
    for (i, m) in raws.into_iter().enumerate() {
        let mut state_ids = HashMap::new();
        let mut states = Vec::new();
        for (s, l, c) in &m.states {
            if state_ids.insert(s.clone(), states.len()).is_some() {
                return Err(ParseError::DuplicateState { line: *l, column: *c, machine: m.name, name: s.clone() });
            }
            states.push(s.clone());
        }
        let lookup = |(s, l, c): &(String, usize, usize)| {
            state_ids.get(s).copied().ok_or_else(|| ParseError::UnknownState {
                line: *l,
                column: *c,
                machine: m.name.clone(),
                name: s.clone(),
            })
        };
        let initial = lookup(&m.init)?;
        let mut transitions = Vec::new();
        for t in &m.trans {
            let source = lookup(&t.from)?;
            let destination = lookup(&t.to)?;
            let action = match &t.with {
                None => ActionLabel::asynchronous(t.action.clone()),
                Some((partner, l, c)) => {
                    let j = *machine_ids.get(partner).ok_or_else(|| ParseError::UnknownMachine {
                        line: *l,
                        column: *c,
                        name: partner.clone(),
                    })?;
                    ActionLabel::synchronous(t.action.clone(), j)
                }
            };
            transitions.push(CfsmTransition { source, action, destination });
        }
        let mut spec = CfsmSpec::new(i, m.name.clone(), states, initial, transitions);
        for (state, props) in &m.labels {
            let s = lookup(state)?;
            spec.labels[s].extend(props.iter().cloned());
        }
        machines.push(spec);
    }
    Ok(SystemSpec { name, machines })
}

/// Parses and validates in one step.
pub fn load_system(text: &str) -> Result<SystemSpec, LoadError> {
    let spec = parse_system(text)?;
    let report = validate_system(&spec);
    if report.is_ok() {
        Ok(spec)
    } else {
        Err(LoadError::Invalid(report))
    }
}

/// Renders a system back into the text format. `parse_system` of the output
/// yields an equal [`SystemSpec`].
pub fn pretty_print(spec: &SystemSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "system {}", spec.name);
    for m in &spec.machines {
        let _ = writeln!(out, "\nmachine {} {{", m.name);
        let _ = writeln!(out, "  init {}", m.states[m.initial]);
        let _ = writeln!(out, "  states {}", m.states.join(" "));
        for t in &m.transitions {
            let _ = write!(out, "  trans {} -> {} : {}", m.states[t.source], m.states[t.destination], t.action.name);
            if let Some(j) = t.action.partner() {
                let _ = write!(out, " with {}", spec.machines[j].name);
            }
            out.push('\n');
        }
        for (s, props) in m.labels.iter().enumerate() {
            let extra: BTreeSet<&str> = props.iter().map(String::as_str).filter(|p| *p != m.states[s]).collect();
            if !extra.is_empty() {
                let extra: Vec<&str> = extra.into_iter().collect();
                let _ = writeln!(out, "  label {} : {}", m.states[s], extra.join(" "));
            }
        }
        out.push_str("}\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActionKind;
    use proptest::prelude::*;

    const PINGPONG: &str = "
        # two machines bouncing a token
        system pingpong
        machine F1 {
          init A
          states A B
          trans A -> B : ping with F2
          trans B -> A : pong with F2
        }
        machine F2 {
          init X
          states X Y
          trans X -> Y : ping with F1
          trans Y -> X : pong with F1
        }";

    #[test]
    fn parses_pingpong() {
        let spec = parse_system(PINGPONG).unwrap();
        assert_eq!(spec.len(), 2);
        for m in &spec.machines {
            assert_eq!(m.states.len(), 2);
            assert_eq!(m.transitions.len(), 2);
            assert!(m.transitions.iter().all(|t| t.action.is_sync()));
        }
        assert_eq!(spec.machines[0].transitions[0].action.kind, ActionKind::Sync(1));
        assert!(validate_system(&spec).is_ok());
    }

    #[test]
    fn single_async_self_loop() {
        let spec = parse_system("system s machine F1 { init A states A trans A -> A : tau }").unwrap();
        assert_eq!(spec.len(), 1);
        assert_eq!(spec.machines[0].states, vec!["A"]);
        assert_eq!(spec.machines[0].transitions.len(), 1);
    }

    #[test]
    fn unknown_partner() {
        let err = parse_system("system s machine F1 { init A states A B trans A -> B : go with F9 }").unwrap_err();
        assert!(matches!(err, ParseError::UnknownMachine { ref name, .. } if name == "F9"));
        assert!(err.to_string().contains("unknown machine"));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_system("system s\nmachine F1 { init A states A\n trans A => A : t }").unwrap_err();
        match err {
            ParseError::Syntax { line, column, .. } => assert_eq!((line, column), (3, 10)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_and_unknown_states() {
        let dup_m = "system s machine F { init A states A } machine F { init A states A }";
        assert!(matches!(parse_system(dup_m), Err(ParseError::DuplicateMachine { .. })));
        let dup_s = "system s machine F { init A states A A }";
        assert!(matches!(parse_system(dup_s), Err(ParseError::DuplicateState { .. })));
        let unk = "system s machine F { init A states A trans A -> Q : t }";
        assert!(matches!(parse_system(unk), Err(ParseError::UnknownState { .. })));
    }

    #[test]
    fn labels_extend_defaults() {
        let spec = parse_system("system s machine F { init A states A B label A : idle ready label A : x }").unwrap();
        let l = &spec.machines[0].labels;
        assert_eq!(l[0].iter().cloned().collect::<Vec<_>>(), vec!["A", "idle", "ready", "x"]);
        assert_eq!(l[1].len(), 1);
    }

    #[test]
    fn load_rejects_unmatched_sync() {
        let text = "system s machine F1 { init A states A B trans A -> B : ping with F2 }
                    machine F2 { init X states X }";
        assert!(matches!(load_system(text), Err(LoadError::Invalid(_))));
    }

    fn arb_system() -> impl Strategy<Value = SystemSpec> {
        (1usize..4, 1usize..4, any::<u64>()).prop_map(|(n, m, seed)| {
            let params =
                crate::gen::GenParams { seed, machines: n, states: m, coupling: n.min(3) - 1, conflict_width: 2 };
            let mut spec = crate::gen::generate(&params).unwrap();
            // sprinkle extra labels so the label syntax round-trips too
            for (i, mach) in spec.machines.iter_mut().enumerate() {
                if (seed as usize + i).is_multiple_of(2) {
                    mach.labels[0].insert(format!("p{i}"));
                }
            }
            spec
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(spec in arb_system()) {
            let text = pretty_print(&spec);
            prop_assert_eq!(parse_system(&text).unwrap(), spec);
        }

        #[test]
        fn deleting_a_reciprocal_adds_one_violation(spec in arb_system()) {
            let base = validate_system(&spec).violations.len();
            prop_assert_eq!(base, 0);
            // find a sync transition whose action has exactly one reciprocal
            for (i, m) in spec.machines.iter().enumerate() {
                for (t, tr) in m.transitions.iter().enumerate() {
                    if let Some(j) = tr.action.partner() {
                        let recips: Vec<usize> = m.transitions.iter().enumerate()
                            .filter(|(_, u)| u.action == tr.action).map(|(k, _)| k).collect();
                        let partner_recips = spec.machines[j].transitions.iter()
                            .filter(|u| u.action.name == tr.action.name && u.action.partner() == Some(i)).count();
                        if recips.len() == 1 && partner_recips == 1 {
                            let mut mutated = spec.clone();
                            mutated.machines[i].transitions.remove(t);
                            let after = validate_system(&mutated).violations.len();
                            prop_assert_eq!(after, 1);
                            return Ok(());
                        }
                    }
                }
            }
        }
    }
}
