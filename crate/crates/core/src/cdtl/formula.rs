//! Branching-time formulas and their text syntax.
//!
//! ```text
//! formula := or ("->" formula)?
//! or      := and ("|" and)*
//! and     := unary ("&" unary)*
//! unary   := "!" unary | ("AX"|"EX"|"AF"|"EF"|"AG"|"EG") unary
//!          | ("A"|"E") "[" formula "U" formula "]"
//!          | "(" formula ")" | "true" | "false" | atom
//! atom    := prop | IDENT ":" prop
//! prop    := STRING | IDENT
//! ```
//!
//! `¬ ∧ ∨ →` are accepted as synonyms. An atom may name a machine
//! (`F1:"B"`); whether that is required depends on where the formula is used.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula<A> {
    True,
    False,
    Atom(A),
    Not(Box<Formula<A>>),
    And(Box<Formula<A>>, Box<Formula<A>>),
    Or(Box<Formula<A>>, Box<Formula<A>>),
    Implies(Box<Formula<A>>, Box<Formula<A>>),
    AX(Box<Formula<A>>),
    EX(Box<Formula<A>>),
    AF(Box<Formula<A>>),
    EF(Box<Formula<A>>),
    AG(Box<Formula<A>>),
    EG(Box<Formula<A>>),
    AU(Box<Formula<A>>, Box<Formula<A>>),
    EU(Box<Formula<A>>, Box<Formula<A>>),
}

/// An atom as written: optional machine name and a proposition.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RawAtom {
    pub machine: Option<String>,
    pub prop: String,
}

impl fmt::Display for RawAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.machine {
            Some(m) => write!(f, "{m}:{:?}", self.prop),
            None => write!(f, "{:?}", self.prop),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected end of formula")]
    Eof,
    #[error("unexpected {found:?} at offset {offset}")]
    Unexpected { found: String, offset: usize },
    #[error("unterminated string at offset {0}")]
    Unterminated(usize),
    #[error("{0}")]
    Atom(String),
}

impl<A> Formula<A> {
    /// Rewrites every atom, failing on the first error.
    pub fn try_map<B, E>(self, f: &mut dyn FnMut(A) -> Result<B, E>) -> Result<Formula<B>, E> {
        use Formula::*;
        let b = |x: Box<Formula<A>>, f: &mut dyn FnMut(A) -> Result<B, E>| x.try_map(f).map(Box::new);
        Ok(match self {
            True => True,
            False => False,
            Atom(a) => Atom(f(a)?),
            Not(x) => Not(b(x, f)?),
            And(x, y) => And(b(x, f)?, b(y, f)?),
            Or(x, y) => Or(b(x, f)?, b(y, f)?),
            Implies(x, y) => Implies(b(x, f)?, b(y, f)?),
            AX(x) => AX(b(x, f)?),
            EX(x) => EX(b(x, f)?),
            AF(x) => AF(b(x, f)?),
            EF(x) => EF(b(x, f)?),
            AG(x) => AG(b(x, f)?),
            EG(x) => EG(b(x, f)?),
            AU(x, y) => AU(b(x, f)?, b(y, f)?),
            EU(x, y) => EU(b(x, f)?, b(y, f)?),
        })
    }

    /// Nesting depth of operators; atoms and constants have depth 0.
    pub fn depth(&self) -> usize {
        use Formula::*;
        match self {
            True | False | Atom(_) => 0,
            Not(x) | AX(x) | EX(x) | AF(x) | EF(x) | AG(x) | EG(x) => 1 + x.depth(),
            And(x, y) | Or(x, y) | Implies(x, y) | AU(x, y) | EU(x, y) => 1 + x.depth().max(y.depth()),
        }
    }

    pub fn and(self, other: Self) -> Self {
        Formula::And(Box::new(self), Box::new(other))
    }
}

impl<A> std::ops::Not for Formula<A> {
    type Output = Self;

    fn not(self) -> Self {
        Formula::Not(Box::new(self))
    }
}

impl<A: fmt::Display> fmt::Display for Formula<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Formula::*;
        match self {
            True => write!(f, "true"),
            False => write!(f, "false"),
            Atom(a) => write!(f, "{a}"),
            Not(x) => write!(f, "!{x}"),
            And(x, y) => write!(f, "({x} & {y})"),
            Or(x, y) => write!(f, "({x} | {y})"),
            Implies(x, y) => write!(f, "({x} -> {y})"),
            AX(x) => write!(f, "AX {x}"),
            EX(x) => write!(f, "EX {x}"),
            AF(x) => write!(f, "AF {x}"),
            EF(x) => write!(f, "EF {x}"),
            AG(x) => write!(f, "AG {x}"),
            EG(x) => write!(f, "EG {x}"),
            AU(x, y) => write!(f, "A[{x} U {y}]"),
            EU(x, y) => write!(f, "E[{x} U {y}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Sym(&'static str),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(at, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some((_, '"')) => break,
                    Some((_, ch)) => s.push(ch),
                    None => return Err(ParseError::Unterminated(at)),
                }
            }
            out.push((at, Tok::Str(s)));
        } else if c.is_alphanumeric() || c == '_' {
            let mut s = String::new();
            while let Some(&(_, ch)) = chars.peek() {
                if ch.is_alphanumeric() || ch == '_' || ch == '.' {
                    s.push(ch);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((at, Tok::Ident(s)));
        } else {
            chars.next();
            let sym = match c {
                '(' => "(",
                ')' => ")",
                '[' => "[",
                ']' => "]",
                ':' => ":",
                '!' | '¬' | '~' => "!",
                '&' | '∧' => "&",
                '|' | '∨' => "|",
                '→' => "->",
                '-' if chars.peek().map(|&(_, n)| n) == Some('>') => {
                    chars.next();
                    "->"
                }
                _ => return Err(ParseError::Unexpected { found: c.to_string(), offset: at }),
            };
            out.push((at, Tok::Sym(sym)));
        }
    }
    Ok(out)
}

const UNARY: [&str; 6] = ["AX", "EX", "AF", "EF", "AG", "EG"];

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn unexpected(&self) -> ParseError {
        match self.toks.get(self.pos) {
            Some((offset, t)) => {
                let found = match t {
                    Tok::Ident(s) => s.clone(),
                    Tok::Str(s) => format!("\"{s}\""),
                    Tok::Sym(s) => s.to_string(),
                };
                ParseError::Unexpected { found, offset: *offset }
            }
            None => ParseError::Eof,
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn formula(&mut self) -> Result<Formula<RawAtom>, ParseError> {
        let lhs = self.or()?;
        if self.eat_sym("->") {
            Ok(Formula::Implies(Box::new(lhs), Box::new(self.formula()?)))
        } else {
            Ok(lhs)
        }
    }

    fn or(&mut self) -> Result<Formula<RawAtom>, ParseError> {
        let mut lhs = self.and()?;
        while self.eat_sym("|") {
            lhs = Formula::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula<RawAtom>, ParseError> {
        let mut lhs = self.unary()?;
        while self.eat_sym("&") {
            lhs = Formula::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula<RawAtom>, ParseError> {
        if self.eat_sym("!") {
            return Ok(Formula::Not(Box::new(self.unary()?)));
        }
        if self.eat_sym("(") {
            let f = self.formula()?;
            self.expect_sym(")")?;
            return Ok(f);
        }
        let tok = self.peek().cloned().ok_or(ParseError::Eof)?;
        match tok {
            Tok::Ident(id) if UNARY.contains(&id.as_str()) => {
                self.pos += 1;
                let x = Box::new(self.unary()?);
                Ok(match id.as_str() {
                    "AX" => Formula::AX(x),
                    "EX" => Formula::EX(x),
                    "AF" => Formula::AF(x),
                    "EF" => Formula::EF(x),
                    "AG" => Formula::AG(x),
                    _ => Formula::EG(x),
                })
            }
            Tok::Ident(id)
                if (id == "A" || id == "E") && self.toks.get(self.pos + 1).map(|t| &t.1) == Some(&Tok::Sym("[")) =>
            {
                self.pos += 2;
                let x = self.formula()?;
                match self.peek() {
                    Some(Tok::Ident(u)) if u == "U" => self.pos += 1,
                    _ => return Err(self.unexpected()),
                }
                let y = self.formula()?;
                self.expect_sym("]")?;
                let (x, y) = (Box::new(x), Box::new(y));
                Ok(if id == "A" { Formula::AU(x, y) } else { Formula::EU(x, y) })
            }
            Tok::Ident(id) if id == "true" => {
                self.pos += 1;
                Ok(Formula::True)
            }
            Tok::Ident(id) if id == "false" => {
                self.pos += 1;
                Ok(Formula::False)
            }
            Tok::Ident(_) | Tok::Str(_) => self.atom().map(Formula::Atom),
            Tok::Sym(_) => Err(self.unexpected()),
        }
    }

    fn atom(&mut self) -> Result<RawAtom, ParseError> {
        let first = match self.peek().cloned() {
            Some(Tok::Ident(s)) | Some(Tok::Str(s)) => s,
            _ => return Err(self.unexpected()),
        };
        let was_ident = matches!(self.peek(), Some(Tok::Ident(_)));
        self.pos += 1;
        if was_ident && self.eat_sym(":") {
            match self.peek().cloned() {
                Some(Tok::Ident(p)) | Some(Tok::Str(p)) => {
                    self.pos += 1;
                    Ok(RawAtom { machine: Some(first), prop: p })
                }
                _ => Err(self.unexpected()),
            }
        } else {
            Ok(RawAtom { machine: None, prop: first })
        }
    }
}

/// Parses a formula, leaving atoms unresolved.
pub fn parse_formula(text: &str) -> Result<Formula<RawAtom>, ParseError> {
    let toks = lex(text)?;
    let end = toks.len();
    let mut p = Parser { toks, pos: 0, end };
    let f = p.formula()?;
    if p.pos != p.end {
        return Err(p.unexpected());
    }
    Ok(f)
}

/// Parses a whitespace-separated list of atoms, as used by the global forms.
pub fn parse_atoms(text: &str) -> Result<Vec<RawAtom>, ParseError> {
    let toks = lex(text)?;
    let end = toks.len();
    let mut p = Parser { toks, pos: 0, end };
    let mut out = Vec::new();
    while p.pos < p.end {
        out.push(p.atom()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(p: &str) -> Formula<RawAtom> {
        Formula::Atom(RawAtom { machine: None, prop: p.into() })
    }

    #[test]
    fn precedence() {
        let f = parse_formula(r#"EF "B" & !p | q -> r"#).unwrap();
        let expected = Formula::Implies(
            Box::new(Formula::Or(
                Box::new(Formula::And(Box::new(Formula::EF(Box::new(atom("B")))), Box::new(!atom("p")))),
                Box::new(atom("q")),
            )),
            Box::new(atom("r")),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn until_and_grouping() {
        let f = parse_formula("A [p U (q | r)]").unwrap();
        assert!(matches!(f, Formula::AU(_, _)));
        assert_eq!(parse_formula("AG (A | B)").unwrap().depth(), 2);
        let g = parse_formula("E[ A U B ]").unwrap();
        assert_eq!(g, Formula::EU(Box::new(atom("A")), Box::new(atom("B"))));
    }

    #[test]
    fn qualified_atoms() {
        let f = parse_formula(r#"EF (F1:"B" ∧ F2:Z)"#).unwrap();
        let Formula::EF(inner) = f else { panic!() };
        let Formula::And(a, b) = *inner else { panic!() };
        assert_eq!(*a, Formula::Atom(RawAtom { machine: Some("F1".into()), prop: "B".into() }));
        assert_eq!(*b, Formula::Atom(RawAtom { machine: Some("F2".into()), prop: "Z".into() }));
        assert_eq!(parse_atoms(r#"F1:"B" F2:"Y""#).unwrap().len(), 2);
    }

    #[test]
    fn display_round_trips() {
        for text in [r#"AG (F1:"A" | F1:"B")"#, "!E[p U AX q] -> EG true", "A[false U ¬p]"] {
            let f = parse_formula(text).unwrap();
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(parse_formula("EF"), Err(ParseError::Eof));
        assert!(matches!(parse_formula("p q"), Err(ParseError::Unexpected { .. })));
        assert!(matches!(parse_formula("\"open"), Err(ParseError::Unterminated(0))));
        assert!(matches!(parse_formula("E[p q]"), Err(ParseError::Unexpected { .. })));
    }
}
