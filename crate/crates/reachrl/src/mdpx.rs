//! The native line-oriented model format.
//!
//! ```text
//! mdpx 1
//! states <N>
//! initial <i>
//! label <name> <i> <j> ...
//! transition <s> <action-name> <s'> <p/q | decimal>
//! ```
//!
//! `#` starts a comment. The target set is the label chosen at load time,
//! `goal` unless stated otherwise.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use reachrl_core::mdp::{MdpError, Violation};
use reachrl_core::{Mdp, MdpBuilder, Rational, StateId};
use thiserror::Error;

use crate::literal::{format_rational, parse_probability};

pub const DEFAULT_TARGET_LABEL: &str = "goal";

/// 1-based line and column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ErrorKind {
    #[error("expected `mdpx 1` header")]
    MissingHeader,
    #[error("unsupported version `{0}`")]
    Version(String),
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("unexpected token `{0}`")]
    Trailing(String),
    #[error("invalid probability `{0}`")]
    Probability(String),
    #[error("`{0}` given twice")]
    Repeated(&'static str),
    #[error("`states` must come before `{0}`")]
    StatesFirst(&'static str),
    #[error("state {state} out of range (model has {states} states)")]
    StateOutOfRange { state: usize, states: usize },
    #[error("probability must be positive")]
    ZeroProbability,
    #[error("duplicate transition ({state}, {action}, {successor})")]
    DuplicateTransition { state: usize, action: String, successor: usize },
    #[error("probabilities of ({state}, {action}) sum to {sum}, not 1")]
    Sum { state: usize, action: String, sum: String },
    #[error("state {0} has no transitions")]
    NoTransitions(usize),
    #[error("missing `{0}` directive")]
    Missing(&'static str),
    #[error("target label `{0}` not defined")]
    UnknownTargetLabel(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// A diagnostic, located where the offending text starts when there is one.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ParseError {
    pub location: Option<Location>,
    pub kind: ErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Some(loc) => write!(f, "{loc}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

fn err<T>(location: Location, kind: ErrorKind) -> Result<T, ParseError> {
    Err(ParseError { location: Some(location), kind })
}

#[derive(Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    at: Location,
}

fn tokenize(line_no: usize, line: &str) -> Vec<Token<'_>> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let line = line.split_once('#').map_or(line, |(code, _)| code);
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in line.char_indices().chain(std::iter::once((line.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                let column = line[..s].chars().count() + 1;
                out.push(Token { text: &line[s..i], at: Location { line: line_no, column } });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    out
}

struct Cursor<'a> {
    tokens: std::vec::IntoIter<Token<'a>>,
    end: Location,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, what: &'static str) -> Result<Token<'a>, ParseError> {
        match self.tokens.next() {
            Some(t) => Ok(t),
            None => err(self.end, ErrorKind::Expected(what)),
        }
    }

    fn index(&mut self, what: &'static str) -> Result<(usize, Location), ParseError> {
        let t = self.next(what)?;
        match t.text.parse::<usize>() {
            Ok(v) if t.text.bytes().all(|b| b.is_ascii_digit()) => Ok((v, t.at)),
            _ => err(t.at, ErrorKind::Expected(what)),
        }
    }

    fn state(&mut self, states: usize) -> Result<usize, ParseError> {
        let (s, at) = self.index("a state index")?;
        if s >= states {
            return err(at, ErrorKind::StateOutOfRange { state: s, states });
        }
        Ok(s)
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        match self.tokens.next() {
            Some(t) => err(t.at, ErrorKind::Trailing(t.text.to_string())),
            None => Ok(()),
        }
    }
}

/// Parses a document with the default target label.
pub fn parse_mdpx(text: &str) -> Result<Mdp, ParseError> {
    parse_mdpx_with_target(text, DEFAULT_TARGET_LABEL)
}

/// Parses a document; the target set is the set of states labelled `target_label`.
pub fn parse_mdpx_with_target(text: &str, target_label: &str) -> Result<Mdp, ParseError> {
    let mut header = false;
    let mut states: Option<(usize, Location)> = None;
    let mut initial: Option<(usize, Location)> = None;
    let mut builder: Option<MdpBuilder> = None;
    // First line of every (state, action) row, for sum diagnostics.
    let mut rows: BTreeMap<(usize, String), Location> = BTreeMap::new();
    // Action names in the builder's interning order.
    let mut names: Vec<String> = Vec::new();
    let mut last = Location { line: 1, column: 1 };

    for (i, line) in text.split('\n').enumerate() {
        let tokens = tokenize(i + 1, line);
        let Some(first) = tokens.first().copied() else {
            continue;
        };
        let end = Location { line: i + 1, column: line.trim_end().chars().count() + 1 };
        last = end;
        let mut cur = Cursor { tokens: tokens.into_iter(), end };
        cur.next("a directive")?;
        if !header {
            if first.text != "mdpx" {
                return err(first.at, ErrorKind::MissingHeader);
            }
            let v = cur.next("a version")?;
            if v.text != "1" {
                return err(v.at, ErrorKind::Version(v.text.to_string()));
            }
            cur.finish()?;
            header = true;
            continue;
        }
        match first.text {
            "states" => {
                if states.is_some() {
                    return err(first.at, ErrorKind::Repeated("states"));
                }
                let (n, at) = cur.index("a state count")?;
                cur.finish()?;
                states = Some((n, at));
                builder = Some(MdpBuilder::new(n));
            }
            "initial" => {
                let Some((n, _)) = states else {
                    return err(first.at, ErrorKind::StatesFirst("initial"));
                };
                if initial.is_some() {
                    return err(first.at, ErrorKind::Repeated("initial"));
                }
                let s = cur.state(n)?;
                cur.finish()?;
                initial = Some((s, first.at));
                builder.as_mut().expect("set with states").initial(s);
            }
            "label" => {
                let Some((n, _)) = states else {
                    return err(first.at, ErrorKind::StatesFirst("label"));
                };
                let name = cur.next("a label name")?.text;
                let mut members = Vec::new();
                while cur.tokens.len() > 0 {
                    members.push(cur.state(n)?);
                }
                builder.as_mut().expect("set with states").label(name, members);
            }
            "transition" => {
                let Some((n, _)) = states else {
                    return err(first.at, ErrorKind::StatesFirst("transition"));
                };
                let s = cur.state(n)?;
                let action = cur.next("an action name")?.text;
                let t = cur.state(n)?;
                let lit = cur.next("a probability")?;
                let prob = parse_probability(lit.text)
                    .ok_or_else(|| ParseError {
                        location: Some(lit.at),
                        kind: ErrorKind::Probability(lit.text.to_string()),
                    })?;
                cur.finish()?;
                if prob > Rational::from_integer(1.into()) {
                    return err(lit.at, ErrorKind::Probability(lit.text.to_string()));
                }
                if prob == Rational::from_integer(0.into()) {
                    return err(lit.at, ErrorKind::ZeroProbability);
                }
                let b = builder.as_mut().expect("set with states");
                if b.transition(s, action, t, prob).is_err() {
                    return err(
                        first.at,
                        ErrorKind::DuplicateTransition { state: s, action: action.to_string(), successor: t },
                    );
                }
                rows.entry((s, action.to_string())).or_insert(first.at);
                if !names.iter().any(|n| n == action) {
                    names.push(action.to_string());
                }
            }
            other => return err(first.at, ErrorKind::UnknownDirective(other.to_string())),
        }
    }

    if !header {
        return err(last, ErrorKind::MissingHeader);
    }
    let Some((_, states_at)) = states else {
        return Err(ParseError { location: None, kind: ErrorKind::Missing("states") });
    };
    if initial.is_none() {
        return Err(ParseError { location: None, kind: ErrorKind::Missing("initial") });
    }
    let mut b = builder.expect("set with states");
    if !b.has_label(target_label) {
        return Err(ParseError { location: None, kind: ErrorKind::UnknownTargetLabel(target_label.to_string()) });
    }
    b.target_label(target_label);
    b.build().map_err(|e| match e {
        MdpError::Invalid(v) => locate(&v, &rows, &names, states_at),
        other => ParseError { location: None, kind: ErrorKind::Invalid(other.to_string()) },
    })
}

fn locate(
    violations: &[Violation],
    rows: &BTreeMap<(usize, String), Location>,
    names: &[String],
    states_at: Location,
) -> ParseError {
    match violations.first() {
        Some(Violation::ProbabilitySum { state, action, sum }) => {
            let name = names[action.0].clone();
            ParseError {
                location: rows.get(&(state.0, name.clone())).copied(),
                kind: ErrorKind::Sum { state: state.0, action: name, sum: format_rational(sum) },
            }
        }
        Some(Violation::NoAvailableAction { state }) => {
            ParseError { location: Some(states_at), kind: ErrorKind::NoTransitions(state.0) }
        }
        other => ParseError { location: None, kind: ErrorKind::Invalid(format!("{other:?}")) },
    }
}

/// Canonical text: labels by name, transitions by (source, action index,
/// successor), probabilities as `p/q` in lowest terms.
pub fn write_mdpx(m: &Mdp) -> String {
    let mut out = String::new();
    writeln!(out, "mdpx 1").unwrap();
    writeln!(out, "states {}", m.num_states()).unwrap();
    writeln!(out, "initial {}", m.initial().0).unwrap();
    for (name, members) in m.labels() {
        write!(out, "label {name}").unwrap();
        for s in members {
            write!(out, " {}", s.0).unwrap();
        }
        out.push('\n');
    }
    for s in m.states() {
        let mut choices: Vec<_> = m.choices(s).iter().collect();
        choices.sort_by_key(|c| c.action);
        for c in choices {
            let mut succ: Vec<_> = c.successors.iter().collect();
            succ.sort_by_key(|x| x.state);
            for x in succ {
                writeln!(
                    out,
                    "transition {} {} {} {}",
                    s.0,
                    m.action_name(c.action),
                    x.state.0,
                    format_rational(&x.prob)
                )
                .unwrap();
            }
        }
    }
    out
}

/// States labelled `name`, if the label exists.
pub fn label_states(m: &Mdp, name: &str) -> Option<Vec<StateId>> {
    m.labels().get(name).map(|s| s.iter().copied().collect())
}
