//! Import of explicit-state MDPs exported by PRISM as a `.tra`/`.lab` pair.
//!
//! `.tra`: header `<states> <choices> <transitions>`, then one row
//! `<src> <choice> <dst> <prob> [action]` per transition. `.lab`: a header of
//! `<idx>="<name>"` declarations followed by `<state>: <idx> ...` lines.
//! The initial state is the unique state labelled `init`.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, ToPrimitive};
use reachrl_core::{MdpBuilder, Mdp, Rational};
use thiserror::Error;

use crate::literal::{format_rational, parse_probability};

/// Per-choice sums within `10^-9` of 1 are repaired.
pub fn repair_tolerance() -> Rational {
    Rational::new(1.into(), 1_000_000_000.into())
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PrismError {
    #[error(".tra line 1: malformed header: {0}")]
    Header(String),
    #[error(".tra line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("state {state}: choice {choice} has no transitions")]
    MissingChoice { state: usize, choice: usize },
    #[error("state {state}: choice {choice} probabilities sum to {sum}")]
    Sum { state: usize, choice: usize, sum: String },
    #[error("state {state}: action name `{name}` used by two choices")]
    DuplicateAction { state: usize, name: String },
    #[error("state {0} has no choices")]
    NoChoices(usize),
    #[error(".lab line {line}: {message}")]
    Label { line: usize, message: String },
    #[error("no state is labelled `init`")]
    MissingInit,
    #[error("several states are labelled `init`: {0:?}")]
    AmbiguousInit(Vec<usize>),
    #[error("target label `{0}` not declared in .lab")]
    UnknownTarget(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct PrismImport {
    pub mdp: Mdp,
    /// One message per repaired probability sum.
    pub warnings: Vec<String>,
}

struct Row {
    line: usize,
    dst: usize,
    prob: Rational,
    name: Option<String>,
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l).trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn row_error(line: usize, message: impl Into<String>) -> PrismError {
    PrismError::Row { line, message: message.into() }
}

pub fn import_prism_explicit(tra: &str, lab: &str, target_label: &str) -> Result<PrismImport, PrismError> {
    let mut it = lines(tra);
    let (_, header) = it.next().ok_or_else(|| PrismError::Header("empty file".into()))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| PrismError::Header(format!("`{t}` is not a count"))))
        .collect::<Result<_, _>>()?;
    let [n, n_choices, n_transitions] = nums[..] else {
        return Err(PrismError::Header(format!("expected 3 counts, found {}", nums.len())));
    };

    let mut choices: Vec<BTreeMap<usize, Vec<Row>>> = (0..n).map(|_| BTreeMap::new()).collect();
    let mut count = 0usize;
    for (line, text) in it {
        let tok: Vec<&str> = text.split_whitespace().collect();
        if tok.len() != 4 && tok.len() != 5 {
            return Err(row_error(line, format!("expected 4 or 5 fields, found {}", tok.len())));
        }
        let index = |i: usize, what: &str| {
            tok[i].parse::<usize>().map_err(|_| row_error(line, format!("bad {what} `{}`", tok[i])))
        };
        let (src, choice, dst) = (index(0, "source")?, index(1, "choice")?, index(2, "target")?);
        for s in [src, dst] {
            if s >= n {
                return Err(row_error(line, format!("state {s} out of range (header declares {n})")));
            }
        }
        let prob = parse_probability(tok[3])
            .filter(|p| p.is_positive() && *p <= Rational::one())
            .ok_or_else(|| row_error(line, format!("bad probability `{}`", tok[3])))?;
        let rows = choices[src].entry(choice).or_default();
        if rows.iter().any(|r| r.dst == dst) {
            return Err(row_error(line, format!("duplicate transition ({src}, {choice}, {dst})")));
        }
        rows.push(Row { line, dst, prob, name: tok.get(4).map(|s| s.to_string()) });
        count += 1;
    }
    if count != n_transitions {
        return Err(PrismError::Header(format!("declares {n_transitions} transitions, found {count}")));
    }
    let found_choices: usize = choices.iter().map(BTreeMap::len).sum();
    if found_choices != n_choices {
        return Err(PrismError::Header(format!("declares {n_choices} choices, found {found_choices}")));
    }

    let labels = parse_lab(lab, n)?;
    let init: Vec<usize> = labels.get("init").map(|s| s.iter().copied().collect()).unwrap_or_default();
    let initial = match init[..] {
        [] => return Err(PrismError::MissingInit),
        [s] => s,
        _ => return Err(PrismError::AmbiguousInit(init)),
    };
    if !labels.contains_key(target_label) {
        return Err(PrismError::UnknownTarget(target_label.to_string()));
    }

    let mut b = MdpBuilder::new(n);
    let mut warnings = Vec::new();
    b.initial(initial);
    for (src, row) in choices.iter_mut().enumerate() {
        if row.is_empty() {
            return Err(PrismError::NoChoices(src));
        }
        let mut names = BTreeSet::new();
        for (expect, (&choice, rows)) in row.iter_mut().enumerate() {
            if choice != expect {
                return Err(PrismError::MissingChoice { state: src, choice: expect });
            }
            let name = choice_name(choice, rows)?;
            if !names.insert(name.clone()) {
                return Err(PrismError::DuplicateAction { state: src, name });
            }
            if let Some(w) = repair(src, choice, rows)? {
                warnings.push(w);
            }
            for r in rows.iter() {
                b.transition(src, &name, r.dst, r.prob.clone())
                    .map_err(|e| PrismError::Invalid(e.to_string()))?;
            }
        }
    }
    for (name, states) in &labels {
        b.label(name, states.iter().copied());
    }
    b.target_label(target_label);
    let mdp = b.build().map_err(|e| PrismError::Invalid(e.to_string()))?;
    Ok(PrismImport { mdp, warnings })
}

fn choice_name(choice: usize, rows: &[Row]) -> Result<String, PrismError> {
    let first = rows[0].name.clone();
    if let Some(r) = rows.iter().find(|r| r.name != first) {
        return Err(row_error(r.line, format!("choice {choice} carries two action names")));
    }
    Ok(first.unwrap_or_else(|| format!("c{choice}")))
}

/// Rescales the last successor when the sum is off by at most
/// [`repair_tolerance`]; returns the warning to record.
fn repair(state: usize, choice: usize, rows: &mut [Row]) -> Result<Option<String>, PrismError> {
    let sum: Rational = rows.iter().map(|r| r.prob.clone()).sum();
    if sum.is_one() {
        return Ok(None);
    }
    let off = (&sum - Rational::one()).abs();
    let last = rows.last_mut().expect("choices have rows");
    let fixed = &last.prob - (&sum - Rational::one());
    if off > repair_tolerance() || !fixed.is_positive() {
        return Err(PrismError::Sum { state, choice, sum: format_rational(&sum) });
    }
    let message = format!(
        "state {state}, choice {choice}: probabilities summed to 1{}{:e}; last successor {} rescaled",
        if sum > Rational::one() { "+" } else { "-" },
        off.to_f64().unwrap_or(0.0),
        last.dst
    );
    last.prob = fixed;
    Ok(Some(message))
}

fn parse_lab(text: &str, n: usize) -> Result<BTreeMap<String, BTreeSet<usize>>, PrismError> {
    let err = |line: usize, message: String| PrismError::Label { line, message };
    let mut it = lines(text);
    let (hline, header) = it.next().ok_or_else(|| err(1, "empty file".into()))?;
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for decl in header.split_whitespace() {
        let parsed = decl.split_once('=').and_then(|(idx, name)| {
            let name = name.strip_prefix('"')?.strip_suffix('"')?;
            Some((idx.parse::<usize>().ok()?, name.to_string()))
        });
        let Some((idx, name)) = parsed else {
            return Err(err(hline, format!("bad declaration `{decl}`")));
        };
        if names.insert(idx, name).is_some() {
            return Err(err(hline, format!("label index {idx} declared twice")));
        }
    }
    let mut labels: BTreeMap<String, BTreeSet<usize>> =
        names.values().map(|name| (name.clone(), BTreeSet::new())).collect();
    for (line, text) in it {
        let Some((state, rest)) = text.split_once(':') else {
            return Err(err(line, "expected `<state>: <label> ...`".into()));
        };
        let state: usize = state.trim().parse().map_err(|_| err(line, format!("bad state `{state}`")))?;
        if state >= n {
            return Err(err(line, format!("state {state} out of range")));
        }
        for idx in rest.split_whitespace() {
            let name = idx
                .parse::<usize>()
                .ok()
                .and_then(|i| names.get(&i))
                .ok_or_else(|| err(line, format!("undeclared label `{idx}`")))?;
            labels.get_mut(name).expect("declared").insert(state);
        }
    }
    Ok(labels)
}
