//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;

use reachrl::literal::format_rational;
use reachrl_core::{Mdp, Rational};

pub type Rows = Vec<BTreeMap<String, BTreeMap<usize, Rational>>>;

pub fn rows(m: &Mdp) -> Rows {
    m.states()
        .map(|s| {
            m.choices(s)
                .iter()
                .filter(|c| !c.successors.is_empty())
                .map(|c| {
                    let dist = c.successors.iter().map(|x| (x.state.0, x.prob.clone())).collect();
                    (m.action_name(c.action).to_string(), dist)
                })
                .collect()
        })
        .collect()
}

/// Explicit PRISM export with action names, written independently of the importer.
pub fn to_prism(m: &Mdp) -> (String, String) {
    let mut body = String::new();
    let (mut n_choices, mut n_trans) = (0, 0);
    for s in m.states() {
        for (i, a) in m.available_actions(s).enumerate() {
            n_choices += 1;
            for x in &m.choice(s, a).unwrap().successors {
                n_trans += 1;
                writeln!(body, "{} {i} {} {} {}", s.0, x.state.0, format_rational(&x.prob), m.action_name(a)).unwrap();
            }
        }
    }
    let tra = format!("{} {n_choices} {n_trans}\n{body}", m.num_states());
    let targets: Vec<usize> = m.targets().map(|s| s.0).collect();
    let mut lab = String::from("0=\"init\" 1=\"goal\"\n");
    for s in m.states() {
        let mut ids = Vec::new();
        if s == m.initial() {
            ids.push("0");
        }
        if targets.contains(&s.0) {
            ids.push("1");
        }
        if !ids.is_empty() {
            writeln!(lab, "{}: {}", s.0, ids.join(" ")).unwrap();
        }
    }
    (tra, lab)
}
