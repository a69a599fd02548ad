//! Interval (bounded) value iteration on a collapsed model and policy
//! extraction back onto the original states.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::ec::CollapsedMdp;
use crate::mdp::{ActionId, Mdp, MemorylessDetPolicy, StateId};

/// Ties in `U` closer than this are treated as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Lower and upper bounds per quotient state and per quotient row.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalValues {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_pair: Vec<Vec<f64>>,
    pub upper_pair: Vec<Vec<f64>>,
}

impl IntervalValues {
    pub fn error(&self, q: usize) -> f64 {
        self.upper[q] - self.lower[q]
    }

    /// Largest per-state change of either bound between `self` and `other`.
    pub fn max_change(&self, other: &IntervalValues) -> f64 {
        let l = self.lower.iter().zip(&other.lower);
        let u = self.upper.iter().zip(&other.upper);
        l.chain(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Forces `q` and all its rows to value 0.
    pub fn pin_zero(&mut self, q: usize) {
        self.lower[q] = 0.0;
        self.upper[q] = 0.0;
        self.lower_pair[q].iter_mut().for_each(|x| *x = 0.0);
        self.upper_pair[q].iter_mut().for_each(|x| *x = 0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BviError {
    NoIterations,
}

impl fmt::Display for BviError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BviError::NoIterations => f.write_str("interval iteration needs at least one sweep"),
        }
    }
}

impl core::error::Error for BviError {}

/// Fresh bounds: `U = 1` everywhere, `L = 1` exactly on targets. Staying
/// rows of a super state are pinned to 1/1 if it contains a target and to
/// 0/0 otherwise.
pub fn reset_bounds(cm: &CollapsedMdp<f64>) -> IntervalValues {
    let n = cm.num_states();
    let mut v = IntervalValues {
        lower: vec![0.0; n],
        upper: vec![1.0; n],
        lower_pair: cm.rows.iter().map(|r| vec![0.0; r.len()]).collect(),
        upper_pair: cm.rows.iter().map(|r| vec![1.0; r.len()]).collect(),
    };
    for q in 0..n {
        if cm.target[q] {
            v.lower[q] = 1.0;
            v.lower_pair[q].iter_mut().for_each(|x| *x = 1.0);
        } else if cm.is_super(q) {
            for (i, r) in cm.rows[q].iter().enumerate() {
                if r.staying {
                    v.upper_pair[q][i] = 0.0;
                }
            }
        }
    }
    v
}

/// One synchronous sweep. Rows missing probability mass send it to `U`
/// (unknown) and nowhere for `L`; pinned rows and targets are untouched.
pub fn bvi_sweep(cm: &CollapsedMdp<f64>, v: &IntervalValues) -> IntervalValues {
    let mut next = v.clone();
    for (q, rows) in cm.rows.iter().enumerate() {
        if cm.target[q] || rows.is_empty() {
            continue;
        }
        let mut best_l = 0.0f64;
        let mut best_u = 0.0f64;
        for (i, r) in rows.iter().enumerate() {
            let (lp, up) = if r.staying {
                (v.lower_pair[q][i], v.upper_pair[q][i])
            } else {
                let mut l = 0.0;
                let mut u = 0.0;
                let mut mass = 0.0;
                for &(t, w) in &r.succ {
                    l += w * v.lower[t];
                    u += w * v.upper[t];
                    mass += w;
                }
                u += (1.0 - mass).max(0.0);
                let lp = v.lower_pair[q][i].max(l);
                let up = v.upper_pair[q][i].min(u);
                next.lower_pair[q][i] = lp;
                next.upper_pair[q][i] = up;
                (lp, up)
            };
            best_l = best_l.max(lp);
            best_u = best_u.max(up);
        }
        next.lower[q] = v.lower[q].max(best_l);
        next.upper[q] = v.upper[q].min(best_u);
    }
    next
}

/// `iterations` sweeps from [`reset_bounds`].
pub fn run_bvi(cm: &CollapsedMdp<f64>, iterations: usize) -> Result<IntervalValues, BviError> {
    if iterations == 0 {
        return Err(BviError::NoIterations);
    }
    let mut v = reset_bounds(cm);
    for _ in 0..iterations {
        v = bvi_sweep(cm, &v);
    }
    Ok(v)
}

/// Sweeps from `start` until no bound moves by `tolerance` or more, or
/// `max_iterations` sweeps are done. Returns the bounds and the sweep count.
pub fn run_bvi_until(
    cm: &CollapsedMdp<f64>,
    start: IntervalValues,
    max_iterations: usize,
    tolerance: f64,
) -> (IntervalValues, usize) {
    let mut v = start;
    for i in 1..=max_iterations {
        let next = bvi_sweep(cm, &v);
        let change = next.max_change(&v);
        v = next;
        if change < tolerance {
            return (v, i);
        }
    }
    (v, max_iterations)
}

/// A policy on the original states, plus the per-state best-action sets
/// that guide the next round of simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub policy: MemorylessDetPolicy,
    pub best: Vec<Vec<ActionId>>,
    /// States without any sampled action; their choice was drawn uniformly.
    pub fallback: Vec<StateId>,
}

/// `Av(s)` for every state of `m`.
pub fn available_table(m: &Mdp) -> Vec<Vec<ActionId>> {
    m.states().map(|s| m.available_actions(s).collect()).collect()
}

/// Reads a policy off converged bounds.
///
/// Plain states take the lowest-index action maximising `U`. In a super
/// state the best exits (by `U`) are taken by the members owning them; the
/// other members walk towards those owners along staying pairs, choosing at
/// each state a pair with a successor one step closer. States that were
/// never sampled pick uniformly among `available`.
pub fn extract_policy<R: Rng + ?Sized>(
    cm: &CollapsedMdp<f64>,
    v: &IntervalValues,
    available: &[Vec<ActionId>],
    rng: &mut R,
) -> Extraction {
    let n = cm.membership.len();
    let mut choice: Vec<Option<ActionId>> = vec![None; n];
    let mut best: Vec<Vec<ActionId>> = vec![Vec::new(); n];
    let mut fallback = Vec::new();

    for q in 0..cm.num_states() {
        let rows = &cm.rows[q];
        let Some(mec) = cm.mec_of[q] else {
            let s = cm.members[q][0];
            if cm.target[q] && !available[s.0].is_empty() {
                choice[s.0] = Some(available[s.0][0]);
                best[s.0] = available[s.0].clone();
            } else if rows.is_empty() {
                fallback.push(s);
            } else {
                let top = v.upper_pair[q].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let set: Vec<ActionId> = rows
                    .iter()
                    .zip(&v.upper_pair[q])
                    .filter(|(_, u)| **u >= top - TIE_TOLERANCE)
                    .map(|(r, _)| r.action)
                    .collect();
                choice[s.0] = Some(set[0]);
                best[s.0] = set;
            }
            continue;
        };

        let members = &cm.members[q];
        let mut assigned: Vec<StateId> = Vec::new();
        if cm.target[q] {
            for &s in members.iter().filter(|s| cm.original_target[s.0]) {
                if let Some(r) = rows.iter().find(|r| r.origin == s) {
                    choice[s.0] = Some(r.action);
                    assigned.push(s);
                }
            }
        } else {
            let exits: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].staying).collect();
            if exits.is_empty() {
                // No way out: any staying pair is as good as any other.
                for &s in members {
                    if let Some(r) = rows.iter().find(|r| r.origin == s && r.staying) {
                        choice[s.0] = Some(r.action);
                        assigned.push(s);
                    }
                }
            } else {
                let top = exits.iter().map(|&i| v.upper_pair[q][i]).fold(f64::NEG_INFINITY, f64::max);
                for &i in &exits {
                    let r = &rows[i];
                    if v.upper_pair[q][i] >= top - TIE_TOLERANCE && choice[r.origin.0].is_none() {
                        choice[r.origin.0] = Some(r.action);
                        assigned.push(r.origin);
                    }
                }
            }
        }

        // Backward breadth-first layering over the staying pairs.
        let pairs = &cm.mecs[mec].pairs;
        let mut reached = vec![false; n];
        for s in &assigned {
            reached[s.0] = true;
        }
        loop {
            let mut layer = Vec::new();
            for &s in members {
                if reached[s.0] {
                    continue;
                }
                let step = rows.iter().find(|r| {
                    r.origin == s
                        && pairs.contains(&(s, r.action))
                        && r.origin_succ.iter().any(|t| reached[t.0])
                });
                if let Some(r) = step {
                    layer.push((s, r.action));
                }
            }
            if layer.is_empty() {
                break;
            }
            for (s, a) in layer {
                choice[s.0] = Some(a);
                reached[s.0] = true;
            }
        }
        for &s in members {
            if choice[s.0].is_none() {
                fallback.push(s);
            } else {
                best[s.0] = vec![choice[s.0].unwrap()];
            }
        }
    }

    for &s in &fallback {
        let options = &available[s.0];
        let a = options[rng.gen_range(0..options.len())];
        choice[s.0] = Some(a);
        best[s.0] = options.clone();
    }
    fallback.sort_unstable();

    Extraction {
        policy: MemorylessDetPolicy::new(
            choice.into_iter().map(|c| c.expect("every state gets an action")).collect(),
        ),
        best,
        fallback,
    }
}
