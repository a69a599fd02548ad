//! Known-model oracle: optimal values, exact policy evaluation over the
//! rationals, policy enumeration and the value-gap machinery.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bvi::{available_table, bvi_sweep, extract_policy, reset_bounds, IntervalValues};
use crate::ec::collapse_model;
use crate::mdp::{denominator_lcm, rational_to_f64, ActionId, Mdp, MemorylessDetPolicy, Rational, StateId};

/// Default cap on the number of enumerated policies.
pub const DEFAULT_POLICY_CAP: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum ExactError {
    /// More policies than the cap; `count` is the product of action counts.
    TooManyPolicies { count: f64, cap: u64 },
    InvalidPolicy(crate::mdp::MdpError),
}

impl fmt::Display for ExactError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExactError::TooManyPolicies { count, cap } => {
                write!(f, "refusing to enumerate about {count:e} policies (cap {cap})")
            }
            ExactError::InvalidPolicy(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ExactError {}

/// Floating-point optimal values of every original state.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalValues {
    pub values: Vec<f64>,
    pub at_initial: f64,
    /// Final `U − L` at the initial state.
    pub gap: f64,
    pub sweeps: usize,
}

/// Converged interval iteration on the collapsed true model, with
/// zero-value states pinned to 0.
fn solve_bounds(m: &Mdp) -> (crate::ec::CollapsedMdp<f64>, IntervalValues, usize) {
    let cm = collapse_model(m).map_weights(rational_to_f64);
    let zero = m.zero_value_states();
    let mut v = reset_bounds(&cm);
    for q in 0..cm.num_states() {
        if cm.members[q].iter().all(|s| zero.contains(s)) {
            v.pin_zero(q);
        }
    }
    let cap = 1_000_000usize.max(100 * cm.num_states());
    let mut sweeps = 0;
    while sweeps < cap {
        let next = bvi_sweep(&cm, &v);
        sweeps += 1;
        let change = next.max_change(&v);
        v = next;
        let width = (0..cm.num_states()).map(|q| v.error(q)).fold(0.0, f64::max);
        if width < 1e-12 || change == 0.0 {
            break;
        }
    }
    (cm, v, sweeps)
}

/// Optimal reachability probabilities by interval iteration to a fixed point.
pub fn optimal_value(m: &Mdp) -> OptimalValues {
    let (cm, v, sweeps) = solve_bounds(m);
    let values: Vec<f64> = cm.membership.iter().map(|&q| v.lower[q]).collect();
    OptimalValues {
        at_initial: values[m.initial().0],
        gap: v.error(cm.initial),
        values,
        sweeps,
    }
}

/// An optimal policy with its exact value vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactOptimum {
    pub policy: MemorylessDetPolicy,
    pub values: Vec<Rational>,
    /// Every action's one-step value is at most the state's value, which
    /// makes `values` the least fixed point, i.e. optimal.
    pub certified: bool,
}

impl ExactOptimum {
    pub fn at_initial(&self, m: &Mdp) -> &Rational {
        &self.values[m.initial().0]
    }
}

/// Exact optimal values: a policy read off converged bounds is evaluated
/// over the rationals and then improved until no action beats it.
pub fn optimal_exact(m: &Mdp) -> ExactOptimum {
    let (cm, v, _) = solve_bounds(m);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut policy = extract_policy(&cm, &v, &available_table(m), &mut rng).policy;
    for _ in 0..=m.num_states() * m.num_actions().max(1) {
        let values = policy_value_exact(m, &policy).expect("extracted policies are valid");
        match improve(m, &policy, &values) {
            Some(better) => policy = better,
            None => return ExactOptimum { policy, values, certified: true },
        }
    }
    let values = policy_value_exact(m, &policy).expect("extracted policies are valid");
    ExactOptimum { policy, values, certified: false }
}

/// One-step value `Σ P(s,a,s')·v(s')`.
fn q_value(m: &Mdp, s: StateId, a: ActionId, v: &[Rational]) -> Rational {
    m.choice(s, a)
        .map(|c| c.successors.iter().map(|x| &x.prob * &v[x.state.0]).sum())
        .unwrap_or_else(Rational::zero)
}

/// Switches every state with a strictly better action. `None` if none exists.
fn improve(m: &Mdp, policy: &MemorylessDetPolicy, v: &[Rational]) -> Option<MemorylessDetPolicy> {
    let mut next = policy.actions().to_vec();
    let mut changed = false;
    for s in m.states() {
        if m.is_target(s) {
            continue;
        }
        let mut best = v[s.0].clone();
        for a in m.available_actions(s) {
            let q = q_value(m, s, a, v);
            if q > best {
                best = q;
                next[s.0] = a;
                changed = true;
            }
        }
    }
    changed.then(|| MemorylessDetPolicy::new(next))
}

/// States from which the target is unreachable in the chain induced by `policy`.
fn zero_reach(m: &Mdp, policy: &MemorylessDetPolicy) -> Vec<bool> {
    let n = m.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in m.states() {
        if m.is_target(s) {
            continue;
        }
        for x in &m.choice(s, policy.action(s)).expect("policy checked").successors {
            preds[x.state.0].push(s.0);
        }
    }
    let mut reach = vec![false; n];
    let mut queue: VecDeque<usize> = m.targets().map(|s| s.0).collect();
    for &t in &queue {
        reach[t] = true;
    }
    while let Some(t) = queue.pop_front() {
        for &p in &preds[t] {
            if !reach[p] {
                reach[p] = true;
                queue.push_back(p);
            }
        }
    }
    reach.into_iter().map(|r| !r).collect()
}

/// Exact reachability probability of every state under `policy`.
///
/// States that cannot reach the target in the induced chain are fixed to 0
/// and targets to 1; the remaining system `(I − Q)·v = b` is non-singular and
/// is solved by fraction-free elimination.
pub fn policy_value_exact(m: &Mdp, policy: &MemorylessDetPolicy) -> Result<Vec<Rational>, ExactError> {
    policy.check(m).map_err(ExactError::InvalidPolicy)?;
    let n = m.num_states();
    let zero = zero_reach(m, policy);
    let mut slot = vec![usize::MAX; n];
    let mut unknown = Vec::new();
    for s in 0..n {
        if !m.is_target(StateId(s)) && !zero[s] {
            slot[s] = unknown.len();
            unknown.push(s);
        }
    }
    let k = unknown.len();
    let mut a = vec![vec![Rational::zero(); k + 1]; k];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] = Rational::one();
        let choice = m.choice(StateId(s), policy.action(StateId(s))).expect("policy checked");
        for x in &choice.successors {
            let t = x.state.0;
            if m.is_target(x.state) {
                a[i][k] += &x.prob;
            } else if slot[t] != usize::MAX {
                a[i][slot[t]] -= &x.prob;
            }
        }
    }
    let solution = solve_fraction_free(a);
    let mut v = vec![Rational::zero(); n];
    for s in m.targets() {
        v[s.0] = Rational::one();
    }
    for (i, &s) in unknown.iter().enumerate() {
        v[s] = solution[i].clone();
    }
    Ok(v)
}

/// Solves the augmented system `[A | b]` (square `A`, non-singular) exactly.
/// Rows are scaled to integers, eliminated with Bareiss' fraction-free
/// scheme, then back-substituted over the rationals.
pub fn solve_fraction_free(aug: Vec<Vec<Rational>>) -> Vec<Rational> {
    let n = aug.len();
    let mut m: Vec<Vec<BigInt>> = aug
        .into_iter()
        .map(|row| {
            let l = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            row.into_iter().map(|x| (x * Rational::from_integer(l.clone())).to_integer()).collect()
        })
        .collect();
    let mut prev = BigInt::one();
    for k in 0..n {
        let pivot = (k..n)
            .find(|&r| !m[r][k].is_zero())
            .expect("singular system after zero-state pinning");
        m.swap(k, pivot);
        for i in k + 1..n {
            for j in k + 1..=n {
                let num = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = num / &prev;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        let mut acc = Rational::from_integer(m[i][n].clone());
        for j in i + 1..n {
            acc -= Rational::from_integer(m[i][j].clone()) * &x[j];
        }
        x[i] = acc / Rational::from_integer(m[i][i].clone());
    }
    x
}

/// Number of memoryless deterministic policies, as a float.
pub fn policy_count(m: &Mdp) -> f64 {
    m.states().map(|s| m.available_actions(s).count() as f64).product()
}

/// Lexicographic enumeration of all memoryless deterministic policies; the
/// last state's choice varies fastest.
#[derive(Clone, Debug)]
pub struct PolicyEnumerator {
    options: Vec<Vec<ActionId>>,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for PolicyEnumerator {
    type Item = MemorylessDetPolicy;

    fn next(&mut self) -> Option<MemorylessDetPolicy> {
        if self.done {
            return None;
        }
        let current = MemorylessDetPolicy::new(
            self.digits.iter().zip(&self.options).map(|(&d, o)| o[d]).collect(),
        );
        self.done = true;
        for i in (0..self.digits.len()).rev() {
            self.digits[i] += 1;
            if self.digits[i] < self.options[i].len() {
                self.done = false;
                break;
            }
            self.digits[i] = 0;
        }
        Some(current)
    }
}

pub fn enumerate_policies(m: &Mdp, cap: u64) -> Result<PolicyEnumerator, ExactError> {
    let count = policy_count(m);
    if count > cap as f64 {
        return Err(ExactError::TooManyPolicies { count, cap });
    }
    let options = available_table(m);
    Ok(PolicyEnumerator {
        digits: vec![0; options.len()],
        done: options.iter().any(Vec::is_empty),
        options,
    })
}

/// `D`: the largest per-pair lcm of successor denominators.
pub fn transition_complexity(m: &Mdp) -> BigInt {
    m.states()
        .flat_map(|s| m.choices(s).iter())
        .filter(|c| !c.successors.is_empty())
        .map(denominator_lcm)
        .max()
        .unwrap_or_else(BigInt::one)
}

/// `(2D)^(−2·|A|·|S|) · 2^(−2·|S|)`, with `|A|` the size of the action table.
pub fn eps_diff_bound(m: &Mdp) -> Rational {
    let d = transition_complexity(m);
    let states = m.num_states() as u32;
    let actions = m.num_actions() as u32;
    let denom = num_traits::pow::pow(BigInt::from(2) * d, (2 * actions * states) as usize)
        * num_traits::pow::pow(BigInt::from(2), (2 * states) as usize);
    Rational::new(BigInt::one(), denom)
}

/// Value-gap facts of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct GapCertificate {
    pub optimal_value: Rational,
    pub runner_up_value: Option<Rational>,
    /// Optimal minus runner-up value at the initial state.
    pub eps_diff: Option<Rational>,
    /// Smallest positive L1 distance between two policies' value vectors;
    /// `None` if all vectors coincide or there are too many to compare.
    pub min_l1_distance: Option<Rational>,
    pub bound: Rational,
    pub d: BigInt,
    pub policies: u64,
    pub distinct_vectors: usize,
}

/// Pairwise L1 comparison is skipped above this many distinct value vectors.
pub const MAX_PAIRWISE_VECTORS: usize = 4096;

pub fn min_gap(m: &Mdp, cap: u64) -> Result<GapCertificate, ExactError> {
    let s0 = m.initial().0;
    let mut vectors: BTreeSet<Vec<Rational>> = BTreeSet::new();
    let mut policies = 0u64;
    for pi in enumerate_policies(m, cap)? {
        vectors.insert(policy_value_exact(m, &pi)?);
        policies += 1;
    }
    let at_s0: BTreeSet<&Rational> = vectors.iter().map(|v| &v[s0]).collect();
    let optimal_value = (*at_s0.iter().next_back().expect("at least one policy")).clone();
    let runner_up_value = at_s0.iter().rev().nth(1).map(|r| (*r).clone());
    let eps_diff = runner_up_value.as_ref().map(|r| &optimal_value - r);

    let min_l1_distance = if vectors.len() <= MAX_PAIRWISE_VECTORS {
        let list: Vec<&Vec<Rational>> = vectors.iter().collect();
        let mut best: Option<Rational> = None;
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                let d: Rational = list[i].iter().zip(list[j]).map(|(a, b)| (a - b).abs()).sum();
                if d.is_positive() && best.as_ref().is_none_or(|b| d < *b) {
                    best = Some(d);
                }
            }
        }
        best
    } else {
        None
    };

    Ok(GapCertificate {
        optimal_value,
        runner_up_value,
        eps_diff,
        min_l1_distance,
        bound: eps_diff_bound(m),
        d: transition_complexity(m),
        policies,
        distinct_vectors: vectors.len(),
    })
}
