//! Explicit-state MDPs with exact rational transition probabilities.
//!
//! A model is immutable once built. Every `(state, action)` row carries both
//! the exact [`Rational`] probabilities and a cached `f64` copy that the
//! numeric loops (simulation, interval iteration) read.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Exact probability value, always kept in lowest terms with a positive denominator.
pub type Rational = BigRational;

/// Builds the rational `num/den`.
///
/// Panics if `den == 0`.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub(crate) fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Huge numerators/denominators overflow the direct conversion.
        let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense index into a model's action table. The human-readable name lives in
/// the table (see [`Mdp::action_name`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl ActionId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Successor {
    pub state: StateId,
    pub prob: Rational,
    /// Cached `prob` as a double.
    pub approx: f64,
}

impl Successor {
    pub fn new(state: StateId, prob: Rational) -> Self {
        let approx = rational_to_f64(&prob);
        Successor { state, prob, approx }
    }
}

/// The distribution `P(s, a, ·)` of one state-action pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub action: ActionId,
    pub successors: Vec<Successor>,
}

/// Unchecked constituents of an [`Mdp`]. Use [`Mdp::from_raw`] to wrap them
/// without validation (e.g. to inspect a malformed model with [`validate`]),
/// or [`MdpBuilder`] for the checked path.
#[derive(Clone, Debug, Default)]
pub struct RawMdp {
    pub num_states: usize,
    pub initial: StateId,
    pub actions: Vec<String>,
    pub choices: Vec<Vec<Choice>>,
    pub target: BTreeSet<StateId>,
    pub labels: BTreeMap<String, BTreeSet<StateId>>,
}

#[derive(Clone, Debug)]
pub struct Mdp {
    num_states: usize,
    initial: StateId,
    actions: Vec<String>,
    choices: Vec<Vec<Choice>>,
    target: Vec<bool>,
    labels: BTreeMap<String, BTreeSet<StateId>>,
}

/// One broken model invariant, with its location.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    InitialOutOfRange { initial: StateId },
    ChoiceTableSize { expected: usize, found: usize },
    ActionOutOfRange { state: StateId, action: ActionId },
    DuplicateAction { state: StateId, action: ActionId },
    SuccessorOutOfRange { state: StateId, action: ActionId, successor: StateId },
    DuplicateSuccessor { state: StateId, action: ActionId, successor: StateId },
    NonPositiveProbability { state: StateId, action: ActionId, successor: StateId },
    ProbabilitySum { state: StateId, action: ActionId, sum: Rational },
    NoAvailableAction { state: StateId },
    TargetOutOfRange { state: StateId },
    LabelOutOfRange { label: String, state: StateId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InitialOutOfRange { initial } => {
                write!(f, "initial state {initial} out of range")
            }
            Violation::ChoiceTableSize { expected, found } => {
                write!(f, "choice table has {found} rows, expected {expected}")
            }
            Violation::ActionOutOfRange { state, action } => {
                write!(f, "action {action} at state {state} not in the action table")
            }
            Violation::DuplicateAction { state, action } => {
                write!(f, "action {action} listed twice at state {state}")
            }
            Violation::SuccessorOutOfRange { state, action, successor } => {
                write!(f, "successor {successor} of ({state}, {action}) out of range")
            }
            Violation::DuplicateSuccessor { state, action, successor } => {
                write!(f, "successor {successor} listed twice at ({state}, {action})")
            }
            Violation::NonPositiveProbability { state, action, successor } => {
                write!(f, "non-positive probability for ({state}, {action}, {successor})")
            }
            Violation::ProbabilitySum { state, action, sum } => {
                write!(f, "probabilities at ({state}, {action}) sum to {sum}, not 1")
            }
            Violation::NoAvailableAction { state } => {
                write!(f, "state {state} has no available action")
            }
            Violation::TargetOutOfRange { state } => {
                write!(f, "target state {state} out of range")
            }
            Violation::LabelOutOfRange { label, state } => {
                write!(f, "label `{label}` names out-of-range state {state}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MdpError {
    ActionNotAvailable { state: StateId, action: ActionId },
    StateOutOfRange { state: StateId },
    NonPositiveProbability { state: StateId, action: String, successor: StateId },
    DuplicateTransition { state: StateId, action: String, successor: StateId },
    PolicyLength { expected: usize, found: usize },
    Invalid(Vec<Violation>),
}

impl fmt::Display for MdpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpError::ActionNotAvailable { state, action } => {
                write!(f, "action {action} not available at state {state}")
            }
            MdpError::StateOutOfRange { state } => write!(f, "state {state} out of range"),
            MdpError::NonPositiveProbability { state, action, successor } => write!(
                f,
                "zero or negative probability for transition ({state}, {action}, {successor})"
            ),
            MdpError::DuplicateTransition { state, action, successor } => {
                write!(f, "duplicate transition ({state}, {action}, {successor})")
            }
            MdpError::PolicyLength { expected, found } => {
                write!(f, "policy covers {found} states, model has {expected}")
            }
            MdpError::Invalid(v) => {
                write!(f, "invalid model ({} violations)", v.len())?;
                for violation in v {
                    write!(f, "; {violation}")?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for MdpError {}

/// Checks every model invariant and reports all violations. The model is
/// well-formed iff the returned list is empty.
pub fn validate(m: &Mdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = m.num_states;
    if m.initial.0 >= n {
        out.push(Violation::InitialOutOfRange { initial: m.initial });
    }
    if m.choices.len() != n {
        out.push(Violation::ChoiceTableSize { expected: n, found: m.choices.len() });
    }
    if m.target.len() != n {
        // Out-of-range targets are dropped by `from_raw`; record them here.
        out.push(Violation::TargetOutOfRange { state: StateId(m.target.len()) });
    }
    for (s, row) in m.choices.iter().enumerate() {
        let state = StateId(s);
        let mut seen_actions = BTreeSet::new();
        let mut available = false;
        for choice in row {
            let action = choice.action;
            if action.0 >= m.actions.len() {
                out.push(Violation::ActionOutOfRange { state, action });
            }
            if !seen_actions.insert(action) {
                out.push(Violation::DuplicateAction { state, action });
            }
            if choice.successors.is_empty() {
                continue;
            }
            available = true;
            let mut seen = BTreeSet::new();
            let mut sum = Rational::zero();
            for succ in &choice.successors {
                if succ.state.0 >= n {
                    out.push(Violation::SuccessorOutOfRange { state, action, successor: succ.state });
                }
                if !seen.insert(succ.state) {
                    out.push(Violation::DuplicateSuccessor { state, action, successor: succ.state });
                }
                if succ.prob <= Rational::zero() {
                    out.push(Violation::NonPositiveProbability {
                        state,
                        action,
                        successor: succ.state,
                    });
                }
                sum += &succ.prob;
            }
            if !sum.is_one() {
                out.push(Violation::ProbabilitySum { state, action, sum });
            }
        }
        if !available {
            out.push(Violation::NoAvailableAction { state });
        }
    }
    for (label, states) in &m.labels {
        for &s in states {
            if s.0 >= n {
                out.push(Violation::LabelOutOfRange { label: label.clone(), state: s });
            }
        }
    }
    out
}

impl Mdp {
    /// Wraps raw parts without checking them.
    pub fn from_raw(raw: RawMdp) -> Mdp {
        let mut target = vec![false; raw.num_states];
        let mut dropped = false;
        for s in &raw.target {
            match target.get_mut(s.0) {
                Some(t) => *t = true,
                None => dropped = true,
            }
        }
        if dropped {
            // Keeps the out-of-range target visible to `validate`.
            target.push(false);
        }
        let mut choices = raw.choices;
        for row in &mut choices {
            for c in row.iter_mut() {
                for succ in &mut c.successors {
                    succ.approx = rational_to_f64(&succ.prob);
                }
            }
        }
        Mdp {
            num_states: raw.num_states,
            initial: raw.initial,
            actions: raw.actions,
            choices,
            target,
            labels: raw.labels,
        }
    }

    /// Wraps and validates raw parts.
    pub fn try_from_raw(raw: RawMdp) -> Result<Mdp, MdpError> {
        let m = Mdp::from_raw(raw);
        let violations = validate(&m);
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(MdpError::Invalid(violations))
        }
    }

    pub fn into_raw(self) -> RawMdp {
        RawMdp {
            num_states: self.num_states,
            initial: self.initial,
            actions: self.actions,
            choices: self.choices,
            target: self
                .target
                .iter()
                .enumerate()
                .filter(|(_, t)| **t)
                .map(|(s, _)| StateId(s))
                .collect(),
            labels: self.labels,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states).map(StateId)
    }

    /// Size of the action table (`|A|`).
    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a.0]
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|n| n == name).map(ActionId)
    }

    /// All rows of `s`, sorted by action id.
    pub fn choices(&self, s: StateId) -> &[Choice] {
        &self.choices[s.0]
    }

    pub fn choice(&self, s: StateId, a: ActionId) -> Option<&Choice> {
        let row = &self.choices[s.0];
        row.binary_search_by_key(&a, |c| c.action)
            .ok()
            .map(|i| &row[i])
            .filter(|c| !c.successors.is_empty())
    }

    /// `Av(s)`: actions with a non-empty distribution at `s`.
    pub fn available_actions(&self, s: StateId) -> impl Iterator<Item = ActionId> + '_ {
        self.choices[s.0]
            .iter()
            .filter(|c| !c.successors.is_empty())
            .map(|c| c.action)
    }

    pub fn is_available(&self, s: StateId, a: ActionId) -> bool {
        self.choice(s, a).is_some()
    }

    pub fn is_target(&self, s: StateId) -> bool {
        self.target.get(s.0).copied().unwrap_or(false)
    }

    pub fn target_mask(&self) -> &[bool] {
        &self.target[..self.num_states.min(self.target.len())]
    }

    pub fn targets(&self) -> impl Iterator<Item = StateId> + '_ {
        self.target
            .iter()
            .enumerate()
            .filter(|(_, t)| **t)
            .map(|(s, _)| StateId(s))
    }

    pub fn labels(&self) -> &BTreeMap<String, BTreeSet<StateId>> {
        &self.labels
    }

    /// Number of listed transitions `(s, a, s')`.
    pub fn num_transitions(&self) -> usize {
        self.choices
            .iter()
            .flat_map(|row| row.iter())
            .map(|c| c.successors.len())
            .sum()
    }

    /// Number of state-action pairs with a non-empty distribution.
    pub fn num_pairs(&self) -> usize {
        self.choices
            .iter()
            .flat_map(|row| row.iter())
            .filter(|c| !c.successors.is_empty())
            .count()
    }

    /// Returns a copy of the model with `target` replaced.
    pub fn with_target(&self, target: impl IntoIterator<Item = StateId>) -> Mdp {
        let mut m = self.clone();
        m.target = vec![false; self.num_states];
        for s in target {
            if s.0 < self.num_states {
                m.target[s.0] = true;
            }
        }
        m
    }

    /// The successor set `{s' : P(s, a, s') > 0}`.
    pub fn support(&self, s: StateId, a: ActionId) -> Result<Vec<StateId>, MdpError> {
        if s.0 >= self.num_states {
            return Err(MdpError::StateOutOfRange { state: s });
        }
        let choice = self
            .choice(s, a)
            .ok_or(MdpError::ActionNotAvailable { state: s, action: a })?;
        Ok(choice.successors.iter().map(|x| x.state).collect())
    }

    /// States from which no policy reaches the target with positive
    /// probability. Backward reachability on the support graph; the numeric
    /// probabilities play no role.
    pub fn zero_value_states(&self) -> BTreeSet<StateId> {
        let n = self.num_states;
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, row) in self.choices.iter().enumerate() {
            for c in row {
                for succ in &c.successors {
                    preds[succ.state.0].push(s);
                }
            }
        }
        let mut positive = self.target_mask().to_vec();
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| positive[s]).collect();
        while let Some(t) = queue.pop_front() {
            for &p in &preds[t] {
                if !positive[p] {
                    positive[p] = true;
                    queue.push_back(p);
                }
            }
        }
        (0..n).filter(|&s| !positive[s]).map(StateId).collect()
    }

    /// The Markov chain obtained by fixing `policy`.
    pub fn induced_chain(&self, policy: &MemorylessDetPolicy) -> Result<MarkovChain, MdpError> {
        policy.check(self)?;
        let rows = self
            .states()
            .map(|s| {
                self.choice(s, policy.action(s))
                    .expect("checked above")
                    .successors
                    .clone()
            })
            .collect();
        Ok(MarkovChain { rows, target: self.target_mask().to_vec() })
    }

    /// Structural equality up to renumbering of the action table: same
    /// states, initial state, labels, target set, and per-state
    /// `(action name → distribution)` maps.
    pub fn structurally_eq(&self, other: &Mdp) -> bool {
        if self.num_states != other.num_states
            || self.initial != other.initial
            || self.labels != other.labels
            || self.target_mask() != other.target_mask()
        {
            return false;
        }
        self.states().all(|s| self.named_rows(s) == other.named_rows(s))
    }

    fn named_rows(&self, s: StateId) -> BTreeMap<&str, BTreeMap<StateId, &Rational>> {
        self.choices[s.0]
            .iter()
            .filter(|c| !c.successors.is_empty())
            .map(|c| {
                (
                    self.action_name(c.action),
                    c.successors.iter().map(|x| (x.state, &x.prob)).collect(),
                )
            })
            .collect()
    }
}

/// Per-state single successor distribution, as induced by a memoryless
/// deterministic policy.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    pub rows: Vec<Vec<Successor>>,
    pub target: Vec<bool>,
}

impl MarkovChain {
    pub fn num_states(&self) -> usize {
        self.rows.len()
    }
}

/// Total map from states to one available action each.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemorylessDetPolicy {
    choice: Vec<ActionId>,
}

impl MemorylessDetPolicy {
    pub fn new(choice: Vec<ActionId>) -> Self {
        MemorylessDetPolicy { choice }
    }

    pub fn action(&self, s: StateId) -> ActionId {
        self.choice[s.0]
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.choice
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    pub fn check(&self, m: &Mdp) -> Result<(), MdpError> {
        if self.choice.len() != m.num_states() {
            return Err(MdpError::PolicyLength {
                expected: m.num_states(),
                found: self.choice.len(),
            });
        }
        for s in m.states() {
            let a = self.action(s);
            if !m.is_available(s, a) {
                return Err(MdpError::ActionNotAvailable { state: s, action: a });
            }
        }
        Ok(())
    }

    /// Space-separated action names, one per state.
    pub fn describe(&self, m: &Mdp) -> String {
        let mut out = String::new();
        for (i, a) in self.choice.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(m.actions.get(a.0).map(String::as_str).unwrap_or("?"));
        }
        out
    }
}

/// Incremental, checked construction of an [`Mdp`].
#[derive(Clone, Debug)]
pub struct MdpBuilder {
    num_states: usize,
    initial: StateId,
    actions: Vec<String>,
    rows: Vec<BTreeMap<ActionId, BTreeMap<StateId, Rational>>>,
    target: BTreeSet<StateId>,
    labels: BTreeMap<String, BTreeSet<StateId>>,
}

impl MdpBuilder {
    pub fn new(num_states: usize) -> Self {
        MdpBuilder {
            num_states,
            initial: StateId(0),
            actions: Vec::new(),
            rows: vec![BTreeMap::new(); num_states],
            target: BTreeSet::new(),
            labels: BTreeMap::new(),
        }
    }

    pub fn initial(&mut self, s: usize) -> &mut Self {
        self.initial = StateId(s);
        self
    }

    /// Interns an action name.
    pub fn action(&mut self, name: &str) -> ActionId {
        match self.actions.iter().position(|n| n == name) {
            Some(i) => ActionId(i),
            None => {
                self.actions.push(name.to_string());
                ActionId(self.actions.len() - 1)
            }
        }
    }

    /// Adds `P(s, action, t) = prob`. Zero probabilities and repeated
    /// triples are rejected.
    pub fn transition(
        &mut self,
        s: usize,
        action: &str,
        t: usize,
        prob: Rational,
    ) -> Result<&mut Self, MdpError> {
        if s >= self.num_states {
            return Err(MdpError::StateOutOfRange { state: StateId(s) });
        }
        if t >= self.num_states {
            return Err(MdpError::StateOutOfRange { state: StateId(t) });
        }
        if prob <= Rational::zero() {
            return Err(MdpError::NonPositiveProbability {
                state: StateId(s),
                action: action.to_string(),
                successor: StateId(t),
            });
        }
        let a = self.action(action);
        let row = self.rows[s].entry(a).or_default();
        if row.contains_key(&StateId(t)) {
            return Err(MdpError::DuplicateTransition {
                state: StateId(s),
                action: action.to_string(),
                successor: StateId(t),
            });
        }
        row.insert(StateId(t), prob);
        Ok(self)
    }

    /// Shorthand for `transition(s, action, t, num/den)` that panics on
    /// error; intended for hand-built models.
    pub fn edge(&mut self, s: usize, action: &str, t: usize, num: i64, den: i64) -> &mut Self {
        self.transition(s, action, t, ratio(num, den))
            .expect("invalid hand-built transition");
        self
    }

    pub fn label(&mut self, name: &str, states: impl IntoIterator<Item = usize>) -> &mut Self {
        self.labels
            .entry(name.to_string())
            .or_default()
            .extend(states.into_iter().map(StateId));
        self
    }

    pub fn target(&mut self, states: impl IntoIterator<Item = usize>) -> &mut Self {
        self.target.extend(states.into_iter().map(StateId));
        self
    }

    /// Target set = all states carrying `name` (empty if the label is absent).
    pub fn target_label(&mut self, name: &str) -> &mut Self {
        if let Some(states) = self.labels.get(name) {
            self.target.extend(states.iter().copied());
        }
        self
    }

    pub fn has_label(&self, name: &str) -> bool {
        self.labels.contains_key(name)
    }

    pub fn build(&self) -> Result<Mdp, MdpError> {
        let choices = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(a, succ)| Choice {
                        action: *a,
                        successors: succ
                            .iter()
                            .map(|(t, p)| Successor::new(*t, p.clone()))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        Mdp::try_from_raw(RawMdp {
            num_states: self.num_states,
            initial: self.initial,
            actions: self.actions.clone(),
            choices,
            target: self.target.clone(),
            labels: self.labels.clone(),
        })
    }
}

/// Least common multiple of the denominators of one distribution.
pub(crate) fn denominator_lcm(choice: &Choice) -> BigInt {
    use num_integer::Integer;
    choice
        .successors
        .iter()
        .fold(BigInt::one(), |acc, s| acc.lcm(s.prob.denom()))
}
