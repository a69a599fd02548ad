//! Maximal end-component decomposition and the collapsed quotient model.
//!
//! Targets are absorbing for reachability: their rows never take part in
//! the decomposition, so a plain target state is never inside a collapsed
//! component. The target-containing case only arises for graphs that keep
//! target rows, and is handled by pinning that super state to 1.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::AddAssign;

use num_traits::{One, Zero};

use crate::estimation::EstimatedModel;
use crate::mdp::{ActionId, Choice, Mdp, MdpBuilder, Rational, StateId};

/// Per state, the sampled or true pairs with their successor sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SupportGraph {
    pub rows: Vec<Vec<(ActionId, Vec<StateId>)>>,
}

impl SupportGraph {
    /// True support of a model, with target rows left out.
    pub fn from_mdp(m: &Mdp) -> Self {
        let rows = m
            .states()
            .map(|s| {
                if m.is_target(s) {
                    return Vec::new();
                }
                m.choices(s)
                    .iter()
                    .filter(|c| !c.successors.is_empty())
                    .map(|c| (c.action, c.successors.iter().map(|x| x.state).collect()))
                    .collect()
            })
            .collect();
        SupportGraph { rows }
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }
}

/// A set of state-action pairs closed under successors whose graph is
/// strongly connected.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct EcCandidate {
    pub pairs: BTreeSet<(StateId, ActionId)>,
}

impl EcCandidate {
    pub fn states(&self) -> BTreeSet<StateId> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn contains_state(&self, s: StateId) -> bool {
        self.pairs.range((s, ActionId(0))..).next().is_some_and(|p| p.0 == s)
    }

    pub fn contains_pair(&self, s: StateId, a: ActionId) -> bool {
        self.pairs.contains(&(s, a))
    }
}

/// Tarjan's algorithm without recursion. Returns the component id of every
/// node and the number of components; ids are in reverse topological order.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut frames: Vec<(usize, usize)> = Vec::new();
    let mut next = 0;
    let mut count = 0;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        frames.push((root, 0));
        while let Some(frame) = frames.last_mut() {
            let v = frame.0;
            if let Some(&w) = adj[v].get(frame.1) {
                frame.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(u, _)) = frames.last() {
                low[u] = low[u].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp[w] = count;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    (comp, count)
}

/// All maximal end components of `g`, disjoint, ordered by smallest state.
///
/// Repeatedly splits the graph into SCCs, drops pairs with a successor
/// outside their SCC and states left without pairs, until nothing changes.
pub fn mec_decomposition(g: &SupportGraph) -> Vec<EcCandidate> {
    let n = g.num_states();
    let mut active: Vec<Vec<bool>> = g
        .rows
        .iter()
        .map(|row| row.iter().map(|(_, succ)| !succ.is_empty() && succ.iter().all(|t| t.0 < n)).collect())
        .collect();
    let mut alive: Vec<bool> = active.iter().map(|row| row.iter().any(|&x| x)).collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];

    let comp = loop {
        for s in 0..n {
            adj[s].clear();
            if !alive[s] {
                continue;
            }
            for (i, (_, succ)) in g.rows[s].iter().enumerate() {
                if active[s][i] {
                    adj[s].extend(succ.iter().map(|t| t.0));
                }
            }
            adj[s].sort_unstable();
            adj[s].dedup();
        }
        let (comp, _) = strongly_connected_components(&adj);
        let mut changed = false;
        for s in 0..n {
            if !alive[s] {
                continue;
            }
            for (i, (_, succ)) in g.rows[s].iter().enumerate() {
                if active[s][i] && succ.iter().any(|t| !alive[t.0] || comp[t.0] != comp[s]) {
                    active[s][i] = false;
                    changed = true;
                }
            }
            if !active[s].iter().any(|&x| x) {
                alive[s] = false;
                changed = true;
            }
        }
        if !changed {
            break comp;
        }
    };

    let mut by_comp: BTreeMap<usize, EcCandidate> = BTreeMap::new();
    for s in 0..n {
        if !alive[s] {
            continue;
        }
        let ec = by_comp.entry(comp[s]).or_default();
        for (i, (a, _)) in g.rows[s].iter().enumerate() {
            if active[s][i] {
                ec.pairs.insert((StateId(s), *a));
            }
        }
    }
    let mut out: Vec<EcCandidate> = by_comp.into_values().collect();
    out.sort_by_key(|ec| ec.pairs.iter().next().map(|p| p.0));
    out
}

/// One row `(s, a) → [(s', w)]` of a weighted model.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedRow<W> {
    pub action: ActionId,
    pub succ: Vec<(StateId, W)>,
}

/// A model whose rows carry weights of type `W`: exact probabilities,
/// their floating-point copies, or lower estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedModel<W> {
    pub initial: StateId,
    pub target: Vec<bool>,
    pub rows: Vec<Vec<WeightedRow<W>>>,
}

fn rows_of<W>(m: &Mdp, weight: impl Fn(&Choice, usize) -> W) -> Vec<Vec<WeightedRow<W>>> {
    m.states()
        .map(|s| {
            m.choices(s)
                .iter()
                .filter(|c| !c.successors.is_empty())
                .map(|c| WeightedRow {
                    action: c.action,
                    succ: c
                        .successors
                        .iter()
                        .enumerate()
                        .map(|(i, x)| (x.state, weight(c, i)))
                        .collect(),
                })
                .collect()
        })
        .collect()
}

impl WeightedModel<Rational> {
    pub fn exact(m: &Mdp) -> Self {
        WeightedModel {
            initial: m.initial(),
            target: m.target_mask().to_vec(),
            rows: rows_of(m, |c, i| c.successors[i].prob.clone()),
        }
    }
}

impl WeightedModel<f64> {
    pub fn approx(m: &Mdp) -> Self {
        WeightedModel {
            initial: m.initial(),
            target: m.target_mask().to_vec(),
            rows: rows_of(m, |c, i| c.successors[i].approx),
        }
    }

    /// Partial model with lower-estimated weights. Observed successors whose
    /// estimate is clamped to 0 stay listed, so the support is the observed one.
    pub fn from_estimate(est: &EstimatedModel, initial: StateId, target: &[bool]) -> Self {
        WeightedModel {
            initial,
            target: target.to_vec(),
            rows: est
                .rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|r| WeightedRow { action: r.action, succ: r.lower.clone() })
                        .collect()
                })
                .collect(),
        }
    }
}

impl<W> WeightedModel<W> {
    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    /// Adds an empty row for every available but unsampled action of a
    /// non-target state that has at least one sampled row. Empty rows leave
    /// all their mass unassigned, so their upper bound stays 1.
    pub fn pad_unsampled(&mut self, available: &[Vec<ActionId>]) {
        for (s, row) in self.rows.iter_mut().enumerate() {
            if self.target[s] || row.is_empty() {
                continue;
            }
            for &a in &available[s] {
                if let Err(i) = row.binary_search_by_key(&a, |r| r.action) {
                    row.insert(i, WeightedRow { action: a, succ: Vec::new() });
                }
            }
        }
    }

    /// Support of the non-target rows.
    pub fn support_graph(&self) -> SupportGraph {
        SupportGraph {
            rows: self
                .rows
                .iter()
                .enumerate()
                .map(|(s, row)| {
                    if self.target[s] {
                        return Vec::new();
                    }
                    row.iter()
                        .map(|r| (r.action, r.succ.iter().map(|x| x.0).collect()))
                        .collect()
                })
                .collect(),
        }
    }
}

/// A quotient action. For a plain state `origin` is the state itself; for a
/// super state it names the member state owning the action.
#[derive(Clone, Debug, PartialEq)]
pub struct QuotientRow<W> {
    pub origin: StateId,
    pub action: ActionId,
    pub succ: Vec<(usize, W)>,
    /// Successors of the pair in the original model.
    pub origin_succ: Vec<StateId>,
    /// The pair belongs to the collapsed component (rewritten to a self-loop).
    pub staying: bool,
}

/// Quotient of a weighted model in which every MEC is one super state.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapsedMdp<W> {
    pub rows: Vec<Vec<QuotientRow<W>>>,
    /// Original state → quotient state.
    pub membership: Vec<usize>,
    /// Quotient state → original states, sorted.
    pub members: Vec<Vec<StateId>>,
    /// Quotient state → index into `mecs` for super states.
    pub mec_of: Vec<Option<usize>>,
    pub mecs: Vec<EcCandidate>,
    /// Plain targets and super states containing a target.
    pub target: Vec<bool>,
    /// Target flags of the original states.
    pub original_target: Vec<bool>,
    pub initial: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CollapseError {
    Overlapping { state: StateId },
    StateOutOfRange { state: StateId },
}

impl fmt::Display for CollapseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollapseError::Overlapping { state } => {
                write!(f, "state {state} belongs to more than one component")
            }
            CollapseError::StateOutOfRange { state } => {
                write!(f, "component names out-of-range state {state}")
            }
        }
    }
}

impl core::error::Error for CollapseError {}

/// Builds the quotient: each component becomes one super state whose actions
/// are the `(member, action)` pairs of its members. Pairs of the component
/// turn into self-loops; every other row is redirected through the
/// membership map with merged weights.
pub fn collapse<W>(
    model: &WeightedModel<W>,
    mecs: &[EcCandidate],
) -> Result<CollapsedMdp<W>, CollapseError>
where
    W: Clone + Zero + One + AddAssign,
{
    let n = model.num_states();
    let mut mec_index: Vec<Option<usize>> = vec![None; n];
    for (i, ec) in mecs.iter().enumerate() {
        for s in ec.states() {
            let slot = mec_index
                .get_mut(s.0)
                .ok_or(CollapseError::StateOutOfRange { state: s })?;
            if slot.is_some() {
                return Err(CollapseError::Overlapping { state: s });
            }
            *slot = Some(i);
        }
    }

    let mut membership = vec![usize::MAX; n];
    let mut members: Vec<Vec<StateId>> = Vec::new();
    let mut mec_of = Vec::new();
    let mut super_state = vec![usize::MAX; mecs.len()];
    for s in 0..n {
        let q = match mec_index[s] {
            Some(i) if super_state[i] != usize::MAX => super_state[i],
            Some(i) => {
                super_state[i] = members.len();
                members.push(Vec::new());
                mec_of.push(Some(i));
                super_state[i]
            }
            None => {
                members.push(Vec::new());
                mec_of.push(None);
                members.len() - 1
            }
        };
        membership[s] = q;
        members[q].push(StateId(s));
    }

    let mut rows: Vec<Vec<QuotientRow<W>>> = (0..members.len()).map(|_| Vec::new()).collect();
    let mut target = vec![false; members.len()];
    for (q, group) in members.iter().enumerate() {
        target[q] = group.iter().any(|s| model.target[s.0]);
        for &s in group {
            for r in &model.rows[s.0] {
                let staying = mec_of[q].is_some_and(|i| mecs[i].contains_pair(s, r.action));
                let succ = if staying {
                    vec![(q, W::one())]
                } else {
                    let mut merged: BTreeMap<usize, W> = BTreeMap::new();
                    for (t, w) in &r.succ {
                        *merged.entry(membership[t.0]).or_insert_with(W::zero) += w.clone();
                    }
                    merged.into_iter().collect()
                };
                rows[q].push(QuotientRow {
                    origin: s,
                    action: r.action,
                    succ,
                    origin_succ: r.succ.iter().map(|x| x.0).collect(),
                    staying,
                });
            }
        }
    }

    Ok(CollapsedMdp {
        rows,
        initial: membership[model.initial.0],
        membership,
        members,
        mec_of,
        mecs: mecs.to_vec(),
        target,
        original_target: model.target.clone(),
    })
}

/// Decomposes and collapses the true model.
pub fn collapse_model(m: &Mdp) -> CollapsedMdp<Rational> {
    let mecs = mec_decomposition(&SupportGraph::from_mdp(m));
    collapse(&WeightedModel::exact(m), &mecs).expect("decomposition yields disjoint components")
}

impl<W> CollapsedMdp<W> {
    /// Same quotient with every weight passed through `f`.
    pub fn map_weights<V>(&self, mut f: impl FnMut(&W) -> V) -> CollapsedMdp<V> {
        CollapsedMdp {
            rows: self
                .rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|r| QuotientRow {
                            origin: r.origin,
                            action: r.action,
                            succ: r.succ.iter().map(|(t, w)| (*t, f(w))).collect(),
                            origin_succ: r.origin_succ.clone(),
                            staying: r.staying,
                        })
                        .collect()
                })
                .collect(),
            membership: self.membership.clone(),
            members: self.members.clone(),
            mec_of: self.mec_of.clone(),
            mecs: self.mecs.clone(),
            target: self.target.clone(),
            original_target: self.original_target.clone(),
            initial: self.initial,
        }
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn is_super(&self, q: usize) -> bool {
        self.mec_of[q].is_some()
    }

    /// Quotient support graph over non-target states, optionally without the
    /// staying self-loops.
    pub fn support_graph(&self, include_staying: bool) -> SupportGraph {
        SupportGraph {
            rows: self
                .rows
                .iter()
                .enumerate()
                .map(|(q, row)| {
                    if self.target[q] {
                        return Vec::new();
                    }
                    row.iter()
                        .enumerate()
                        .filter(|(_, r)| include_staying || !r.staying)
                        .map(|(i, r)| (ActionId(i), r.succ.iter().map(|x| StateId(x.0)).collect()))
                        .collect()
                })
                .collect(),
        }
    }
}

impl CollapsedMdp<Rational> {
    /// The quotient as a standalone model. Plain states keep their action
    /// names; super-state actions are named `<member>.<action>`.
    pub fn to_mdp(&self, original: &Mdp) -> Mdp {
        let mut b = MdpBuilder::new(self.num_states());
        for (q, row) in self.rows.iter().enumerate() {
            for r in row {
                let name: String = if self.is_super(q) {
                    format!("{}.{}", r.origin, original.action_name(r.action))
                } else {
                    original.action_name(r.action).into()
                };
                for (t, w) in &r.succ {
                    b.transition(q, &name, *t, w.clone())
                        .expect("collapse preserves distributions");
                }
            }
        }
        let targets: Vec<usize> = (0..self.num_states()).filter(|&q| self.target[q]).collect();
        b.initial(self.initial).label("goal", targets.iter().copied()).target(targets);
        b.build().expect("collapse preserves model validity")
    }
}
