//! Black-box sampling of the true model, loop detection and end-component
//! certification.

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counts::CountTable;
use crate::ec::{mec_decomposition, EcCandidate};
use crate::mdp::{ActionId, Mdp, StateId};

/// RNG stream of the simulator; the learner uses [`LEARNER_STREAM`].
pub const SIMULATOR_STREAM: u64 = 0;
pub const LEARNER_STREAM: u64 = 1;

/// Seeded ChaCha8 generator on one stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimError {
    ActionNotAvailable { state: StateId, action: ActionId },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::ActionNotAvailable { state, action } => {
                write!(f, "action {action} not available at state {state}")
            }
        }
    }
}

impl core::error::Error for SimError {}

/// Sampling access to a model. Exposes the state space, actions, initial
/// state and targets, never the transition probabilities.
#[derive(Clone, Debug)]
pub struct SimulatorHandle<'m> {
    model: &'m Mdp,
    rng: ChaCha8Rng,
    available: Vec<Vec<ActionId>>,
    current: StateId,
}

impl<'m> SimulatorHandle<'m> {
    pub fn new(model: &'m Mdp, seed: u64) -> Self {
        SimulatorHandle {
            model,
            rng: stream_rng(seed, SIMULATOR_STREAM),
            available: crate::bvi::available_table(model),
            current: model.initial(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.model.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    pub fn initial(&self) -> StateId {
        self.model.initial()
    }

    pub fn is_target(&self, s: StateId) -> bool {
        self.model.is_target(s)
    }

    pub fn target_mask(&self) -> &[bool] {
        self.model.target_mask()
    }

    pub fn available(&self, s: StateId) -> &[ActionId] {
        &self.available[s.0]
    }

    pub fn available_table(&self) -> &[Vec<ActionId>] {
        &self.available
    }

    pub fn current(&self) -> StateId {
        self.current
    }

    pub fn reset(&mut self) -> StateId {
        self.current = self.model.initial();
        self.current
    }

    /// Takes `a` in the current state and returns the sampled successor.
    pub fn step(&mut self, a: ActionId) -> Result<StateId, SimError> {
        let s = self.current;
        let choice = self
            .model
            .choice(s, a)
            .ok_or(SimError::ActionNotAvailable { state: s, action: a })?;
        let mut next = choice.successors.last().expect("available rows are non-empty").state;
        if choice.successors.len() == 1 {
            self.current = next;
            return Ok(next);
        }
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for x in &choice.successors {
            acc += x.approx;
            if u < acc {
                next = x.state;
                break;
            }
        }
        self.current = next;
        Ok(next)
    }
}

/// Per state, the actions the previous stage considered best.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuidanceTable {
    pub best: Vec<Vec<ActionId>>,
}

impl GuidanceTable {
    /// Stage-one guidance: every available action.
    pub fn uniform(available: &[Vec<ActionId>]) -> Self {
        GuidanceTable { best: available.to_vec() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoopMode {
    /// Stop once the run revisits a state inside a certified end component.
    ExactEc,
    /// Stop once the set of visited states has not grown for `|S|²` steps.
    #[default]
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminalReason {
    ReachedTarget,
    Looping,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunTrace {
    pub visited: Vec<StateId>,
    pub reason: TerminalReason,
}

impl RunTrace {
    pub fn steps(&self) -> usize {
        self.visited.len() - 1
    }
}

/// Per-pair sample count above which a missed exit of probability at least
/// `p_k` has probability below `delta_c`: `ln(δ_C) / ln(1 − p_k)`.
pub fn certification_threshold(p_k: f64, delta_c: f64) -> f64 {
    libm::log(delta_c) / libm::log(1.0 - p_k)
}

/// Whether `ec` is an end component with confidence `1 − delta_c`: every
/// staying pair was sampled more than [`certification_threshold`] times.
pub fn delta_sure_ec(ec: &EcCandidate, counts: &CountTable, p_k: f64, delta_c: f64) -> bool {
    let threshold = certification_threshold(p_k, delta_c);
    ec.pairs
        .iter()
        .all(|&(s, a)| counts.pair_count(s, a) as f64 > threshold)
}

/// End components of the observed support that are certified.
pub fn certified_ecs(counts: &CountTable, p_k: f64, delta_c: f64) -> Vec<EcCandidate> {
    let threshold = certification_threshold(p_k, delta_c);
    // Any certified EC consists of well-sampled pairs only, so it lies inside
    // a MEC of the well-sampled subgraph, which is itself certified.
    mec_decomposition(&counts.support_graph_where(|p| p.total as f64 > threshold))
}

/// Incremental plateau tracking for the heuristic loop check.
#[derive(Clone, Debug, Default)]
pub struct PlateauTracker {
    seen: Vec<bool>,
    distinct: usize,
    since_growth: usize,
}

impl PlateauTracker {
    pub fn new(num_states: usize) -> Self {
        PlateauTracker { seen: alloc::vec![false; num_states], distinct: 0, since_growth: 0 }
    }

    fn clear(&mut self) {
        self.seen.iter_mut().for_each(|x| *x = false);
        self.distinct = 0;
        self.since_growth = 0;
    }

    /// Feeds the next visited state and returns steps since the set last grew.
    pub fn push(&mut self, s: StateId) -> usize {
        if self.seen[s.0] {
            self.since_growth += 1;
        } else {
            self.seen[s.0] = true;
            self.distinct += 1;
            self.since_growth = 0;
        }
        self.since_growth
    }
}

/// Loop check on a finished prefix `visited` whose last element is `s`.
///
/// `ExactEc`: `s` occurred earlier in the run and lies in a certified end
/// component of the observed support. `Heuristic`: no new state was added
/// during the last `|S|²` steps.
pub fn looping(
    visited: &[StateId],
    s: StateId,
    counts: &CountTable,
    p_k: f64,
    delta_c: f64,
    mode: LoopMode,
) -> bool {
    let Some((_, before)) = visited.split_last() else {
        return false;
    };
    if !before.contains(&s) {
        return false;
    }
    match mode {
        LoopMode::ExactEc => certified_ecs(counts, p_k, delta_c)
            .iter()
            .any(|ec| ec.contains_state(s)),
        LoopMode::Heuristic => {
            let mut tracker = PlateauTracker::new(counts.num_states());
            let mut plateau = 0;
            for &v in visited {
                plateau = tracker.push(v);
            }
            plateau >= plateau_limit(counts.num_states())
        }
    }
}

fn plateau_limit(num_states: usize) -> usize {
    num_states.saturating_mul(num_states)
}

/// Parameters of one simulated run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunParams {
    /// Probability of a uniformly random action instead of a guided one.
    pub mu: f64,
    pub p_k: f64,
    pub delta_c: f64,
    pub mode: LoopMode,
}

/// One run from the initial state until a target is hit or looping is
/// detected. Every step is recorded in `counts`.
pub fn simulate_run<R: Rng + ?Sized>(
    sim: &mut SimulatorHandle<'_>,
    rng: &mut R,
    guidance: &GuidanceTable,
    params: &RunParams,
    counts: &mut CountTable,
) -> RunTrace {
    let mut scratch = RunScratch::new(sim.num_states());
    let reason = simulate_run_with(sim, rng, guidance, params, counts, &mut scratch);
    RunTrace { visited: scratch.visited, reason }
}

/// Buffers reused across runs by [`simulate_run_with`].
#[derive(Clone, Debug, Default)]
pub struct RunScratch {
    /// States of the most recent run, in visiting order.
    pub visited: Vec<StateId>,
    tracker: PlateauTracker,
    on_path: Vec<u32>,
}

impl RunScratch {
    pub fn new(num_states: usize) -> Self {
        RunScratch {
            visited: Vec::new(),
            tracker: PlateauTracker::new(num_states),
            on_path: alloc::vec![0; num_states],
        }
    }

    fn reset(&mut self) {
        self.visited.clear();
        self.tracker.clear();
        self.on_path.iter_mut().for_each(|x| *x = 0);
    }
}

/// [`simulate_run`] without per-run allocation. The path is left in
/// `scratch.visited`.
pub fn simulate_run_with<R: Rng + ?Sized>(
    sim: &mut SimulatorHandle<'_>,
    rng: &mut R,
    guidance: &GuidanceTable,
    params: &RunParams,
    counts: &mut CountTable,
    scratch: &mut RunScratch,
) -> TerminalReason {
    scratch.reset();
    let mut s = sim.reset();
    counts.mark_seen(s);
    scratch.visited.push(s);
    if sim.is_target(s) {
        return TerminalReason::ReachedTarget;
    }
    let limit = plateau_limit(sim.num_states());
    scratch.tracker.push(s);
    scratch.on_path[s.0] = 1;
    let mut certified: Option<Vec<bool>> = None;
    let mut certified_at = u64::MAX;

    loop {
        let explore = rng.gen::<f64>() < params.mu;
        let options = if explore || guidance.best[s.0].is_empty() {
            sim.available(s)
        } else {
            &guidance.best[s.0]
        };
        let a = match options {
            [only] => *only,
            _ => options[rng.gen_range(0..options.len())],
        };
        let t = sim.step(a).expect("chosen actions are available");
        counts.record(s, a, t);
        scratch.visited.push(t);
        s = t;
        if sim.is_target(s) {
            return TerminalReason::ReachedTarget;
        }
        let plateau = scratch.tracker.push(s);
        scratch.on_path[s.0] += 1;
        let revisit = scratch.on_path[s.0] > 1;
        let stop = match params.mode {
            LoopMode::Heuristic => revisit && plateau >= limit,
            LoopMode::ExactEc => {
                revisit && {
                    // Recompute certified components only when counts could
                    // have crossed a threshold since the last check.
                    if certified.is_none() || counts.total_samples() >= certified_at.saturating_add(sim.num_states() as u64) {
                        let mut mask = alloc::vec![false; sim.num_states()];
                        for ec in certified_ecs(counts, params.p_k, params.delta_c) {
                            for q in ec.states() {
                                mask[q.0] = true;
                            }
                        }
                        certified = Some(mask);
                        certified_at = counts.total_samples();
                    }
                    certified.as_ref().is_some_and(|m| m[s.0])
                }
            }
        };
        if stop {
            return TerminalReason::Looping;
        }
    }
}
