//! The staged learning loop: parameter schedule, sample budgets, stage
//! execution and the convergence check.

use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_traits::One;
use rand_chacha::ChaCha8Rng;

use crate::bvi::{extract_policy, reset_bounds, run_bvi, run_bvi_until, IntervalValues};
use crate::counts::CountTable;
use crate::ec::{collapse, mec_decomposition, CollapsedMdp, WeightedModel};
use crate::estimation::{lower_estimate, split_budget, ConfidenceBudget};
use crate::mdp::{Mdp, MemorylessDetPolicy, Rational};
use crate::simulator::{
    delta_sure_ec, simulate_run_with, stream_rng, RunScratch, GuidanceTable, LoopMode, RunParams, SimulatorHandle,
    LEARNER_STREAM,
};

/// Early-exit threshold of practical-mode interval iteration.
pub const BVI_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BudgetMode {
    /// `N_k = c0 · k² · max(1, discovered states)`.
    #[default]
    Practical,
    /// Per-transition sample requirement turned into a simulation count via
    /// the binomial tail.
    Theoretical,
}

/// `δ_k = ε_k = p_k = 2^(−k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageParams {
    pub k: u32,
    pub delta_k: f64,
    pub eps_k: f64,
    pub p_k: f64,
    pub mu: f64,
    pub mode: BudgetMode,
}

/// `2^(−k)` as a float; exact for every `k` up to 1074.
pub fn dyadic(k: u32) -> f64 {
    libm::ldexp(1.0, -(k as i32))
}

/// `2^(−k)` as an exact rational.
pub fn dyadic_exact(k: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << k as usize)
}

pub fn stage_parameters(k: u32, mu: f64, mode: BudgetMode) -> StageParams {
    let x = dyadic(k);
    StageParams { k, delta_k: x, eps_k: x, p_k: x, mu, mode }
}

/// `c0 · k² · max(1, states)`.
pub fn practical_budget(k: u32, states_seen: usize, c0: u64) -> u64 {
    c0 * u64::from(k) * u64::from(k) * states_seen.max(1) as u64
}

/// `p = (μ · p_k / |A|)^|S|`, a lower bound on the probability of taking
/// any particular relevant transition path.
pub fn least_likely_probability(mu: f64, p_k: f64, num_actions: usize, num_states: usize) -> f64 {
    libm::pow(mu * p_k / num_actions as f64, num_states as f64)
}

/// `32 · ln(2/δ_P) · r² / (ε_k² · p_k^(2r))`, before rounding up.
pub fn per_transition_samples(delta_p: f64, eps_k: f64, p_k: f64, r: usize) -> f64 {
    let r = r as f64;
    let ln = libm::log(32.0) + libm::log(libm::log(2.0 / delta_p)) + 2.0 * libm::log(r)
        - 2.0 * libm::log(eps_k)
        - 2.0 * r * libm::log(p_k);
    libm::exp(ln)
}

fn ln_binomial_term(n: u64, i: u64, ln_p: f64, ln_q: f64) -> f64 {
    let (n, i) = (n as f64, i as f64);
    libm::lgamma(n + 1.0) - libm::lgamma(i + 1.0) - libm::lgamma(n - i + 1.0) + i * ln_p + (n - i) * ln_q
}

/// `P[X ≤ x]` for `X ~ Binomial(n, p)`, summed in log space from the tail
/// boundary outwards until terms become negligible.
pub fn binomial_cdf(n: u64, p: f64, x: u64) -> f64 {
    if x >= n || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let ln_p = libm::log(p);
    let ln_q = libm::log1p(-p);
    let sum_from = |start: u64, down: bool| -> f64 {
        let first = ln_binomial_term(n, start, ln_p, ln_q);
        let mut total = 1.0;
        let mut i = start;
        loop {
            if down {
                if i == 0 {
                    break;
                }
                i -= 1;
            } else {
                if i == n {
                    break;
                }
                i += 1;
            }
            let rel = libm::exp(ln_binomial_term(n, i, ln_p, ln_q) - first);
            total += rel;
            if rel < 1e-18 * total && (i as f64 - n as f64 * p).abs() > 1.0 {
                break;
            }
        }
        libm::exp(first) * total
    };
    if (x as f64) < n as f64 * p {
        sum_from(x, true).min(1.0)
    } else {
        (1.0 - sum_from(x + 1, false)).max(0.0)
    }
}

/// Least `N` with `P[Binomial(N, p) ≤ s_k − 1] ≤ δ_n` (up to a relative
/// rounding slack of 1e-12), searched by doubling then bisection. `None` if
/// no `N ≤ cap` qualifies.
pub fn min_simulations(s_k: u64, p: f64, delta_n: f64, cap: u64) -> Option<u64> {
    if s_k == 0 {
        return Some(0);
    }
    if p <= 0.0 {
        return None;
    }
    let ok = |n: u64| binomial_cdf(n, p, s_k - 1) <= delta_n * (1.0 + 1e-12);
    let mut lo = s_k - 1;
    let mut hi = s_k;
    while !ok(hi) {
        if hi >= cap {
            return None;
        }
        lo = hi;
        hi = hi.saturating_mul(2).min(cap);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoreticalBudget {
    pub s_k: u64,
    pub p: f64,
    pub n_k: u64,
}

/// Simulation count of the theory-faithful mode.
pub fn theoretical_budget(
    params: &StageParams,
    num_states: usize,
    num_actions: usize,
    sa_count: usize,
    r: usize,
    cap: u64,
) -> Result<TheoreticalBudget, LearnerError> {
    let budget = split_budget(params.delta_k, params.p_k, sa_count.max(1));
    let raw = libm::ceil(per_transition_samples(budget.delta_p, params.eps_k, params.p_k, r.max(1)));
    let p = least_likely_probability(params.mu, params.p_k, num_actions, num_states);
    if raw.is_nan() || raw > cap as f64 {
        return Err(LearnerError::BudgetInfeasible { s_k: raw, p });
    }
    let s_k = raw as u64;
    match min_simulations(s_k, p, budget.delta_n, cap) {
        Some(n_k) => Ok(TheoreticalBudget { s_k, p, n_k }),
        None => Err(LearnerError::BudgetInfeasible { s_k: raw, p }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LearnerError {
    /// The simulation count exceeds the configured cap.
    BudgetInfeasible { s_k: f64, p: f64 },
    InvalidConfig(&'static str),
}

impl fmt::Display for LearnerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerError::BudgetInfeasible { s_k, p } => write!(
                f,
                "theoretical budget infeasible at this scale (s_k = {s_k:e}, p = {p:e})"
            ),
            LearnerError::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
        }
    }
}

impl core::error::Error for LearnerError {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub budget: BudgetMode,
    pub loop_mode: LoopMode,
    /// Exploration factor.
    pub mu: f64,
    /// Practical budget coefficient.
    pub c0: u64,
    pub max_stages: u32,
    pub min_stages: u32,
    pub convergence_threshold: f64,
    pub seed: u64,
    /// Practical-mode sweeps per stage are `bvi_coefficient · k · |S|`.
    pub bvi_coefficient: usize,
    /// Largest admissible theoretical simulation count.
    pub budget_cap: u64,
    /// Unroll depth of the theoretical budget; `None` means `|S| · k`.
    pub unroll: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            budget: BudgetMode::Practical,
            loop_mode: LoopMode::Heuristic,
            mu: 0.1,
            c0: 200,
            max_stages: 30,
            min_stages: 3,
            convergence_threshold: 1e-3,
            seed: 0,
            bvi_coefficient: 100,
            budget_cap: 1_000_000_000,
            unroll: None,
        }
    }
}

impl LearnerConfig {
    pub fn check(&self) -> Result<(), LearnerError> {
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(LearnerError::InvalidConfig("mu must lie in (0, 1]"));
        }
        if self.min_stages < 1 || self.max_stages < self.min_stages {
            return Err(LearnerError::InvalidConfig("need max_stages >= min_stages >= 1"));
        }
        if self.bvi_coefficient == 0 {
            return Err(LearnerError::InvalidConfig("bvi coefficient must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub k: u32,
    pub params: StageParams,
    pub budget: ConfidenceBudget,
    /// Simulations of the stage budget.
    pub n_k: u64,
    /// Extra simulations run to certify end components.
    pub top_up: u64,
    /// Per-transition requirement of the theoretical mode.
    pub s_k: Option<u64>,
    /// Simulator steps over all stages so far.
    pub cumulative_samples: u64,
    pub l_s0: f64,
    pub u_s0: f64,
    pub policy: MemorylessDetPolicy,
    /// Exact value of `policy` on the true model, when someone computed it.
    pub exact_policy_value: Option<f64>,
    pub mec_count: usize,
    pub bvi_iterations: usize,
    pub fallback_states: usize,
    /// Error of this stage's counts under the previous stage's parameters.
    pub reeval_error: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl StageReport {
    pub fn error(&self) -> f64 {
        self.u_s0 - self.l_s0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxStages,
}

/// Partial-model bounds of one parameter setting.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub budget: ConfidenceBudget,
    pub collapsed: CollapsedMdp<f64>,
    pub values: IntervalValues,
    pub iterations: usize,
}

impl Evaluation {
    pub fn bounds_at_initial(&self) -> (f64, f64) {
        let q = self.collapsed.initial;
        (self.values.lower[q], self.values.upper[q])
    }
}

/// One learning run against one simulator.
#[derive(Clone, Debug)]
pub struct Learner<'m> {
    sim: SimulatorHandle<'m>,
    rng: ChaCha8Rng,
    config: LearnerConfig,
    counts: CountTable,
    guidance: GuidanceTable,
    history: Vec<StageReport>,
    converged: bool,
}

impl<'m> Learner<'m> {
    pub fn new(model: &'m Mdp, config: LearnerConfig) -> Result<Self, LearnerError> {
        config.check()?;
        let sim = SimulatorHandle::new(model, config.seed);
        let guidance = GuidanceTable::uniform(sim.available_table());
        Ok(Learner {
            rng: stream_rng(config.seed, LEARNER_STREAM),
            counts: CountTable::new(sim.num_states()),
            guidance,
            sim,
            config,
            history: Vec::new(),
            converged: false,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    pub fn guidance(&self) -> &GuidanceTable {
        &self.guidance
    }

    pub fn history(&self) -> &[StageReport] {
        &self.history
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Sweeps granted to stage `k`.
    pub fn bvi_iterations(&self, k: u32) -> usize {
        let n = self.sim.num_states();
        match self.config.budget {
            BudgetMode::Theoretical => {
                let scale = 1usize.checked_shl(k).unwrap_or(usize::MAX);
                scale.saturating_mul(n)
            }
            BudgetMode::Practical => self.config.bvi_coefficient * k as usize * n,
        }
    }

    /// Lower-estimates the current counts, collapses the observed MECs and
    /// runs interval iteration under `params`.
    pub fn evaluate(&self, params: &StageParams, iterations: usize) -> Evaluation {
        let budget = split_budget(params.delta_k, params.p_k, self.counts.observed_pairs().max(1));
        let est = lower_estimate(&self.counts, budget.delta_p);
        let mut wm = WeightedModel::from_estimate(&est, self.sim.initial(), self.sim.target_mask());
        wm.pad_unsampled(self.sim.available_table());
        let mecs = mec_decomposition(&wm.support_graph());
        let collapsed = collapse(&wm, &mecs).expect("decomposition yields disjoint components");
        let values = match params.mode {
            BudgetMode::Theoretical => run_bvi(&collapsed, iterations.max(1)).expect("at least one sweep"),
            BudgetMode::Practical => {
                run_bvi_until(&collapsed, reset_bounds(&collapsed), iterations.max(1), BVI_TOLERANCE).0
            }
        };
        Evaluation { budget, collapsed, values, iterations }
    }

    fn simulation_budget(&self, params: &StageParams) -> Result<(u64, Option<u64>), LearnerError> {
        match self.config.budget {
            BudgetMode::Practical => {
                Ok((practical_budget(params.k, self.counts.states_seen(), self.config.c0), None))
            }
            BudgetMode::Theoretical => {
                let n = self.sim.num_states();
                let r = self.config.unroll.unwrap_or(n * params.k as usize);
                let b = theoretical_budget(
                    params,
                    n,
                    self.sim.num_actions(),
                    self.counts.observed_pairs(),
                    r,
                    self.config.budget_cap,
                )?;
                Ok((b.n_k, Some(b.s_k)))
            }
        }
    }

    fn uncertified_candidates(&self, p_k: f64, delta_c: f64) -> bool {
        mec_decomposition(&self.counts.support_graph())
            .iter()
            .any(|ec| !delta_sure_ec(ec, &self.counts, p_k, delta_c))
    }

    pub fn run_stage(&mut self) -> Result<StageReport, LearnerError> {
        let k = self.history.len() as u32 + 1;
        let params = stage_parameters(k, self.config.mu, self.config.budget);
        let (n_k, s_k) = self.simulation_budget(&params)?;
        let pre = split_budget(params.delta_k, params.p_k, self.counts.observed_pairs().max(1));
        let run = RunParams {
            mu: params.mu,
            p_k: params.p_k,
            delta_c: pre.delta_c,
            mode: self.config.loop_mode,
        };
        let mut scratch = RunScratch::new(self.sim.num_states());
        for _ in 0..n_k {
            simulate_run_with(&mut self.sim, &mut self.rng, &self.guidance, &run, &mut self.counts, &mut scratch);
        }
        let mut top_up = 0;
        if self.config.loop_mode == LoopMode::ExactEc {
            while top_up < n_k.max(1) && self.uncertified_candidates(params.p_k, pre.delta_c) {
                simulate_run_with(&mut self.sim, &mut self.rng, &self.guidance, &run, &mut self.counts, &mut scratch);
                top_up += 1;
            }
        }

        let iterations = self.bvi_iterations(k);
        let eval = self.evaluate(&params, iterations);
        let (l_s0, u_s0) = eval.bounds_at_initial();
        let extraction =
            extract_policy(&eval.collapsed, &eval.values, self.sim.available_table(), &mut self.rng);
        self.guidance = GuidanceTable { best: extraction.best };

        let reeval_error = self.history.last().map(|prev| {
            let (l, u) = self.evaluate(&prev.params, prev.bvi_iterations).bounds_at_initial();
            u - l
        });
        if let (Some(prev), Some(re)) = (self.history.last(), reeval_error) {
            self.converged =
                k >= self.config.min_stages && prev.error() - re < self.config.convergence_threshold;
        }

        let report = StageReport {
            k,
            params,
            budget: eval.budget,
            n_k,
            top_up,
            s_k,
            cumulative_samples: self.counts.total_samples(),
            l_s0,
            u_s0,
            policy: extraction.policy,
            exact_policy_value: None,
            mec_count: eval.collapsed.mecs.len(),
            bvi_iterations: iterations,
            fallback_states: extraction.fallback.len(),
            reeval_error,
            wall_ms: None,
        };
        self.history.push(report.clone());
        Ok(report)
    }

    /// Whether another stage should run after the ones recorded so far.
    pub fn should_continue(&self) -> bool {
        !self.converged && (self.history.len() as u32) < self.config.max_stages
    }

    pub fn termination(&self) -> Termination {
        if self.converged {
            Termination::Converged
        } else {
            Termination::MaxStages
        }
    }

    /// Runs stages until convergence or `max_stages`.
    pub fn run(&mut self) -> Result<(Vec<StageReport>, Termination), LearnerError> {
        while self.should_continue() {
            self.run_stage()?;
        }
        Ok((self.history.clone(), self.termination()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::policy_value_exact;
    use crate::mdp::{ratio, MdpBuilder};
    use crate::models;

    #[test]
    fn schedule_is_dyadic() {
        for k in 1..=60 {
            let p = stage_parameters(k, 0.1, BudgetMode::Practical);
            let exact = dyadic_exact(k);
            for x in [p.delta_k, p.eps_k, p.p_k] {
                assert_eq!(Rational::from_float(x).unwrap(), exact);
            }
        }
        assert_eq!(dyadic_exact(3), ratio(1, 8));
    }

    #[test]
    fn practical_budget_examples() {
        assert_eq!(practical_budget(2, 10, 50), 2000);
        assert_eq!(practical_budget(1, 0, 50), 50);
        assert_eq!(practical_budget(4, 7, 50), 4 * practical_budget(2, 7, 50));
    }

    #[test]
    fn binomial_search_examples() {
        assert_eq!(min_simulations(1, 0.5, 0.25, 1000), Some(2));
        assert_eq!(min_simulations(0, 0.5, 0.25, 1000), Some(0));
        assert_eq!(min_simulations(5, 0.0, 0.25, 1000), None);
        assert_eq!(min_simulations(1000, 1e-6, 0.01, 1_000_000), None);
        let p = least_likely_probability(1.0, 0.25, 1, 2);
        assert!((p - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn binomial_cdf_matches_direct_sum() {
        let direct = |n: u64, p: f64, x: u64| -> f64 {
            let mut c = 1.0f64;
            let mut total = 0.0;
            for i in 0..=x.min(n) {
                if i > 0 {
                    c = c * (n - i + 1) as f64 / i as f64;
                }
                total += c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
            }
            total
        };
        for (n, p, x) in [(10, 0.3, 2), (40, 0.5, 25), (60, 0.1, 0), (30, 0.9, 29), (20, 0.2, 10)] {
            let a = binomial_cdf(n, p, x);
            let b = direct(n, p, x);
            assert!((a - b).abs() < 1e-12, "{n} {p} {x}: {a} vs {b}");
        }
    }

    #[test]
    fn large_models_are_infeasible_in_theory_mode() {
        let params = stage_parameters(1, 0.1, BudgetMode::Theoretical);
        let err = theoretical_budget(&params, 20, 3, 10, 20, 1_000_000_000).unwrap_err();
        assert!(matches!(err, LearnerError::BudgetInfeasible { .. }));
    }

    #[test]
    fn max_stages_bounds_reports() {
        let m = models::split_loop();
        let cfg = LearnerConfig { max_stages: 1, min_stages: 1, seed: 7, ..Default::default() };
        let (reports, term) = Learner::new(&m, cfg).unwrap().run().unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(term, Termination::MaxStages);
        assert!(reports[0].l_s0 <= 0.5 && 0.5 <= reports[0].u_s0);
    }

    #[test]
    fn initial_target_is_trivially_solved() {
        let mut b = MdpBuilder::new(2);
        b.edge(0, "a", 1, 1, 1).edge(1, "a", 0, 1, 1).target([0]);
        let m = b.build().unwrap();
        let (reports, term) = Learner::new(&m, LearnerConfig::default()).unwrap().run().unwrap();
        assert_eq!(term, Termination::Converged);
        for r in &reports {
            assert_eq!((r.l_s0, r.u_s0), (1.0, 1.0));
        }
    }

    #[test]
    fn trap_converges_to_zero() {
        let mut b = MdpBuilder::new(3);
        b.edge(0, "a", 1, 1, 1).edge(1, "a", 0, 1, 1).edge(2, "a", 2, 1, 1).target([2]);
        let m = b.build().unwrap();
        let (reports, term) = Learner::new(&m, LearnerConfig::default()).unwrap().run().unwrap();
        assert_eq!(term, Termination::Converged);
        let last = reports.last().unwrap();
        assert_eq!((last.l_s0, last.u_s0), (0.0, 0.0));
        assert_eq!(last.mec_count, 1);
    }

    #[test]
    fn samples_grow_every_stage() {
        let m = models::split_loop_detour();
        let cfg = LearnerConfig { max_stages: 5, min_stages: 5, seed: 3, ..Default::default() };
        let (reports, _) = Learner::new(&m, cfg).unwrap().run().unwrap();
        for w in reports.windows(2) {
            assert!(w[1].cumulative_samples > w[0].cumulative_samples);
        }
        let last = reports.last().unwrap();
        let v = policy_value_exact(&m, &last.policy).unwrap();
        assert_eq!(v[0], ratio(1, 2));
    }
}
