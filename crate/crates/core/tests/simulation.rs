use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use reachrl_core::gen::{random_model, GenParams};
use reachrl_core::learner::dyadic_exact;
use reachrl_core::simulator::{
    certification_threshold, certified_ecs, simulate_run, GuidanceTable, LoopMode, RunParams,
    SimulatorHandle,
};
use reachrl_core::{models, ActionId, CountTable, Mdp, MdpBuilder, Rational, StateId};

fn one_sided_p(misses: u64, trials: u64, rate: f64) -> f64 {
    if misses == 0 {
        1.0
    } else {
        Binomial::new(rate, trials).unwrap().sf(misses - 1)
    }
}

#[test]
fn counters_stay_consistent_after_every_step() {
    let m = random_model(&GenParams::default(), 5);
    let mut sim = SimulatorHandle::new(&m, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = CountTable::new(m.num_states());
    for _ in 0..200 {
        let mut s = sim.reset();
        for _ in 0..20 {
            let avail = sim.available(s).to_vec();
            let a = avail[rand::Rng::gen_range(&mut rng, 0..avail.len())];
            let t = sim.step(a).unwrap();
            counts.record(s, a, t);
            assert!(counts.marginals_consistent());
            s = t;
        }
    }
}

#[test]
fn uniform_runs_recover_transition_probabilities() {
    let m = models::layered6();
    let mut sim = SimulatorHandle::new(&m, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let guidance = GuidanceTable::uniform(sim.available_table());
    let params = RunParams { mu: 1.0, p_k: 0.5, delta_c: 0.01, mode: LoopMode::Heuristic };
    let mut counts = CountTable::new(m.num_states());
    while counts.total_samples() < 40_000 {
        simulate_run(&mut sim, &mut rng, &guidance, &params, &mut counts);
    }
    for s in m.states() {
        for c in m.choices(s) {
            let n = counts.pair_count(s, c.action);
            if n < 10_000 || m.is_target(s) {
                continue;
            }
            for x in &c.successors {
                let p = x.prob.to_f64().unwrap();
                let freq = counts.triple_count(s, c.action, x.state) as f64 / n as f64;
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * sigma + 1e-12, "{s:?} {:?}: {freq} vs {p}", c.action);
            }
        }
    }
}

#[test]
fn same_seed_same_trace() {
    let m = models::random8();
    let trace = |seed: u64| {
        let mut sim = SimulatorHandle::new(&m, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let guidance = GuidanceTable::uniform(sim.available_table());
        let params = RunParams { mu: 0.3, p_k: 0.25, delta_c: 0.01, mode: LoopMode::ExactEc };
        let mut counts = CountTable::new(m.num_states());
        let runs: Vec<_> =
            (0..50).map(|_| simulate_run(&mut sim, &mut rng, &guidance, &params, &mut counts)).collect();
        (runs, counts)
    };
    assert_eq!(trace(9), trace(9));
    assert_ne!(trace(9).1, trace(10).1);
}

/// `0 -a-> {1: 1 − p, 2: p}`, `1 -a-> 0`, target 2.
fn near_ec(k: u32) -> Mdp {
    let p = dyadic_exact(k);
    let mut b = MdpBuilder::new(3);
    b.transition(0, "a", 1, <Rational as num_traits::One>::one() - &p).unwrap();
    b.transition(0, "a", 2, p).unwrap();
    b.edge(1, "a", 0, 1, 1).edge(2, "a", 2, 1, 1).target([2]);
    b.build().unwrap()
}

/// Samples the cycle until it either leaves or every pair is past the
/// certification threshold; true if the non-EC ends up certified.
fn falsely_certified(m: &Mdp, seed: u64, p_k: f64, delta_c: f64) -> bool {
    let mut sim = SimulatorHandle::new(m, seed);
    let mut counts = CountTable::new(m.num_states());
    let threshold = certification_threshold(p_k, delta_c);
    let a = ActionId(0);
    let mut s = sim.reset();
    loop {
        let t = sim.step(a).unwrap();
        counts.record(s, a, t);
        if m.is_target(t) {
            return false;
        }
        s = t;
        let ready = [StateId(0), StateId(1)].iter().all(|&q| counts.pair_count(q, a) as f64 > threshold);
        if ready {
            return certified_ecs(&counts, p_k, delta_c).iter().any(|ec| ec.contains_state(StateId(0)));
        }
    }
}

#[test]
fn false_certification_stays_within_budget() {
    let k = 3;
    let m = near_ec(k);
    let (p_k, delta_c) = (0.125, 0.05);
    let trials = 1000;
    let wrong = (0..trials).filter(|&seed| falsely_certified(&m, seed, p_k, delta_c)).count() as u64;
    assert!(one_sided_p(wrong, trials, delta_c) >= 0.01, "{wrong} false certifications");
}
