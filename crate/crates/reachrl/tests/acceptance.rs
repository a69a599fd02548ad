//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use reachrl::harness::{run_bench, seed_list, LEARN_HEADER};
use reachrl::mdpx::{parse_mdpx, write_mdpx};
use reachrl::prism::import_prism_explicit;
use reachrl_core::bvi::{reset_bounds, run_bvi_until};
use reachrl_core::ec::collapse_model;
use reachrl_core::estimation::lower_estimate;
use reachrl_core::exact::{enumerate_policies, eps_diff_bound, optimal_exact, policy_value_exact, DEFAULT_POLICY_CAP};
use reachrl_core::gen::{random_model, GenParams};
use reachrl_core::learner::{
    dyadic_exact, least_likely_probability, min_simulations, stage_parameters, BudgetMode, LearnerConfig,
};
use reachrl_core::simulator::{certification_threshold, certified_ecs, SimulatorHandle};
use reachrl_core::{models, ActionId, CountTable, Mdp, MdpBuilder, Rational, StateId};

/// Significance level of every statistical acceptance test.
const ALPHA: f64 = 0.01;
/// Absolute tolerance of floating-point value comparisons.
const VALUE_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn criterion(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
    let verdict = if result.pass { "PASS" } else { "FAIL" };
    println!("{verdict} C{id} {name}: {} [{:.1}s]", result.detail, start.elapsed().as_secs_f64());
    result.pass
}

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(name)
}

fn reachrl(args: &[&str]) -> (bool, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_reachrl"))
        .args(args)
        .env_remove("REACHRL_SEED")
        .output()
        .expect("binary runs");
    (o.status.success(), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap()
}

/// `P[X >= observed]` for `X ~ Binomial(trials, rate)`.
fn upper_tail(observed: u64, trials: u64, rate: f64) -> f64 {
    if observed == 0 {
        1.0
    } else {
        Binomial::new(rate, trials).unwrap().sf(observed - 1)
    }
}

fn brute_force(m: &Mdp) -> Rational {
    enumerate_policies(m, DEFAULT_POLICY_CAP)
        .unwrap()
        .map(|pi| policy_value_exact(m, &pi).unwrap()[m.initial().0].clone())
        .max()
        .unwrap()
}

fn c1_golden_split_loop() -> Outcome {
    let start = Instant::now();
    let (ok, solved) = reachrl(&["solve", corpus("split_loop.mdpx").to_str().unwrap()]);
    if !ok || solved != "0.5\n" {
        return outcome(false, format!("solve printed {solved:?}"));
    }
    let (ok, csv_text) = reachrl(&["learn", corpus("split_loop.mdpx").to_str().unwrap(), "--seed", "7"]);
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header_ok = reader.headers().map(|h| h == &csv::StringRecord::from(LEARN_HEADER.to_vec())).unwrap_or(false);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let Some(last) = rows.last() else { return outcome(false, "learn wrote no rows") };
    let col = |name: &str| &last[LEARN_HEADER.iter().position(|h| *h == name).unwrap()];
    let error: f64 = col("error").parse().unwrap();
    let value = col("policy_value");
    let elapsed = start.elapsed();
    let pass = ok
        && header_ok
        && rows.len() <= 15
        && error <= 0.05
        && value == "0.5"
        && col("is_optimal") == "true"
        && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!("solve 0.5; learn {} stages, error {error:.4}, policy value {value}, {:.2}s (limits 15 stages, 0.05, 5s)", rows.len(), elapsed.as_secs_f64()),
    )
}

fn c2_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut agree = 0;
    for seed in 0..100 {
        let m = random_model(&GenParams::default(), seed);
        let v = to_f64(&brute_force(&m));
        let cm = collapse_model(&m).map_weights(to_f64);
        let (b, _) = run_bvi_until(&cm, reset_bounds(&cm), 1_000_000, 1e-13);
        let (l, u) = (b.lower[cm.initial], b.upper[cm.initial]);
        agree += usize::from((l - v).abs() <= VALUE_TOL && (u - v).abs() <= VALUE_TOL);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(agree == 100 && secs < 60.0, format!("{agree}/100 models agree within {VALUE_TOL:e}"))
}

fn c3_collapse_preserves_value() -> Outcome {
    let mut agree = 0;
    for seed in 0..100 {
        let m = random_model(&GenParams::default(), seed);
        let cm = collapse_model(&m);
        let q = cm.to_mdp(&m);
        let vq = to_f64(optimal_exact(&q).at_initial(&q));
        agree += usize::from((vq - to_f64(&brute_force(&m))).abs() <= VALUE_TOL);
    }
    outcome(agree == 100, format!("{agree}/100 quotients keep the optimal value"))
}

/// `1 / ((2D)^(2|A||S|) · 2^(2|S|))` with `D` recomputed from the rows.
fn bound_from_scratch(m: &Mdp) -> Rational {
    let mut d = BigInt::one();
    for s in m.states() {
        for c in m.choices(s) {
            let lcm = c.successors.iter().fold(BigInt::one(), |acc, x| num_integer::lcm(acc, x.prob.denom().clone()));
            d = d.max(lcm);
        }
    }
    let e_actions = 2 * m.num_actions() * m.num_states();
    let denom = num_traits::pow(BigInt::from(2) * d, e_actions) * num_traits::pow(BigInt::from(2), 2 * m.num_states());
    Rational::new(BigInt::one(), denom)
}

fn c4_gap_bound() -> Outcome {
    let start = Instant::now();
    let params = GenParams { min_states: 2, max_states: 5, max_actions: 2, max_denominator: 4 };
    let (mut holds, mut vacuous) = (0, 0);
    for seed in 0..200 {
        let m = random_model(&params, 50_000 + seed);
        let bound = bound_from_scratch(&m);
        assert_eq!(bound, eps_diff_bound(&m), "seed {seed}: bound formulas disagree");
        let vectors: Vec<Vec<Rational>> = enumerate_policies(&m, DEFAULT_POLICY_CAP)
            .unwrap()
            .map(|pi| policy_value_exact(&m, &pi).unwrap())
            .collect();
        let mut min_l1: Option<Rational> = None;
        for (i, a) in vectors.iter().enumerate() {
            for b in &vectors[i + 1..] {
                let l1: Rational = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                if l1.is_positive() && min_l1.as_ref().is_none_or(|m| &l1 < m) {
                    min_l1 = Some(l1);
                }
            }
        }
        match min_l1 {
            Some(d) => holds += usize::from(bound <= d),
            None => {
                holds += 1;
                vacuous += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        holds == 200 && secs < 120.0,
        format!("{holds}/200 models satisfy bound <= min L1 distance ({vacuous} with a single value vector)"),
    )
}

fn c5_hoeffding_coverage() -> Outcome {
    let delta_p = 0.05;
    let repeats = 2000u64;
    let mut worst = f64::INFINITY;
    let mut notes = Vec::new();
    for (i, &p) in [0.1, 0.5, 0.9].iter().enumerate() {
        for &n in &[50u64, 500] {
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + 10 * i as u64 + n);
            let misses = (0..repeats)
                .filter(|_| {
                    let mut counts = CountTable::new(2);
                    for _ in 0..n {
                        let t = if rng.gen::<f64>() < p { StateId(1) } else { StateId(0) };
                        counts.record(StateId(0), ActionId(0), t);
                    }
                    let est = lower_estimate(&counts, delta_p);
                    let row = est.row(StateId(0), ActionId(0)).unwrap();
                    let hit = row.lower.iter().find(|x| x.0 == StateId(1)).map_or(0.0, |x| x.1);
                    hit > p
                })
                .count() as u64;
            let tail = upper_tail(misses, repeats, delta_p);
            worst = worst.min(tail);
            notes.push(format!("({p},{n}):{misses}"));
        }
    }
    outcome(
        worst >= ALPHA,
        format!("over-estimates per (p,n) out of {repeats}: {}; smallest binomial p-value {worst:.3}", notes.join(" ")),
    )
}

fn c6_policy_stabilization() -> Outcome {
    let golden: [(&str, Mdp); 5] = [
        ("detour", models::split_loop_detour()),
        ("layered6", models::layered6()),
        ("trap_mec", models::trap_mec()),
        ("target_in_cycle", models::target_in_cycle()),
        ("random8", models::random8()),
    ];
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let seeds = seed_list(0, 50);
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, m) in &golden {
        let results = run_bench(m, LearnerConfig::default(), &seeds, jobs);
        let good = results
            .iter()
            .filter(|t| t.error.is_none() && !t.rows.is_empty() && t.rows.iter().rev().take(3).all(|r| r.is_optimal))
            .count();
        pass &= good * 10 >= 9 * seeds.len();
        notes.push(format!("{name} {good}/50"));
    }
    outcome(pass, format!("trials with optimal last 3 policies: {} (need 45/50 each)", notes.join(", ")))
}

/// `0 -a-> {1: 1 − p_k, 2: p_k}`, `1 -a-> 0`, target 2.
fn near_ec(k: u32) -> Mdp {
    let p = dyadic_exact(k);
    let mut b = MdpBuilder::new(3);
    b.transition(0, "a", 1, Rational::one() - &p).unwrap();
    b.transition(0, "a", 2, p).unwrap();
    b.edge(1, "a", 0, 1, 1).edge(2, "a", 2, 1, 1).target([2]);
    b.build().unwrap()
}

fn c7_false_certification() -> Outcome {
    let k = 3;
    let m = near_ec(k);
    let p_k = to_f64(&dyadic_exact(k));
    let delta_c = 0.05;
    let threshold = certification_threshold(p_k, delta_c);
    let a = ActionId(0);
    let trials = 1000u64;
    let wrong = (0..trials)
        .filter(|&seed| {
            let mut sim = SimulatorHandle::new(&m, seed);
            let mut counts = CountTable::new(m.num_states());
            let mut s = sim.reset();
            loop {
                let t = sim.step(a).unwrap();
                counts.record(s, a, t);
                if m.is_target(t) {
                    return false;
                }
                s = t;
                if [StateId(0), StateId(1)].iter().all(|&q| counts.pair_count(q, a) as f64 > threshold) {
                    return certified_ecs(&counts, p_k, delta_c).iter().any(|ec| ec.contains_state(StateId(0)));
                }
            }
        })
        .count() as u64;
    let tail = upper_tail(wrong, trials, delta_c);
    outcome(
        tail >= ALPHA,
        format!("{wrong}/{trials} false certifications at p_k = {p_k}, delta_C = {delta_c}; binomial p-value {tail:.3}"),
    )
}

fn c8_formulas() -> Outcome {
    let mut failures = Vec::new();
    for k in 1..=40u32 {
        let exact = Rational::new(BigInt::one(), num_traits::pow(BigInt::from(2), k as usize));
        let p = stage_parameters(k, 0.1, BudgetMode::Practical);
        let want = 1.0 / (1u64 << k) as f64;
        if dyadic_exact(k) != exact || p.delta_k != want || p.eps_k != want || p.p_k != want {
            failures.push(format!("schedule k={k}"));
        }
    }
    if min_simulations(1, 0.5, 0.25, 1_000_000) != Some(2) {
        failures.push("N_k for (1, 0.5, 0.25)".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..20 {
        let mu = rng.gen_range(0.01..=1.0);
        let k = rng.gen_range(1..=12);
        let p_k = 1.0 / f64::from(1u32 << k);
        let actions = rng.gen_range(1..=5usize);
        let states = rng.gen_range(1..=12usize);
        let direct = (0..states).fold(1.0, |acc, _| acc * (mu * p_k / actions as f64));
        let got = least_likely_probability(mu, p_k, actions, states);
        if ((got - direct) / direct).abs() > 1e-12 {
            failures.push(format!("p tuple {i}"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "schedule k=1..40 exact, N_k(1, 0.5, 0.25) = 2, 20/20 p tuples within 1e-12".into()
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    )
}

fn c9_ring_sanity() -> Outcome {
    let m = models::token_ring3();
    let shape = (m.num_states(), m.num_transitions());
    if shape != (7, 21) || !optimal_exact(&m).at_initial(&m).is_one() {
        return outcome(false, format!("ring has shape {shape:?}"));
    }
    let results = run_bench(&m, LearnerConfig::default(), &seed_list(0, 10), 1);
    let early: Vec<Option<u32>> = results.iter().map(|t| t.stabilization_stage()).collect();
    let good = early.iter().filter(|k| k.is_some_and(|k| k <= 3)).count();
    outcome(good >= 9, format!("{good}/10 trials optimal from stage <= 3 on (stabilization stages {early:?})"))
}

fn files_identical(a: &Path, b: &Path) -> bool {
    reachrl::harness::BENCH_FILES.iter().all(|f| fs::read(a.join(f)).ok().is_some_and(|x| Some(x) == fs::read(b.join(f)).ok()))
}

fn c10_determinism_and_formats() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let model = corpus("detour.mdpx");
    let outs = [dir.path().join("first"), dir.path().join("second")];
    for out in &outs {
        let (ok, _) = reachrl(&["bench", model.to_str().unwrap(), "--trials", "10", "--seed", "21", "--out", out.to_str().unwrap()]);
        assert!(ok, "bench failed");
    }
    let identical = files_identical(&outs[0], &outs[1]);

    let mut corpus_files = 0;
    let mut round_trips = 0;
    for entry in fs::read_dir(corpus("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "mdpx") {
            let text = fs::read_to_string(&path).unwrap();
            let Ok(m) = parse_mdpx(&text) else { continue };
            corpus_files += 1;
            let written = write_mdpx(&m);
            let back = parse_mdpx(&written).unwrap();
            round_trips += usize::from(back.structurally_eq(&m) && write_mdpx(&back) == written);
        }
    }
    let mut random_ok = 0;
    let mut prism_ok = 0;
    for seed in 0..200 {
        let m = random_model(&GenParams::default(), 90_000 + seed);
        let back = parse_mdpx(&write_mdpx(&m)).unwrap();
        random_ok += usize::from(back.structurally_eq(&m));
        let (tra, lab) = common::to_prism(&m);
        let import = import_prism_explicit(&tra, &lab, "goal").unwrap();
        let same = common::rows(&import.mdp) == common::rows(&m)
            && import.mdp.target_mask() == m.target_mask()
            && optimal_exact(&import.mdp).values == optimal_exact(&m).values;
        prism_ok += usize::from(same);
    }
    let chain = import_prism_explicit(
        &fs::read_to_string(corpus("chain.tra")).unwrap(),
        &fs::read_to_string(corpus("chain.lab")).unwrap(),
        "done",
    );
    let chain_ok = chain.is_ok_and(|c| {
        let v = optimal_exact(&c.mdp);
        v.at_initial(&c.mdp) == &Rational::new(1.into(), 2.into()) && v.values[1].is_zero()
    });
    let pass = identical && round_trips == corpus_files && random_ok == 200 && prism_ok == 200 && chain_ok;
    outcome(
        pass,
        format!(
            "bench artifacts identical: {identical}; corpus round trips {round_trips}/{corpus_files}; random MDPX {random_ok}/200; PRISM import {prism_ok}/200; corpus PRISM pair ok: {chain_ok}"
        ),
    )
}

fn main() {
    let results = [
        criterion(1, "golden example solve/learn", c1_golden_split_loop),
        criterion(2, "known-model BVI equals policy enumeration", c2_oracle_equivalence),
        criterion(3, "collapse preserves the optimal value", c3_collapse_preserves_value),
        criterion(4, "gap lower bound below smallest value distance", c4_gap_bound),
        criterion(5, "Hoeffding lower estimate coverage", c5_hoeffding_coverage),
        criterion(6, "optimal-policy stabilization", c6_policy_stabilization),
        criterion(7, "end-component false certification rate", c7_false_certification),
        criterion(8, "stage parameters and budget formulas", c8_formulas),
        criterion(9, "token ring converges by stage 3", c9_ring_sanity),
        criterion(10, "determinism and file formats", c10_determinism_and_formats),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
