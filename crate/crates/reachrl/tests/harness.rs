use reachrl::harness::{aggregate, median_std, run_bench, run_trial, seed_list, Oracle};
use reachrl_core::exact::{optimal_exact, policy_value_exact};
use reachrl_core::learner::{LearnerConfig, Termination};
use reachrl_core::models;

fn config(seed: u64, max_stages: u32) -> LearnerConfig {
    LearnerConfig { seed, max_stages, min_stages: 1, c0: 20, ..LearnerConfig::default() }
}

#[test]
fn rows_carry_oracle_policy_values() {
    let m = models::split_loop_detour();
    let oracle = Oracle::new(&m);
    let best = optimal_exact(&m);
    let trial = run_trial(&m, &oracle, config(1, 4), |_| {});
    assert!(trial.error.is_none());
    for row in &trial.rows {
        let exact = &policy_value_exact(&m, &row.report.policy).unwrap()[m.initial().0];
        assert_eq!(&row.policy_value, exact);
        assert_eq!(row.is_optimal, exact == best.at_initial(&m));
        assert!(row.report.wall_ms.is_some());
    }
}

#[test]
fn shorter_trials_are_carried_forward() {
    let m = models::split_loop();
    let oracle = Oracle::new(&m);
    let short = run_trial(&m, &oracle, config(1, 2), |_| {});
    let long = run_trial(&m, &oracle, config(2, 4), |_| {});
    assert_eq!(short.termination, Some(Termination::MaxStages));
    assert_eq!((short.rows.len(), long.rows.len()), (2, 4));
    let agg = aggregate(&[short.clone(), long.clone()]);
    assert_eq!(agg.len(), 4);
    assert_eq!(agg.iter().map(|r| r.padded).collect::<Vec<_>>(), [0, 0, 1, 1]);
    assert!(agg.iter().all(|r| r.trials == 2));
    let l = [short.rows[1].report.l_s0, long.rows[3].report.l_s0];
    assert_eq!(agg[3].lower, median_std(&l));
}

#[test]
fn bench_matches_sequential_trials_in_seed_order() {
    let m = models::layered6();
    let oracle = Oracle::new(&m);
    let seeds = seed_list(40, 6);
    let parallel = run_bench(&m, config(0, 3), &seeds, 3);
    for (t, &seed) in parallel.iter().zip(&seeds) {
        let solo = run_trial(&m, &oracle, config(seed, 3), |_| {});
        assert_eq!(t.seed, seed);
        let strip = |rows: &[reachrl::harness::StageRow]| {
            rows.iter().map(|r| (r.report.l_s0, r.report.u_s0, r.report.cumulative_samples, r.policy_value.clone())).collect::<Vec<_>>()
        };
        assert_eq!(strip(&t.rows), strip(&solo.rows));
    }
}

#[test]
fn stabilization_stage_is_the_start_of_the_optimal_suffix() {
    let m = models::split_loop();
    let oracle = Oracle::new(&m);
    let mut trial = run_trial(&m, &oracle, config(3, 4), |_| {});
    assert_eq!(trial.stabilization_stage(), Some(1));
    trial.rows[1].is_optimal = false;
    assert_eq!(trial.stabilization_stage(), Some(3));
    trial.rows[3].is_optimal = false;
    assert_eq!(trial.stabilization_stage(), None);
}
