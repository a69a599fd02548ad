mod common;

use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use reachrl::mdpx::{parse_mdpx, parse_mdpx_with_target, write_mdpx};
use reachrl::prism::import_prism_explicit;
use reachrl_core::exact::optimal_exact;
use reachrl_core::gen::{random_model, GenParams};
use reachrl_core::{models, Rational};

use common::{rows, to_prism};

fn corpus(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mdpx_round_trip(seed in any::<u64>(), states in 2usize..9, actions in 1usize..4) {
        let m = random_model(&GenParams { max_states: states, max_actions: actions, ..GenParams::default() }, seed);
        let text = write_mdpx(&m);
        let back = parse_mdpx(&text).unwrap();
        prop_assert!(back.structurally_eq(&m));
        prop_assert_eq!(write_mdpx(&back), text);
    }

    #[test]
    fn prism_import_preserves_structure_and_value(seed in any::<u64>()) {
        let m = random_model(&GenParams::default(), seed);
        let (tra, lab) = to_prism(&m);
        let import = import_prism_explicit(&tra, &lab, "goal").unwrap();
        prop_assert!(import.warnings.is_empty());
        let got = &import.mdp;
        prop_assert_eq!(got.num_states(), m.num_states());
        prop_assert_eq!(got.initial(), m.initial());
        prop_assert_eq!(got.target_mask(), m.target_mask());
        prop_assert_eq!(rows(got), rows(&m));
        let (a, b) = (optimal_exact(got), optimal_exact(&m));
        prop_assert_eq!(a.at_initial(got), b.at_initial(&m));
    }

    #[test]
    fn convert_then_parse_solves_like_the_import(seed in any::<u64>()) {
        let m = random_model(&GenParams::default(), seed);
        let (tra, lab) = to_prism(&m);
        let direct = import_prism_explicit(&tra, &lab, "goal").unwrap().mdp;
        let reparsed = parse_mdpx_with_target(&write_mdpx(&direct), "goal").unwrap();
        prop_assert!(reparsed.structurally_eq(&direct));
        prop_assert_eq!(optimal_exact(&reparsed).values, optimal_exact(&direct).values);
    }
}

#[test]
fn corpus_models_match_the_builtin_ones() {
    assert!(parse_mdpx(&corpus("split_loop.mdpx")).unwrap().structurally_eq(&models::split_loop()));
    assert!(parse_mdpx(&corpus("detour.mdpx")).unwrap().structurally_eq(&models::split_loop_detour()));
}

#[test]
fn builtin_models_round_trip() {
    for m in [models::split_loop(), models::split_loop_detour(), models::layered6(), models::trap_mec(), models::target_in_cycle(), models::token_ring3(), models::random8()] {
        assert!(parse_mdpx(&write_mdpx(&m)).unwrap().structurally_eq(&m));
    }
}

#[test]
fn corpus_prism_pair_imports() {
    let import = import_prism_explicit(&corpus("chain.tra"), &corpus("chain.lab"), "done").unwrap();
    assert_eq!(import.mdp.num_states(), 3);
    assert_eq!(import.mdp.targets().map(|s| s.0).collect::<Vec<_>>(), vec![2]);
    assert_eq!(optimal_exact(&import.mdp).at_initial(&import.mdp), &Rational::new(1.into(), 2.into()));
    assert!(import_prism_explicit(&corpus("chain.tra"), &corpus("noinit.lab"), "done").is_err());
}

#[test]
fn bad_sum_is_located() {
    let e = parse_mdpx(&corpus("bad_sum.mdpx")).unwrap_err();
    assert_eq!(e.to_string(), "5:1: probabilities of (0, a) sum to 3/4, not 1");
}
