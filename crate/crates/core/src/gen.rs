//! Seeded random rational models for oracle and property tests.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{ratio, Mdp, MdpBuilder, StateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub min_states: usize,
    pub max_states: usize,
    /// Actions per state are drawn from `1..=max_actions`.
    pub max_actions: usize,
    /// Every probability is `k/d` with `d <= max_denominator`.
    pub max_denominator: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { min_states: 2, max_states: 8, max_actions: 3, max_denominator: 4 }
    }
}

/// Draws a model whose initial state (0) reaches the target (the last
/// state) with positive probability under some policy. Same seed, same model.
pub fn random_model(params: &GenParams, seed: u64) -> Mdp {
    assert!(params.min_states >= 2 && params.min_states <= params.max_states);
    assert!(params.max_actions >= 1 && params.max_denominator >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let m = draw(params, &mut rng);
        if !m.zero_value_states().contains(&StateId(0)) {
            return m;
        }
    }
}

fn draw(params: &GenParams, rng: &mut ChaCha8Rng) -> Mdp {
    let n = rng.gen_range(params.min_states..=params.max_states);
    let target = n - 1;
    let names: Vec<String> = (0..params.max_actions).map(|i| format!("a{i}")).collect();
    let mut b = MdpBuilder::new(n);
    for s in 0..n {
        if s == target {
            b.edge(s, "a0", s, 1, 1);
            continue;
        }
        let actions = rng.gen_range(1..=params.max_actions);
        for name in names.iter().take(actions) {
            let den = rng.gen_range(1..=params.max_denominator) as usize;
            let width = rng.gen_range(1..=den.min(3).min(n));
            let parts = split(den, width, rng);
            let succ = sample(rng, n, width);
            for (t, k) in succ.iter().zip(parts) {
                b.transition(s, name, t, ratio(k as i64, den as i64))
                    .expect("generator produced an invalid transition");
            }
        }
    }
    b.label("goal", [target]).target([target]);
    b.build().expect("generator produced an invalid model")
}

/// Random composition of `total` into `parts` positive integers.
fn split(total: usize, parts: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cuts: Vec<usize> = sample(rng, total - 1, parts - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(total - prev);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::validate;

    #[test]
    fn generated_models_are_valid_and_reproducible() {
        let params = GenParams::default();
        for seed in 0..50 {
            let m = random_model(&params, seed);
            assert!(validate(&m).is_empty());
            assert!(m.num_states() >= 2 && m.num_states() <= 8);
            assert!(!m.zero_value_states().contains(&m.initial()));
            for s in m.states() {
                for c in m.choices(s) {
                    for x in &c.successors {
                        assert!(*x.prob.denom() <= 4.into());
                    }
                }
            }
            assert!(m.structurally_eq(&random_model(&params, seed)));
        }
    }
}
