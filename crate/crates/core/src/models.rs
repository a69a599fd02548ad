//! Small hand-built models used as golden references.
//!
//! Target states are absorbing for reachability purposes, but every state
//! still needs an available action, so targets carry a self-loop.

use crate::gen::{random_model, GenParams};
use crate::mdp::{Mdp, MdpBuilder};

/// `s0 -a-> {s1: 1/2, T: 1/2}`, `s1 -a-> s2`, `s2 -a-> s1`, target `T = 3`.
/// Optimal value 1/2; `{s1, s2}` is an end component.
pub fn split_loop() -> Mdp {
    let mut b = MdpBuilder::new(4);
    b.edge(0, "a", 1, 1, 2)
        .edge(0, "a", 3, 1, 2)
        .edge(1, "a", 2, 1, 1)
        .edge(2, "a", 1, 1, 1)
        .edge(3, "a", 3, 1, 1)
        .label("goal", [3])
        .target([3]);
    b.build().unwrap()
}

/// [`split_loop`] plus a worse action `b` at `s0`: `{T: 1/4, s1: 3/4}`.
pub fn split_loop_detour() -> Mdp {
    let mut b = MdpBuilder::new(4);
    b.edge(0, "a", 1, 1, 2)
        .edge(0, "a", 3, 1, 2)
        .edge(0, "b", 3, 1, 4)
        .edge(0, "b", 1, 3, 4)
        .edge(1, "a", 2, 1, 1)
        .edge(2, "a", 1, 1, 1)
        .edge(3, "a", 3, 1, 1)
        .label("goal", [3])
        .target([3]);
    b.build().unwrap()
}

/// Three layers of two choices each, with one safe route of value 3/4.
///
/// ```text
/// s0 -a-> {s1: 1/2, s2: 1/2}    s0 -b-> {s2: 1}
/// s1 -a-> {T: 1/2, F: 1/2}      s1 -b-> {s3: 1}
/// s2 -a-> {s3: 1/2, F: 1/2}     s2 -b-> {T: 1/4, F: 3/4}
/// s3 -a-> {T: 3/4, F: 1/4}
/// ```
/// `T = 4`, `F = 5` (absorbing sink). Optimal: `s0:a, s1:b, s2:a, s3:a`,
/// value `1/2·3/4 + 1/2·1/2·3/4 = 9/16`.
pub fn layered6() -> Mdp {
    let mut b = MdpBuilder::new(6);
    b.edge(0, "a", 1, 1, 2)
        .edge(0, "a", 2, 1, 2)
        .edge(0, "b", 2, 1, 1)
        .edge(1, "a", 4, 1, 2)
        .edge(1, "a", 5, 1, 2)
        .edge(1, "b", 3, 1, 1)
        .edge(2, "a", 3, 1, 2)
        .edge(2, "a", 5, 1, 2)
        .edge(2, "b", 4, 1, 4)
        .edge(2, "b", 5, 3, 4)
        .edge(3, "a", 4, 3, 4)
        .edge(3, "a", 5, 1, 4)
        .edge(4, "a", 4, 1, 1)
        .edge(5, "a", 5, 1, 1)
        .label("goal", [4])
        .target([4]);
    b.build().unwrap()
}

/// Every route ends in the end component `{s1, s2}`; the target is
/// unreachable, so the optimal value is 0.
pub fn trap_mec() -> Mdp {
    let mut b = MdpBuilder::new(4);
    b.edge(0, "a", 1, 1, 1)
        .edge(0, "b", 2, 1, 2)
        .edge(0, "b", 1, 1, 2)
        .edge(1, "a", 2, 1, 1)
        .edge(1, "b", 1, 1, 1)
        .edge(2, "a", 1, 1, 1)
        .edge(3, "a", 3, 1, 1)
        .label("goal", [3])
        .target([3]);
    b.build().unwrap()
}

/// Target on a cycle: `s0 -a-> s1`, `s1 -b-> s0` form an end component
/// whose exit `s1 -a-> {T: 1/2, s0: 1/2}` reaches the target almost surely.
/// `s0 -c-> {F: 1}` is a losing alternative. Optimal value 1.
pub fn target_in_cycle() -> Mdp {
    let mut b = MdpBuilder::new(4);
    b.edge(0, "a", 1, 1, 1)
        .edge(0, "c", 3, 1, 1)
        .edge(1, "a", 2, 1, 2)
        .edge(1, "a", 0, 1, 2)
        .edge(1, "b", 0, 1, 1)
        .edge(2, "a", 0, 1, 1)
        .edge(3, "a", 3, 1, 1)
        .label("goal", [2])
        .target([2]);
    b.build().unwrap()
}

/// Three-process token ring self-stabilisation: states are non-empty token
/// sets (bit masks `1..=7`, state `i` = mask `i + 1`), a scheduled token
/// moves left or right with probability 1/2 and merges on collision.
/// Targets are the single-token states; initial state has all three
/// tokens. 7 states, 21 transitions, optimal value 1.
pub fn token_ring3() -> Mdp {
    let mut b = MdpBuilder::new(7);
    let state = |mask: u8| usize::from(mask) - 1;
    for mask in 1u8..=7 {
        for proc in 0..3u8 {
            if mask & (1 << proc) == 0 {
                continue;
            }
            let action = match proc {
                0 => "p0",
                1 => "p1",
                _ => "p2",
            };
            let rest = mask & !(1 << proc);
            let left = rest | (1 << ((proc + 2) % 3));
            let right = rest | (1 << ((proc + 1) % 3));
            if left == right {
                b.edge(state(mask), action, state(left), 1, 1);
            } else {
                b.edge(state(mask), action, state(left), 1, 2);
                b.edge(state(mask), action, state(right), 1, 2);
            }
        }
    }
    let singles = [state(1), state(2), state(4)];
    b.initial(state(7)).label("goal", singles).target(singles);
    b.build().unwrap()
}

/// Fixed 8-state random model (seed 8).
pub fn random8() -> Mdp {
    let params = GenParams { min_states: 8, max_states: 8, max_actions: 3, max_denominator: 4 };
    random_model(&params, 8)
}
