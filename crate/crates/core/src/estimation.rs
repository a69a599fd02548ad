//! Hoeffding lower estimates of transition probabilities and the split of a
//! stage's error budget.

use alloc::vec::Vec;
use core::fmt;

use crate::counts::CountTable;
use crate::mdp::{ActionId, StateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimationError {
    /// The pair was never sampled, so the width is undefined.
    NoSamples,
}

impl fmt::Display for EstimationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimationError::NoSamples => f.write_str("no samples"),
        }
    }
}

impl core::error::Error for EstimationError {}

/// Confidence radius `c = sqrt(ln(δ_P / 2) / (-2n))`.
pub fn hoeffding_width(n: u64, delta_p: f64) -> Result<f64, EstimationError> {
    if n == 0 {
        return Err(EstimationError::NoSamples);
    }
    Ok(libm::sqrt(libm::log(delta_p / 2.0) / (-2.0 * n as f64)))
}

/// Per-stage confidence accounting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceBudget {
    pub delta_k: f64,
    pub delta_tp: f64,
    pub delta_ec: f64,
    pub delta_nk: f64,
    /// Per-transition estimation budget `δ_TP · p_k / |SA|`.
    pub delta_p: f64,
    /// Per-pair end-component certification budget `δ_EC · p_k / |SA|`.
    pub delta_c: f64,
    /// Per-transition sampling budget `δ_Nk · p_k / |SA|`.
    pub delta_n: f64,
    pub sa_count: usize,
}

/// Splits `delta_k` into equal thirds and derives the per-transition budgets.
/// The three components add up to `delta_k` exactly in floating point.
pub fn split_budget(delta_k: f64, p_k: f64, sa_count: usize) -> ConfidenceBudget {
    assert!(sa_count >= 1, "split_budget needs at least one state-action pair");
    let third = delta_k / 3.0;
    let rest = delta_k - 2.0 * third;
    let per = p_k / sa_count as f64;
    ConfidenceBudget {
        delta_k,
        delta_tp: third,
        delta_ec: third,
        delta_nk: rest,
        delta_p: third * per,
        delta_c: third * per,
        delta_n: rest * per,
        sa_count,
    }
}

/// Lower estimates of one sampled pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedRow {
    pub action: ActionId,
    pub samples: u64,
    pub width: f64,
    /// `(s', P̂(s,a,s'))` for every observed successor, sorted by state.
    pub lower: Vec<(StateId, f64)>,
}

impl EstimatedRow {
    pub fn mass(&self) -> f64 {
        self.lower.iter().map(|x| x.1).sum()
    }
}

/// `P̂` for every observed triple; unobserved triples are absent.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedModel {
    pub rows: Vec<Vec<EstimatedRow>>,
}

impl EstimatedModel {
    pub fn row(&self, s: StateId, a: ActionId) -> Option<&EstimatedRow> {
        self.rows[s.0].iter().find(|r| r.action == a)
    }
}

/// `P̂(s,a,s') = max{0, #(s,a,s')/#(s,a) − c}` with `c` the Hoeffding width
/// of `#(s,a)` samples.
pub fn lower_estimate(counts: &CountTable, delta_p: f64) -> EstimatedModel {
    let rows = (0..counts.num_states())
        .map(|s| {
            counts
                .pairs_of(StateId(s))
                .iter()
                .map(|p| {
                    let width = hoeffding_width(p.total, delta_p)
                        .expect("recorded pairs have at least one sample");
                    let n = p.total as f64;
                    let lower = p
                        .successors
                        .iter()
                        .map(|&(t, k)| (t, lower_bound(k as f64 / n, width)))
                        .collect();
                    EstimatedRow { action: p.action, samples: p.total, width, lower }
                })
                .collect()
        })
        .collect();
    EstimatedModel { rows }
}

/// `max{0, freq − width}`.
#[inline]
pub fn lower_bound(freq: f64, width: f64) -> f64 {
    let v = freq - width;
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_examples() {
        let c = hoeffding_width(200, 0.05).unwrap();
        let oracle = ((0.025f64).ln() / -400.0).sqrt();
        assert!((c - oracle).abs() < 1e-15);
        assert!((c - 0.09603).abs() < 1e-5);

        let c1 = hoeffding_width(100, 0.1).unwrap();
        let c4 = hoeffding_width(400, 0.1).unwrap();
        assert!((c1 / 2.0 - c4).abs() < 1e-15);

        let delta = 2.0 / core::f64::consts::E.powi(2);
        assert!((hoeffding_width(1, delta).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(hoeffding_width(0, 0.1), Err(EstimationError::NoSamples));
    }

    #[test]
    fn lower_bound_examples() {
        assert!((lower_bound(0.6, 0.1) - 0.5).abs() < 1e-15);
        assert_eq!(lower_bound(0.05, 0.1), 0.0);
        assert!((lower_bound(1.0, 0.02) - 0.98).abs() < 1e-15);
    }

    #[test]
    fn split_examples() {
        let b = split_budget(0.3, 0.5, 10);
        for x in [b.delta_tp, b.delta_ec, b.delta_nk] {
            assert!((x - 0.1).abs() < 1e-15);
        }
        for x in [b.delta_p, b.delta_c, b.delta_n] {
            assert!((x - 0.005).abs() < 1e-15);
        }
        assert_eq!(b.delta_tp + b.delta_ec + b.delta_nk, 0.3);

        let b = split_budget(0.125, 0.125, 1);
        assert!((b.delta_tp - 1.0 / 24.0).abs() < 1e-17);
        assert_eq!(b.delta_tp + b.delta_ec + b.delta_nk, 0.125);

        let base = split_budget(0.3, 0.5, 10);
        let doubled = split_budget(0.3, 0.5, 20);
        assert!((doubled.delta_p * 2.0 - base.delta_p).abs() < 1e-18);
        assert!((doubled.delta_n * 2.0 - base.delta_n).abs() < 1e-18);
    }

    #[test]
    fn estimate_clamps_and_stays_substochastic() {
        let mut c = CountTable::new(3);
        for i in 0..100u32 {
            let t = if i < 60 { 1 } else if i < 95 { 2 } else { 0 };
            c.record(StateId(0), ActionId(0), StateId(t));
        }
        let est = lower_estimate(&c, 0.05);
        let row = est.row(StateId(0), ActionId(0)).unwrap();
        let w = hoeffding_width(100, 0.05).unwrap();
        assert_eq!(row.lower[0], (StateId(0), 0.0));
        assert!((row.lower[1].1 - (0.6 - w)).abs() < 1e-15);
        assert!(row.mass() <= 1.0);
    }
}
