//! Occurrence counters `#(s,a)` and `#(s,a,s')` accumulated across simulations.

use alloc::vec;
use alloc::vec::Vec;

use crate::ec::SupportGraph;
use crate::mdp::{ActionId, StateId};

/// Counters of one state-action pair. Successors are kept sorted by state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairCounts {
    pub action: ActionId,
    pub total: u64,
    pub successors: Vec<(StateId, u64)>,
}

impl PairCounts {
    pub fn count_to(&self, t: StateId) -> u64 {
        self.successors
            .binary_search_by_key(&t, |x| x.0)
            .map(|i| self.successors[i].1)
            .unwrap_or(0)
    }
}

/// The learner's partial model. Counts only ever grow.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CountTable {
    rows: Vec<Vec<PairCounts>>,
    seen: Vec<bool>,
    seen_count: usize,
    pairs: usize,
    samples: u64,
}

impl CountTable {
    pub fn new(num_states: usize) -> Self {
        CountTable {
            rows: vec![Vec::new(); num_states],
            seen: vec![false; num_states],
            ..Default::default()
        }
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    /// Marks `s` as discovered without recording a transition.
    pub fn mark_seen(&mut self, s: StateId) {
        if !self.seen[s.0] {
            self.seen[s.0] = true;
            self.seen_count += 1;
        }
    }

    pub fn record(&mut self, s: StateId, a: ActionId, t: StateId) {
        self.mark_seen(s);
        self.mark_seen(t);
        let row = &mut self.rows[s.0];
        let i = match row.binary_search_by_key(&a, |p| p.action) {
            Ok(i) => i,
            Err(i) => {
                row.insert(i, PairCounts { action: a, total: 0, successors: Vec::new() });
                self.pairs += 1;
                i
            }
        };
        let pair = &mut row[i];
        pair.total += 1;
        match pair.successors.binary_search_by_key(&t, |x| x.0) {
            Ok(j) => pair.successors[j].1 += 1,
            Err(j) => pair.successors.insert(j, (t, 1)),
        }
        self.samples += 1;
    }

    pub fn pair(&self, s: StateId, a: ActionId) -> Option<&PairCounts> {
        let row = &self.rows[s.0];
        row.binary_search_by_key(&a, |p| p.action).ok().map(|i| &row[i])
    }

    /// `#(s,a)`.
    pub fn pair_count(&self, s: StateId, a: ActionId) -> u64 {
        self.pair(s, a).map_or(0, |p| p.total)
    }

    /// `#(s,a,s')`.
    pub fn triple_count(&self, s: StateId, a: ActionId, t: StateId) -> u64 {
        self.pair(s, a).map_or(0, |p| p.count_to(t))
    }

    pub fn pairs_of(&self, s: StateId) -> &[PairCounts] {
        &self.rows[s.0]
    }

    /// Number of distinct state-action pairs sampled so far.
    pub fn observed_pairs(&self) -> usize {
        self.pairs
    }

    /// Number of distinct states discovered so far.
    pub fn states_seen(&self) -> usize {
        self.seen_count
    }

    pub fn is_seen(&self, s: StateId) -> bool {
        self.seen[s.0]
    }

    /// Total number of recorded simulator steps.
    pub fn total_samples(&self) -> u64 {
        self.samples
    }

    /// `Σ_{s'} #(s,a,s') = #(s,a)` for every pair.
    pub fn marginals_consistent(&self) -> bool {
        self.rows.iter().flatten().all(|p| {
            p.successors.iter().map(|x| x.1).sum::<u64>() == p.total
        })
    }

    /// Observed support: every sampled pair with its observed successors.
    pub fn support_graph(&self) -> SupportGraph {
        self.support_graph_where(|_| true)
    }

    /// Observed support restricted to pairs satisfying `keep`.
    pub fn support_graph_where(&self, mut keep: impl FnMut(&PairCounts) -> bool) -> SupportGraph {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|p| keep(p))
                    .map(|p| (p.action, p.successors.iter().map(|x| x.0).collect()))
                    .collect()
            })
            .collect();
        SupportGraph { rows }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_updates_all_views() {
        let mut c = CountTable::new(3);
        let (s0, s1, s2) = (StateId(0), StateId(1), StateId(2));
        let a = ActionId(0);
        c.record(s0, a, s1);
        c.record(s0, a, s2);
        c.record(s0, a, s1);
        c.record(s1, ActionId(1), s1);
        assert_eq!(c.pair_count(s0, a), 3);
        assert_eq!(c.triple_count(s0, a, s1), 2);
        assert_eq!(c.triple_count(s0, a, s0), 0);
        assert_eq!(c.observed_pairs(), 2);
        assert_eq!(c.states_seen(), 3);
        assert_eq!(c.total_samples(), 4);
        assert!(c.marginals_consistent());
        let g = c.support_graph();
        assert_eq!(g.rows[0], vec![(a, vec![s1, s2])]);
    }
}
