//! Staged, model-based learning of reachability policies for explicit-state
//! Markov decision processes, with a known-model oracle for checking the
//! results exactly.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the command
//! line and the experiment harness live in the `reachrl` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bvi;
pub mod counts;
pub mod ec;
pub mod estimation;
pub mod exact;
pub mod gen;
pub mod learner;
pub mod mdp;
pub mod models;
pub mod simulator;

pub use counts::CountTable;
pub use mdp::{ActionId, Mdp, MdpBuilder, MemorylessDetPolicy, Rational, StateId};
