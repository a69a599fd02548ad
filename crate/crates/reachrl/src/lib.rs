//! Model files, experiment harness and command-line front end for
//! [`reachrl_core`].

pub mod cli;
pub mod harness;
pub mod literal;
pub mod mdpx;
pub mod prism;
pub mod svg;
