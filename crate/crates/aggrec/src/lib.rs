//! File formats, result rendering, cross-checks and the command-line
//! front-end for the `aggrec-core` engine.

pub mod cli;
pub mod facts;
pub mod output;
pub mod verify;
