//! Library side of the command-line tool: command execution and the small
//! full-batch trainer used by the barrier comparison.

pub mod commands;
pub mod trainer;
