//! Synthetic tasks, Monte Carlo verification, experiments and I/O.

pub mod experiment;
pub mod io;
pub mod mc;
pub mod seg;
pub mod tasks;
