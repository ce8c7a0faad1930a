//! Event-triggered asynchronous SOR for variable-coefficient pressure Poisson
//! problems, with a deterministic virtual-time runtime and a threaded one.

pub mod comm;
pub mod convergence;
pub mod event;
pub mod grid;
pub mod problems;
pub mod runner;
