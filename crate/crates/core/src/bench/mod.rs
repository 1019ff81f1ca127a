pub mod config;
pub mod convergence;
pub mod invariants;
pub mod io;
pub mod manufactured;
