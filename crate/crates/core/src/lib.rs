//! Observer-based identification of the dipole couplings of a closed
//! N-level quantum system from measured populations.

pub mod density;
pub mod diagnostics;
pub mod dynamics;
pub mod estimator;
pub mod linalg;
pub mod ode;
pub mod runner;
pub mod scenario;
pub mod simulate;
