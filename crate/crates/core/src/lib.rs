//! Deterministic simulation of entanglement-based swarm coordination.
//!
//! * [`qsim`]: statevector engine and shared entangled resources.
//! * [`swarm`]: grid board, robots and crash semantics.
//! * [`protocols`]: coordinated, controlled and collision-avoiding walks.
//! * [`security`]: eavesdropper detection and Byzantine identification.
//! * [`magic_square`]: the Mermin–Peres magic square game.
//! * [`scenario`]: configuration, traces, runs and sweeps.

pub mod magic_square;
pub mod protocols;
pub mod qsim;
pub mod rng;
pub mod scenario;
pub mod security;
pub mod swarm;
