//! Small statevector engine.
//!
//! Entanglement lives in [`StateVector`]s owned by a [`ResourcePool`].
//! Parties never own qubits directly; they hold a [`QubitHandle`] into a
//! shared register, so a measurement by one holder is immediately visible
//! to every other holder of the same register.

mod pauli;
mod pool;
mod state;

pub use pauli::{DenseOperator, Pauli, Sign, SignedPauliObservable};
pub use pool::{QubitHandle, ResourceId, ResourcePool};
pub use state::{make_state, Basis, BellState, StateSpec, StateVector, MAX_QUBITS, NORM_TOLERANCE};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QsimError {
    #[error("qubit {qubit} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("amplitude vector length {0} is not a power of two ≥ 2")]
    BadLength(usize),
    #[error("{0} qubits exceeds the supported maximum of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("state is not normalized (drift {0:e})")]
    NotNormalized(f64),
    #[error("GHZ state needs at least 2 qubits, got {0}")]
    GhzTooNarrow(usize),
    #[error("invalid character {found:?} at position {pos} of product bitstring")]
    BadBitstring { pos: usize, found: char },
    #[error("{0} is not a bit")]
    NotABit(u8),
    #[error("outcome {outcome} of qubit {qubit} in the {basis} basis has zero probability")]
    ImpossibleOutcome { qubit: usize, basis: Basis, outcome: u8 },
    #[error("observable {0} does not square to the identity")]
    NonInvolutory(String),
    #[error("unknown or released resource {0}")]
    UnknownResource(ResourceId),
}
