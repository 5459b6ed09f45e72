use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{make_state, Basis, QsimError, SignedPauliObservable, StateSpec, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceId(pub u64);

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One party's claim on one qubit of a shared register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QubitHandle {
    pub resource: ResourceId,
    pub qubit: usize,
}

/// Authoritative store of every live entangled register.
///
/// Also tracks the worst normalization drift seen after any mutation, so a
/// whole run can be audited against [`super::NORM_TOLERANCE`].
#[derive(Debug, Default)]
pub struct ResourcePool {
    next_id: u64,
    live: BTreeMap<ResourceId, StateVector>,
    max_norm_drift: f64,
    emitted: u64,
}

impl ResourcePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emit(&mut self, spec: &StateSpec) -> Result<ResourceId, QsimError> {
        let state = make_state(spec)?;
        Ok(self.insert(state))
    }

    pub fn insert(&mut self, state: StateVector) -> ResourceId {
        let id = ResourceId(self.next_id);
        self.next_id += 1;
        self.emitted += 1;
        self.observe(&state);
        self.live.insert(id, state);
        id
    }

    pub fn handle(&self, resource: ResourceId, qubit: usize) -> QubitHandle {
        QubitHandle { resource, qubit }
    }

    pub fn state(&self, id: ResourceId) -> Option<&StateVector> {
        self.live.get(&id)
    }

    /// Measures the handle's qubit, collapsing the shared register.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        handle: QubitHandle,
        basis: Basis,
        rng: &mut R,
    ) -> Result<u8, QsimError> {
        let u: f64 = rng.random();
        let state = self.live.get_mut(&handle.resource).ok_or(QsimError::UnknownResource(handle.resource))?;
        let bit = state.measure_qubit(handle.qubit, basis, u)?;
        let drift = state.norm_drift();
        self.max_norm_drift = self.max_norm_drift.max(drift);
        Ok(bit)
    }

    pub fn measure_observable<R: Rng + ?Sized>(
        &mut self,
        id: ResourceId,
        obs: &SignedPauliObservable,
        rng: &mut R,
    ) -> Result<i8, QsimError> {
        let u: f64 = rng.random();
        let state = self.live.get_mut(&id).ok_or(QsimError::UnknownResource(id))?;
        let value = state.measure_observable(obs, u)?;
        let drift = state.norm_drift();
        self.max_norm_drift = self.max_norm_drift.max(drift);
        Ok(value)
    }

    /// Drops a register once every holder is done with it.
    pub fn release(&mut self, id: ResourceId) -> Option<StateVector> {
        self.live.remove(&id)
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn emitted_count(&self) -> u64 {
        self.emitted
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.max_norm_drift
    }

    fn observe(&mut self, state: &StateVector) {
        self.max_norm_drift = self.max_norm_drift.max(state.norm_drift());
    }
}
