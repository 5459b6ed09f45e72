use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SecurityError;
use crate::protocols::QubitMeasurement;
use crate::qsim::{Basis, ResourceId, ResourcePool, StateSpec};
use crate::swarm::{decode_direction, Direction, RobotId};

/// Sub-ticks in one synchronized step. Honest robots move exactly on the
/// step's first sub-tick.
pub const SUBTICKS_PER_STEP: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum ByzantineStrategy {
    /// Guess one basis per step and measure both qubits in it.
    GuessBasis,
    /// Ignore the qubits and pick a direction uniformly.
    RandomDirection,
    /// Wait for the honest robots to move, then copy them `delay`
    /// sub-ticks after the deadline.
    FollowWithDelay { delay: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveLogEntry {
    pub step: u64,
    pub robot: RobotId,
    pub direction: Direction,
    /// Sub-tick at which the move happened.
    pub at: u64,
    /// Sub-tick at which the step's synchronized move was due.
    pub deadline: u64,
    pub matches_honest: bool,
}

impl MoveLogEntry {
    pub fn lag(&self) -> u64 {
        self.at.saturating_sub(self.deadline)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ByzantineStep {
    pub step: u64,
    pub basis: Basis,
    pub emitted: Vec<(ResourceId, StateSpec)>,
    pub measurements: Vec<QubitMeasurement>,
    pub honest_direction: Direction,
    pub entries: Vec<MoveLogEntry>,
}

/// One step of a walk where honest robots share the basis `honest_basis`
/// and Byzantine robots do not.
///
/// The source emits two GHZ registers over every robot, written in the
/// step's basis. Qubits are assigned in ascending robot-id order. Honest
/// measurements draw from `nature`; everything a Byzantine robot does
/// (guesses, measurements, random moves) draws from `adversary`.
pub fn byzantine_walk_step<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    step: u64,
    honest: &[RobotId],
    byzantine: &[(RobotId, ByzantineStrategy)],
    honest_basis: Basis,
    nature: &mut R,
    adversary: &mut R,
) -> Result<ByzantineStep, SecurityError> {
    if honest.is_empty() {
        return Err(SecurityError::NoHonestRobots);
    }
    let mut roster: Vec<RobotId> = honest.iter().copied().chain(byzantine.iter().map(|(r, _)| *r)).collect();
    roster.sort_unstable();
    if let Some(w) = roster.windows(2).find(|w| w[0] == w[1]) {
        return Err(SecurityError::DuplicateRobot(w[0]));
    }
    let qubit_of: BTreeMap<RobotId, usize> = roster.iter().enumerate().map(|(q, &r)| (r, q)).collect();
    let spec = StateSpec::Ghz { qubits: roster.len(), basis: honest_basis };
    let ids = [pool.emit(&spec)?, pool.emit(&spec)?];
    let deadline = step * SUBTICKS_PER_STEP;
    let mut measurements = Vec::new();

    let mut measure_pair = |pool: &mut ResourcePool, robot: RobotId, basis: Basis, rng: &mut R| {
        let qubit = qubit_of[&robot];
        let mut bits = [0u8; 2];
        for (slot, &resource) in ids.iter().enumerate() {
            let bit = pool.measure(pool.handle(resource, qubit), basis, rng)?;
            bits[slot] = bit;
            measurements.push(QubitMeasurement { robot, resource, qubit, basis, bit });
        }
        Ok::<_, SecurityError>(decode_direction((bits[0], bits[1])))
    };

    let mut honest_moves = Vec::with_capacity(honest.len());
    for &r in honest {
        honest_moves.push((r, measure_pair(pool, r, honest_basis, nature)?));
    }
    let honest_direction = majority(honest_moves.iter().map(|(_, d)| *d));

    let mut entries: Vec<MoveLogEntry> = honest_moves
        .iter()
        .map(|&(robot, direction)| MoveLogEntry {
            step,
            robot,
            direction,
            at: deadline,
            deadline,
            matches_honest: direction == honest_direction,
        })
        .collect();
    for &(robot, strategy) in byzantine {
        let (direction, at) = match strategy {
            ByzantineStrategy::GuessBasis => {
                let guess = if adversary.random_bool(0.5) { Basis::X } else { Basis::Z };
                (measure_pair(pool, robot, guess, adversary)?, deadline)
            }
            ByzantineStrategy::RandomDirection => {
                (*Direction::ALL.choose(adversary).expect("four directions"), deadline)
            }
            ByzantineStrategy::FollowWithDelay { delay } => (honest_direction, deadline + delay.max(1)),
        };
        entries.push(MoveLogEntry {
            step,
            robot,
            direction,
            at,
            deadline,
            matches_honest: direction == honest_direction,
        });
    }
    for id in ids {
        pool.release(id);
    }
    entries.sort_by_key(|e| e.robot);
    Ok(ByzantineStep {
        step,
        basis: honest_basis,
        emitted: ids.iter().map(|&id| (id, spec.clone())).collect(),
        measurements,
        honest_direction,
        entries,
    })
}

/// Most common direction; ties go to the first in [`Direction::ALL`] order.
fn majority(dirs: impl Iterator<Item = Direction>) -> Direction {
    let mut counts: BTreeMap<Direction, usize> = BTreeMap::new();
    for d in dirs {
        *counts.entry(d).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    Direction::ALL.into_iter().find(|d| counts.get(d) == Some(&best)).unwrap_or(Direction::Up)
}

/// Robots to treat as Byzantine, judged over the log entries whose step
/// lies in `steps`.
///
/// A robot is flagged if any of its moves came after the deadline, or if
/// its fraction of moves matching the honest direction is below
/// `min_match_rate`.
pub fn identify_byzantine(
    log: &[MoveLogEntry],
    steps: Range<u64>,
    min_match_rate: f64,
) -> Result<BTreeSet<RobotId>, SecurityError> {
    if steps.is_empty() {
        return Err(SecurityError::EmptyWindow);
    }
    let mut per_robot: BTreeMap<RobotId, (usize, usize, bool)> = BTreeMap::new();
    for e in log.iter().filter(|e| steps.contains(&e.step)) {
        let slot = per_robot.entry(e.robot).or_default();
        slot.0 += 1;
        slot.1 += usize::from(e.matches_honest);
        slot.2 |= e.at > e.deadline;
    }
    if per_robot.is_empty() {
        return Err(SecurityError::EmptyWindow);
    }
    Ok(per_robot
        .into_iter()
        .filter(|(_, (moves, matches, late))| *late || (*matches as f64) < min_match_rate * *moves as f64)
        .map(|(r, _)| r)
        .collect())
}
