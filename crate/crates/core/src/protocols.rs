//! Coordination protocols driven by shared entanglement.
//!
//! Every step follows the same shape: the source emits two registers, robot
//! `i` holds qubit `i` of each, every robot measures its two qubits, turns
//! the bit pair into a [`Direction`] and all moves land on the board at once.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{Basis, BellState, QsimError, ResourceId, ResourcePool, StateSpec};
use crate::swarm::{decode_direction, Board, Direction, MoveReport, Position, RobotId, SwarmError};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("protocol needs at least {needed} robots, got {got}")]
    TooFewRobots { needed: usize, got: usize },
    #[error("robot {0} listed twice")]
    DuplicateRobot(RobotId),
    #[error("resource width {width} does not match {robots} robots")]
    WidthMismatch { width: usize, robots: usize },
    #[error("party {party} logged {got} rounds, expected {expected}")]
    RaggedLogs { party: usize, got: usize, expected: usize },
    #[error("no collision-free avoidance configuration for offset {0:?}")]
    NoSafeConfig((i64, i64)),
}

/// One qubit measured by one robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitMeasurement {
    pub robot: RobotId,
    pub resource: ResourceId,
    pub qubit: usize,
    pub basis: Basis,
    pub bit: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotDecision {
    pub robot: RobotId,
    pub bits: (u8, u8),
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub emitted: Vec<(ResourceId, StateSpec)>,
    pub measurements: Vec<QubitMeasurement>,
    pub decisions: Vec<RobotDecision>,
    pub report: MoveReport,
}

impl StepOutcome {
    pub fn direction_of(&self, robot: RobotId) -> Option<Direction> {
        self.decisions.iter().find(|d| d.robot == robot).map(|d| d.direction)
    }

    pub fn positions(&self, board: &Board) -> Vec<(RobotId, Position)> {
        self.decisions.iter().filter_map(|d| board.position(d.robot).ok().map(|p| (d.robot, p))).collect()
    }
}

/// Result of emitting and measuring without moving.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub emitted: Vec<(ResourceId, StateSpec)>,
    pub measurements: Vec<QubitMeasurement>,
    pub decisions: Vec<RobotDecision>,
}

fn check_roster(board: &Board, robots: &[RobotId], needed: usize) -> Result<(), ProtocolError> {
    if robots.len() < needed {
        return Err(ProtocolError::TooFewRobots { needed, got: robots.len() });
    }
    for (i, &r) in robots.iter().enumerate() {
        if robots[..i].contains(&r) {
            return Err(ProtocolError::DuplicateRobot(r));
        }
        board.ensure_live(r)?;
    }
    Ok(())
}

fn spec_width(spec: &StateSpec) -> usize {
    match spec {
        StateSpec::Bell(_) => 2,
        StateSpec::Ghz { qubits, .. } => *qubits,
        StateSpec::Product(bits) => bits.chars().count(),
    }
}

/// Emits both registers, lets robot `i` measure qubit `i` of each in
/// `bases[i]` and decodes the bit pairs. No robot moves.
pub fn entangled_readout<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    robots: &[RobotId],
    resources: [&StateSpec; 2],
    bases: &[Basis],
    rng: &mut R,
) -> Result<Readout, ProtocolError> {
    for spec in resources {
        let width = spec_width(spec);
        if width != robots.len() {
            return Err(ProtocolError::WidthMismatch { width, robots: robots.len() });
        }
    }
    debug_assert_eq!(bases.len(), robots.len());
    let ids = [pool.emit(resources[0])?, pool.emit(resources[1])?];
    let mut measurements = Vec::with_capacity(2 * robots.len());
    let mut decisions = Vec::with_capacity(robots.len());
    for (qubit, (&robot, &basis)) in robots.iter().zip(bases).enumerate() {
        let mut bits = [0u8; 2];
        for (slot, &resource) in ids.iter().enumerate() {
            let bit = pool.measure(pool.handle(resource, qubit), basis, rng)?;
            bits[slot] = bit;
            measurements.push(QubitMeasurement { robot, resource, qubit, basis, bit });
        }
        let bits = (bits[0], bits[1]);
        decisions.push(RobotDecision { robot, bits, direction: decode_direction(bits) });
    }
    for id in ids {
        pool.release(id);
    }
    Ok(Readout {
        emitted: vec![(ids[0], resources[0].clone()), (ids[1], resources[1].clone())],
        measurements,
        decisions,
    })
}

fn execute(board: &mut Board, readout: Readout) -> Result<StepOutcome, ProtocolError> {
    let moves: BTreeMap<RobotId, Direction> = readout.decisions.iter().map(|d| (d.robot, d.direction)).collect();
    let report = board.apply_moves(&moves)?;
    Ok(StepOutcome {
        emitted: readout.emitted,
        measurements: readout.measurements,
        decisions: readout.decisions,
        report,
    })
}

/// Two robots, two `Φ+` pairs, Z basis: both decode the same direction.
pub fn coordinated_step<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    board: &mut Board,
    robots: [RobotId; 2],
    rng: &mut R,
) -> Result<StepOutcome, ProtocolError> {
    check_roster(board, &robots, 2)?;
    let phi = StateSpec::Bell(BellState::PhiPlus);
    let readout = entangled_readout(pool, &robots, [&phi, &phi], &[Basis::Z; 2], rng)?;
    execute(board, readout)
}

/// `n ≥ 2` robots sharing two Z-form GHZ registers.
pub fn ghz_coordinated_step<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    board: &mut Board,
    robots: &[RobotId],
    rng: &mut R,
) -> Result<StepOutcome, ProtocolError> {
    check_roster(board, robots, 2)?;
    let ghz = StateSpec::ghz(robots.len());
    let bases = vec![Basis::Z; robots.len()];
    let readout = entangled_readout(pool, robots, [&ghz, &ghz], &bases, rng)?;
    execute(board, readout)
}

/// A centrally chosen pair of product registers. Robot `i` reads bit `i`
/// of `first` and bit `i` of `second`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directive {
    pub first: String,
    pub second: String,
}

impl Directive {
    pub fn new(first: impl Into<String>, second: impl Into<String>) -> Self {
        Directive { first: first.into(), second: second.into() }
    }

    /// The directive that sends robot `i` in `directions[i]`.
    pub fn steering(directions: &[Direction]) -> Self {
        let bit = |b: u8| if b == 0 { '0' } else { '1' };
        Directive {
            first: directions.iter().map(|d| bit(d.bits().0)).collect(),
            second: directions.iter().map(|d| bit(d.bits().1)).collect(),
        }
    }
}

/// Product-state control: the outcome does not depend on `rng`.
pub fn controlled_step<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    board: &mut Board,
    robots: &[RobotId],
    directive: &Directive,
    rng: &mut R,
) -> Result<StepOutcome, ProtocolError> {
    check_roster(board, robots, 1)?;
    let first = StateSpec::Product(directive.first.clone());
    let second = StateSpec::Product(directive.second.clone());
    let bases = vec![Basis::Z; robots.len()];
    let readout = entangled_readout(pool, robots, [&first, &second], &bases, rng)?;
    execute(board, readout)
}

/// The two pairings a source can send to keep two robots apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AvoidanceConfig {
    /// `(Φ+, Ψ+)`: robots agree on the first bit, disagree on the second.
    PhiPsi,
    /// `(Ψ+, Φ+)`: robots disagree on the first bit, agree on the second.
    PsiPhi,
}

impl AvoidanceConfig {
    pub const ALL: [AvoidanceConfig; 2] = [AvoidanceConfig::PhiPsi, AvoidanceConfig::PsiPhi];

    pub fn pairs(self) -> [StateSpec; 2] {
        let phi = StateSpec::Bell(BellState::PhiPlus);
        let psi = StateSpec::Bell(BellState::PsiPlus);
        match self {
            AvoidanceConfig::PhiPsi => [phi, psi],
            AvoidanceConfig::PsiPhi => [psi, phi],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceOption {
    pub r1_bits: (u8, u8),
    pub r2_bits: (u8, u8),
    pub probability: f64,
}

impl AvoidanceOption {
    pub fn directions(&self) -> (Direction, Direction) {
        (decode_direction(self.r1_bits), decode_direction(self.r2_bits))
    }
}

/// Exhaustive enumeration of every joint outcome of an avoidance step,
/// ordered by r1's bits.
pub fn avoidance_outcome_table(config: AvoidanceConfig) -> Result<Vec<AvoidanceOption>, ProtocolError> {
    let [first, second] = config.pairs();
    let a = crate::qsim::make_state(&first)?.branches(&[0, 1], Basis::Z)?;
    let b = crate::qsim::make_state(&second)?.branches(&[0, 1], Basis::Z)?;
    let mut table = Vec::new();
    for (bits_a, pa) in &a {
        for (bits_b, pb) in &b {
            table.push(AvoidanceOption {
                r1_bits: (bits_a[0], bits_b[0]),
                r2_bits: (bits_a[1], bits_b[1]),
                probability: pa * pb,
            });
        }
    }
    table.sort_by_key(|o| o.r1_bits);
    Ok(table)
}

/// Whether any outcome of `config` collides two robots whose relative
/// offset (`r2 − r1`) is `offset`.
pub fn config_can_collide(config: AvoidanceConfig, offset: (i64, i64)) -> Result<bool, ProtocolError> {
    Ok(avoidance_outcome_table(config)?.iter().any(|opt| {
        let (d1, d2) = opt.directions();
        let (a, b) = (d1.delta(), d2.delta());
        let after = (offset.0 + b.0 - a.0, offset.1 + b.1 - a.1);
        let swap = a == offset && b == (-offset.0, -offset.1);
        after == (0, 0) || swap
    }))
}

/// Configurations with no colliding outcome at `offset`.
pub fn safe_configs(offset: (i64, i64)) -> Result<Vec<AvoidanceConfig>, ProtocolError> {
    let mut safe = Vec::new();
    for c in AvoidanceConfig::ALL {
        if !config_can_collide(c, offset)? {
            safe.push(c);
        }
    }
    Ok(safe)
}

/// The source's pick: uniform over the collision-free configurations for
/// the robots' current offset.
pub fn choose_config<R: Rng + ?Sized>(offset: (i64, i64), rng: &mut R) -> Result<AvoidanceConfig, ProtocolError> {
    safe_configs(offset)?.choose(rng).copied().ok_or(ProtocolError::NoSafeConfig(offset))
}

/// Two robots move randomly but never toward each other. `robots[0]`
/// takes the left qubit of each pair.
pub fn avoidance_step<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    board: &mut Board,
    robots: [RobotId; 2],
    config: AvoidanceConfig,
    rng: &mut R,
) -> Result<StepOutcome, ProtocolError> {
    check_roster(board, &robots, 2)?;
    let [first, second] = config.pairs();
    let readout = entangled_readout(pool, &robots, [&first, &second], &[Basis::Z; 2], rng)?;
    execute(board, readout)
}

/// Rounds grouped by which robots measured in the source's basis.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubsetSift {
    pub n_robots: usize,
    pub rounds: usize,
    /// Sorted member list → rounds where exactly those robots matched.
    pub subsets: BTreeMap<Vec<RobotId>, Vec<usize>>,
}

impl SubsetSift {
    /// Rounds where every robot matched the source.
    pub fn valid_for_all(&self) -> &[usize] {
        let all: Vec<RobotId> = (0..self.n_robots).map(RobotId).collect();
        self.subsets.get(&all).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Rounds usable by every member of `group` (their subset contains it).
    pub fn usable_by(&self, group: &[RobotId]) -> Vec<usize> {
        let mut rounds: Vec<usize> = self
            .subsets
            .iter()
            .filter(|(members, _)| group.iter().all(|g| members.contains(g)))
            .flat_map(|(_, r)| r.iter().copied())
            .collect();
        rounds.sort_unstable();
        rounds
    }
}

/// Stores each round under the set of robots whose basis matched the
/// source's. Rounds where nobody matched are dropped.
pub fn sift_subsets(source: &[Basis], robots: &[&[Basis]]) -> Result<SubsetSift, ProtocolError> {
    let rounds = source.len();
    for (i, log) in robots.iter().enumerate() {
        if log.len() != rounds {
            return Err(ProtocolError::RaggedLogs { party: i + 1, got: log.len(), expected: rounds });
        }
    }
    let mut subsets: BTreeMap<Vec<RobotId>, Vec<usize>> = BTreeMap::new();
    for (round, &c) in source.iter().enumerate() {
        let members: Vec<RobotId> =
            robots.iter().enumerate().filter(|(_, log)| log[round] == c).map(|(i, _)| RobotId(i)).collect();
        if !members.is_empty() {
            subsets.entry(members).or_default().push(round);
        }
    }
    Ok(SubsetSift { n_robots: robots.len(), rounds, subsets })
}

/// One step of the random-basis multi-robot walk: the source prepares both
/// registers as GHZ states in its own basis, each robot measures in a basis
/// of its own, and the robots move only if every basis matched.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetStep {
    pub source_basis: Basis,
    pub readout: Readout,
    pub matched: Vec<RobotId>,
    pub report: Option<MoveReport>,
}

pub fn random_basis_ghz_step<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    board: &mut Board,
    robots: &[RobotId],
    source_basis: Basis,
    robot_bases: &[Basis],
    rng: &mut R,
) -> Result<SubsetStep, ProtocolError> {
    check_roster(board, robots, 2)?;
    if robot_bases.len() != robots.len() {
        return Err(ProtocolError::RaggedLogs { party: 1, got: robot_bases.len(), expected: robots.len() });
    }
    let ghz = StateSpec::Ghz { qubits: robots.len(), basis: source_basis };
    let readout = entangled_readout(pool, robots, [&ghz, &ghz], robot_bases, rng)?;
    let matched: Vec<RobotId> =
        robots.iter().zip(robot_bases).filter(|(_, b)| **b == source_basis).map(|(r, _)| *r).collect();
    let report = if matched.len() == robots.len() {
        let moves: BTreeMap<RobotId, Direction> = readout.decisions.iter().map(|d| (d.robot, d.direction)).collect();
        Some(board.apply_moves(&moves)?)
    } else {
        None
    };
    Ok(SubsetStep { source_basis, readout, matched, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn board(starts: &[(i64, i64)]) -> Board {
        Board::unbounded(&starts.iter().map(|&(x, y)| Position::new(x, y)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn coordinated_robots_share_directions() {
        let mut pool = ResourcePool::new();
        let mut b = board(&[(0, 0), (1, 1)]);
        let mut rng = stream(1, Stream::Nature);
        for _ in 0..500 {
            let out = coordinated_step(&mut pool, &mut b, [RobotId(0), RobotId(1)], &mut rng).unwrap();
            assert_eq!(out.decisions[0].bits, out.decisions[1].bits);
            assert!(out.report.crashes.is_empty());
        }
        let p = b.position(RobotId(0)).unwrap();
        let q = b.position(RobotId(1)).unwrap();
        assert_eq!(p.offset_to(q), (1, 1));
        b.check_invariants().unwrap();
    }

    #[test]
    fn crashed_robot_cannot_coordinate() {
        let mut pool = ResourcePool::new();
        let mut b = board(&[(0, 0), (2, 0), (9, 9)]);
        b.apply_moves(&[(RobotId(0), Direction::Right), (RobotId(1), Direction::Left)].into_iter().collect()).unwrap();
        let mut rng = stream(1, Stream::Nature);
        let err = coordinated_step(&mut pool, &mut b, [RobotId(0), RobotId(2)], &mut rng).unwrap_err();
        assert_eq!(err, ProtocolError::Swarm(SwarmError::CrashedRobot(RobotId(0))));
    }

    #[test]
    fn ghz_three_robots_all_equal() {
        let mut pool = ResourcePool::new();
        let mut b = board(&[(0, 0), (10, 0), (20, 0)]);
        let ids = [RobotId(0), RobotId(1), RobotId(2)];
        let mut rng = stream(2, Stream::Nature);
        for _ in 0..300 {
            let out = ghz_coordinated_step(&mut pool, &mut b, &ids, &mut rng).unwrap();
            assert!(out.decisions.windows(2).all(|w| w[0].bits == w[1].bits));
        }
        assert!(matches!(
            ghz_coordinated_step(&mut pool, &mut b, &ids[..1], &mut rng),
            Err(ProtocolError::TooFewRobots { .. })
        ));
    }

    #[test]
    fn directive_decodes_deterministically() {
        let mut pool = ResourcePool::new();
        let mut b = board(&[(0, 0), (5, 0)]);
        let ids = [RobotId(0), RobotId(1)];
        let mut rng = stream(3, Stream::Nature);
        let out = controlled_step(&mut pool, &mut b, &ids, &Directive::new("00", "11"), &mut rng).unwrap();
        assert!(out.decisions.iter().all(|d| d.bits == (0, 1) && d.direction == Direction::Right));
        let split = Directive::steering(&[Direction::Up, Direction::Down]);
        assert_eq!(split, Directive::new("01", "01"));
        let out = controlled_step(&mut pool, &mut b, &ids, &split, &mut rng).unwrap();
        assert_eq!(out.direction_of(RobotId(0)), Some(Direction::Up));
        assert_eq!(out.direction_of(RobotId(1)), Some(Direction::Down));
        assert!(matches!(
            controlled_step(&mut pool, &mut b, &ids, &Directive::new("000", "111"), &mut rng),
            Err(ProtocolError::WidthMismatch { width: 3, robots: 2 })
        ));
    }

    #[test]
    fn config_safety_by_geometry() {
        // Orthogonal neighbours: both configurations are safe.
        for offset in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            assert_eq!(safe_configs(offset).unwrap(), AvoidanceConfig::ALL.to_vec());
        }
        assert_eq!(safe_configs((1, 1)).unwrap(), vec![AvoidanceConfig::PhiPsi]);
        assert_eq!(safe_configs((1, -1)).unwrap(), vec![AvoidanceConfig::PsiPhi]);
    }

    #[test]
    fn avoidance_steps_never_crash_with_chosen_configs() {
        let mut pool = ResourcePool::new();
        let mut b = board(&[(0, 0), (1, 1)]);
        let ids = [RobotId(0), RobotId(1)];
        let mut nature = stream(4, Stream::Nature);
        let mut source = stream(4, Stream::Source);
        for _ in 0..2_000 {
            let offset = b.position(ids[0]).unwrap().offset_to(b.position(ids[1]).unwrap());
            let config = choose_config(offset, &mut source).unwrap();
            let out = avoidance_step(&mut pool, &mut b, ids, config, &mut nature).unwrap();
            assert!(out.report.crashes.is_empty());
        }
    }

    #[test]
    fn subset_sift_groups_rounds() {
        use Basis::{X, Z};
        let c = [Z, Z, X];
        let r1 = [Z, Z, Z];
        let r2 = [Z, Z, Z];
        let r3 = [X, Z, Z];
        let s = sift_subsets(&c, &[&r1, &r2, &r3]).unwrap();
        assert_eq!(s.subsets[&vec![RobotId(0), RobotId(1)]], vec![0]);
        assert_eq!(s.valid_for_all(), &[1]);
        assert!(!s.subsets.values().any(|r| r.contains(&2)));
        assert_eq!(s.usable_by(&[RobotId(0), RobotId(1)]), vec![0, 1]);
        assert!(matches!(sift_subsets(&c, &[&r1[..2]]), Err(ProtocolError::RaggedLogs { .. })));
    }

    #[test]
    fn random_basis_ghz_matches_agree() {
        let mut pool = ResourcePool::new();
        let ids = [RobotId(0), RobotId(1), RobotId(2), RobotId(3)];
        let mut b = board(&[(0, 0), (10, 0), (20, 0), (30, 0)]);
        let mut nature = stream(5, Stream::Nature);
        let mut bases_rng = stream(5, Stream::Bases);
        for _ in 0..400 {
            let c = if bases_rng.random_bool(0.5) { Basis::X } else { Basis::Z };
            let bases: Vec<Basis> =
                (0..4).map(|_| if bases_rng.random_bool(0.5) { Basis::X } else { Basis::Z }).collect();
            let step = random_basis_ghz_step(&mut pool, &mut b, &ids, c, &bases, &mut nature).unwrap();
            let matched_bits: Vec<(u8, u8)> =
                step.readout.decisions.iter().filter(|d| step.matched.contains(&d.robot)).map(|d| d.bits).collect();
            assert!(matched_bits.windows(2).all(|w| w[0] == w[1]));
            assert_eq!(step.report.is_some(), step.matched.len() == 4);
        }
    }
}
