//! Grid board, robots, simultaneous moves and crash semantics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub usize);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub x: i64,
    pub y: i64,
}

impl Position {
    pub const fn new(x: i64, y: i64) -> Self {
        Position { x, y }
    }

    pub fn step(self, dir: Direction) -> Position {
        let (dx, dy) = dir.delta();
        Position { x: self.x + dx, y: self.y + dy }
    }

    /// `other − self`.
    pub fn offset_to(self, other: Position) -> (i64, i64) {
        (other.x - self.x, other.y - self.y)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Manhattan distance.
pub fn distance(a: Position, b: Position) -> u64 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Right,
    Left,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Right, Direction::Left];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::Up => (0, 1),
            Direction::Down => (0, -1),
            Direction::Right => (1, 0),
            Direction::Left => (-1, 0),
        }
    }

    /// Inverse of [`decode_direction`].
    pub fn bits(self) -> (u8, u8) {
        match self {
            Direction::Up => (0, 0),
            Direction::Down => (1, 1),
            Direction::Right => (0, 1),
            Direction::Left => (1, 0),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Right => "right",
            Direction::Left => "left",
        };
        f.write_str(s)
    }
}

/// `00 → up`, `11 → down`, `01 → right`, `10 → left`. Any nonzero input
/// counts as a 1.
pub fn decode_direction(bits: (u8, u8)) -> Direction {
    match (bits.0 != 0, bits.1 != 0) {
        (false, false) => Direction::Up,
        (true, true) => Direction::Down,
        (false, true) => Direction::Right,
        (true, false) => Direction::Left,
    }
}

/// Inclusive rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Position,
    pub max: Position,
}

impl Bounds {
    pub fn contains(&self, p: Position) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub position: Position,
    pub crashed: bool,
    /// Every tile the robot has stood on, starting tile first.
    pub path: Vec<Position>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub robot: RobotId,
    pub direction: Direction,
    pub from: Position,
    /// Where the robot ended up; equals `from` when it crashed mid-swap.
    pub to: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashEvent {
    pub robot: RobotId,
    pub position: Position,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MoveReport {
    pub moves: Vec<MoveRecord>,
    pub crashes: Vec<CrashEvent>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SwarmError {
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("robot {0} has crashed and cannot move")]
    CrashedRobot(RobotId),
    #[error("robot {robot} would leave the board at {target}")]
    OutOfBounds { robot: RobotId, target: Position },
    #[error("robots {first} and {second} both start at {position}")]
    SharedStart { first: RobotId, second: RobotId, position: Position },
    #[error("start position {0} lies outside the board")]
    StartOutOfBounds(Position),
}

/// The board. Unbounded unless `bounds` is set.
///
/// At most one live robot stands on any tile. Robots that crash stay on
/// the tile where the crash happened and never move again, so a crash
/// site may hold several wrecks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Board {
    robots: Vec<RobotState>,
    occupancy: BTreeMap<Position, Vec<RobotId>>,
    bounds: Option<Bounds>,
    swap_crash: bool,
    blocking_edges: bool,
}

impl Board {
    pub fn new(starts: &[Position], bounds: Option<Bounds>, swap_crash: bool) -> Result<Self, SwarmError> {
        let mut occupancy: BTreeMap<Position, Vec<RobotId>> = BTreeMap::new();
        for (i, &p) in starts.iter().enumerate() {
            if bounds.is_some_and(|b| !b.contains(p)) {
                return Err(SwarmError::StartOutOfBounds(p));
            }
            let slot = occupancy.entry(p).or_default();
            if let Some(&first) = slot.first() {
                return Err(SwarmError::SharedStart { first, second: RobotId(i), position: p });
            }
            slot.push(RobotId(i));
        }
        let robots = starts
            .iter()
            .enumerate()
            .map(|(i, &p)| RobotState { id: RobotId(i), position: p, crashed: false, path: vec![p] })
            .collect();
        Ok(Board { robots, occupancy, bounds, swap_crash, blocking_edges: false })
    }

    /// Unbounded board with swap-crash enabled.
    pub fn unbounded(starts: &[Position]) -> Result<Self, SwarmError> {
        Board::new(starts, None, true)
    }

    /// With blocking edges a move off the board leaves the robot where it
    /// is instead of failing the whole step.
    pub fn with_blocking_edges(mut self, on: bool) -> Self {
        self.blocking_edges = on;
        self
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn robot(&self, id: RobotId) -> Result<&RobotState, SwarmError> {
        self.robots.get(id.0).ok_or(SwarmError::UnknownRobot(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.robots.iter().map(|r| r.id)
    }

    pub fn live_ids(&self) -> Vec<RobotId> {
        self.robots.iter().filter(|r| !r.crashed).map(|r| r.id).collect()
    }

    pub fn position(&self, id: RobotId) -> Result<Position, SwarmError> {
        Ok(self.robot(id)?.position)
    }

    pub fn occupants(&self, p: Position) -> &[RobotId] {
        self.occupancy.get(&p).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn crashed_count(&self) -> usize {
        self.robots.iter().filter(|r| r.crashed).count()
    }

    pub fn ensure_live(&self, id: RobotId) -> Result<(), SwarmError> {
        if self.robot(id)?.crashed {
            return Err(SwarmError::CrashedRobot(id));
        }
        Ok(())
    }

    /// Applies every move at once. Robots absent from `moves` stay put.
    ///
    /// Two or more robots ending on one tile all crash there (a stationary
    /// robot that gets entered crashes too). With swap-crash enabled, two
    /// robots exchanging tiles both crash on their starting tiles; that
    /// may in turn block robots that expected those tiles to be vacated.
    /// The board is left untouched when an error is returned.
    pub fn apply_moves(&mut self, moves: &BTreeMap<RobotId, Direction>) -> Result<MoveReport, SwarmError> {
        let mut targets: BTreeMap<RobotId, Position> = BTreeMap::new();
        for (&id, &dir) in moves {
            let robot = self.robot(id)?;
            if robot.crashed {
                return Err(SwarmError::CrashedRobot(id));
            }
            let mut target = robot.position.step(dir);
            if self.bounds.is_some_and(|b| !b.contains(target)) {
                if !self.blocking_edges {
                    return Err(SwarmError::OutOfBounds { robot: id, target });
                }
                target = robot.position;
            }
            targets.insert(id, target);
        }

        let mut finals: Vec<Position> = self.robots.iter().map(|r| r.position).collect();
        for (&id, &t) in &targets {
            finals[id.0] = t;
        }
        let mut crashing: BTreeSet<RobotId> = BTreeSet::new();
        if self.swap_crash {
            for (&a, &ta) in &targets {
                for (&b, &tb) in targets.range(a..).skip(1) {
                    if ta == self.robots[b.0].position && tb == self.robots[a.0].position {
                        crashing.insert(a);
                        crashing.insert(b);
                        finals[a.0] = self.robots[a.0].position;
                        finals[b.0] = self.robots[b.0].position;
                    }
                }
            }
        }

        let mut groups: BTreeMap<Position, Vec<RobotId>> = BTreeMap::new();
        for r in &self.robots {
            groups.entry(finals[r.id.0]).or_default().push(r.id);
        }
        for members in groups.values().filter(|m| m.len() > 1) {
            for &id in members {
                if !self.robots[id.0].crashed {
                    crashing.insert(id);
                }
            }
        }

        let mut report = MoveReport::default();
        for (&id, &dir) in moves {
            let robot = &mut self.robots[id.0];
            let from = robot.position;
            let to = finals[id.0];
            if to != from {
                robot.position = to;
                robot.path.push(to);
            }
            report.moves.push(MoveRecord { robot: id, direction: dir, from, to });
        }
        for &id in &crashing {
            let robot = &mut self.robots[id.0];
            robot.crashed = true;
            report.crashes.push(CrashEvent { robot: id, position: robot.position });
        }

        self.occupancy.clear();
        for r in &self.robots {
            self.occupancy.entry(r.position).or_default().push(r.id);
        }
        Ok(report)
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (pos, ids) in &self.occupancy {
            let live = ids.iter().filter(|id| !self.robots[id.0].crashed).count();
            if live > 1 {
                return Err(format!("{live} live robots share {pos}"));
            }
            if live == 1 && ids.len() > 1 {
                return Err(format!("live robot shares {pos} with a wreck"));
            }
            for id in ids {
                if self.robots[id.0].position != *pos {
                    return Err(format!("occupancy lists {id} at {pos}"));
                }
            }
        }
        for r in &self.robots {
            if !self.occupants(r.position).contains(&r.id) {
                return Err(format!("{} missing from occupancy", r.id));
            }
            if r.path.last() != Some(&r.position) {
                return Err(format!("{} path does not end at its position", r.id));
            }
            if let Some(w) = r.path.windows(2).find(|w| distance(w[0], w[1]) != 1) {
                return Err(format!("{} path jumps from {} to {}", r.id, w[0], w[1]));
            }
        }
        Ok(())
    }
}
