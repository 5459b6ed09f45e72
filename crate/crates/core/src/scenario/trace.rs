use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::qsim::{Basis, ResourceId};
use crate::security::Verdict;
use crate::swarm::{Direction, Position, RobotId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartyTag {
    Source,
    Robot,
    Eve,
    Referee,
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Event {
    Emit {
        resource: ResourceId,
        state: String,
    },
    Measure {
        party: PartyTag,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        robot: Option<RobotId>,
        resource: ResourceId,
        qubit: usize,
        basis: Basis,
        bit: u8,
    },
    /// A basis announcement, or an outcome revealed for checking.
    Publish {
        party: PartyTag,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        robot: Option<RobotId>,
        round: u64,
        basis: Basis,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bit: Option<u8>,
    },
    Move {
        robot: RobotId,
        direction: Direction,
        from: Position,
        to: Position,
        /// Sub-tick of the move, where timing is tracked.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
    Crash {
        robot: RobotId,
        position: Position,
    },
    Verdict {
        check: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        verdict: Option<Verdict>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        qber: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        disagreements: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<[u64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        flagged: Option<Vec<RobotId>>,
    },
    GameRound {
        row: usize,
        col: usize,
        row_values: [i8; 3],
        col_values: [i8; 3],
        win: bool,
        /// Value of the shared tile when both players wrote the same one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shared: Option<i8>,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Emit { .. } => "emit",
            Event::Measure { .. } => "measure",
            Event::Publish { .. } => "publish",
            Event::Move { .. } => "move",
            Event::Crash { .. } => "crash",
            Event::Verdict { .. } => "verdict",
            Event::GameRound { .. } => "game-round",
        }
    }
}

pub trait TraceSink {
    fn record(&mut self, event: TraceEvent) -> io::Result<()>;
}

impl TraceSink for Vec<TraceEvent> {
    fn record(&mut self, event: TraceEvent) -> io::Result<()> {
        self.push(event);
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct JsonlSink<W: Write> {
    writer: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(writer: W) -> Self {
        JsonlSink { writer }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> TraceSink for JsonlSink<W> {
    fn record(&mut self, event: TraceEvent) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, &event)?;
        self.writer.write_all(b"\n")
    }
}

/// Keeps only per-kind counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountingSink {
    pub counts: BTreeMap<&'static str, u64>,
}

impl TraceSink for CountingSink {
    fn record(&mut self, event: TraceEvent) -> io::Result<()> {
        *self.counts.entry(event.event.kind()).or_default() += 1;
        Ok(())
    }
}

/// Structural checks on a trace: steps never decrease and no robot moves
/// after its crash.
pub fn check_trace(events: &[TraceEvent]) -> Result<(), String> {
    let mut last = 0;
    let mut wrecked: BTreeSet<RobotId> = BTreeSet::new();
    for (i, e) in events.iter().enumerate() {
        if e.step < last {
            return Err(format!("event {i} at step {} follows step {last}", e.step));
        }
        last = e.step;
        match &e.event {
            Event::Move { robot, .. } if wrecked.contains(robot) => {
                return Err(format!("event {i}: crashed robot {robot} moves at step {}", e.step));
            }
            Event::Crash { robot, .. } => {
                wrecked.insert(*robot);
            }
            _ => {}
        }
    }
    Ok(())
}
