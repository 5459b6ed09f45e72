//! Scenario files, traces, runs and sweeps.
//!
//! A scenario is a TOML document naming a protocol, a seed and the knobs
//! that protocol reads. [`parse_scenario`] validates it, [`run_scenario`]
//! executes it against a [`TraceSink`] and returns [`Stats`].

mod config;
mod run;
mod sweep;
mod trace;
pub mod verify;

pub use config::{
    parse_scenario, render_scenario, BasisModeName, BoundsConfig, ByzantineEntry, DetectionConfig, Diagnostic,
    EveChoice, Protocol, Scenario, StrategyName, WalkMode,
};
pub use run::{resolve_output_dir, run_scenario, write_outputs, Rate, RobotSummary, RunOutputs, Stats, OUT_DIR_ENV};
pub use sweep::{parse_grid, sweep, write_sweep_report, GridAxis, PointSummary, SweepReport, SweepRow, SWEEPABLE};
pub use trace::{check_trace, CountingSink, Event, JsonlSink, PartyTag, TraceEvent, TraceSink};

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::magic_square::MagicSquareError;
use crate::protocols::ProtocolError;
use crate::qsim::QsimError;
use crate::security::SecurityError;
use crate::swarm::SwarmError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Parse(Diagnostic),
    #[error("invalid scenario: {0}")]
    Invalid(Diagnostic),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    MagicSquare(#[from] MagicSquareError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("trace write failed: {0}")]
    Trace(#[from] io::Error),
    #[error("grid axis `{0}` is not a sweepable scenario field")]
    UnknownGridField(String),
    #[error("bad grid spec `{0}`: expected key=v1,v2,... or key=lo..hi")]
    BadGrid(String),
    #[error("sweep needs at least one seed")]
    NoSeeds,
}
