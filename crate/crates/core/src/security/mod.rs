//! Adversaries and how honest parties catch them.
//!
//! [`eavesdrop`] covers intercept-resend attacks on the entanglement
//! channel, caught by publishing bases and comparing a sample of sifted
//! outcomes. [`byzantine`] covers robots without the shared basis schedule
//! and the timing/match tests that expose them.

pub mod byzantine;
pub mod eavesdrop;

pub use byzantine::{
    byzantine_walk_step, identify_byzantine, ByzantineStep, ByzantineStrategy, MoveLogEntry, SUBTICKS_PER_STEP,
};
pub use eavesdrop::{
    estimate_qber, run_detection_round, sift, sifted_disagreements, BasisMode, DetectionReport, DetectionRngs,
    EveStrategy, MeasurementEntry, MeasurementRecord, Party, QberEstimate, RoundRecord, Verdict,
};

use thiserror::Error;

use crate::qsim::QsimError;

#[derive(Debug, Error, PartialEq)]
pub enum SecurityError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("party {party} logged {got} rounds, expected {expected}")]
    RaggedLogs { party: String, got: usize, expected: usize },
    #[error("need {needed} valid rounds for the check sample, only {available} available")]
    InsufficientValidRounds { needed: usize, available: usize },
    #[error("check sample size must be positive")]
    EmptySample,
    #[error("predefined basis schedule is empty")]
    EmptySchedule,
    #[error("no honest robot left to follow")]
    NoHonestRobots,
    #[error("robot {0} is listed more than once")]
    DuplicateRobot(crate::swarm::RobotId),
    #[error("identification window is empty")]
    EmptyWindow,
    #[error("round {0} missing from a measurement record")]
    MissingRound(usize),
}
