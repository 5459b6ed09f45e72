use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use super::config::{BasisModeName, Diagnostic, Protocol, Scenario, WalkMode};
use super::trace::{Event, JsonlSink, PartyTag, TraceEvent, TraceSink};
use super::ScenarioError;
use crate::magic_square::{classical_optimum, quantum_round, MagicSquareTable};
use crate::protocols::{
    avoidance_step, choose_config, controlled_step, coordinated_step, random_basis_ghz_step, sift_subsets,
    AvoidanceConfig, Directive, QubitMeasurement,
};
use crate::qsim::{Basis, ResourceId, ResourcePool, StateSpec};
use crate::rng::{stream, SimRng, Stream};
use crate::security::{
    byzantine_walk_step, estimate_qber, identify_byzantine, run_detection_round, sift, BasisMode, DetectionRngs,
    MeasurementRecord, MoveLogEntry, Party, SecurityError, Verdict,
};
use crate::swarm::{decode_direction, distance, Board, Direction, MoveReport, Position, RobotId};

/// Environment variable that overrides every scenario's output directory.
pub const OUT_DIR_ENV: &str = "QSWARM_OUT_DIR";

/// An observed frequency with its trial count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub count: u64,
    pub trials: u64,
    pub value: f64,
}

impl Rate {
    pub fn new(count: u64, trials: u64) -> Self {
        let value = if trials == 0 { 0.0 } else { count as f64 / trials as f64 };
        Rate { count, trials, value }
    }

    /// Binomial standard error of `value`.
    pub fn sigma(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        (self.value * (1.0 - self.value) / self.trials as f64).sqrt()
    }

    pub fn merged(self, other: Rate) -> Rate {
        Rate::new(self.count + other.count, self.trials + other.trials)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotSummary {
    pub robot: RobotId,
    pub start: Position,
    pub end: Position,
    pub crashed: bool,
    pub position_changes: u64,
}

/// Summary document written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub name: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub steps: u64,
    pub steps_run: u64,
    pub events: u64,
    pub emitted: u64,
    pub moves: u64,
    pub position_changes: u64,
    pub crashes: u64,
    pub max_norm_drift: f64,
    pub robots: Vec<RobotSummary>,
    pub rates: BTreeMap<String, Rate>,
    pub values: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, String>,
}

struct Recorder<'a> {
    sink: &'a mut dyn TraceSink,
    events: u64,
    moves: u64,
    position_changes: u64,
    crashes: u64,
}

impl Recorder<'_> {
    fn push(&mut self, step: u64, event: Event) -> io::Result<()> {
        self.events += 1;
        self.sink.record(TraceEvent { step, event })
    }

    fn emitted(&mut self, step: u64, emitted: &[(ResourceId, StateSpec)]) -> io::Result<()> {
        for (resource, spec) in emitted {
            self.push(step, Event::Emit { resource: *resource, state: spec.to_string() })?;
        }
        Ok(())
    }

    fn measurements(&mut self, step: u64, ms: &[QubitMeasurement]) -> io::Result<()> {
        for m in ms {
            self.push(
                step,
                Event::Measure {
                    party: PartyTag::Robot,
                    robot: Some(m.robot),
                    resource: m.resource,
                    qubit: m.qubit,
                    basis: m.basis,
                    bit: m.bit,
                },
            )?;
        }
        Ok(())
    }

    fn report(&mut self, step: u64, report: &MoveReport, at: impl Fn(RobotId) -> Option<u64>) -> io::Result<()> {
        for m in &report.moves {
            self.moves += 1;
            self.position_changes += u64::from(m.from != m.to);
            self.push(
                step,
                Event::Move { robot: m.robot, direction: m.direction, from: m.from, to: m.to, at: at(m.robot) },
            )?;
        }
        for c in &report.crashes {
            self.crashes += 1;
            self.push(step, Event::Crash { robot: c.robot, position: c.position })?;
        }
        Ok(())
    }

    fn publish(&mut self, step: u64, party: Party, round: u64, basis: Basis, bit: Option<u8>) -> io::Result<()> {
        let (party, robot) = match party {
            Party::Source => (PartyTag::Source, None),
            Party::Robot(r) => (PartyTag::Robot, Some(r)),
            Party::Eve => (PartyTag::Eve, None),
        };
        self.push(step, Event::Publish { party, robot, round, basis, bit })
    }
}

struct Ctx<'s, 'a> {
    s: &'s Scenario,
    pool: ResourcePool,
    board: Board,
    rec: Recorder<'a>,
    steps_run: u64,
    rates: BTreeMap<String, Rate>,
    values: BTreeMap<String, f64>,
    labels: BTreeMap<String, String>,
}

impl Ctx<'_, '_> {
    fn rng(&self, which: Stream) -> SimRng {
        stream(self.s.seed, which)
    }

    fn rate(&mut self, key: impl Into<String>, count: u64, trials: u64) {
        self.rates.insert(key.into(), Rate::new(count, trials));
    }

    fn halt(&mut self, step: u64, why: &str) {
        self.values.insert("halted_at_step".into(), step as f64);
        self.labels.insert("halted".into(), why.into());
    }

    fn positions2(&self) -> Result<(Position, Position), ScenarioError> {
        Ok((self.board.position(RobotId(0))?, self.board.position(RobotId(1))?))
    }
}

/// Honest basis schedule: the configured list cycled, or one fresh draw
/// per step from the schedule stream.
struct Schedule {
    list: Vec<Basis>,
    rng: SimRng,
}

impl Schedule {
    fn new(s: &Scenario) -> Self {
        Schedule { list: s.schedule.clone(), rng: stream(s.seed, Stream::Schedule) }
    }

    fn next(&mut self, step: u64) -> Basis {
        if self.list.is_empty() {
            draw_basis(&mut self.rng)
        } else {
            self.list[step as usize % self.list.len()]
        }
    }
}

fn draw_basis<R: Rng + ?Sized>(rng: &mut R) -> Basis {
    if rng.random_bool(0.5) {
        Basis::X
    } else {
        Basis::Z
    }
}

/// Executes a scenario, streaming every event into `sink`.
pub fn run_scenario(s: &Scenario, sink: &mut dyn TraceSink) -> Result<Stats, ScenarioError> {
    s.validate().map_err(|(key, msg)| ScenarioError::Invalid(Diagnostic::at_key("", key, msg)))?;
    let board = Board::new(&s.start_positions(), s.bounds.map(|b| b.bounds()), s.swap_crash)?.with_blocking_edges(true);
    let mut ctx = Ctx {
        s,
        pool: ResourcePool::new(),
        board,
        rec: Recorder { sink, events: 0, moves: 0, position_changes: 0, crashes: 0 },
        steps_run: 0,
        rates: BTreeMap::new(),
        values: BTreeMap::new(),
        labels: BTreeMap::new(),
    };
    match s.protocol {
        Protocol::Walk => run_walk(&mut ctx)?,
        Protocol::GhzWalk => run_ghz_walk(&mut ctx)?,
        Protocol::Control => run_control(&mut ctx)?,
        Protocol::Avoid => run_avoid(&mut ctx)?,
        Protocol::Qkd => run_qkd(&mut ctx)?,
        Protocol::Byzantine => run_byzantine(&mut ctx)?,
        Protocol::MagicSquare => run_magic_square(&mut ctx)?,
    }
    let robots = ctx
        .board
        .robots()
        .iter()
        .map(|r| RobotSummary {
            robot: r.id,
            start: r.path[0],
            end: r.position,
            crashed: r.crashed,
            position_changes: r.path.len() as u64 - 1,
        })
        .collect();
    Ok(Stats {
        name: s.name.clone(),
        protocol: s.protocol,
        seed: s.seed,
        steps: s.steps,
        steps_run: ctx.steps_run,
        events: ctx.rec.events,
        emitted: ctx.pool.emitted_count(),
        moves: ctx.rec.moves,
        position_changes: ctx.rec.position_changes,
        crashes: ctx.rec.crashes,
        max_norm_drift: ctx.pool.max_norm_drift(),
        robots,
        rates: ctx.rates,
        values: ctx.values,
        labels: ctx.labels,
    })
}

fn no_timing(_: RobotId) -> Option<u64> {
    None
}

fn run_walk(c: &mut Ctx) -> Result<(), ScenarioError> {
    let ids = [RobotId(0), RobotId(1)];
    let mut nature = c.rng(Stream::Nature);
    let mut walkers: Vec<SimRng> = (0..2).map(|i| c.rng(Stream::Walk(i))).collect();
    let (a, b) = c.positions2()?;
    c.values.insert("initial_distance".into(), distance(a, b) as f64);
    let mut per_dir = [0u64; 4];
    let (mut coordinated, mut kept) = (0u64, 0u64);
    for step in 0..c.s.steps {
        if c.board.live_ids().len() < 2 {
            c.halt(step, "crash");
            break;
        }
        let (a, b) = c.positions2()?;
        let together = c.s.mode == WalkMode::Global || distance(a, b) <= c.s.coordination_threshold;
        if together {
            if coordinated == 0 {
                c.values.insert("first_coordinated_step".into(), step as f64);
            }
            let out = coordinated_step(&mut c.pool, &mut c.board, ids, &mut nature)?;
            c.rec.emitted(step, &out.emitted)?;
            c.rec.measurements(step, &out.measurements)?;
            c.rec.report(step, &out.report, no_timing)?;
            coordinated += 1;
            let d = out.decisions[0].direction;
            per_dir[Direction::ALL.iter().position(|x| *x == d).expect("known direction")] += 1;
            let (a2, b2) = c.positions2()?;
            kept += u64::from(a2.offset_to(b2) == a.offset_to(b));
        } else {
            let moves: BTreeMap<RobotId, Direction> = ids
                .iter()
                .zip(walkers.iter_mut())
                .map(|(&id, rng)| (id, *Direction::ALL.choose(rng).expect("four directions")))
                .collect();
            let report = c.board.apply_moves(&moves)?;
            c.rec.report(step, &report, no_timing)?;
        }
        c.steps_run += 1;
    }
    let run = c.steps_run;
    c.rate("coordinated_steps", coordinated, run);
    c.rate("offset_preserved", kept, coordinated);
    for (d, n) in Direction::ALL.iter().zip(per_dir) {
        c.rate(format!("direction.{d}"), n, coordinated);
    }
    let (a, b) = c.positions2()?;
    c.values.insert("final_distance".into(), distance(a, b) as f64);
    Ok(())
}

fn run_ghz_walk(c: &mut Ctx) -> Result<(), ScenarioError> {
    let n = c.s.robots;
    let mut nature = c.rng(Stream::Nature);
    let mut source = c.rng(Stream::Source);
    let mut bases = c.rng(Stream::Bases);
    let mut schedule = Schedule::new(c.s);
    let random = c.s.basis_mode == BasisModeName::Random;
    let mut source_log = Vec::new();
    let mut robot_logs: Vec<Vec<Basis>> = vec![Vec::new(); n];
    let (mut all_match, mut agreed) = (0u64, 0u64);
    for step in 0..c.s.steps {
        let live = c.board.live_ids();
        if live.len() < 2 {
            c.halt(step, "crash");
            break;
        }
        let (src, robot_bases) = if random {
            (draw_basis(&mut source), live.iter().map(|_| draw_basis(&mut bases)).collect::<Vec<_>>())
        } else {
            let b = schedule.next(step);
            (b, vec![b; live.len()])
        };
        let out = random_basis_ghz_step(&mut c.pool, &mut c.board, &live, src, &robot_bases, &mut nature)?;
        c.rec.emitted(step, &out.readout.emitted)?;
        c.rec.measurements(step, &out.readout.measurements)?;
        if random {
            c.rec.publish(step, Party::Source, step, src, None)?;
            for (&r, &b) in live.iter().zip(&robot_bases) {
                c.rec.publish(step, Party::Robot(r), step, b, None)?;
            }
        }
        if let Some(report) = &out.report {
            all_match += 1;
            let first = out.readout.decisions[0].direction;
            agreed += u64::from(out.readout.decisions.iter().all(|d| d.direction == first));
            c.rec.report(step, report, no_timing)?;
        }
        if live.len() == n {
            source_log.push(src);
            for (log, b) in robot_logs.iter_mut().zip(&robot_bases) {
                log.push(*b);
            }
        }
        c.steps_run += 1;
    }
    let logs: Vec<&[Basis]> = robot_logs.iter().map(Vec::as_slice).collect();
    let sifted = sift_subsets(&source_log, &logs)?;
    let run = c.steps_run;
    c.rate("all_match", all_match, run);
    c.rate("agreement", agreed, all_match);
    c.rate("valid_for_all", sifted.valid_for_all().len() as u64, sifted.rounds as u64);
    c.rate("usable_by.r1+r2", sifted.usable_by(&[RobotId(0), RobotId(1)]).len() as u64, sifted.rounds as u64);
    let expected = if random { 0.5f64.powi(n as i32) } else { 1.0 };
    c.values.insert("expected_all_match".into(), expected);
    Ok(())
}

fn run_control(c: &mut Ctx) -> Result<(), ScenarioError> {
    let mut rng = c.rng(Stream::Nature);
    let mut on_schedule = 0;
    for step in 0..c.s.steps {
        let live = c.board.live_ids();
        if live.is_empty() {
            c.halt(step, "crash");
            break;
        }
        let want = c.s.directives[step as usize % c.s.directives.len()];
        let directive = Directive::steering(&vec![want; live.len()]);
        let out = controlled_step(&mut c.pool, &mut c.board, &live, &directive, &mut rng)?;
        c.rec.emitted(step, &out.emitted)?;
        c.rec.measurements(step, &out.measurements)?;
        c.rec.report(step, &out.report, no_timing)?;
        on_schedule += u64::from(out.decisions.iter().all(|d| d.direction == want));
        c.steps_run += 1;
    }
    let run = c.steps_run;
    c.rate("on_schedule", on_schedule, run);
    Ok(())
}

fn run_avoid(c: &mut Ctx) -> Result<(), ScenarioError> {
    let ids = [RobotId(0), RobotId(1)];
    let mut nature = c.rng(Stream::Nature);
    let mut source = c.rng(Stream::Source);
    let (mut phi_psi, mut held) = (0u64, 0u64);
    let (a, b) = c.positions2()?;
    let mut min_distance = distance(a, b);
    for step in 0..c.s.steps {
        if c.board.live_ids().len() < 2 {
            c.halt(step, "crash");
            break;
        }
        let (a, b) = c.positions2()?;
        let before = distance(a, b);
        let config = choose_config(a.offset_to(b), &mut source)?;
        phi_psi += u64::from(config == AvoidanceConfig::PhiPsi);
        let out = avoidance_step(&mut c.pool, &mut c.board, ids, config, &mut nature)?;
        c.rec.emitted(step, &out.emitted)?;
        c.rec.measurements(step, &out.measurements)?;
        c.rec.report(step, &out.report, no_timing)?;
        let (a, b) = c.positions2()?;
        let after = distance(a, b);
        held += u64::from(after >= before);
        min_distance = min_distance.min(after);
        c.steps_run += 1;
    }
    let run = c.steps_run;
    c.rate("config.phi-psi", phi_psi, run);
    c.rate("distance_non_decreasing", held, run);
    c.values.insert("min_distance".into(), min_distance as f64);
    Ok(())
}

fn run_qkd(c: &mut Ctx) -> Result<(), ScenarioError> {
    let s = c.s;
    let mut nature = c.rng(Stream::Nature);
    let mut bases = c.rng(Stream::Bases);
    let mut eve_rng = c.rng(Stream::Eve);
    let mut sampling = c.rng(Stream::Sampling);
    let mode = match s.basis_mode {
        BasisModeName::Random => BasisMode::Random,
        BasisModeName::Predefined => {
            let mut schedule = Schedule::new(s);
            BasisMode::Predefined((0..s.steps).map(|i| schedule.next(i)).collect())
        }
    };
    let eve = s.eve.strategy();
    let mut rounds = Vec::with_capacity(s.steps as usize);
    {
        let mut rngs = DetectionRngs { nature: &mut nature, bases: &mut bases, eve: &mut eve_rng };
        for round in 0..s.steps {
            let r = run_detection_round(&mut c.pool, round as usize, &mode, eve, &mut rngs)?;
            let spec = StateSpec::Ghz { qubits: 2, basis: r.source_basis };
            c.rec.emitted(round, &[(r.resource, spec)])?;
            if let Some((basis, bit)) = r.eve {
                let e =
                    Event::Measure { party: PartyTag::Eve, robot: None, resource: r.resource, qubit: 0, basis, bit };
                c.rec.push(round, e)?;
            }
            for (qubit, (basis, bit)) in [r.r1, r.r2].into_iter().enumerate() {
                let e = Event::Measure {
                    party: PartyTag::Robot,
                    robot: Some(RobotId(qubit)),
                    resource: r.resource,
                    qubit,
                    basis,
                    bit,
                };
                c.rec.push(round, e)?;
            }
            rounds.push(r);
            c.steps_run += 1;
        }
    }
    let t = s.steps;
    let src = MeasurementRecord::from_rounds(Party::Source, &rounds);
    let r1 = MeasurementRecord::from_rounds(Party::Robot(RobotId(0)), &rounds);
    let r2 = MeasurementRecord::from_rounds(Party::Robot(RobotId(1)), &rounds);
    if matches!(mode, BasisMode::Random) {
        for r in &rounds {
            c.rec.publish(t, Party::Source, r.round as u64, r.source_basis, None)?;
            c.rec.publish(t, Party::Robot(RobotId(0)), r.round as u64, r.r1.0, None)?;
            c.rec.publish(t, Party::Robot(RobotId(1)), r.round as u64, r.r2.0, None)?;
        }
    }
    let valid = sift(&[&src, &r1, &r2])?;
    c.rate("sift", valid.len() as u64, t);
    let est = estimate_qber(&r1, &r2, &valid, s.detection.sample_size, s.detection.threshold, &mut sampling)?;
    for &round in &est.sampled {
        let r = &rounds[round];
        c.rec.publish(t, Party::Robot(RobotId(0)), round as u64, r.r1.0, Some(r.r1.1))?;
        c.rec.publish(t, Party::Robot(RobotId(1)), round as u64, r.r2.0, Some(r.r2.1))?;
    }
    let report = &est.report;
    c.rec.push(
        t,
        Event::Verdict {
            check: "eavesdropper".into(),
            verdict: Some(report.verdict),
            qber: Some(report.qber),
            disagreements: Some(report.disagreements),
            sample: Some(report.rounds_used),
            window: None,
            flagged: None,
        },
    )?;
    let detected = report.verdict == Verdict::EavesdropperDetected;
    c.rate("qber", report.disagreements as u64, report.rounds_used as u64);
    c.rate("detected", u64::from(detected), 1);
    let verdict = if detected { "eavesdropper-detected" } else { "clean" };
    c.labels.insert("verdict".into(), verdict.into());

    let agree = est.remaining.iter().filter(|&&r| rounds[r].r1.1 == rounds[r].r2.1).count();
    c.rate("key_agreement", agree as u64, est.remaining.len() as u64);
    if detected {
        return Ok(());
    }
    // Leftover valid rounds become movement bits, two per move.
    let (mut in_sync, mut pairs) = (0u64, 0u64);
    for (k, pair) in est.remaining.chunks_exact(2).enumerate() {
        let step = t + 1 + k as u64;
        if c.board.live_ids().len() < 2 {
            c.halt(step, "crash");
            break;
        }
        let (x, y) = (&rounds[pair[0]], &rounds[pair[1]]);
        let d1 = decode_direction((x.r1.1, y.r1.1));
        let d2 = decode_direction((x.r2.1, y.r2.1));
        let moves = BTreeMap::from([(RobotId(0), d1), (RobotId(1), d2)]);
        let report = c.board.apply_moves(&moves)?;
        c.rec.report(step, &report, no_timing)?;
        pairs += 1;
        in_sync += u64::from(d1 == d2);
    }
    c.rate("moves_in_sync", in_sync, pairs);
    Ok(())
}

fn run_byzantine(c: &mut Ctx) -> Result<(), ScenarioError> {
    let s = c.s;
    let roster = s.byzantine_roster();
    let honest = s.honest_robots();
    let mut nature = c.rng(Stream::Nature);
    let mut adversary = c.rng(Stream::Byzantine);
    let mut schedule = Schedule::new(s);
    let mut log: Vec<MoveLogEntry> = Vec::new();
    for step in 0..s.steps {
        let live_honest: Vec<RobotId> = honest.iter().copied().filter(|r| c.board.ensure_live(*r).is_ok()).collect();
        if live_honest.is_empty() {
            c.halt(step, "no honest robot left");
            break;
        }
        let live_byz: Vec<_> = roster.iter().copied().filter(|(r, _)| c.board.ensure_live(*r).is_ok()).collect();
        let basis = schedule.next(step);
        let out = byzantine_walk_step(&mut c.pool, step, &live_honest, &live_byz, basis, &mut nature, &mut adversary)?;
        c.rec.emitted(step, &out.emitted)?;
        c.rec.measurements(step, &out.measurements)?;
        let moves: BTreeMap<RobotId, Direction> = out.entries.iter().map(|e| (e.robot, e.direction)).collect();
        let report = c.board.apply_moves(&moves)?;
        let at: BTreeMap<RobotId, u64> = out.entries.iter().map(|e| (e.robot, e.at)).collect();
        c.rec.report(step, &report, |r| at.get(&r).copied())?;
        log.extend(out.entries);
        c.steps_run += 1;
    }

    let t = s.steps;
    let width = s.window.unwrap_or(t);
    let mut flagged_windows: BTreeMap<RobotId, u64> = BTreeMap::new();
    let (mut windows, mut honest_flags) = (0u64, 0u64);
    let mut start = 0;
    while start < t {
        let end = (start + width).min(t);
        match identify_byzantine(&log, start..end, s.min_match_rate) {
            Ok(flagged) => {
                windows += 1;
                for r in &flagged {
                    *flagged_windows.entry(*r).or_default() += 1;
                    honest_flags += u64::from(honest.contains(r));
                }
                c.rec.push(
                    t,
                    Event::Verdict {
                        check: "byzantine".into(),
                        verdict: None,
                        qber: None,
                        disagreements: None,
                        sample: None,
                        window: Some([start, end]),
                        flagged: Some(flagged.into_iter().collect()),
                    },
                )?;
            }
            Err(SecurityError::EmptyWindow) => {}
            Err(e) => return Err(e.into()),
        }
        start = end;
    }
    for (robot, strategy) in &roster {
        let mine: Vec<&MoveLogEntry> = log.iter().filter(|e| e.robot == *robot).collect();
        let matches = mine.iter().filter(|e| e.matches_honest).count() as u64;
        c.rate(format!("match_rate.{robot}"), matches, mine.len() as u64);
        c.rate(format!("flagged.{robot}"), flagged_windows.get(robot).copied().unwrap_or(0), windows);
        let name = serde_json::to_value(strategy)
            .ok()
            .and_then(|v| v.get("strategy").and_then(|s| s.as_str()).map(str::to_owned))
            .unwrap_or_default();
        c.labels.insert(format!("strategy.{robot}"), name);
    }
    c.rate("honest_flagged", honest_flags, windows * honest.len() as u64);
    Ok(())
}

fn run_magic_square(c: &mut Ctx) -> Result<(), ScenarioError> {
    let table = MagicSquareTable::standard();
    let mut nature = c.rng(Stream::Nature);
    let mut referee = c.rng(Stream::Source);
    let (mut wins, mut ones) = (0u64, 0u64);
    for round in 0..c.s.steps {
        let (row, col) = (referee.random_range(0..3), referee.random_range(0..3));
        let (resource, g) = quantum_round(&mut c.pool, &table, row, col, &mut nature)?;
        c.rec.push(round, Event::Emit { resource, state: "phi+ phi+".into() })?;
        c.rec.push(
            round,
            Event::GameRound {
                row,
                col,
                row_values: g.row_values,
                col_values: g.col_values,
                win: g.win,
                shared: g.shared_value(),
            },
        )?;
        wins += u64::from(g.win);
        ones += u64::from(g.shared_value() == Some(1));
        c.steps_run += 1;
    }
    let run = c.steps_run;
    c.rate("win_rate", wins, run);
    c.rate("shared_bit_plus", ones, wins);
    let opt = classical_optimum();
    c.values
        .insert("classical_optimum".into(), *opt.win_probability.numer() as f64 / *opt.win_probability.denom() as f64);
    c.labels.insert("classical_optimum".into(), opt.win_probability.to_string());
    Ok(())
}

/// `QSWARM_OUT_DIR` if set, else the scenario's `output_dir`, else `.`.
pub fn resolve_output_dir(s: &Scenario) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(s.output_dir.as_deref().unwrap_or(".")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub trace: PathBuf,
    pub stats_path: PathBuf,
    pub stats: Stats,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.to_owned(), source }
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into
/// place, so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ScenarioError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| ScenarioError::Io { path: path.to_owned(), source: e.error })?;
    Ok(())
}

/// Runs `s` and writes `<name>.trace.jsonl` and `<name>.stats.json` into
/// `dir`, each atomically.
pub fn write_outputs(s: &Scenario, dir: &Path) -> Result<RunOutputs, ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace = dir.join(format!("{}.trace.jsonl", s.name));
    let stats_path = dir.join(format!("{}.stats.json", s.name));

    let tmp = NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    let mut sink = JsonlSink::new(BufWriter::new(tmp.as_file()));
    let stats = run_scenario(s, &mut sink)?;
    sink.into_inner().flush().map_err(io_err(&trace))?;
    tmp.persist(&trace).map_err(|e| ScenarioError::Io { path: trace.clone(), source: e.error })?;

    let mut doc = serde_json::to_vec_pretty(&stats).expect("stats serialize");
    doc.push(b'\n');
    write_atomic(&stats_path, &doc)?;
    Ok(RunOutputs { trace, stats_path, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::trace::check_trace;
    use crate::scenario::{EveChoice, Scenario};

    fn run(s: &Scenario) -> (Stats, Vec<TraceEvent>) {
        let mut events = Vec::new();
        let stats = run_scenario(s, &mut events).unwrap();
        check_trace(&events).unwrap();
        (stats, events)
    }

    #[test]
    fn global_walk_keeps_offset() {
        let (stats, _) = run(&Scenario::new("w", Protocol::Walk, 7, 500));
        assert_eq!(stats.rates["offset_preserved"].value, 1.0);
        assert_eq!(stats.values["final_distance"], 3.0);
        assert_eq!(stats.crashes, 0);
        assert_eq!(stats.moves, 1000);
    }

    #[test]
    fn local_walk_switches_on_proximity() {
        let mut coordinated_runs = 0;
        for seed in 0..20 {
            let mut s = Scenario::new("l", Protocol::Walk, seed, 500);
            s.mode = WalkMode::Local;
            // Two independent unit steps never change the parity of x + y in
            // the offset, so only an odd start can reach distance 1.
            s.positions = Some(vec![[0, 0], [3, 0]]);
            let (stats, events) = run(&s);
            let Some(&first) = stats.values.get("first_coordinated_step") else {
                assert!(events.iter().all(|e| !matches!(e.event, Event::Emit { .. })));
                continue;
            };
            coordinated_runs += 1;
            // Nothing is emitted while the robots walk on their own.
            let first_emit = events.iter().find(|e| matches!(e.event, Event::Emit { .. })).unwrap();
            assert_eq!(first_emit.step, first as u64);
            assert!(stats.values["final_distance"] <= 1.0);
        }
        assert!(coordinated_runs > 0);
    }

    #[test]
    fn qkd_with_random_eve_is_caught() {
        let mut s = Scenario::new("q", Protocol::Qkd, 3, 2000);
        s.eve = EveChoice::InterceptRandom;
        let (stats, _) = run(&s);
        assert_eq!(stats.labels["verdict"], "eavesdropper-detected");
        assert_eq!(stats.moves, 0);
    }

    #[test]
    fn clean_qkd_moves_robots_in_sync() {
        let (stats, _) = run(&Scenario::new("q", Protocol::Qkd, 4, 2000));
        assert_eq!(stats.rates["qber"].count, 0);
        assert_eq!(stats.rates["key_agreement"].value, 1.0);
        assert_eq!(stats.rates["moves_in_sync"].value, 1.0);
        assert!(stats.moves > 0);
    }

    #[test]
    fn magic_square_always_wins() {
        let (stats, _) = run(&Scenario::new("m", Protocol::MagicSquare, 1, 300));
        assert_eq!(stats.rates["win_rate"].value, 1.0);
        assert_eq!(stats.labels["classical_optimum"], "8/9");
    }

    #[test]
    fn invalid_scenario_is_rejected_at_run() {
        let s = Scenario::new("x", Protocol::Walk, 1, 0);
        assert!(matches!(run_scenario(&s, &mut Vec::new()), Err(ScenarioError::Invalid(_))));
    }
}
