use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::qsim::{Basis, MAX_QUBITS};
use crate::security::{BasisMode, ByzantineStrategy, EveStrategy};
use crate::swarm::{Bounds, Direction, Position, RobotId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Walk,
    GhzWalk,
    Control,
    Avoid,
    Qkd,
    Byzantine,
    MagicSquare,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Walk => "walk",
            Protocol::GhzWalk => "ghz-walk",
            Protocol::Control => "control",
            Protocol::Avoid => "avoid",
            Protocol::Qkd => "qkd",
            Protocol::Byzantine => "byzantine",
            Protocol::MagicSquare => "magic-square",
        })
    }
}

/// `global`: coordinated from the first step. `local`: independent walks
/// until the robots are within `coordination_threshold`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkMode {
    #[default]
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisModeName {
    #[default]
    Random,
    Predefined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveChoice {
    #[default]
    Passive,
    InterceptRandom,
    InterceptFixedZ,
    InterceptFixedX,
}

impl EveChoice {
    pub fn strategy(self) -> EveStrategy {
        match self {
            EveChoice::Passive => EveStrategy::Passive,
            EveChoice::InterceptRandom => EveStrategy::InterceptResendRandomBasis,
            EveChoice::InterceptFixedZ => EveStrategy::InterceptResendFixedBasis(Basis::Z),
            EveChoice::InterceptFixedX => EveStrategy::InterceptResendFixedBasis(Basis::X),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    GuessBasis,
    RandomDirection,
    FollowWithDelay,
}

/// One adversarial robot. `robot` is the zero-based index into the roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineEntry {
    pub robot: usize,
    pub strategy: StrategyName,
    /// Sub-ticks of lag for `follow-with-delay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<u64>,
}

impl ByzantineEntry {
    pub fn strategy(&self) -> ByzantineStrategy {
        match self.strategy {
            StrategyName::GuessBasis => ByzantineStrategy::GuessBasis,
            StrategyName::RandomDirection => ByzantineStrategy::RandomDirection,
            StrategyName::FollowWithDelay => ByzantineStrategy::FollowWithDelay { delay: self.delay.unwrap_or(1) },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig { sample_size: default_sample_size(), threshold: default_threshold() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub min: [i64; 2],
    pub max: [i64; 2],
}

impl BoundsConfig {
    pub fn bounds(&self) -> Bounds {
        Bounds { min: Position::new(self.min[0], self.min[1]), max: Position::new(self.max[0], self.max[1]) }
    }
}

fn default_robots() -> usize {
    2
}
fn default_threshold_distance() -> u64 {
    1
}
fn default_true() -> bool {
    true
}
fn default_sample_size() -> usize {
    64
}
fn default_threshold() -> f64 {
    0.1
}
fn default_match_rate() -> f64 {
    1.0
}
fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// A complete run description. Tables (`bounds`, `detection`,
/// `byzantine`) come last so the rendered TOML stays flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub protocol: Protocol,
    pub seed: u64,
    /// Steps, or rounds for `qkd` and `magic-square`.
    pub steps: u64,
    #[serde(default = "default_robots")]
    pub robots: usize,
    /// Starting tiles; robot `i` starts at `(3i, 0)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[i64; 2]>>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub mode: WalkMode,
    #[serde(default = "default_threshold_distance")]
    pub coordination_threshold: u64,
    #[serde(default = "default_true")]
    pub swap_crash: bool,
    /// Direction schedule for `control`, cycled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub directives: Vec<Direction>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub basis_mode: BasisModeName,
    /// Predefined basis schedule, cycled. Drawn per step from the seed
    /// when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<Basis>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub eve: EveChoice,
    /// Identification window length in steps; the whole run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    #[serde(default = "default_match_rate")]
    pub min_match_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub byzantine: Vec<ByzantineEntry>,
}

impl Scenario {
    /// Minimal valid scenario for a protocol; the remaining fields take
    /// their defaults.
    pub fn new(name: impl Into<String>, protocol: Protocol, seed: u64, steps: u64) -> Self {
        Scenario {
            name: name.into(),
            protocol,
            seed,
            steps,
            robots: default_robots(),
            positions: None,
            mode: WalkMode::default(),
            coordination_threshold: default_threshold_distance(),
            swap_crash: true,
            directives: Vec::new(),
            basis_mode: BasisModeName::default(),
            schedule: Vec::new(),
            eve: EveChoice::default(),
            window: None,
            min_match_rate: default_match_rate(),
            output_dir: None,
            bounds: None,
            detection: DetectionConfig::default(),
            byzantine: Vec::new(),
        }
    }

    pub fn start_positions(&self) -> Vec<Position> {
        match &self.positions {
            Some(ps) => ps.iter().map(|p| Position::new(p[0], p[1])).collect(),
            None => (0..self.robots as i64).map(|i| Position::new(3 * i, 0)).collect(),
        }
    }

    pub fn basis_mode(&self) -> BasisMode {
        match self.basis_mode {
            BasisModeName::Random => BasisMode::Random,
            BasisModeName::Predefined => BasisMode::Predefined(self.schedule.clone()),
        }
    }

    pub fn byzantine_roster(&self) -> Vec<(RobotId, ByzantineStrategy)> {
        self.byzantine.iter().map(|e| (RobotId(e.robot), e.strategy())).collect()
    }

    pub fn honest_robots(&self) -> Vec<RobotId> {
        let byz: BTreeSet<usize> = self.byzantine.iter().map(|e| e.robot).collect();
        (0..self.robots).filter(|i| !byz.contains(i)).map(RobotId).collect()
    }

    /// Checks every cross-field rule. The error names the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let bad = |key: &'static str, msg: String| Err((key, msg));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return bad("name", format!("`{}` must be non-empty and use only [A-Za-z0-9._-]", self.name));
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed", format!("{} does not fit a TOML integer (max {})", self.seed, i64::MAX));
        }
        if self.steps == 0 {
            return bad("steps", "must be positive".into());
        }
        if self.robots == 0 || self.robots > MAX_QUBITS {
            return bad("robots", format!("must be between 1 and {MAX_QUBITS}, got {}", self.robots));
        }
        let needed = match self.protocol {
            Protocol::Walk | Protocol::Avoid | Protocol::Qkd => Some(2),
            _ => None,
        };
        if let Some(n) = needed {
            if self.robots != n {
                return bad("robots", format!("{} runs exactly {n} robots, got {}", self.protocol, self.robots));
            }
        }
        if self.protocol == Protocol::GhzWalk && self.robots < 2 {
            return bad("robots", "ghz-walk needs at least 2 robots".into());
        }
        if let Some(ps) = &self.positions {
            if ps.len() != self.robots {
                return bad("positions", format!("{} positions for {} robots", ps.len(), self.robots));
            }
        }
        let starts = self.start_positions();
        let mut seen = BTreeSet::new();
        for (i, p) in starts.iter().enumerate() {
            if !seen.insert(*p) {
                return bad("positions", format!("robot {i} shares its starting tile {p} with another robot"));
            }
        }
        if let Some(b) = &self.bounds {
            if b.min[0] > b.max[0] || b.min[1] > b.max[1] {
                return bad("bounds", "min must not exceed max".into());
            }
            if let Some(p) = starts.iter().find(|p| !b.bounds().contains(**p)) {
                return bad("bounds", format!("starting tile {p} lies outside the board"));
            }
        }
        if self.protocol == Protocol::Control && self.directives.is_empty() {
            return bad("directives", "control needs at least one directive".into());
        }
        if self.detection.sample_size == 0 {
            return bad("sample_size", "must be positive".into());
        }
        if self.protocol == Protocol::Qkd && self.detection.sample_size as u64 > self.steps {
            return bad(
                "sample_size",
                format!("sample of {} exceeds the {} rounds available", self.detection.sample_size, self.steps),
            );
        }
        if !(0.0..=1.0).contains(&self.detection.threshold) {
            return bad("threshold", "must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.min_match_rate) {
            return bad("min_match_rate", "must lie in [0, 1]".into());
        }
        if let Some(w) = self.window {
            if w == 0 || w > self.steps {
                return bad("window", format!("must lie in 1..={}", self.steps));
            }
        }
        let mut byz = BTreeSet::new();
        for e in &self.byzantine {
            if e.robot >= self.robots {
                return bad("byzantine", format!("robot index {} out of range for {} robots", e.robot, self.robots));
            }
            if !byz.insert(e.robot) {
                return bad("byzantine", format!("robot index {} listed twice", e.robot));
            }
            if e.delay.is_some() && e.strategy != StrategyName::FollowWithDelay {
                return bad("byzantine", "`delay` only applies to follow-with-delay".into());
            }
        }
        if !self.byzantine.is_empty() && self.protocol != Protocol::Byzantine {
            return bad("byzantine", format!("{} takes no byzantine roster", self.protocol));
        }
        if self.protocol == Protocol::Byzantine && byz.len() == self.robots {
            return bad("byzantine", "at least one robot must be honest".into());
        }
        Ok(())
    }
}

/// A message tied to a place in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
    pub context: Option<String>,
}

impl Diagnostic {
    fn at_offset(text: &str, offset: Option<usize>, message: impl Into<String>) -> Self {
        let message = message.into();
        let Some(offset) = offset else {
            return Diagnostic { line: None, column: None, message, context: None };
        };
        let offset = offset.min(text.len());
        let before = &text[..offset];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        let column = text[line_start..offset].chars().count() + 1;
        let context = text.lines().nth(line - 1).map(str::to_owned);
        Diagnostic { line: Some(line), column: Some(column), message, context }
    }

    /// Points at the line defining `key`, if the file spells it out.
    pub(crate) fn at_key(text: &str, key: &str, message: String) -> Self {
        let mut offset = 0;
        for l in text.split_inclusive('\n') {
            let t = l.trim_start();
            let defines = t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
                || t.starts_with(&format!("[{key}]"))
                || t.starts_with(&format!("[[{key}]]"));
            if defines {
                return Self::at_offset(text, Some(offset + (l.len() - t.len())), message);
            }
            offset += l.len();
        }
        Diagnostic { line: None, column: None, message: format!("{key}: {message}"), context: None }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message)?,
            _ => f.write_str(&self.message)?,
        }
        if let (Some(l), Some(ctx)) = (self.line, &self.context) {
            write!(f, "\n{l:>5} | {ctx}")?;
        }
        Ok(())
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text)
        .map_err(|e| ScenarioError::Parse(Diagnostic::at_offset(text, e.span().map(|s| s.start), e.message())))?;
    scenario.validate().map_err(|(key, msg)| ScenarioError::Invalid(Diagnostic::at_key(text, key, msg)))?;
    Ok(scenario)
}

pub fn render_scenario(scenario: &Scenario) -> String {
    toml::to_string(scenario).expect("scenario fields are all TOML-representable")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "name = \"w\"\nprotocol = \"walk\"\nseed = 7\nsteps = 100\n";

    #[test]
    fn minimal_walk_parses_with_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s, Scenario::new("w", Protocol::Walk, 7, 100));
        assert_eq!(s.start_positions(), vec![Position::new(0, 0), Position::new(3, 0)]);
    }

    #[test]
    fn shared_start_is_reported_on_its_line() {
        let text = format!("{MINIMAL}positions = [[1, 1], [1, 1]]\n");
        match parse_scenario(&text) {
            Err(ScenarioError::Invalid(d)) => {
                assert_eq!(d.line, Some(5));
                assert!(d.message.contains("shares its starting tile"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oversized_sample_rejected() {
        let text = "name = \"q\"\nprotocol = \"qkd\"\nseed = 1\nsteps = 10\n[detection]\nsample_size = 11\n";
        match parse_scenario(text) {
            Err(ScenarioError::Invalid(d)) => assert_eq!(d.line, Some(6)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_protocols_are_errors() {
        let text = format!("{MINIMAL}colour = \"red\"\n");
        match parse_scenario(&text) {
            Err(ScenarioError::Parse(d)) => {
                assert_eq!(d.line, Some(5));
                assert!(d.message.contains("colour"), "{d}");
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("walk", "teleport");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Parse(d)) if d.line == Some(2)));
        assert!(matches!(parse_scenario("name = "), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn zero_counts_rejected() {
        let text = MINIMAL.replace("steps = 100", "steps = 0");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Invalid(_))));
        let text = MINIMAL.replace("walk", "ghz-walk") + "robots = 0\n";
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn byzantine_roster_round_trips() {
        let text = "name = \"b\"\nprotocol = \"byzantine\"\nseed = 3\nsteps = 20\nrobots = 3\n\
                    [[byzantine]]\nrobot = 2\nstrategy = \"follow-with-delay\"\ndelay = 2\n";
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.byzantine_roster(), vec![(RobotId(2), ByzantineStrategy::FollowWithDelay { delay: 2 })]);
        assert_eq!(s.honest_robots(), vec![RobotId(0), RobotId(1)]);
        assert_eq!(parse_scenario(&render_scenario(&s)).unwrap(), s);
    }

    #[test]
    fn diagnostic_display_shows_context() {
        let d = Diagnostic::at_offset("a = 1\nb = oops\n", Some(10), "bad value");
        assert_eq!(d.to_string(), "line 2, column 5: bad value\n    2 | b = oops");
    }
}
