use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SecurityError;
use crate::qsim::{Basis, ResourceId, ResourcePool, StateSpec};
use crate::swarm::RobotId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    /// The central source `c`.
    Source,
    Robot(RobotId),
    Eve,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Source => f.write_str("c"),
            Party::Robot(r) => write!(f, "{r}"),
            Party::Eve => f.write_str("eve"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveStrategy {
    Passive,
    /// Measure r1's qubit in a fresh random basis, forward the collapsed qubit.
    InterceptResendRandomBasis,
    InterceptResendFixedBasis(Basis),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisMode {
    /// Every honest party uses `schedule[round % len]`.
    Predefined(Vec<Basis>),
    /// Every honest party picks its own basis uniformly per round.
    Random,
}

impl BasisMode {
    fn check(&self) -> Result<(), SecurityError> {
        match self {
            BasisMode::Predefined(s) if s.is_empty() => Err(SecurityError::EmptySchedule),
            _ => Ok(()),
        }
    }
}

/// Independent streams for one detection run.
pub struct DetectionRngs<'a, R: Rng + ?Sized> {
    /// Measurement randomness for r1 and r2.
    pub nature: &'a mut R,
    /// Basis draws of honest parties in random mode.
    pub bases: &'a mut R,
    /// Eve's basis choices and her measurement randomness.
    pub eve: &'a mut R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub resource: ResourceId,
    pub source_basis: Basis,
    pub r1: (Basis, u8),
    pub r2: (Basis, u8),
    pub eve: Option<(Basis, u8)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementEntry {
    pub round: usize,
    pub basis: Basis,
    /// `None` for the source, which prepares rather than measures.
    pub outcome: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub party: Party,
    pub entries: Vec<MeasurementEntry>,
}

impl MeasurementRecord {
    pub fn from_rounds(party: Party, rounds: &[RoundRecord]) -> Self {
        let entries = rounds
            .iter()
            .filter_map(|r| {
                let (basis, outcome) = match party {
                    Party::Source => (r.source_basis, None),
                    Party::Robot(RobotId(0)) => (r.r1.0, Some(r.r1.1)),
                    Party::Robot(_) => (r.r2.0, Some(r.r2.1)),
                    Party::Eve => {
                        let (b, o) = r.eve?;
                        (b, Some(o))
                    }
                };
                Some(MeasurementEntry { round: r.round, basis, outcome })
            })
            .collect();
        MeasurementRecord { party, entries }
    }

    fn outcome_at(&self, round: usize) -> Result<u8, SecurityError> {
        self.entries
            .get(round)
            .filter(|e| e.round == round)
            .or_else(|| self.entries.iter().find(|e| e.round == round))
            .and_then(|e| e.outcome)
            .ok_or(SecurityError::MissingRound(round))
    }
}

/// One round: `c` picks a basis and prepares a two-qubit pair written in
/// that basis, Eve optionally intercepts r1's half, then r1 and r2 measure.
pub fn run_detection_round<R: Rng + ?Sized>(
    pool: &mut ResourcePool,
    round: usize,
    mode: &BasisMode,
    eve: EveStrategy,
    rngs: &mut DetectionRngs<'_, R>,
) -> Result<RoundRecord, SecurityError> {
    mode.check()?;
    let draw = |rng: &mut R| if rng.random_bool(0.5) { Basis::X } else { Basis::Z };
    let (c_basis, r1_basis, r2_basis) = match mode {
        BasisMode::Predefined(schedule) => {
            let b = schedule[round % schedule.len()];
            (b, b, b)
        }
        BasisMode::Random => (draw(rngs.bases), draw(rngs.bases), draw(rngs.bases)),
    };
    // (|00⟩+|11⟩)/√2 and (|++⟩+|−−⟩)/√2 are the same vector; the label
    // just records c's choice.
    let resource = pool.emit(&StateSpec::Ghz { qubits: 2, basis: c_basis })?;
    let eve_record = match eve {
        EveStrategy::Passive => None,
        EveStrategy::InterceptResendRandomBasis | EveStrategy::InterceptResendFixedBasis(_) => {
            let basis = match eve {
                EveStrategy::InterceptResendFixedBasis(b) => b,
                _ => draw(rngs.eve),
            };
            let bit = pool.measure(pool.handle(resource, 0), basis, rngs.eve)?;
            Some((basis, bit))
        }
    };
    let b1 = pool.measure(pool.handle(resource, 0), r1_basis, rngs.nature)?;
    let b2 = pool.measure(pool.handle(resource, 1), r2_basis, rngs.nature)?;
    pool.release(resource);
    Ok(RoundRecord { round, resource, source_basis: c_basis, r1: (r1_basis, b1), r2: (r2_basis, b2), eve: eve_record })
}

/// Rounds in which every listed party used the same basis.
pub fn sift(records: &[&MeasurementRecord]) -> Result<Vec<usize>, SecurityError> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let rounds = first.entries.len();
    for r in records {
        if r.entries.len() != rounds {
            return Err(SecurityError::RaggedLogs {
                party: r.party.to_string(),
                got: r.entries.len(),
                expected: rounds,
            });
        }
    }
    Ok((0..rounds)
        .filter(|&i| records.iter().all(|r| r.entries[i].basis == first.entries[i].basis))
        .map(|i| first.entries[i].round)
        .collect())
}

/// Disagreements between two records over the given rounds.
pub fn sifted_disagreements(
    a: &MeasurementRecord,
    b: &MeasurementRecord,
    rounds: &[usize],
) -> Result<usize, SecurityError> {
    let mut n = 0;
    for &r in rounds {
        if a.outcome_at(r)? != b.outcome_at(r)? {
            n += 1;
        }
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Clean,
    EavesdropperDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub rounds_used: usize,
    pub disagreements: usize,
    pub qber: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QberEstimate {
    pub report: DetectionReport,
    /// Published check rounds, sorted. Spent: never reused.
    pub sampled: Vec<usize>,
    /// Valid rounds left over for use as movement bits, in original order.
    pub remaining: Vec<usize>,
}

/// r1 and r2 publish a random sample of valid rounds and compare them.
/// The verdict is `EavesdropperDetected` iff the sample's error rate is
/// strictly above `threshold`.
pub fn estimate_qber<R: Rng + ?Sized>(
    r1: &MeasurementRecord,
    r2: &MeasurementRecord,
    valid: &[usize],
    sample_size: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<QberEstimate, SecurityError> {
    if sample_size == 0 {
        return Err(SecurityError::EmptySample);
    }
    if sample_size > valid.len() {
        return Err(SecurityError::InsufficientValidRounds { needed: sample_size, available: valid.len() });
    }
    let mut picked = index::sample(rng, valid.len(), sample_size).into_vec();
    picked.sort_unstable();
    let sampled: Vec<usize> = picked.iter().map(|&i| valid[i]).collect();
    let remaining: Vec<usize> =
        valid.iter().enumerate().filter(|(i, _)| picked.binary_search(i).is_err()).map(|(_, &r)| r).collect();
    let disagreements = sifted_disagreements(r1, r2, &sampled)?;
    let qber = disagreements as f64 / sample_size as f64;
    let verdict = if qber > threshold { Verdict::EavesdropperDetected } else { Verdict::Clean };
    Ok(QberEstimate {
        report: DetectionReport { rounds_used: sample_size, disagreements, qber, threshold, verdict },
        sampled,
        remaining,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, SimRng, Stream};

    fn run(rounds: usize, mode: BasisMode, eve: EveStrategy, seed: u64) -> Vec<RoundRecord> {
        let mut pool = ResourcePool::new();
        let mut nature: SimRng = stream(seed, Stream::Nature);
        let mut bases = stream(seed, Stream::Bases);
        let mut eve_rng = stream(seed, Stream::Eve);
        let mut rngs = DetectionRngs { nature: &mut nature, bases: &mut bases, eve: &mut eve_rng };
        (0..rounds).map(|i| run_detection_round(&mut pool, i, &mode, eve, &mut rngs).unwrap()).collect()
    }

    fn records(rounds: &[RoundRecord]) -> [MeasurementRecord; 3] {
        [
            MeasurementRecord::from_rounds(Party::Source, rounds),
            MeasurementRecord::from_rounds(Party::Robot(RobotId(0)), rounds),
            MeasurementRecord::from_rounds(Party::Robot(RobotId(1)), rounds),
        ]
    }

    #[test]
    fn passive_same_basis_always_agrees() {
        let rounds = run(500, BasisMode::Predefined(vec![Basis::Z, Basis::X, Basis::X]), EveStrategy::Passive, 1);
        assert!(rounds.iter().all(|r| r.r1.1 == r.r2.1));
        let [c, r1, r2] = records(&rounds);
        let valid = sift(&[&c, &r1, &r2]).unwrap();
        assert_eq!(valid.len(), 500);
        let mut rng = stream(1, Stream::Sampling);
        let est = estimate_qber(&r1, &r2, &valid, 64, 0.1, &mut rng).unwrap();
        assert_eq!(est.report.qber, 0.0);
        assert_eq!(est.report.verdict, Verdict::Clean);
        assert_eq!(est.sampled.len() + est.remaining.len(), valid.len());
        assert!(est.sampled.iter().all(|s| !est.remaining.contains(s)));
    }

    #[test]
    fn eve_in_r1_basis_reads_r1_value() {
        let rounds =
            run(300, BasisMode::Predefined(vec![Basis::Z]), EveStrategy::InterceptResendFixedBasis(Basis::Z), 2);
        for r in &rounds {
            let (_, e) = r.eve.unwrap();
            assert_eq!(e, r.r1.1);
            assert_eq!(r.r1.1, r.r2.1);
        }
    }

    #[test]
    fn sift_rules() {
        use Basis::{X, Z};
        let mk = |party, bases: &[Basis]| MeasurementRecord {
            party,
            entries: bases
                .iter()
                .enumerate()
                .map(|(round, &basis)| MeasurementEntry { round, basis, outcome: Some(0) })
                .collect(),
        };
        let c = mk(Party::Source, &[Z, Z]);
        let r1 = mk(Party::Robot(RobotId(0)), &[Z, X]);
        let r2 = mk(Party::Robot(RobotId(1)), &[Z, Z]);
        assert_eq!(sift(&[&c, &r1, &r2]).unwrap(), vec![0]);
        let short = mk(Party::Robot(RobotId(1)), &[Z]);
        assert!(matches!(sift(&[&c, &short]), Err(SecurityError::RaggedLogs { .. })));
    }

    #[test]
    fn sample_size_checks() {
        let rounds = run(10, BasisMode::Random, EveStrategy::Passive, 3);
        let [_, r1, r2] = records(&rounds);
        let mut rng = stream(3, Stream::Sampling);
        assert!(matches!(
            estimate_qber(&r1, &r2, &[0, 1], 3, 0.1, &mut rng),
            Err(SecurityError::InsufficientValidRounds { needed: 3, available: 2 })
        ));
        assert_eq!(estimate_qber(&r1, &r2, &[0, 1], 0, 0.1, &mut rng), Err(SecurityError::EmptySample));
    }

    #[test]
    fn empty_schedule_rejected() {
        let mut pool = ResourcePool::new();
        let mut a: SimRng = stream(0, Stream::Nature);
        let mut b = stream(0, Stream::Bases);
        let mut c = stream(0, Stream::Eve);
        let mut rngs = DetectionRngs { nature: &mut a, bases: &mut b, eve: &mut c };
        assert_eq!(
            run_detection_round(&mut pool, 0, &BasisMode::Predefined(vec![]), EveStrategy::Passive, &mut rngs),
            Err(SecurityError::EmptySchedule)
        );
    }

    #[test]
    fn honest_bases_do_not_depend_on_eve() {
        let quiet = run(200, BasisMode::Random, EveStrategy::Passive, 11);
        let noisy = run(200, BasisMode::Random, EveStrategy::InterceptResendRandomBasis, 11);
        for (q, n) in quiet.iter().zip(&noisy) {
            assert_eq!((q.source_basis, q.r1.0, q.r2.0), (n.source_basis, n.r1.0, n.r2.0));
        }
    }
}
