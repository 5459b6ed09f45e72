//! Built-in invariant checks, small enough to run on every install.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{run_scenario, BasisModeName, EveChoice, JsonlSink, Protocol, Scenario};
use crate::magic_square::{classical_optimum, quantum_round, MagicSquareTable};
use crate::protocols::{avoidance_outcome_table, coordinated_step, AvoidanceConfig};
use crate::qsim::{Basis, BellState, ResourcePool, StateSpec};
use crate::rng::{stream, Stream};
use crate::swarm::{Board, Direction, Position, RobotId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check { name, passed, detail: detail.into() }
}

fn phi_correlation() -> Check {
    let mut pool = ResourcePool::new();
    let mut rng = stream(1, Stream::Nature);
    let mut agree = 0;
    for basis in Basis::ALL {
        for _ in 0..1000 {
            let id = pool.emit(&StateSpec::Bell(BellState::PhiPlus)).expect("phi+");
            let a = pool.measure(pool.handle(id, 0), basis, &mut rng).expect("qubit 0");
            let b = pool.measure(pool.handle(id, 1), basis, &mut rng).expect("qubit 1");
            agree += usize::from(a == b);
            pool.release(id);
        }
    }
    check("phi+ same-basis agreement", agree == 2000, format!("{agree}/2000"))
}

fn walk_offset() -> Check {
    let mut pool = ResourcePool::new();
    let mut board = Board::unbounded(&[Position::new(0, 0), Position::new(4, -2)]).expect("distinct starts");
    let mut rng = stream(2, Stream::Nature);
    let mut kept = 0;
    for _ in 0..1000 {
        if coordinated_step(&mut pool, &mut board, [RobotId(0), RobotId(1)], &mut rng).is_ok() {
            let a = board.position(RobotId(0)).expect("r1");
            let b = board.position(RobotId(1)).expect("r2");
            kept += usize::from(a.offset_to(b) == (4, -2));
        }
    }
    check("coordinated walk keeps its offset", kept == 1000, format!("{kept}/1000"))
}

fn control_seed_free() -> Check {
    let mut ends = Vec::new();
    for seed in 0..5 {
        let mut s = Scenario::new("verify-control", Protocol::Control, seed, 40);
        s.robots = 3;
        s.directives = vec![Direction::Up, Direction::Right, Direction::Right, Direction::Down];
        match run_scenario(&s, &mut Vec::new()) {
            Ok(st) => ends.push(st.robots.iter().map(|r| r.end).collect::<Vec<_>>()),
            Err(e) => return check("control ignores the seed", false, e.to_string()),
        }
    }
    let same = ends.windows(2).all(|w| w[0] == w[1]);
    check("control ignores the seed", same, format!("{} seeds", ends.len()))
}

fn avoidance_tables() -> Check {
    let mut rows = BTreeMap::new();
    for c in AvoidanceConfig::ALL {
        match avoidance_outcome_table(c) {
            Ok(t) => {
                rows.insert(c, t.iter().map(|o| (o.r1_bits, o.r2_bits)).collect::<Vec<_>>());
            }
            Err(e) => return check("avoidance outcome tables", false, e.to_string()),
        }
    }
    let want_phi_psi = vec![((0, 0), (0, 1)), ((0, 1), (0, 0)), ((1, 0), (1, 1)), ((1, 1), (1, 0))];
    let want_psi_phi = vec![((0, 0), (1, 0)), ((0, 1), (1, 1)), ((1, 0), (0, 0)), ((1, 1), (0, 1))];
    let ok = rows[&AvoidanceConfig::PhiPsi] == want_phi_psi && rows[&AvoidanceConfig::PsiPhi] == want_psi_phi;
    check("avoidance outcome tables", ok, format!("{rows:?}"))
}

fn scenario_metric(s: &Scenario, rate: &str) -> Result<(u64, u64, u64, f64), String> {
    let st = run_scenario(s, &mut Vec::new()).map_err(|e| e.to_string())?;
    let r = st.rates.get(rate).ok_or_else(|| format!("no rate {rate}"))?;
    Ok((r.count, r.trials, st.crashes, st.max_norm_drift))
}

fn avoidance_run() -> Check {
    let mut s = Scenario::new("verify-avoid", Protocol::Avoid, 3, 10_000);
    s.positions = Some(vec![[0, 0], [1, 1]]);
    match scenario_metric(&s, "config.phi-psi") {
        Ok((_, n, crashes, _)) => {
            check("avoidance never crashes", crashes == 0 && n == 10_000, format!("{crashes} crashes in {n} steps"))
        }
        Err(e) => check("avoidance never crashes", false, e),
    }
}

fn sift_rate() -> Check {
    let s = Scenario::new("verify-sift", Protocol::GhzWalk, 4, 4000);
    match scenario_metric(&s, "all_match") {
        Ok((k, n, _, _)) => {
            let p = k as f64 / n as f64;
            let sigma = (0.25 * 0.75 / n as f64).sqrt();
            check("random-basis all-match rate", (p - 0.25).abs() <= 3.0 * sigma, format!("{p:.4} vs 0.25"))
        }
        Err(e) => check("random-basis all-match rate", false, e),
    }
}

fn eavesdropping() -> Vec<Check> {
    let mut out = Vec::new();
    let passive = Scenario::new("verify-qkd", Protocol::Qkd, 5, 2000);
    out.push(match scenario_metric(&passive, "qber") {
        Ok((k, _, _, _)) => check("passive channel has zero qber", k == 0, format!("{k} disagreements")),
        Err(e) => check("passive channel has zero qber", false, e),
    });
    let mut eve = passive.clone();
    eve.eve = EveChoice::InterceptRandom;
    eve.detection.sample_size = 400;
    out.push(match scenario_metric(&eve, "qber") {
        Ok((k, n, _, _)) => {
            let q = k as f64 / n as f64;
            let sigma = (0.25 * 0.75 / n as f64).sqrt();
            check("intercept-resend qber near 1/4", (q - 0.25).abs() <= 3.0 * sigma, format!("{q:.4}"))
        }
        Err(e) => check("intercept-resend qber near 1/4", false, e),
    });
    let mut fixed = passive;
    fixed.basis_mode = BasisModeName::Predefined;
    fixed.schedule = vec![Basis::Z];
    fixed.eve = EveChoice::InterceptFixedZ;
    out.push(match scenario_metric(&fixed, "qber") {
        Ok((k, _, _, _)) => check("schedule-matching eve is invisible", k == 0, format!("{k} disagreements")),
        Err(e) => check("schedule-matching eve is invisible", false, e),
    });
    out
}

fn follower_flagged() -> Check {
    let text = "name = \"verify-byz\"\nprotocol = \"byzantine\"\nseed = 6\nsteps = 200\nrobots = 3\nwindow = 20\n\
                [[byzantine]]\nrobot = 2\nstrategy = \"follow-with-delay\"\n";
    let result = super::parse_scenario(text).map_err(|e| e.to_string()).and_then(|s| scenario_metric(&s, "flagged.r3"));
    match result {
        Ok((k, n, _, _)) => check("delayed follower flagged every window", n > 0 && k == n, format!("{k}/{n}")),
        Err(e) => check("delayed follower flagged every window", false, e),
    }
}

fn magic_square() -> Check {
    let table = MagicSquareTable::standard();
    let algebra = table.algebra().map(|a| a.holds()).unwrap_or(false);
    let optimum = classical_optimum();
    let mut pool = ResourcePool::new();
    let mut rng = stream(7, Stream::Nature);
    let mut wins = 0;
    for r in 0..3 {
        for c in 0..3 {
            for _ in 0..100 {
                wins += usize::from(quantum_round(&mut pool, &table, r, c, &mut rng).is_ok_and(|(_, g)| g.win));
            }
        }
    }
    let ok = algebra && optimum.win_probability == num_rational::Ratio::new(8, 9) && wins == 900;
    check("magic square", ok, format!("algebra {algebra}, classical {}, quantum {wins}/900", optimum.win_probability))
}

fn determinism() -> Check {
    let mut s = Scenario::new("verify-determinism", Protocol::Byzantine, 9, 100);
    s.robots = 3;
    s.byzantine = vec![super::ByzantineEntry { robot: 2, strategy: super::StrategyName::GuessBasis, delay: None }];
    let bytes = || {
        let mut sink = JsonlSink::new(Vec::new());
        run_scenario(&s, &mut sink).map(|st| (sink.into_inner(), st.max_norm_drift))
    };
    match (bytes(), bytes()) {
        (Ok((a, d)), Ok((b, _))) => check(
            "identical seeds give identical traces",
            a == b && d <= crate::qsim::NORM_TOLERANCE,
            format!("{} bytes, drift {d:e}", a.len()),
        ),
        (Err(e), _) | (_, Err(e)) => check("identical seeds give identical traces", false, e.to_string()),
    }
}

pub fn run_checks() -> Vec<Check> {
    let mut checks = vec![phi_correlation(), walk_offset(), control_seed_free(), avoidance_tables(), avoidance_run()];
    checks.push(sift_rate());
    checks.extend(eavesdropping());
    checks.push(follower_flagged());
    checks.push(magic_square());
    checks.push(determinism());
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_suite_passes() {
        for c in run_checks() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
