use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use qswarm::protocols::{choose_config, safe_configs, AvoidanceConfig};
use qswarm::swarm::{distance, Board, Bounds, Direction, Position, RobotId};

fn arb_direction() -> impl Strategy<Value = Direction> {
    prop::sample::select(Direction::ALL.to_vec())
}

fn starts(n: usize) -> Vec<Position> {
    (0..n as i64).map(|i| Position::new(2 * i, i % 2)).collect()
}

proptest! {
    #[test]
    fn random_moves_keep_board_consistent(
        n in 2usize..6,
        rounds in prop::collection::vec(prop::collection::vec(arb_direction(), 6), 1..40),
        swap_crash in any::<bool>(),
    ) {
        let mut board = Board::new(&starts(n), None, swap_crash).unwrap();
        let mut crashed = BTreeSet::new();
        for dirs in rounds {
            let moves: BTreeMap<RobotId, Direction> =
                board.live_ids().into_iter().map(|r| (r, dirs[r.0])).collect();
            let before: BTreeMap<RobotId, Position> =
                board.robots().iter().map(|r| (r.id, r.position)).collect();
            let report = board.apply_moves(&moves).unwrap();
            prop_assert!(board.check_invariants().is_ok(), "{:?}", board.check_invariants());
            for c in &report.crashes {
                prop_assert!(crashed.insert(c.robot), "{} crashed twice", c.robot);
            }
            for r in board.robots() {
                if !moves.contains_key(&r.id) {
                    prop_assert_eq!(r.position, before[&r.id]);
                }
                prop_assert_eq!(r.crashed, crashed.contains(&r.id));
            }
            // Live robots never share a tile.
            let live: Vec<Position> = board.live_ids().iter().map(|&r| board.position(r).unwrap()).collect();
            prop_assert_eq!(live.iter().collect::<BTreeSet<_>>().len(), live.len());
        }
    }

    #[test]
    fn blocking_edges_keep_robots_on_the_board(
        moves in prop::collection::vec(arb_direction(), 1..200),
    ) {
        let bounds = Bounds { min: Position::new(0, 0), max: Position::new(3, 2) };
        let mut board = Board::new(&[Position::new(1, 1)], Some(bounds), true).unwrap().with_blocking_edges(true);
        for d in moves {
            let before = board.position(RobotId(0)).unwrap();
            board.apply_moves(&BTreeMap::from([(RobotId(0), d)])).unwrap();
            let after = board.position(RobotId(0)).unwrap();
            prop_assert!(bounds.contains(after));
            prop_assert!(after == before || after == before.step(d));
        }
    }

    #[test]
    fn chosen_avoidance_config_never_converges(dx in -4i64..=4, dy in -4i64..=4, seed in any::<u64>()) {
        prop_assume!((dx, dy) != (0, 0));
        let mut rng = qswarm::rng::stream(seed, qswarm::rng::Stream::Source);
        let offset = (dx, dy);
        let config = choose_config(offset, &mut rng).unwrap();
        prop_assert!(safe_configs(offset).unwrap().contains(&config));
        for (a, b) in outcomes(config) {
            let (da, db) = (a.delta(), b.delta());
            prop_assert_ne!((offset.0 + db.0 - da.0, offset.1 + db.1 - da.1), (0, 0));
        }
    }
}

fn outcomes(config: AvoidanceConfig) -> Vec<(Direction, Direction)> {
    qswarm::protocols::avoidance_outcome_table(config).unwrap().iter().map(|o| o.directions()).collect()
}

#[test]
fn swap_counts_as_crash_only_when_enabled() {
    for (swap_crash, want) in [(true, 2), (false, 0)] {
        let mut board = Board::new(&[Position::new(0, 0), Position::new(1, 0)], None, swap_crash).unwrap();
        let report = board
            .apply_moves(&BTreeMap::from([(RobotId(0), Direction::Right), (RobotId(1), Direction::Left)]))
            .unwrap();
        assert_eq!(report.crashes.len(), want);
    }
}

#[test]
fn independent_steps_keep_offset_parity() {
    // x + y of the offset changes by 0 or ±2 per step of two independent walkers.
    for a in Direction::ALL {
        for b in Direction::ALL {
            let (p, q) = (Position::new(0, 0).step(a), Position::new(1, 0).step(b));
            let (ox, oy) = p.offset_to(q);
            assert_eq!((ox + oy).rem_euclid(2), 1);
            assert!(distance(p, q) % 2 == 1);
        }
    }
}
