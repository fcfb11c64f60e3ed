use announcer_core::world::{BehaviorPhase, Bounds, DensityMap, Obstacle, WorldConfig, WorldState};
use proptest::prelude::*;

fn run(seed: u64, n: usize, ticks: usize) -> Vec<Vec<(f64, f64, f64)>> {
    let mut w = WorldState::spawn(WorldConfig::campus(seed, n)).unwrap();
    let dt = w.config().dt();
    (0..ticks)
        .map(|_| {
            w.step(dt);
            w.avatars.iter().map(|a| (a.position.x, a.position.y, a.facing)).collect()
        })
        .collect()
}

#[test]
fn same_seed_same_trajectories() {
    let a = run(42, 8, 1000);
    let b = run(42, 8, 1000);
    assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(p, q)| p.0.to_bits() == q.0.to_bits()
        && p.1.to_bits() == q.1.to_bits()
        && p.2.to_bits() == q.2.to_bits()));
}

#[test]
fn different_seeds_differ() {
    let a = WorldState::spawn(WorldConfig::campus(42, 5)).unwrap();
    let b = WorldState::spawn(WorldConfig::campus(43, 5)).unwrap();
    assert!(a.avatars.iter().zip(&b.avatars).any(|(x, y)| x.position != y.position));
}

#[test]
fn behavior_liveness() {
    let mut w = WorldState::spawn(WorldConfig::campus(42, 12)).unwrap();
    let dt = w.config().dt();
    let mut seen = vec![[false; 4]; w.avatars.len()];
    for _ in 0..10_000 {
        w.step(dt);
        for a in &w.avatars {
            seen[a.id as usize][a.behavior.index()] = true;
        }
    }
    for (id, s) in seen.iter().enumerate() {
        assert!(s.iter().all(|x| *x), "avatar {id} phases seen {s:?}");
    }
}

#[test]
fn window_identity_and_conversation_words() {
    let mut w = WorldState::spawn(WorldConfig::campus(3, 12)).unwrap();
    let dt = w.config().dt();
    let mut words_while_conversing = false;
    for k in 0..4000 {
        w.step(dt);
        for a in &w.avatars {
            let m = a.metrics;
            let lhs = m.move_speed * m.window;
            assert!((lhs - m.move_distance).abs() <= 1e-9 * m.move_distance.max(1.0));
            if a.is_conversing() && m.spoken_words > 0.0 {
                words_while_conversing = true;
            }
        }
        if k % 200 == 199 {
            w.reset_windows();
        }
    }
    assert!(words_while_conversing);
}

#[test]
fn density_four_in_one_cell() {
    let mut w = WorldState::spawn(WorldConfig::campus(1, 6)).unwrap();
    for id in 0..4 {
        w.place(id, 61.0 + id as f64, 41.0, 0.0);
    }
    w.place(4, 5.0, 5.0, 0.0);
    w.place(5, 115.0, 75.0, 0.0);
    let d = w.region_density(10.0);
    assert_eq!(d.counts[d.cell_of(61.0, 41.0)], 4);
    assert_eq!(d.total(), 6);
    assert_eq!(d.densest().unwrap().1, 4);
}

#[test]
fn density_matches_poisson_expectation() {
    // 10^4 avatars in an open world: per-cell counts within 5 sigma.
    let mut cfg = WorldConfig::campus(11, 10_000);
    cfg.obstacles.clear();
    cfg.bounds = Bounds::new([0.0, 0.0], [100.0, 100.0]);
    cfg.pois.clear();
    let w = WorldState::spawn(cfg).unwrap();
    let d: DensityMap = w.region_density(10.0);
    assert_eq!(d.total(), 10_000);
    let lambda = 10_000.0 / d.counts.len() as f64;
    for (i, &c) in d.counts.iter().enumerate() {
        assert!((f64::from(c) - lambda).abs() <= 5.0 * lambda.sqrt(), "cell {i}: {c} vs {lambda}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation(seed in any::<u64>(), n in 1usize..16) {
        let mut w = WorldState::spawn(WorldConfig::campus(seed, n)).unwrap();
        let dt = w.config().dt();
        let boxes: Vec<_> = w.obstacle_boxes().to_vec();
        let b = w.config().bounds;
        for _ in 0..400 {
            w.step(dt);
            prop_assert_eq!(w.avatars.len(), n);
            for a in &w.avatars {
                prop_assert!(b.contains(a.position.x, a.position.y));
                prop_assert!(boxes.iter().all(|bx| !bx.contains_xy(a.position.x, a.position.y)));
                prop_assert!((0.0..std::f64::consts::TAU).contains(&a.facing));
                prop_assert!(a.height > 0.0);
                match &a.behavior {
                    BehaviorPhase::Chase { target, .. } => {
                        prop_assert!(*target != a.id && w.avatar(*target).is_some());
                    }
                    BehaviorPhase::Converse { partners, remaining } => {
                        prop_assert!(!partners.is_empty() && *remaining >= 0.0);
                    }
                    BehaviorPhase::Wait { remaining } => prop_assert!(*remaining >= 0.0),
                    BehaviorPhase::Walk { .. } => {}
                }
            }
        }
    }

    #[test]
    fn obstacle_outside_bounds_is_rejected(x in 130.0f64..500.0) {
        let mut cfg = WorldConfig::campus(1, 3);
        cfg.obstacles.push(Obstacle::building(x, 10.0, 2.0, 2.0, 5.0));
        let err = WorldState::spawn(cfg).unwrap_err();
        prop_assert!(err.to_string().contains("obstacles[4]"));
    }
}
