use std::collections::BTreeSet;

use announcer_core::events::{
    calibrate_model, dynamic_threshold, elect, importance, ElectionConfig, EventKind, EventManager, GlobalDetection,
    ImportanceModel, ImportanceWeights, ThresholdState,
};
use announcer_core::world::{ActionSample, BehaviorPhase, WorldConfig, WorldState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sample(words: f64) -> ActionSample {
    ActionSample {
        spoken_words: words,
        window: 10.0,
        ..ActionSample::default()
    }
}

#[test]
fn single_term_product() {
    let w = ImportanceWeights {
        spoken_words: 2.0,
        ..ImportanceWeights::zero()
    };
    assert_eq!(importance(&sample(3.0), &w), 6.0);
}

#[test]
fn calibrate_recovers_normal_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = Normal::new(5.0, 2.0).unwrap();
    let h: Vec<f64> = (0..10_000).map(|_| n.sample(&mut rng)).collect();
    let m = calibrate_model(&h, h.len());
    assert!((m.mu - 5.0).abs() < 0.1 && (m.sigma - 2.0).abs() < 0.1, "{m:?}");
    assert_eq!(calibrate_model(&[], 600), ImportanceModel::PRIOR);
}

#[test]
fn monte_carlo_hit_rate_standard_normal() {
    // Brute force: N(0,1) scores, cutoff from the threshold state.
    let model = ImportanceModel { mu: 0.0, sigma: 1.0 };
    let state = ThresholdState::new(0.5, 10, &model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = Normal::new(0.0, 1.0).unwrap();
    let trials = 100_000;
    let hits = (0..trials)
        .filter(|_| (0..10).map(|_| n.sample(&mut rng)).fold(false, |h, x| h | (x > state.cutoff)))
        .count();
    let rate = hits as f64 / trials as f64;
    assert!((rate - 0.5).abs() <= 0.02, "{rate}");
}

#[test]
fn forced_conversation_groups_into_one_event() {
    let mut w = WorldState::spawn(WorldConfig::campus(2, 6)).unwrap();
    w.place(1, 30.0, 10.0, 0.0);
    w.place(4, 31.0, 10.0, std::f64::consts::PI);
    w.set_behavior(1, BehaviorPhase::Converse { partners: BTreeSet::from([4]), remaining: 8.0 });
    w.set_behavior(4, BehaviorPhase::Converse { partners: BTreeSet::from([1]), remaining: 8.0 });
    let scores = [0.0, 9.0, 0.0, 0.0, 7.0, 0.0];
    let ev = elect(&w, &scores, 5.0, None, 3.0, 10.0).unwrap();
    assert_eq!(ev.kind, EventKind::LocalMulti);
    assert_eq!(ev.subjects, vec![1, 4]);
    assert_eq!(ev.score, 9.0);
    assert!(ev.is_well_formed());
    // Same inputs, same answer.
    assert_eq!(elect(&w, &scores, 5.0, None, 3.0, 10.0), Some(ev));
    assert_eq!(elect(&w, &scores, 10.0, None, 3.0, 10.0), None);
}

#[test]
fn stationary_hit_rate_converges_to_f() {
    let mut w = WorldState::spawn(WorldConfig::campus(4, 12)).unwrap();
    let global = GlobalDetection {
        gathering_threshold: u32::MAX,
        ..GlobalDetection::default()
    };
    let mut em = EventManager::new(ImportanceWeights::default(), 0.5, ElectionConfig::default(), global).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = Normal::new(40.0, 8.0).unwrap();
    let cycles = 10_000;
    let mut hits = 0;
    for c in 0..cycles {
        for id in 0..12 {
            // Spread avatars so no conversation grouping applies.
            w.place(id, 5.0 + 9.0 * id as f64, 75.0, 0.0);
            w.set_behavior(id, BehaviorPhase::Wait { remaining: 1.0 });
            w.set_metrics(id, sample(n.sample(&mut rng)));
        }
        if em.fetch(&w, c as f64 * 10.0).unwrap().elected.is_some() {
            hits += 1;
        }
    }
    let rate = f64::from(hits) / f64::from(cycles);
    assert!((rate - 0.5).abs() <= 0.05, "{rate}");
}

proptest! {
    #[test]
    fn threshold_identity(n in 1usize..1000, f in 0.0f64..=1.0) {
        let i = dynamic_threshold(n, f).unwrap();
        prop_assert!((0.0..=1.0).contains(&i));
        let back = (1.0 - i).powi(n as i32);
        prop_assert!((back - f).abs() <= 1e-12 * f.max(1e-300) || (back - f).abs() <= 1e-15);
    }

    #[test]
    fn threshold_monotone(n in 1usize..500, f in 0.01f64..0.99) {
        let a = dynamic_threshold(n, f).unwrap();
        prop_assert!(dynamic_threshold(n + 1, f).unwrap() < a);
        prop_assert!(dynamic_threshold(n, (f + 0.01).min(1.0)).unwrap() < a);
    }

    #[test]
    fn importance_is_linear(
        d in 0.0f64..100.0, s in 0.0f64..5.0, wd in 0.0f64..50.0, v in 0.0f64..10.0, t in 0.0f64..10.0, c in 0.01f64..100.0
    ) {
        let a = ActionSample { move_distance: d, move_speed: s, spoken_words: wd, voxel_count: v, tx_volume: t, window: 10.0 };
        let w = ImportanceWeights::default();
        let x = importance(&a, &w);
        let doubled = ActionSample { move_distance: 2.0 * d, move_speed: 2.0 * s, spoken_words: 2.0 * wd, voxel_count: 2.0 * v, tx_volume: 2.0 * t, window: 10.0 };
        prop_assert!((importance(&doubled, &w) - 2.0 * x).abs() <= 1e-9 * x.max(1.0));
        prop_assert!((importance(&a, &w.scaled(c)) - c * x).abs() <= 1e-9 * (c * x).max(1.0));
    }

    #[test]
    fn scale_covariance_keeps_the_elected_event(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut w = WorldState::spawn(WorldConfig::campus(seed, 10)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for id in 0..10 {
            w.set_metrics(id, ActionSample {
                move_distance: rng.random_range(0.0..20.0),
                spoken_words: rng.random_range(0.0..40.0),
                window: 10.0,
                ..ActionSample::default()
            });
        }
        let base = ImportanceWeights::default();
        let scores: Vec<f64> = w.avatars.iter().map(|a| importance(&a.metrics, &base)).collect();
        let scaled: Vec<f64> = w.avatars.iter().map(|a| importance(&a.metrics, &base.scaled(c))).collect();
        let median = {
            let mut s = scores.clone();
            s.sort_by(f64::total_cmp);
            s[5]
        };
        let a = elect(&w, &scores, median, None, 3.0, 0.0).map(|e| e.subjects);
        let b = elect(&w, &scaled, median * c, None, 3.0, 0.0).map(|e| e.subjects);
        prop_assert_eq!(a, b);
    }
}
