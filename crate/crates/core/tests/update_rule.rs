//! The AI opinion update rule over a large random sample.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delib_core::woe::{update_ai_opinion, update_weights};

const TUPLES: usize = 100_000;
const EPS: f64 = 1e-9;

fn distance_to_human(o_ai: f64, o_h: f64, s: f64, u: f64) -> f64 {
    (update_ai_opinion(o_ai, o_h, s, u) - o_h).abs()
}

#[test]
fn worked_examples() {
    assert_eq!(update_ai_opinion(20.0, -10.0, 0.0, 0.3), 20.0);
    assert_eq!(update_ai_opinion(20.0, -10.0, 0.7, 1.0), -10.0);
    assert!((update_ai_opinion(20.0, -10.0, 0.5, 0.5) - 5.0).abs() < 1e-12);
}

#[test]
fn random_tuples_satisfy_every_property() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..TUPLES {
        let o_ai = rng.random_range(-50.0..=50.0);
        let o_h = rng.random_range(-50.0..=50.0);
        let s = rng.random_range(0.0..=1.0);
        let u = rng.random_range(0.0..=1.0);

        let new = update_ai_opinion(o_ai, o_h, s, u);
        let (lo, hi) = (o_ai.min(o_h), o_ai.max(o_h));
        assert!(lo - EPS <= new && new <= hi + EPS, "convexity: {o_ai} {o_h} {s} {u} -> {new}");

        let (wa, wh) = update_weights(s, u);
        assert!((wa + wh - 1.0).abs() < EPS);
        assert!(wa >= 0.0 && wh >= 0.0);
        if (1.0 - u) + s > 0.0 {
            let expected = ((1.0 - u) * o_ai + s * o_h) / ((1.0 - u) + s);
            assert!((new - expected).abs() < 1e-9 * (1.0 + expected.abs()));
        }

        let s2 = rng.random_range(s..=1.0);
        let u2 = rng.random_range(u..=1.0);
        assert!(distance_to_human(o_ai, o_h, s2, u) <= distance_to_human(o_ai, o_h, s, u) + EPS);
        assert!(distance_to_human(o_ai, o_h, s, u2) <= distance_to_human(o_ai, o_h, s, u) + EPS);

        assert_eq!(update_ai_opinion(o_ai, o_h, 0.0, u.min(0.999)), o_ai);
        if s > 0.0 {
            assert!((update_ai_opinion(o_ai, o_h, s, 1.0) - o_h).abs() < EPS);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 2.0, "took {:?}", start.elapsed());
}

#[test]
fn degenerate_weights_keep_ai_opinion() {
    assert_eq!(update_weights(0.0, 1.0), (1.0, 0.0));
    assert_eq!(update_ai_opinion(7.0, -3.0, 0.0, 1.0), 7.0);
}

#[test]
fn inputs_outside_unit_interval_are_clamped() {
    assert_eq!(update_ai_opinion(10.0, 0.0, 2.0, 0.0), update_ai_opinion(10.0, 0.0, 1.0, 0.0));
    assert_eq!(update_ai_opinion(10.0, 0.0, 0.5, -1.0), update_ai_opinion(10.0, 0.0, 0.5, 0.0));
}
