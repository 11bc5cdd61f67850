mod common;

#[test]
fn memory_stays_inside_convex_hull() {
    let v = common::ema_convex_violation(2000);
    assert!(v <= 1e-12, "violation {v}");
}

#[test]
fn deterministic_updates_decay_geometrically() {
    for alpha in [0.5, 0.9, 0.99, 0.999] {
        let err = common::ema_geometric_error(alpha, 300);
        assert!(err < 1e-9, "alpha {alpha}: {err}");
    }
}

#[test]
fn update_frequency_matches_rate() {
    for (k, rate) in [0.1, 0.5, 0.8, 0.9].into_iter().enumerate() {
        let (fired, mean, sd) = common::ema_rate(rate, 10_000, 40 + k as u64);
        assert!((fired as f64 - mean).abs() <= 3.0 * sd, "rate {rate}: {fired} vs {mean}±{sd}");
    }
    let (fired, _, _) = common::ema_rate(1.0, 1000, 1);
    assert_eq!(fired, 1000);
}
