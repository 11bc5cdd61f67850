mod common;

use clser::replay::ReplayBuffer;
use clser::seeding;
use ndarray::Array1;

#[test]
fn retention_is_uniform_over_the_stream() {
    let chi = common::reservoir_chi_square(200, 1000, 100);
    assert!(chi.p_value > 0.001, "chi2 {} on {} dof, p = {}", chi.statistic, chi.dof, chi.p_value);
}

#[test]
fn size_invariant_under_random_operations() {
    common::reservoir_size_invariant(100_000).unwrap();
}

#[test]
fn restored_buffer_continues_identically() {
    let mut a = ReplayBuffer::new(20, 1, seeding::rng(3, &[])).unwrap();
    for i in 0..100 {
        a.offer(Array1::from(vec![i as f64]).view(), i % 10).unwrap();
    }
    let mut b: ReplayBuffer = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    for i in 100..300 {
        let x = Array1::from(vec![i as f64]);
        a.offer(x.view(), i % 10).unwrap();
        b.offer(x.view(), i % 10).unwrap();
    }
    assert_eq!(a.sample_batch(7), b.sample_batch(7));
    assert_eq!(a, b);
}
