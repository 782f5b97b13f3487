mod common;

#[test]
fn recovers_ln2_on_correlated_bits() {
    let est = common::mine_estimate(&common::correlated_bits(), 5000, 0);
    let target = 2f64.ln();
    assert!((est - target).abs() <= 0.1 * target, "{est}");
}

#[test]
fn near_zero_on_independent_bits() {
    let est = common::mine_estimate(&common::independent_bits(), 5000, 1);
    assert!(est <= 0.05, "{est}");
}

#[test]
fn never_far_above_exact_mi_on_random_joints() {
    let mut rng = common::rng(7);
    for i in 0..10 {
        let joint = common::random_joint(&mut rng, 3, 2);
        let exact = common::exact_mi(&joint);
        let est = common::mine_estimate(&joint, 5000, 100 + i);
        assert!(est <= exact + 0.05, "joint {i}: {est} > {exact} + 0.05");
    }
}

#[test]
fn exact_mi_oracle_matches_closed_forms() {
    assert!((common::exact_mi(&common::correlated_bits()) - 2f64.ln()).abs() < 1e-15);
    assert!(common::exact_mi(&common::independent_bits()).abs() < 1e-15);
}
