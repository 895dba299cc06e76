use qcond_core::noise::generate;
use qcond_core::stats::{chi2_two_dof_critical, correlation, jarque_bera, mean, variance};

#[test]
fn increment_variance_matches_dt() {
    let path = generate(2024, 0, 1_000_000, 1e-3).unwrap();
    let v = variance(&path.increments);
    assert!((0.00097..=0.00103).contains(&v), "variance {v}");
    // mean of 10⁶ N(0, 1e-3) draws has sd 3.2e-5
    assert!(mean(&path.increments).abs() < 1.3e-4);
}

#[test]
fn streams_are_uncorrelated() {
    let n = 200_000;
    let a = generate(11, 0, n, 1e-2).unwrap();
    for idx in [1, 2, 31] {
        let b = generate(11, idx, n, 1e-2).unwrap();
        let r = correlation(&a.increments, &b.increments);
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "stream {idx}: r = {r}");
    }
}

#[test]
fn increments_pass_normality_test() {
    let crit = chi2_two_dof_critical(1e-3);
    for idx in 0..3 {
        let path = generate(5, idx, 100_000, 1e-3).unwrap();
        let jb = jarque_bera(&path.increments);
        assert!(jb < crit, "stream {idx}: JB = {jb}");
    }
}
