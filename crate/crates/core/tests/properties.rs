use approx::assert_relative_eq;
use proptest::prelude::*;
use qcond_core::cdyn::{ks_step, newton_trajectory, ClassicalEnsemble};
use qcond_core::cumulant::GaussianBelief;
use qcond_core::feedback::{DirectController, FeedbackPolicy};
use qcond_core::grid::PositionGrid;
use qcond_core::noise::{generate, WienerStream};
use qcond_core::qct::RegimeReport;
use qcond_core::qdyn::{MeasurementSpec, Propagator};
use qcond_core::state::{gaussian_state, GridState, QuantumState};
use qcond_core::system::SystemSpec;
use qcond_core::wavefn::WaveFunction;
use qcond_core::wigner::wigner_transform;

fn uncertainty_floor_holds(c_xx: f64, c_xp: f64, c_pp: f64, hbar: f64) -> bool {
    c_xx * c_pp - c_xp * c_xp >= hbar * hbar / 4.0 * (1.0 - 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_moments_reproduce_parameters(
        a in -2.0..2.0f64, b in -2.0..2.0f64, sigma in 0.4..1.5f64, hbar in 0.5..2.0f64,
    ) {
        let grid = PositionGrid::centered(12.0, 128).unwrap();
        let spec = SystemSpec::harmonic(1.0, hbar, 1.0).unwrap();
        let m = gaussian_state(grid, &spec, a, b, sigma).unwrap().moments(&spec, 0.0);
        assert_relative_eq!(m.x_mean, a, epsilon = 1e-6, max_relative = 1e-6);
        assert_relative_eq!(m.p_mean, b, epsilon = 1e-6, max_relative = 1e-6);
        assert_relative_eq!(m.c_xx, sigma * sigma, max_relative = 1e-6);
        assert_relative_eq!(m.c_pp, hbar * hbar / (4.0 * sigma * sigma), max_relative = 1e-6);
        prop_assert!(m.c_xp.abs() < 1e-6 * m.c_xx.max(m.c_pp));
        prop_assert!(uncertainty_floor_holds(m.c_xx, m.c_xp, m.c_pp, hbar));
    }

    #[test]
    fn noise_streams_are_reproducible_and_prefix_stable(seed in any::<u64>(), index in 0..1000u64, n in 1..400usize) {
        let long = generate(seed, index, 2 * n, 1e-3).unwrap();
        let again = generate(seed, index, 2 * n, 1e-3).unwrap();
        let short = generate(seed, index, n, 1e-3).unwrap();
        prop_assert_eq!(&long.increments, &again.increments);
        prop_assert_eq!(&long.increments[..n], &short.increments[..]);
        let mut stream = WienerStream::new(seed, index, 1e-3).unwrap();
        let streamed: Vec<f64> = (0..n).map(|_| stream.next_increment()).collect();
        prop_assert_eq!(streamed, short.increments);
    }

    #[test]
    fn ensemble_weights_stay_normalized(seed in any::<u64>(), k in 0.05..2.0f64, steps in 1..200usize) {
        let spec = SystemSpec::classical(1.0, &[0.0, 0.0, 0.5, 0.0, 0.1]).unwrap();
        let meas = MeasurementSpec::new(k).unwrap();
        let mut ens = ClassicalEnsemble::sample_gaussian(400, 0.5, 0.0, 1.0, 1.0, seed, 0).unwrap();
        let mut noise = WienerStream::new(seed, 1, 1e-3).unwrap();
        for n in 0..steps {
            if ks_step(&mut ens, &spec, &meas, 1e-3, n as f64 * 1e-3, noise.next_increment()).is_err() {
                break;
            }
            prop_assert!((ens.total_weight() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_control_never_exceeds_authority(
        gain in -50.0..50.0f64, u_max in 0.0..5.0f64, seed in any::<u64>(),
    ) {
        let dt = 1e-3;
        let mut ctrl = DirectController::new(FeedbackPolicy::direct(gain, 10.0 * dt, u_max));
        let mut noise = WienerStream::new(seed, 0, dt).unwrap();
        for _ in 0..500 {
            let u = ctrl.update(3.0 * dt + noise.next_increment(), dt);
            prop_assert!(u.abs() <= u_max);
        }
    }

    #[test]
    fn quantum_belief_respects_the_uncertainty_floor(
        hbar in 0.3..2.0f64, stretch in 1.0..4.0f64, corr in -0.9..0.9f64,
        k in 0.0..5.0f64, c4 in 0.0..0.5f64, seed in any::<u64>(),
    ) {
        let spec = SystemSpec::new(1.0, hbar, &[0.0, 0.0, 0.5, 0.0, c4]).unwrap();
        let meas = MeasurementSpec::new(k).unwrap();
        // covariance with determinant stretch²·ħ²/4 and correlation `corr`
        let c_xx = 0.5;
        let c_pp = stretch * stretch * hbar * hbar / (4.0 * c_xx * (1.0 - corr * corr));
        let c_xp = corr * (c_xx * c_pp).sqrt();
        let mut belief = GaussianBelief::quantum(hbar, 0.3, -0.2, c_xx, c_xp, c_pp).unwrap();
        let dt = 1e-3;
        let mut noise = WienerStream::new(seed, 0, dt).unwrap();
        for n in 0..2000 {
            belief.step(&spec, &meas, dt, n as f64 * dt, noise.next_increment()).unwrap();
            prop_assert!(uncertainty_floor_holds(belief.c_xx, belief.c_xp, belief.c_pp, hbar));
        }
    }

    #[test]
    fn classical_belief_covariance_stays_positive(
        k in 0.0..5.0f64, c_xx in 0.0..2.0f64, c_pp in 0.0..2.0f64, seed in any::<u64>(),
    ) {
        let spec = SystemSpec::classical(1.0, &[0.0, 0.0, 0.5]).unwrap();
        let meas = MeasurementSpec::new(k).unwrap();
        let mut belief = GaussianBelief::classical(1.0, 0.0, c_xx, 0.0, c_pp).unwrap();
        let dt = 1e-3;
        let mut noise = WienerStream::new(seed, 0, dt).unwrap();
        for n in 0..2000 {
            belief.step(&spec, &meas, dt, n as f64 * dt, noise.next_increment()).unwrap();
            let det = belief.c_xx * belief.c_pp - belief.c_xp * belief.c_xp;
            prop_assert!(belief.c_xx >= 0.0 && belief.c_pp >= 0.0);
            prop_assert!(det >= -1e-10 * (belief.c_xx * belief.c_pp).max(1e-300));
        }
    }

    #[test]
    fn margins_do_not_depend_on_sample_times(x0 in 0.5..3.0f64, p0 in -1.0..1.0f64, k in 0.01..10.0f64) {
        let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.5, 0.0, 0.25]).unwrap();
        let orbit = newton_trajectory(x0, p0, &spec, 1e-2, 0.0, 2000);
        let times: Vec<f64> = (0..orbit.len()).map(|i| i as f64 * 1e-2).collect();
        let warped: Vec<f64> = times.iter().map(|t| t * t + 3.0 * t).collect();
        let a = RegimeReport::along_orbit(&spec, k, &times, &orbit, None, 10.0).unwrap();
        let b = RegimeReport::along_orbit(&spec, k, &warped, &orbit, None, 10.0).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            prop_assert_eq!(
                (sa.localization, sa.lownoise, sa.window_left, sa.window_right),
                (sb.localization, sb.lownoise, sb.window_left, sb.window_right)
            );
        }
        prop_assert_eq!(a.window_left, b.window_left);
        prop_assert_eq!(a.window_right, b.window_right);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn wigner_transform_preserves_norm_and_moments(
        x1 in -1.5..1.5f64, p1 in -1.0..1.0f64, s1 in 0.6..1.2f64,
        x2 in -1.5..1.5f64, p2 in -1.0..1.0f64, s2 in 0.6..1.2f64,
        weight in 0.1..0.9f64,
    ) {
        // the box must hold the coherence ρ(x + y/2, x − y/2) out to |y| = L/2
        let grid = PositionGrid::centered(12.0, 128).unwrap();
        let spec = SystemSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let a = WaveFunction::gaussian(grid, 1.0, x1, p1, s1).unwrap();
        let b = WaveFunction::gaussian(grid, 1.0, x2, p2, s2).unwrap();
        let rho = QuantumState::mixture(&[(weight, a), (1.0 - weight, b)]).unwrap();
        let w = wigner_transform(&rho, 1.0).unwrap();
        prop_assert!((w.norm() - 1.0).abs() < 1e-6);
        let from_rho = rho.moments(&spec, 0.0).raw().as_array();
        for (r, v) in from_rho.iter().zip(w.raw_moments().as_array()) {
            prop_assert!((r - v).abs() < 1e-6 * r.abs().max(1.0), "{} vs {}", r, v);
        }
    }

    #[test]
    fn conditioned_states_stay_physical(
        k in 0.1..2.0f64, c4 in 0.0..0.3f64, x0 in -1.0..1.0f64, seed in any::<u64>(),
    ) {
        let grid = PositionGrid::centered(8.0, 64).unwrap();
        let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.5, 0.0, c4]).unwrap();
        let mut prop = Propagator::new(grid, spec, MeasurementSpec::new(k).unwrap()).unwrap();
        prop.positivity_every = 50;
        let mut pure_prop = prop.clone();
        let a = WaveFunction::gaussian(grid, 1.0, x0, 0.0, 0.7).unwrap();
        let b = WaveFunction::gaussian(grid, 1.0, -x0, 0.5, 0.9).unwrap();
        let mut rho = QuantumState::mixture(&[(0.5, a.clone()), (0.5, b)]).unwrap();
        let mut psi = a;
        let dt = 2e-3;
        let mut noise = WienerStream::new(seed, 0, dt).unwrap();
        for n in 0..300 {
            let t = n as f64 * dt;
            let dw = noise.next_increment();
            prop.sme_step(&mut rho, dt, t, dw).unwrap();
            pure_prop.sme_step(&mut psi, dt, t, dw).unwrap();
            for m in [rho.moments(&spec, t + dt), psi.moments(&spec, t + dt)] {
                prop_assert!(uncertainty_floor_holds(m.c_xx, m.c_xp, m.c_pp, 1.0));
            }
        }
        let audit = prop.audit;
        prop_assert!(audit.max_trace_error < 1e-9 && pure_prop.audit.max_trace_error < 1e-9);
        prop_assert!(audit.max_hermiticity_defect < 1e-12);
        prop_assert!(audit.eigen_checks > 0 && audit.min_eigenvalue > -1e-8, "{:?}", audit);
    }
}
