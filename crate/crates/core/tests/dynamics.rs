use qcond_core::cdyn::newton_trajectory;
use qcond_core::cumulant::{belief_vs_full_compare, Flavor, GaussianBelief};
use qcond_core::grid::PositionGrid;
use qcond_core::lyap::{paired_run, LyapunovConfig, QuantumTrajectory};
use qcond_core::noise::WienerStream;
use qcond_core::qct::{window_center_strength, RegimeReport};
use qcond_core::qdyn::{filter_with_record, simulate_conditioned, MeasurementSpec, Propagator};
use qcond_core::state::{GridState, QuantumState};
use qcond_core::stats::{mean, std_error};
use qcond_core::system::SystemSpec;
use qcond_core::wavefn::WaveFunction;
use qcond_core::wigner::{evolve_wigner, wigner_transform};

fn harmonic() -> SystemSpec {
    SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.5]).unwrap()
}

#[test]
fn conditioning_purifies_mixed_states_on_average() {
    let grid = PositionGrid::centered(10.0, 64).unwrap();
    let spec = harmonic();
    let a = WaveFunction::gaussian(grid, 1.0, 1.0, 0.0, 0.8).unwrap();
    let b = WaveFunction::gaussian(grid, 1.0, -1.0, 0.5, 0.8).unwrap();
    let start = QuantumState::mixture(&[(0.5, a), (0.5, b)]).unwrap();
    let (dt, per_checkpoint, checkpoints, n) = (2e-3, 100, 10, 96);
    let purities: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut prop = Propagator::new(grid, spec, MeasurementSpec::new(0.5).unwrap()).unwrap();
            let mut rho = start.clone();
            let mut noise = WienerStream::new(77, i, dt).unwrap();
            let (traj, _) = simulate_conditioned(&mut prop, &mut rho, &mut noise, 0.0, per_checkpoint * checkpoints, per_checkpoint).unwrap();
            traj.moments.iter().map(|m| m.purity).collect()
        })
        .collect();
    for j in 0..checkpoints {
        let increments: Vec<f64> = purities.iter().map(|p| p[j + 1] - p[j]).collect();
        let (m, se) = (mean(&increments), std_error(&increments));
        assert!(m > -3.0 * se, "checkpoint {j}: mean purity change {m} ± {se}");
    }
    let gain: Vec<f64> = purities.iter().map(|p| p[checkpoints] - p[0]).collect();
    assert!(mean(&gain) > 3.0 * std_error(&gain), "no net purification");
}

#[test]
fn filter_from_offset_belief_converges() {
    let grid = PositionGrid::centered(10.0, 128).unwrap();
    let spec = harmonic();
    let sigma = 0.5f64.sqrt();
    let dt = 1e-3;
    let mut prop = Propagator::new(grid, spec, MeasurementSpec::new(1.0).unwrap()).unwrap();
    let mut truth = WaveFunction::gaussian(grid, 1.0, 1.0, 0.0, sigma).unwrap();
    let mut noise = WienerStream::new(5, 0, dt).unwrap();
    let (true_traj, record) = simulate_conditioned(&mut prop, &mut truth, &mut noise, 0.0, 10_000, 10).unwrap();
    let mut belief = WaveFunction::gaussian(grid, 1.0, 1.0 + 0.5 * sigma, 0.0, sigma).unwrap();
    let filtered = filter_with_record(&mut prop, &mut belief, &record, dt, 10).unwrap();

    let gaps: Vec<f64> = true_traj.x_means().iter().zip(filtered.x_means()).map(|(a, b)| (a - b).abs()).collect();
    let offset = gaps[0];
    // envelope: the largest gap in each unit-time window
    let envelope: Vec<f64> = gaps[1..].chunks(100).map(|w| w.iter().copied().fold(0.0, f64::max)).collect();
    for pair in envelope.windows(2) {
        assert!(pair[1] <= pair[0] * 1.05 + 1e-12, "envelope rose: {envelope:?}");
    }
    assert!(*envelope.last().unwrap() < 0.1 * offset, "final gap {:?} vs offset {offset}", envelope.last());
}

#[test]
fn density_and_moyal_evolution_agree() {
    let grid = PositionGrid::centered(6.0, 64).unwrap();
    let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.0, 0.0, 0.25]).unwrap();
    let (dt, steps) = (1e-4, 500);
    let mut rho = QuantumState::gaussian(grid, 1.0, 0.5, 0.3, 0.6).unwrap();
    let w0 = wigner_transform(&rho, 1.0).unwrap();
    let mut prop = Propagator::new(grid, spec, MeasurementSpec::new(0.0).unwrap()).unwrap();
    for n in 0..steps {
        prop.isolated_step(&mut rho, dt, n as f64 * dt).unwrap();
    }
    let moyal = evolve_wigner(&w0, &spec, dt, 0.0, steps).unwrap();
    let diff = wigner_transform(&rho, 1.0).unwrap().max_difference(&moyal).unwrap();
    assert!(diff < 1e-4, "L∞ = {diff}");
}

#[test]
fn gaussian_closure_is_exact_for_quadratic_potentials() {
    let grid = PositionGrid::centered(12.0, 128).unwrap();
    let spec = harmonic().with_drive(0.5, 1.3);
    let meas = MeasurementSpec::new(0.2).unwrap();
    let dt = 2e-3;
    let mut prop = Propagator::new(grid, spec, meas).unwrap();
    let mut psi = WaveFunction::gaussian(grid, 1.0, 2.0, -0.5, 0.9).unwrap();
    let mut belief = GaussianBelief::from_moments(&psi.moments(&spec, 0.0), Flavor::Quantum { hbar: 1.0 }).unwrap();
    let mut noise = WienerStream::new(3, 0, dt).unwrap();
    let (mut full, mut closed) = (vec![psi.moments(&spec, 0.0)], vec![belief.moments(&spec, 0.0)]);
    for n in 0..5000 {
        let t = n as f64 * dt;
        let dw = noise.next_increment();
        prop.sme_step(&mut psi, dt, t, dw).unwrap();
        belief.step(&spec, &meas, dt, t, dw).unwrap();
        if (n + 1) % 50 == 0 {
            full.push(psi.moments(&spec, t + dt));
            closed.push(belief.moments(&spec, t + dt));
        }
    }
    let worst = belief_vs_full_compare(&full, &closed).unwrap().worst_relative();
    assert!(worst < 1e-3, "worst relative deviation {worst}");
}

#[test]
fn linear_dynamics_has_no_separation_growth() {
    let grid = PositionGrid::centered(10.0, 128).unwrap();
    let spec = harmonic();
    for (x0, p0) in [(1.0, 0.0), (-2.0, 1.0), (0.0, 2.5)] {
        let cfg = LyapunovConfig {
            initial_separation: 0.05,
            n_realizations: 1,
            horizon: 60.0,
            dt: 2e-3,
            sample_every: 10,
            renormalize_above: None,
            master_seed: 9,
        };
        let fiducial = QuantumTrajectory {
            prop: Propagator::new(grid, spec, MeasurementSpec::new(0.0).unwrap()).unwrap(),
            state: WaveFunction::gaussian(grid, 1.0, x0, p0, 0.7).unwrap(),
        };
        let run = paired_run(fiducial, &cfg, 0).unwrap();
        let stretch: Vec<f64> = run.times.iter().zip(&run.lambda).filter(|(_, l)| l.is_finite()).map(|(t, l)| t * l).collect();
        let top = stretch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // the separation oscillates but never exceeds its starting value
        assert!(top < 1e-6, "({x0}, {p0}): max λ·t = {top}");
        let deep = stretch.iter().filter(|s| s.abs() > 5.0).count();
        assert!(deep * 20 < stretch.len(), "({x0}, {p0}): {deep} of {} samples with |λ·t| > 5", stretch.len());
    }
}

#[test]
fn quantum_window_dichotomy() {
    let threshold = 10.0;
    // deep quantum driven double well: no strength opens the window
    let deep = SystemSpec::new(1.0, 2.0, &[0.0, 0.0, -10.0, 0.0, 0.5]).unwrap().with_drive(10.0, 6.07);
    let orbit = newton_trajectory(-3.0, 0.0, &deep, 1e-3, 0.0, 20_000);
    let times: Vec<f64> = (0..orbit.len()).map(|i| i as f64 * 1e-3).collect();
    for e in -12..=12 {
        let k = 10f64.powf(e as f64 / 3.0);
        let rep = RegimeReport::along_orbit(&deep, k, &times, &orbit, None, threshold).unwrap();
        assert!(!rep.window_open(), "k = {k} opened the window");
    }

    // large-action weakly anharmonic oscillator: open at the balanced strength
    let wide = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.5, 0.0, 2e-4]).unwrap().with_drive(1.0, 6.07);
    let orbit = newton_trajectory(16.0, 0.0, &wide, 1e-3, 0.0, 20_000);
    let times: Vec<f64> = (0..orbit.len()).map(|i| i as f64 * 1e-3).collect();
    let k = window_center_strength(&wide, &orbit);
    let rep = RegimeReport::along_orbit(&wide, k, &times, &orbit, None, threshold).unwrap();
    assert!(rep.window_open(), "left {:?} right {:?}", rep.window_left, rep.window_right);
}
