//! WebAssembly bindings behind `www/index.html`: a conditioned Wigner
//! snapshot, ensemble λ(t) curves and feedback-cooling curves.

use qcond_core::feedback::{cooling_experiment, CoolingSchedule, FeedbackPolicy, Plant};
use qcond_core::grid::PositionGrid;
use qcond_core::lyap::{ensemble_lyapunov, LyapunovConfig, QuantumTrajectory};
use qcond_core::noise::WienerStream;
use qcond_core::qdyn::{MeasurementSpec, Propagator};
use qcond_core::state::QuantumState;
use qcond_core::system::SystemSpec;
use qcond_core::wavefn::WaveFunction;
use qcond_core::wigner::wigner_transform;
use wasm_bindgen::prelude::*;

fn js(e: qcond_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Wigner function on an `n × n` phase-space grid, row-major in `x`.
#[wasm_bindgen]
pub struct Snapshot {
    n: usize,
    x_range: (f64, f64),
    p_range: (f64, f64),
    values: Vec<f64>,
}

#[wasm_bindgen]
impl Snapshot {
    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.n
    }
    #[wasm_bindgen(getter)]
    pub fn x_min(&self) -> f64 {
        self.x_range.0
    }
    #[wasm_bindgen(getter)]
    pub fn x_max(&self) -> f64 {
        self.x_range.1
    }
    #[wasm_bindgen(getter)]
    pub fn p_min(&self) -> f64 {
        self.p_range.0
    }
    #[wasm_bindgen(getter)]
    pub fn p_max(&self) -> f64 {
        self.p_range.1
    }
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// Equal-length curves sampled at shared times.
#[wasm_bindgen]
pub struct Curves {
    times: Vec<f64>,
    series: Vec<Vec<f64>>,
}

#[wasm_bindgen]
impl Curves {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn count(&self) -> usize {
        self.series.len()
    }
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.series.get(i).cloned().unwrap_or_default()
    }
}

/// Double well `c2·x² + c4·x⁴` (ħ = 1) started as a Gaussian at `x0` and
/// conditioned on a measurement record of strength `k` up to time `t`.
#[wasm_bindgen]
pub fn wigner_snapshot(c2: f64, c4: f64, x0: f64, k: f64, t: f64, seed: u64) -> Result<Snapshot, JsError> {
    snapshot(c2, c4, x0, k, t, seed).map_err(js)
}

pub fn snapshot(c2: f64, c4: f64, x0: f64, k: f64, t: f64, seed: u64) -> qcond_core::Result<Snapshot> {
    let grid = PositionGrid::centered(8.0, 64)?;
    let spec = SystemSpec::new(1.0, 1.0, &[0.0, 0.0, c2, 0.0, c4])?;
    let dt = 1e-3;
    let mut prop = Propagator::new(grid, spec, MeasurementSpec::new(k)?)?;
    let mut psi = WaveFunction::gaussian(grid, 1.0, x0, 0.0, 0.6)?;
    let mut noise = WienerStream::new(seed, 0, dt)?;
    for n in 0..(t / dt).round() as usize {
        prop.advance(&mut psi, dt, n as f64 * dt, noise.next_increment())?;
    }
    let w = wigner_transform(&QuantumState::from_pure(&psi), 1.0)?;
    let p_range = (w.p_grid[0], *w.p_grid.last().unwrap_or(&0.0));
    Ok(Snapshot { n: w.n(), x_range: (grid.x_min, grid.x(grid.n_points - 1)), p_range, values: w.values })
}

/// Ensemble-mean λ(t) for the driven double well (ħ = 2), one curve per
/// measurement strength.
#[wasm_bindgen]
pub fn lyapunov_curves(strengths: Vec<f64>, horizon: f64, realizations: usize, seed: u64) -> Result<Curves, JsError> {
    lyapunov(&strengths, horizon, realizations, seed).map_err(js)
}

pub fn lyapunov(strengths: &[f64], horizon: f64, realizations: usize, seed: u64) -> qcond_core::Result<Curves> {
    let grid = PositionGrid::centered(12.0, 256)?;
    let spec = SystemSpec::new(1.0, 2.0, &[0.0, 0.0, -10.0, 0.0, 0.5])?.with_drive(10.0, 6.07);
    let cfg = LyapunovConfig {
        initial_separation: 0.03,
        n_realizations: realizations,
        horizon,
        dt: 1e-3,
        sample_every: 20,
        renormalize_above: Some(0.3),
        master_seed: seed,
    };
    let mut times = Vec::new();
    let mut series = Vec::new();
    for &k in strengths {
        let meas = MeasurementSpec::new(k)?;
        let make = |_| -> qcond_core::Result<_> {
            Ok(QuantumTrajectory { prop: Propagator::new(grid, spec, meas)?, state: WaveFunction::gaussian(grid, 2.0, -3.0, 0.0, 0.3)? })
        };
        let s = ensemble_lyapunov(make, &cfg)?;
        times = s.times;
        series.push(s.mean);
    }
    Ok(Curves { times, series })
}

/// Mean `⟨H₀⟩(t)` for no feedback, direct record feedback and
/// estimator-based feedback on the measured quartic oscillator.
#[wasm_bindgen]
pub fn cooling_curves(k: f64, horizon: f64, realizations: usize, seed: u64) -> Result<Curves, JsError> {
    cooling(k, horizon, realizations, seed).map_err(js)
}

pub fn cooling(k: f64, horizon: f64, realizations: usize, seed: u64) -> qcond_core::Result<Curves> {
    let plant = Plant {
        system: SystemSpec::new(1.0, 1.0, &[0.0, 0.0, 0.5, 0.0, 0.1])?,
        measurement: MeasurementSpec::new(k)?,
        grid: PositionGrid::centered(10.0, 128)?,
        x0: 2.0,
        p0: 0.0,
        sigma0: 0.5f64.sqrt(),
        belief_offset: 0.0,
    };
    let policies = [FeedbackPolicy::none(), FeedbackPolicy::direct(-1.0, 0.6, 50.0), FeedbackPolicy::estimator(3.0, 50.0)];
    let sched = CoolingSchedule { dt: 1e-3, horizon, sample_every: 100, n_realizations: realizations, master_seed: seed };
    let ex = cooling_experiment(&plant, &policies, &sched)?;
    let times = ex.results[0].times.clone();
    Ok(Curves { times, series: ex.results.into_iter().map(|r| r.mean_energy).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_is_a_normalized_square_grid() {
        let s = snapshot(-1.0, 0.25, 1.0, 0.5, 0.2, 1).unwrap();
        assert_eq!(s.values.len(), s.n * s.n);
        let dx = (s.x_max() - s.x_min()) / (s.n - 1) as f64;
        let dp = (s.p_max() - s.p_min()) / (s.n - 1) as f64;
        let norm: f64 = s.values.iter().sum::<f64>() * dx * dp;
        assert!((norm - 1.0).abs() < 1e-6, "norm {norm}");
    }

    #[test]
    fn curves_have_one_series_per_setting() {
        let l = lyapunov(&[0.01, 10.0], 0.4, 2, 3).unwrap();
        assert_eq!(l.count(), 2);
        assert!(l.series.iter().all(|s| s.len() == l.times.len()));
        let c = cooling(0.5, 0.5, 2, 3).unwrap();
        assert_eq!(c.count(), 3);
        assert_eq!(c.series(0).len(), c.times().len());
        assert!(c.series(5).is_empty());
    }
}
