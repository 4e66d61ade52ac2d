//! Parallel Monte Carlo campaigns.
//!
//! Trajectory `k` of a campaign always draws from `NoiseStream::new(seed, k)`,
//! and results come back ordered by `k` whatever the completion order, so a
//! campaign is reproducible for any thread count.

use rayon::prelude::*;

use crate::analysis::TrajectoryRecord;
use crate::cycle::{run_cycles, CycleConfig};
use crate::ensemble::{integrate_reduced, EnsembleSpec};
use crate::error::{QestError, Result};
use crate::noise::NoiseStream;
use crate::scenario::ScenarioSpec;
use crate::sde::integrate_trajectory;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "QEST_THREADS";

pub fn thread_count() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n >= 1 => n,
        _ => available,
    }
}

/// Runs `f` for stream ids `first..first + n` on a bounded pool.
pub fn map_streams<T, F>(seed: u64, first: u64, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut NoiseStream) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| QestError::Io(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|k| {
                let mut noise = NoiseStream::new(seed, first + k);
                f(&mut noise)
            })
            .collect()
    })
}

/// All trajectories of a scenario.
pub fn simulate(spec: &ScenarioSpec) -> Result<Vec<TrajectoryRecord>> {
    spec.dynamics()?;
    map_streams(spec.seed, 0, spec.n_trajectories, |noise| integrate_trajectory(spec, noise))
}

/// Cycle configuration implied by a scenario's `cycle` block, recording on the
/// same time grid as the continuous integrator where the two are commensurate.
pub fn cycle_config(spec: &ScenarioSpec) -> Result<CycleConfig> {
    let settings = spec
        .cycle
        .ok_or_else(|| QestError::config("cycle", "scenario has no cycle block"))?;
    let cfg = CycleConfig::for_horizon(settings.sigma, settings.nu, spec.horizon)?;
    let record_time = spec.integrator.dt * spec.integrator.record_every as f64;
    let every = (record_time * settings.nu).round().max(1.0) as usize;
    Ok(cfg.with_record_every(every))
}

/// Discrete measurement cycles for every trajectory, measuring the first channel's observable.
pub fn simulate_cycles(spec: &ScenarioSpec) -> Result<Vec<TrajectoryRecord>> {
    let cfg = cycle_config(spec)?;
    let obs = spec
        .channels
        .first()
        .ok_or_else(|| QestError::config("channels", "the cycle model needs one measured observable"))?
        .obs()
        .clone();
    map_streams(spec.seed, 0, spec.n_trajectories, |noise| {
        let init = spec.initial_state(noise)?;
        let (rec, _) = run_cycles(&cfg, &spec.hamiltonian, &obs, &init.rho, &init.rho_e, noise)?;
        Ok(rec)
    })
}

/// Reduced ensemble equations for every trajectory.
pub fn simulate_ensemble(spec: &EnsembleSpec) -> Result<Vec<TrajectoryRecord>> {
    let base = &spec.base;
    map_streams(base.seed, 0, base.n_trajectories, |noise| integrate_reduced(spec, noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    #[test]
    fn ordered_and_deterministic() {
        let mut spec = preset("qubit_rabi").unwrap();
        spec.horizon = 0.5;
        spec.n_trajectories = 8;
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a, b);
        for (k, r) in a.iter().enumerate() {
            assert_eq!(r.stream_id, k as u64);
        }
        // trajectory k alone reproduces campaign entry k
        let mut noise = NoiseStream::new(spec.seed, 5);
        assert_eq!(integrate_trajectory(&spec, &mut noise).unwrap(), a[5]);
    }

    #[test]
    fn cycle_grid_matches_sde_grid() {
        let mut spec = preset("qubit_rabi").unwrap();
        spec.horizon = 0.3;
        spec.n_trajectories = 2;
        let c = simulate_cycles(&spec).unwrap();
        let s = simulate(&spec).unwrap();
        assert_eq!(c[0].times.len(), s[0].times.len());
        for (a, b) in c[0].times.iter().zip(&s[0].times) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
