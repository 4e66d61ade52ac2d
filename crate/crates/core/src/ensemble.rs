//! Collective measurement on `N` identical copies.
//!
//! The reduced equations evolve a single-copy state under the collective
//! signal `dQᶜ = N⟨q⟩ dt + (γᶜ)^{-1/2} dW`. For small `N` the full
//! tensor-product equations serve as an oracle for the product-state
//! approximation behind them.

use serde::{Deserialize, Serialize};

use crate::analysis::TrajectoryRecord;
use crate::error::{QestError, Result};
use crate::linalg::{eigh, ComplexMatrix, DensityMatrix, Observable, MAX_DIM};
use crate::noise::NoiseStream;
use crate::scenario::ScenarioSpec;
use crate::sde::{Dynamics, MeasurementChannel, StepState};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_copies: usize,
    pub gamma_c: f64,
    /// Single-copy Hamiltonian, observables, initial states and integrator.
    pub base: ScenarioSpec,
}

impl EnsembleSpec {
    pub fn new(base: ScenarioSpec, n_copies: usize, gamma_c: f64) -> Result<Self> {
        if n_copies == 0 {
            return Err(QestError::param("n_copies", "must be >= 1"));
        }
        if !(gamma_c.is_finite() && gamma_c > 0.0) {
            return Err(QestError::param("gamma_c", format!("must be finite and > 0, got {gamma_c}")));
        }
        if base.channels.is_empty() {
            return Err(QestError::param("channels", "collective measurement needs at least one observable"));
        }
        base.integrator.validate(gamma_c)?;
        Ok(EnsembleSpec { n_copies, gamma_c, base })
    }

    /// Uses the scenario's `ensemble` block.
    pub fn from_scenario(spec: &ScenarioSpec) -> Result<Self> {
        let e = spec
            .ensemble
            .ok_or_else(|| QestError::config("ensemble", "scenario has no ensemble block"))?;
        Self::new(spec.clone(), e.n_copies, e.gamma_c)
    }

    fn collective_channels(&self, observables: impl Iterator<Item = Observable>) -> Result<Vec<MeasurementChannel>> {
        observables.map(|q| MeasurementChannel::new(q, self.gamma_c, 1.0)).collect()
    }

    /// Single-copy dynamics of the reduced equations.
    pub fn reduced_dynamics(&self) -> Result<Dynamics> {
        let channels = self.collective_channels(self.base.channels.iter().map(|c| c.obs().clone()))?;
        Ok(Dynamics::new(self.base.hamiltonian.clone(), channels, self.base.integrator)?
            .with_drift_scale(self.n_copies as f64))
    }

    pub fn full_dim(&self) -> Result<usize> {
        let d = self.base.dimension;
        let mut full = 1usize;
        for _ in 0..self.n_copies {
            full = full.saturating_mul(d);
            if full > MAX_DIM {
                return Err(QestError::param(
                    "n_copies",
                    format!("{d}^{} exceeds the oracle cap of {MAX_DIM}", self.n_copies),
                ));
            }
        }
        Ok(full)
    }

    /// Dynamics on the full tensor-product space with `Hᶜ = Σ H⁽ⁱ⁾`, `Qᶜ = Σ q⁽ⁱ⁾`.
    pub fn collective_dynamics(&self) -> Result<Dynamics> {
        self.full_dim()?;
        let n = self.n_copies;
        let hc = collective_sum(&self.base.hamiltonian, n)?;
        let obs: Vec<Observable> = self
            .base
            .channels
            .iter()
            .map(|c| collective_sum(c.obs(), n))
            .collect::<Result<_>>()?;
        let channels = self.collective_channels(obs.into_iter())?;
        Dynamics::new(hc, channels, self.base.integrator)
    }
}

/// One step of the reduced single-copy equations.
pub fn reduced_step(s: &StepState, spec: &EnsembleSpec, noise: &mut NoiseStream) -> Result<StepState> {
    spec.reduced_dynamics()?.step(s, noise)
}

/// One step of the full collective equations on the `d^N` space.
pub fn collective_step(s_full: &StepState, spec: &EnsembleSpec, noise: &mut NoiseStream) -> Result<StepState> {
    spec.collective_dynamics()?.step(s_full, noise)
}

fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// `Σ_i I⊗…⊗A⊗…⊗I` over `n` slots.
pub fn collective_sum(a: &Observable, n: usize) -> Result<Observable> {
    let d = a.dim();
    let id = ComplexMatrix::identity(d, d);
    let full = d.pow(n as u32);
    let mut sum = ComplexMatrix::zeros(full, full);
    for slot in 0..n {
        let mut term = ComplexMatrix::identity(1, 1);
        for j in 0..n {
            term = kron(&term, if j == slot { a.matrix() } else { &id });
        }
        sum += term;
    }
    Observable::new(sum)
}

/// `ρ^{⊗n}`.
pub fn tensor_power(rho: &DensityMatrix, n: usize) -> DensityMatrix {
    let mut m = ComplexMatrix::identity(1, 1);
    for _ in 0..n {
        m = kron(&m, rho.matrix());
    }
    DensityMatrix::from_matrix_unchecked(m)
}

/// Reduced state of copy `keep` of an `n`-copy system with local dimension `d`.
pub fn partial_trace(m: &ComplexMatrix, d: usize, n: usize, keep: usize) -> Result<DensityMatrix> {
    let full = d.pow(n as u32);
    if m.nrows() != full || m.ncols() != full {
        return Err(QestError::DimensionMismatch { expected: full, found: m.nrows() });
    }
    if keep >= n {
        return Err(QestError::param("keep", format!("copy index {keep} out of range for {n} copies")));
    }
    let inner = d.pow((n - keep - 1) as u32);
    let outer = d.pow(keep as u32);
    let mut out = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = m[(0, 0)] * 0.0;
            for o in 0..outer {
                for r in 0..inner {
                    let row = (o * d + i) * inner + r;
                    let col = (o * d + j) * inner + r;
                    acc += m[(row, col)];
                }
            }
            out[(i, j)] = acc;
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Unitary swapping copies `a` and `b`.
pub fn swap_operator(d: usize, n: usize, a: usize, b: usize) -> ComplexMatrix {
    let full = d.pow(n as u32);
    let mut p = ComplexMatrix::zeros(full, full);
    for idx in 0..full {
        let mut digits: Vec<usize> = (0..n).map(|k| (idx / d.pow((n - 1 - k) as u32)) % d).collect();
        digits.swap(a, b);
        let target = digits.iter().fold(0, |acc, x| acc * d + x);
        p[(target, idx)] = crate::linalg::c(1.0, 0.0);
    }
    p
}

/// `½ Σ |λ_k|` over the eigenvalues of the Hermitian difference.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let diff = a - b;
    let herm = (&diff + diff.adjoint()) * crate::linalg::c(0.5, 0.0);
    0.5 * eigh(&herm).values.iter().map(|l| l.abs()).sum::<f64>()
}

/// Integrates the reduced equations for one trajectory.
pub fn integrate_reduced(spec: &EnsembleSpec, noise: &mut NoiseStream) -> Result<TrajectoryRecord> {
    let dynamics = spec.reduced_dynamics()?;
    let initial = spec.base.initial_state(noise)?;
    Ok(dynamics.integrate(initial, spec.base.horizon, noise))
}

/// Reduced-vs-collective deviation series for one or more seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_copies: usize,
    pub gamma_c: f64,
    pub horizon: f64,
    pub dt: f64,
    pub seeds: Vec<u64>,
    pub times: Vec<f64>,
    /// Trace distance between copy 0 of the oracle's true state and the reduced `ρ`, per seed.
    pub deviation_true: Vec<Vec<f64>>,
    /// Same for the estimates.
    pub deviation_est: Vec<Vec<f64>>,
    pub max_deviation_true: f64,
    pub max_deviation_est: f64,
    /// Runs that stopped early because a step failed.
    pub truncated: Vec<u64>,
}

/// Runs both models under shared noise from product initial states.
///
/// For each seed, random initial states are drawn first from stream 0 and then
/// the two integrations consume identical copies of the remaining stream.
pub fn compare_reduced_vs_collective(spec: &EnsembleSpec, horizon: f64, seeds: &[u64]) -> Result<ComparisonReport> {
    let reduced = spec.reduced_dynamics()?;
    let collective = spec.collective_dynamics()?;
    let d = spec.base.dimension;
    let n = spec.n_copies;
    let dt = spec.base.integrator.dt;
    let every = spec.base.integrator.record_every.max(1);
    let n_steps = (horizon / dt).round() as usize;

    let mut report = ComparisonReport {
        n_copies: n,
        gamma_c: spec.gamma_c,
        horizon,
        dt,
        seeds: seeds.to_vec(),
        times: Vec::new(),
        deviation_true: Vec::new(),
        deviation_est: Vec::new(),
        max_deviation_true: 0.0,
        max_deviation_est: 0.0,
        truncated: Vec::new(),
    };

    for (run, &seed) in seeds.iter().enumerate() {
        let mut noise_r = NoiseStream::new(seed, 0);
        let single = spec.base.initial_state(&mut noise_r)?;
        let mut noise_c = noise_r.clone();
        let mut full = StepState::new(
            tensor_power(&single.rho, n),
            tensor_power(&single.rho_e, n),
            single.q_int.len(),
        );
        let mut single = StepState { psi_e: None, ..single };

        let mut times = Vec::new();
        let mut dev_t = Vec::new();
        let mut dev_e = Vec::new();
        let mut push = |t: f64, s: &StepState, f: &StepState| -> Result<()> {
            times.push(t);
            dev_t.push(trace_distance(partial_trace(f.rho.matrix(), d, n, 0)?.matrix(), s.rho.matrix()));
            dev_e.push(trace_distance(partial_trace(f.rho_e.matrix(), d, n, 0)?.matrix(), s.rho_e.matrix()));
            Ok(())
        };
        push(0.0, &single, &full)?;
        for i in 1..=n_steps {
            let next_s = reduced.step(&single, &mut noise_r);
            let next_f = collective.step(&full, &mut noise_c);
            match (next_s, next_f) {
                (Ok(s), Ok(f)) => {
                    single = s;
                    full = f;
                }
                _ => {
                    report.truncated.push(seed);
                    break;
                }
            }
            if i % every == 0 || i == n_steps {
                push(i as f64 * dt, &single, &full)?;
            }
        }
        if run == 0 {
            report.times = times;
        }
        report.max_deviation_true = dev_t.iter().copied().fold(report.max_deviation_true, f64::max);
        report.max_deviation_est = dev_e.iter().copied().fold(report.max_deviation_est, f64::max);
        report.deviation_true.push(dev_t);
        report.deviation_est.push(dev_e);
    }
    Ok(report)
}
