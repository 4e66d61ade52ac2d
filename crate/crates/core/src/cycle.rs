//! Discrete unsharp-measurement model and its repeated measurement-update cycle.
//!
//! An outcome `q` of a Gaussian unsharp measurement of `q̂` with spread `σ` is
//! distributed as `tr[G_σ(q − q̂) ρ]`, and the state is updated by the sandwich
//! `G_σ^{1/2}(q − q̂) ρ G_σ^{1/2}(q − q̂)` followed by trace normalization. The
//! estimate receives the very same update with the outcome drawn from the true
//! state. Repeating the cycle at frequency `ν` with `ν/σ² = γ` fixed approaches
//! the continuous equations in [`crate::sde`].

use std::f64::consts::PI;

use crate::analysis::TrajectoryRecord;
use crate::error::{QestError, Result};
use crate::linalg::{
    frobenius, metrics_unchecked, normalize, propagator, ComplexMatrix, DensityMatrix, Observable, Spectrum,
};
use crate::noise::NoiseStream;

/// Lower clamp for the Gaussian kernel exponent.
const MIN_EXPONENT: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleConfig {
    pub sigma: f64,
    pub nu: f64,
    pub n_cycles: usize,
    /// Record metrics every this many cycles (the initial state is always recorded).
    pub record_every: usize,
}

impl CycleConfig {
    pub fn new(sigma: f64, nu: f64, n_cycles: usize) -> Result<Self> {
        let cfg = CycleConfig { sigma, nu, n_cycles, record_every: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Enough cycles to cover `horizon` at frequency `nu`.
    pub fn for_horizon(sigma: f64, nu: f64, horizon: f64) -> Result<Self> {
        Self::new(sigma, nu, (horizon * nu).round() as usize)
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    /// Continuum measurement strength `ν / σ²`.
    pub fn gamma(&self) -> f64 {
        self.nu / (self.sigma * self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(QestError::param("sigma", format!("must be finite and > 0, got {}", self.sigma)));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(QestError::param("nu", format!("must be finite and > 0, got {}", self.nu)));
        }
        if self.n_cycles == 0 {
            return Err(QestError::param("n_cycles", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementRecord {
    pub outcomes: Vec<f64>,
    pub times: Vec<f64>,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(QestError::param("sigma", format!("must be finite and > 0, got {sigma}")))
    }
}

/// Normalized Gaussian density of spread `sigma`.
pub fn gaussian(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Outcome density `Σ_k w_k G_σ(q − λ_k)` over the spectrum of `obs`.
pub fn outcome_pdf(q: f64, sigma: f64, obs: &Observable, state: &DensityMatrix) -> Result<f64> {
    check_sigma(sigma)?;
    check_dim(obs, state)?;
    let spec = obs.spectrum();
    let w = spec.populations(state.matrix());
    Ok(spec.values.iter().zip(&w).map(|(l, wk)| wk * gaussian(q - l, sigma)).sum())
}

fn check_dim(obs: &Observable, state: &DensityMatrix) -> Result<()> {
    if obs.dim() != state.dim() {
        return Err(QestError::DimensionMismatch { expected: obs.dim(), found: state.dim() });
    }
    Ok(())
}

fn pick_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let target = u * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w.max(0.0);
        if target < acc {
            return k;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// Draws an outcome from the exact spectral mixture: eigenvalue `λ_k` with
/// probability `w_k`, plus Gaussian noise of spread `sigma`.
pub fn sample_outcome(sigma: f64, obs: &Observable, state: &DensityMatrix, noise: &mut NoiseStream) -> Result<f64> {
    check_sigma(sigma)?;
    check_dim(obs, state)?;
    let spec = obs.spectrum();
    let w = spec.populations(state.matrix());
    Ok(sample_from(&spec.values, &w, sigma, noise))
}

fn sample_from(values: &[f64], populations: &[f64], sigma: f64, noise: &mut NoiseStream) -> f64 {
    let k = pick_index(populations, noise.uniform());
    values[k] + sigma * noise.standard_normal()
}

/// Square-root kernel `G_σ^{1/2}(q − λ_k)` per eigenvalue, stored as
/// `exp(log_scale) · rel[k]` with `max rel = 1` so that far-tail outcomes keep
/// full relative precision.
struct RootKernel {
    rel: Vec<f64>,
    log_scale: f64,
}

fn root_kernel(values: &[f64], q: f64, sigma: f64) -> RootKernel {
    let log_norm = -0.25 * (2.0 * PI * sigma * sigma).ln();
    let exps: Vec<f64> = values
        .iter()
        .map(|l| {
            let x = q - l;
            (-(x * x) / (4.0 * sigma * sigma)).max(MIN_EXPONENT)
        })
        .collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    RootKernel {
        rel: exps.iter().map(|e| (e - top).exp()).collect(),
        log_scale: log_norm + top,
    }
}

/// Applies the kernel to a state already expressed in the eigenbasis of `q̂`.
fn update_in_eigenbasis(rho: &ComplexMatrix, kernel: &RootKernel, q: f64) -> Result<DensityMatrix> {
    let n = rho.nrows();
    let k = &kernel.rel;
    let scaled = ComplexMatrix::from_fn(n, n, |i, j| rho[(i, j)] * (k[i] * k[j]));
    let tr: f64 = (0..n).map(|i| scaled[(i, i)].re).sum();
    // the unscaled numerator trace is exp(2 log_scale) · tr
    if !(tr > 0.0) || 2.0 * kernel.log_scale + tr.ln() <= 1e-300f64.ln() {
        return Err(QestError::OutcomeUnderflow { outcome: q });
    }
    normalize(&scaled)
}

/// Posterior state after outcome `q`, normalized by its own trace. The same
/// map serves the true state and the estimate.
pub fn gaussian_update(state: &DensityMatrix, q: f64, sigma: f64, obs: &Observable) -> Result<DensityMatrix> {
    check_sigma(sigma)?;
    check_dim(obs, state)?;
    let spec = obs.spectrum();
    let v = &spec.vectors;
    let local = v.adjoint() * state.matrix() * v;
    let kernel = root_kernel(&spec.values, q, sigma);
    let updated = update_in_eigenbasis(&local, &kernel, q)?;
    normalize(&(v * updated.matrix() * v.adjoint()))
}

/// Cached eigenbasis of the observable and the per-cycle propagator in that basis.
struct CycleModel {
    spectrum: Spectrum,
    step_unitary: ComplexMatrix,
    identity_step: bool,
}

impl CycleModel {
    fn new(h: &Observable, obs: &Observable, nu: f64) -> Self {
        let spectrum = obs.spectrum();
        let v = &spectrum.vectors;
        let u = propagator(h, 1.0 / nu);
        let step_unitary = v.adjoint() * u * v;
        CycleModel { spectrum, step_unitary, identity_step: h.is_zero() }
    }

    fn to_local(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let v = &self.spectrum.vectors;
        v.adjoint() * m * v
    }

    fn evolve(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        if self.identity_step {
            rho.clone()
        } else {
            &self.step_unitary * rho * self.step_unitary.adjoint()
        }
    }

    fn mean(&self, rho: &ComplexMatrix) -> f64 {
        self.spectrum.values.iter().enumerate().map(|(k, l)| l * rho[(k, k)].re).sum()
    }
}

/// Alternates unitary evolution over `1/ν` with one unsharp measurement whose
/// outcome is drawn from the true state and applied to both states.
pub fn run_cycles(
    cfg: &CycleConfig,
    h: &Observable,
    obs: &Observable,
    rho0: &DensityMatrix,
    rho_e0: &DensityMatrix,
    noise: &mut NoiseStream,
) -> Result<(TrajectoryRecord, MeasurementRecord)> {
    cfg.validate()?;
    let d = obs.dim();
    for found in [h.dim(), rho0.dim(), rho_e0.dim()] {
        if found != d {
            return Err(QestError::DimensionMismatch { expected: d, found });
        }
    }
    let model = CycleModel::new(h, obs, cfg.nu);
    let mut rho = model.to_local(rho0.matrix());
    let mut rho_e = model.to_local(rho_e0.matrix());
    let mut q_int = 0.0;

    let mut rec = TrajectoryRecord::new(noise.stream_id(), 1, false);
    let record = |rec: &mut TrajectoryRecord, t: f64, rho: &ComplexMatrix, rho_e: &ComplexMatrix, q_int: f64| {
        let m = metrics_unchecked(rho, rho_e);
        rec.push(t, &m, &[q_int], &[model.mean(rho)], None);
    };
    record(&mut rec, 0.0, &rho, &rho_e, q_int);

    let mut outcomes = MeasurementRecord {
        outcomes: Vec::with_capacity(cfg.n_cycles),
        times: Vec::with_capacity(cfg.n_cycles),
    };
    let every = cfg.record_every.max(1);
    for k in 1..=cfg.n_cycles {
        let t = k as f64 / cfg.nu;
        let evolved = model.evolve(&rho);
        let evolved_e = model.evolve(&rho_e);
        let populations: Vec<f64> = (0..d).map(|i| evolved[(i, i)].re).collect();
        let q = sample_from(&model.spectrum.values, &populations, cfg.sigma, noise);
        let kernel = root_kernel(&model.spectrum.values, q, cfg.sigma);
        rho = update_in_eigenbasis(&evolved, &kernel, q)?.into_matrix();
        rho_e = update_in_eigenbasis(&evolved_e, &kernel, q)?.into_matrix();
        q_int += q / cfg.nu;
        outcomes.outcomes.push(q);
        outcomes.times.push(t);
        if k % every == 0 || k == cfg.n_cycles {
            record(&mut rec, t, &rho, &rho_e, q_int);
        }
    }
    Ok((rec, outcomes))
}

/// Frobenius change `‖ρ' − ρ‖` of one update; used for weak-limit diagnostics.
pub fn update_size(state: &DensityMatrix, q: f64, sigma: f64, obs: &Observable) -> Result<f64> {
    let after = gaussian_update(state, q, sigma, obs)?;
    Ok(frobenius(&(after.matrix() - state.matrix())))
}
