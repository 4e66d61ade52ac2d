//! Fixed-step integration of the coupled measurement/estimation equations.
//!
//! Per step and per channel one Wiener increment `dW` is drawn and turned into
//! a signal increment `dQ` using the pre-step true state. The same `dQ` then
//! drives both stochastic master equations: the true state's and the
//! estimate's. The estimate never reads the true state except through `dQ`.
//!
//! [`sme_increment`] and [`sse_increment`] are the plain Euler–Maruyama
//! increments. The stepper applies the master-equation increment in an
//! equivalent completely positive form, because the raw Euler step drifts
//! out of the positive cone on long runs.

use serde::{Deserialize, Serialize};

use crate::analysis::TrajectoryRecord;
use crate::error::{QestError, Result};
use crate::linalg::{
    c, check_operator, frobenius, metrics_unchecked, min_eigenvalue, normalize, propagator, trace_product,
    ComplexMatrix, ComplexVector, DensityMatrix, Observable, PureState,
};
use crate::noise::NoiseStream;
use crate::scenario::ScenarioSpec;

/// Largest allowed `dt · max γ`.
pub const STABILITY_LIMIT: f64 = 0.01;

/// Default abort threshold for negative eigenvalues.
pub const DEFAULT_POSITIVITY_ABORT: f64 = 1e-8;

/// One continuously measured observable.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementChannel {
    obs: Observable,
    gamma: f64,
    eta: f64,
}

impl MeasurementChannel {
    pub fn new(obs: Observable, gamma: f64, eta: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(QestError::param("gamma", format!("must be finite and > 0, got {gamma}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(QestError::param("eta", format!("must lie in (0, 1], got {eta}")));
        }
        Ok(MeasurementChannel { obs, gamma, eta })
    }

    pub fn obs(&self) -> &Observable {
        &self.obs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Standard deviation factor `(ηγ)^{-1/2}` of the signal noise.
    pub fn noise_scale(&self) -> f64 {
        1.0 / (self.eta * self.gamma).sqrt()
    }

    pub fn with_observable(&self, obs: Observable) -> Self {
        MeasurementChannel { obs, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub renormalize_each_step: bool,
    pub positivity_abort: f64,
    pub record_every: usize,
}

impl IntegratorConfig {
    /// Defaults for a given strongest channel: `dt = 1e-3 / γ_max`.
    pub fn for_gamma(gamma_max: f64) -> Self {
        IntegratorConfig {
            dt: 1e-3 / gamma_max,
            renormalize_each_step: true,
            positivity_abort: DEFAULT_POSITIVITY_ABORT,
            record_every: 1,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_record_every(mut self, record_every: usize) -> Self {
        self.record_every = record_every;
        self
    }

    pub fn validate(&self, gamma_max: f64) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(QestError::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.dt * gamma_max > STABILITY_LIMIT * (1.0 + 1e-12) {
            return Err(QestError::param(
                "dt",
                format!(
                    "dt * gamma_max = {:.3e} exceeds stability limit {STABILITY_LIMIT}",
                    self.dt * gamma_max
                ),
            ));
        }
        if !(self.positivity_abort >= 0.0) {
            return Err(QestError::param("positivity_abort", "must be >= 0"));
        }
        if self.record_every == 0 {
            return Err(QestError::param("record_every", "must be >= 1"));
        }
        Ok(())
    }
}

/// The coupled dynamical record at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub t: f64,
    pub rho: DensityMatrix,
    pub rho_e: DensityMatrix,
    /// Integrated signal `Q` per channel.
    pub q_int: Vec<f64>,
    pub psi_e: Option<PureState>,
}

impl StepState {
    pub fn new(rho: DensityMatrix, rho_e: DensityMatrix, n_channels: usize) -> Self {
        StepState {
            t: 0.0,
            rho,
            rho_e,
            q_int: vec![0.0; n_channels],
            psi_e: None,
        }
    }

    pub fn with_pure_estimate(mut self, psi: PureState) -> Self {
        self.psi_e = Some(psi);
        self
    }
}

/// `dQ = ⟨q⟩_ρ dt + (ηγ)^{-1/2} dW`.
pub fn signal_increment(channel: &MeasurementChannel, rho: &DensityMatrix, dt: f64, dw: f64) -> Result<f64> {
    let mean = crate::linalg::expectation(channel.obs(), rho)?;
    Ok(mean * dt + channel.noise_scale() * dw)
}

fn check_dims(d: usize, h: &Observable, channels: &[MeasurementChannel], innovations: &[f64]) -> Result<()> {
    if h.dim() != d {
        return Err(QestError::DimensionMismatch { expected: d, found: h.dim() });
    }
    if let Some(ch) = channels.iter().find(|ch| ch.obs().dim() != d) {
        return Err(QestError::DimensionMismatch { expected: d, found: ch.obs().dim() });
    }
    if innovations.len() != channels.len() {
        return Err(QestError::DimensionMismatch {
            expected: channels.len(),
            found: innovations.len(),
        });
    }
    Ok(())
}

/// Increment of the stochastic master equation for `state`, given per-channel
/// innovations `dQ_k - ⟨q_k⟩_state dt` computed against this same state.
pub fn sme_increment(
    state: &DensityMatrix,
    h: &Observable,
    channels: &[MeasurementChannel],
    innovations: &[f64],
    dt: f64,
) -> Result<ComplexMatrix> {
    check_dims(state.dim(), h, channels, innovations)?;
    Ok(sme_increment_raw(state.matrix(), h, channels, innovations, dt))
}

pub(crate) fn sme_increment_raw(
    rho: &ComplexMatrix,
    h: &Observable,
    channels: &[MeasurementChannel],
    innovations: &[f64],
    dt: f64,
) -> ComplexMatrix {
    let mut out = measurement_increment(rho, channels, innovations, dt);
    if !h.is_zero() {
        let hr = h.matrix() * rho;
        let rh = rho * h.matrix();
        out += (hr - rh) * c(0.0, -dt);
    }
    out
}

/// The measurement terms of the master-equation increment (no Hamiltonian).
fn measurement_increment(rho: &ComplexMatrix, channels: &[MeasurementChannel], innovations: &[f64], dt: f64) -> ComplexMatrix {
    let d = rho.nrows();
    let mut out = ComplexMatrix::zeros(d, d);
    for (ch, &innov) in channels.iter().zip(innovations) {
        let q = ch.obs().matrix();
        let qr = q * rho;
        let rq = rho * q;
        let comm = &qr - &rq;
        let double = q * &comm - &comm * q;
        let mean = trace_product(q, rho).re;
        let anti = qr + rq - rho * c(2.0 * mean, 0.0);
        out -= double * c(ch.gamma() * dt / 8.0, 0.0);
        out += anti * c(0.5 * ch.eta() * ch.gamma() * innov, 0.0);
    }
    out
}

/// Measurement update in completely positive form, `M ρ M† + L(ρ)`.
///
/// `M = I + Σ_k [-(γ_k/8) q̃_k² dt + (η_k γ_k / 2) q̃_k innov_k]` with
/// `q̃_k = q_k - ⟨q_k⟩_ρ`, and `L` adds the `(1 - η_k)(γ_k/4) q̃_k ρ q̃_k dt`
/// part of the dissipator that an imperfect detector leaves unresolved.
/// Expanding the sandwich reproduces `ρ + measurement_increment` up to a
/// zero-mean term of order `dt` (the `dW² - dt` correction), so the two agree
/// in the Ito sense while this one never leaves the positive cone.
fn measurement_kraus(rho: &ComplexMatrix, channels: &[MeasurementChannel], innovations: &[f64], dt: f64) -> ComplexMatrix {
    let d = rho.nrows();
    let id = ComplexMatrix::identity(d, d);
    let mut m = id.clone();
    let mut extra = ComplexMatrix::zeros(d, d);
    for (ch, &innov) in channels.iter().zip(innovations) {
        let q = ch.obs().matrix();
        let mean = trace_product(q, rho).re;
        let centered = q - &id * c(mean, 0.0);
        m -= &centered * &centered * c(ch.gamma() * dt / 8.0, 0.0);
        m += &centered * c(0.5 * ch.eta() * ch.gamma() * innov, 0.0);
        if ch.eta() < 1.0 {
            extra += &centered * rho * &centered * c((1.0 - ch.eta()) * ch.gamma() * dt / 4.0, 0.0);
        }
    }
    let out = &m * rho * m.adjoint() + extra;
    let tr = out.trace().re;
    out / c(tr, 0.0)
}

/// Increment of the stochastic Schrödinger equation for a pure estimate.
/// Only defined at unit efficiency; the caller renormalizes.
pub fn sse_increment(
    psi: &PureState,
    h: &Observable,
    channels: &[MeasurementChannel],
    innovations: &[f64],
    dt: f64,
) -> Result<ComplexVector> {
    check_dims(psi.dim(), h, channels, innovations)?;
    if let Some((k, ch)) = channels.iter().enumerate().find(|(_, ch)| ch.eta() != 1.0) {
        return Err(QestError::SseRequiresUnitEfficiency { channel: k, eta: ch.eta() });
    }
    Ok(sse_increment_raw(psi.amplitudes(), h, channels, innovations, dt))
}

fn sse_increment_raw(
    psi: &ComplexVector,
    h: &Observable,
    channels: &[MeasurementChannel],
    innovations: &[f64],
    dt: f64,
) -> ComplexVector {
    let mut out = sse_measurement_increment(psi, channels, innovations, dt);
    if !h.is_zero() {
        out += (h.matrix() * psi) * c(0.0, -dt);
    }
    out
}

fn sse_measurement_increment(psi: &ComplexVector, channels: &[MeasurementChannel], innovations: &[f64], dt: f64) -> ComplexVector {
    let mut out = ComplexVector::zeros(psi.len());
    for (ch, &innov) in channels.iter().zip(innovations) {
        let q = ch.obs().matrix();
        let qpsi = q * psi;
        let mean = psi.dotc(&qpsi).re;
        let centered = qpsi - psi * c(mean, 0.0);
        let centered2 = q * &centered - &centered * c(mean, 0.0);
        out -= centered2 * c(ch.gamma() * dt / 8.0, 0.0);
        out += centered * c(0.5 * ch.gamma() * innov, 0.0);
    }
    out
}

/// Hamiltonian, channels and integrator settings: everything needed to step.
///
/// `drift_scale` multiplies the expected-signal drift `⟨q⟩ dt` in both the
/// signal and the innovations; it is 1 for ordinary runs and `N` for the
/// reduced ensemble equations.
#[derive(Debug, Clone)]
pub struct Dynamics {
    h: Observable,
    channels: Vec<MeasurementChannel>,
    integrator: IntegratorConfig,
    drift_scale: f64,
    /// `e^{-iH dt}`, absent when `H = 0`.
    unitary: Option<ComplexMatrix>,
}

impl Dynamics {
    pub fn new(h: Observable, channels: Vec<MeasurementChannel>, integrator: IntegratorConfig) -> Result<Self> {
        if let Some(ch) = channels.iter().find(|ch| ch.obs().dim() != h.dim()) {
            return Err(QestError::DimensionMismatch { expected: h.dim(), found: ch.obs().dim() });
        }
        let unitary = (!h.is_zero()).then(|| propagator(&h, integrator.dt));
        Ok(Dynamics {
            h,
            channels,
            integrator,
            drift_scale: 1.0,
            unitary,
        })
    }

    pub fn with_drift_scale(mut self, scale: f64) -> Self {
        self.drift_scale = scale;
        self
    }

    pub fn hamiltonian(&self) -> &Observable {
        &self.h
    }

    pub fn channels(&self) -> &[MeasurementChannel] {
        &self.channels
    }

    pub fn integrator(&self) -> &IntegratorConfig {
        &self.integrator
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// One non-anticipating step of the coupled system.
    ///
    /// Both density matrices get the measurement update in Kraus form (see
    /// `measurement_kraus`), evaluated at the pre-step state, followed by the
    /// exact free evolution `U = e^{-iH dt}`. This agrees with the
    /// Euler–Maruyama step to first order in `dt`, keeps unmeasured evolution
    /// purity-preserving, and keeps both states positive. The pure estimate,
    /// when present, takes a plain Euler step.
    pub fn step(&self, s: &StepState, noise: &mut NoiseStream) -> Result<StepState> {
        let dt = self.integrator.dt;
        let dws: Vec<f64> = (0..self.channels.len()).map(|_| noise.wiener_increment(dt)).collect();
        self.step_with(s, &dws)
    }

    /// The same step driven by given Wiener increments, one per channel.
    /// Lets callers replay one Brownian path at several step sizes.
    pub fn step_with(&self, s: &StepState, dws: &[f64]) -> Result<StepState> {
        let dt = self.integrator.dt;
        let d = self.dim();
        if s.rho.dim() != d || s.rho_e.dim() != d {
            return Err(QestError::DimensionMismatch { expected: d, found: s.rho.dim() });
        }
        if s.q_int.len() != self.channels.len() {
            return Err(QestError::DimensionMismatch {
                expected: self.channels.len(),
                found: s.q_int.len(),
            });
        }
        let n = self.channels.len();
        if dws.len() != n {
            return Err(QestError::DimensionMismatch { expected: n, found: dws.len() });
        }

        let mut dq = Vec::with_capacity(n);
        let mut innov_true = Vec::with_capacity(n);
        let mut innov_est = Vec::with_capacity(n);
        let mut innov_psi = Vec::with_capacity(n);
        for (k, ch) in self.channels.iter().enumerate() {
            let q = ch.obs().matrix();
            let drift_true = self.drift_scale * trace_product(q, s.rho.matrix()).re * dt;
            let drift_est = self.drift_scale * trace_product(q, s.rho_e.matrix()).re * dt;
            let inc = drift_true + ch.noise_scale() * dws[k];
            dq.push(inc);
            innov_true.push(inc - drift_true);
            innov_est.push(inc - drift_est);
            if let Some(psi) = &s.psi_e {
                let qpsi = q * psi.amplitudes();
                let m = psi.amplitudes().dotc(&qpsi).re;
                innov_psi.push(inc - self.drift_scale * m * dt);
            }
        }

        let rho = self.finish(self.rotate(&measurement_kraus(s.rho.matrix(), &self.channels, &innov_true, dt)))?;
        let rho_e = self.finish(self.rotate(&measurement_kraus(s.rho_e.matrix(), &self.channels, &innov_est, dt)))?;

        let psi_e = match &s.psi_e {
            Some(psi) => {
                if let Some((k, ch)) = self.channels.iter().enumerate().find(|(_, ch)| ch.eta() != 1.0) {
                    return Err(QestError::SseRequiresUnitEfficiency { channel: k, eta: ch.eta() });
                }
                let dpsi = sse_measurement_increment(psi.amplitudes(), &self.channels, &innov_psi, dt);
                let rotated = match &self.unitary {
                    Some(u) => u * psi.amplitudes(),
                    None => psi.amplitudes().clone(),
                };
                Some(PureState::normalized(rotated + dpsi)?)
            }
            None => None,
        };

        let t = s.t + dt;
        let worst = min_eigenvalue(rho.matrix()).min(min_eigenvalue(rho_e.matrix()));
        if worst < -self.integrator.positivity_abort {
            return Err(QestError::PositivityViolation {
                t,
                min_eigenvalue: worst,
                threshold: self.integrator.positivity_abort,
                suggested_dt: dt / 4.0,
            });
        }

        let q_int = s.q_int.iter().zip(&dq).map(|(a, b)| a + b).collect();
        Ok(StepState { t, rho, rho_e, q_int, psi_e })
    }

    /// Exact free evolution over one step, `U ρ U†`.
    fn rotate(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        match &self.unitary {
            Some(u) => u * rho * u.adjoint(),
            None => rho.clone(),
        }
    }

    fn finish(&self, m: ComplexMatrix) -> Result<DensityMatrix> {
        if self.integrator.renormalize_each_step {
            normalize(&m)
        } else {
            check_operator(&m)?;
            Ok(DensityMatrix::from_matrix_unchecked(m))
        }
    }

    /// Fixed-step loop to `horizon`, recording every `record_every` steps and
    /// at the final step. On abort the partial record is returned flagged
    /// `truncated`.
    pub fn integrate(&self, initial: StepState, horizon: f64, noise: &mut NoiseStream) -> TrajectoryRecord {
        let dt = self.integrator.dt;
        let n_steps = (horizon / dt).round().max(0.0) as usize;
        let every = self.integrator.record_every.max(1);
        let mut rec = TrajectoryRecord::new(noise.stream_id(), self.channels.len(), initial.psi_e.is_some());
        self.record(&mut rec, &initial);
        let mut state = initial;
        for i in 1..=n_steps {
            match self.step(&state, noise) {
                Ok(mut next) => {
                    next.t = i as f64 * dt;
                    state = next;
                    if i % every == 0 || i == n_steps {
                        self.record(&mut rec, &state);
                    }
                }
                Err(e) => {
                    rec.truncated = true;
                    rec.abort_reason = Some(e.to_string());
                    break;
                }
            }
        }
        rec
    }

    pub fn record(&self, rec: &mut TrajectoryRecord, s: &StepState) {
        let m = metrics_unchecked(s.rho.matrix(), s.rho_e.matrix());
        let expect: Vec<f64> = self
            .channels
            .iter()
            .map(|ch| trace_product(ch.obs().matrix(), s.rho.matrix()).re)
            .collect();
        let gap = s
            .psi_e
            .as_ref()
            .map(|psi| frobenius(&(psi.projector().matrix() - s.rho_e.matrix())));
        rec.push(s.t, &m, &s.q_int, &expect, gap);
    }
}

/// One coupled step for a configured scenario.
pub fn step_coupled(s: &StepState, spec: &ScenarioSpec, noise: &mut NoiseStream) -> Result<StepState> {
    spec.dynamics()?.step(s, noise)
}

/// Integrates one trajectory of `spec`, drawing any random initial states from
/// `noise` before the first step.
pub fn integrate_trajectory(spec: &ScenarioSpec, noise: &mut NoiseStream) -> Result<TrajectoryRecord> {
    let dynamics = spec.dynamics()?;
    let initial = spec.initial_state(noise)?;
    Ok(dynamics.integrate(initial, spec.horizon, noise))
}
