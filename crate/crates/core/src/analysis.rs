//! Trajectory records, Monte Carlo aggregates and theorem-checking machinery.
//!
//! The two rate formulas evaluate the expected instantaneous growth of the
//! purity `tr[ρ²]` and the overlap `tr[ρ ρᵉ]` at unit efficiency. Both are
//! computed in an internally shifted frame of the observable; callers pass the
//! observable as configured.

use serde::{Deserialize, Serialize};

use crate::error::{QestError, Result};
use crate::linalg::{
    eigh, expectation, heisenberg_observable, psd_sqrt, trace_product, ComplexMatrix, DensityMatrix,
    Observable, StateMetrics,
};
use crate::sde::MeasurementChannel;

/// Per-time metric series of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub stream_id: u64,
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub purity_true: Vec<f64>,
    pub purity_est: Vec<f64>,
    pub hs_distance: Vec<f64>,
    /// Integrated signal per channel, `q_int[k][i]` at `times[i]`.
    pub q_int: Vec<Vec<f64>>,
    /// `⟨q_k⟩_ρ` of the true state per channel.
    pub expect_true: Vec<Vec<f64>>,
    /// `‖ψψ† − ρᵉ‖` when a pure estimate is co-integrated.
    pub sse_gap: Option<Vec<f64>>,
    pub truncated: bool,
    pub abort_reason: Option<String>,
}

impl TrajectoryRecord {
    pub fn new(stream_id: u64, n_channels: usize, track_sse: bool) -> Self {
        TrajectoryRecord {
            stream_id,
            times: Vec::new(),
            fidelity: Vec::new(),
            purity_true: Vec::new(),
            purity_est: Vec::new(),
            hs_distance: Vec::new(),
            q_int: vec![Vec::new(); n_channels],
            expect_true: vec![Vec::new(); n_channels],
            sse_gap: track_sse.then(Vec::new),
            truncated: false,
            abort_reason: None,
        }
    }

    pub fn push(&mut self, t: f64, m: &StateMetrics, q_int: &[f64], expect: &[f64], sse_gap: Option<f64>) {
        self.times.push(t);
        self.fidelity.push(m.fidelity);
        self.purity_true.push(m.purity_true);
        self.purity_est.push(m.purity_est);
        self.hs_distance.push(m.hs_distance);
        for (series, v) in self.q_int.iter_mut().zip(q_int) {
            series.push(*v);
        }
        for (series, v) in self.expect_true.iter_mut().zip(expect) {
            series.push(*v);
        }
        if let (Some(series), Some(g)) = (self.sse_gap.as_mut(), sse_gap) {
            series.push(g);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.q_int.len()
    }

    pub fn series(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Fidelity => &self.fidelity,
            Metric::PurityTrue => &self.purity_true,
            Metric::PurityEst => &self.purity_est,
            Metric::HsDistance => &self.hs_distance,
        }
    }

    pub fn last(&self, metric: Metric) -> Option<f64> {
        self.series(metric).last().copied()
    }

    /// Index of the record closest to `t`, if one lies within `tol`.
    pub fn index_near(&self, t: f64, tol: f64) -> Option<usize> {
        let (idx, gap) = self
            .times
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (gap <= tol).then_some(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fidelity,
    PurityTrue,
    PurityEst,
    HsDistance,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Fidelity, Metric::PurityTrue, Metric::PurityEst, Metric::HsDistance];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fidelity => "fidelity",
            Metric::PurityTrue => "purity_true",
            Metric::PurityEst => "purity_est",
            Metric::HsDistance => "hs_distance",
        }
    }

    /// Whether the theory predicts growth (`true`) or decay of the ensemble mean.
    pub fn expected_increasing(self) -> bool {
        !matches!(self, Metric::HsDistance)
    }

    pub fn parse(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl SeriesStats {
    fn select(&self, idx: &[usize]) -> SeriesStats {
        SeriesStats {
            mean: idx.iter().map(|&i| self.mean[i]).collect(),
            stderr: idx.iter().map(|&i| self.stderr[i]).collect(),
        }
    }
}

/// Mean and standard error of every metric across trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub fidelity: SeriesStats,
    pub purity_true: SeriesStats,
    pub purity_est: SeriesStats,
    pub hs_distance: SeriesStats,
    pub n_trajectories: usize,
}

impl EnsembleStats {
    /// Aggregates records sharing one time grid. Needs at least two.
    pub fn from_records(records: &[TrajectoryRecord]) -> Result<Self> {
        if records.len() < 2 {
            return Err(QestError::InsufficientTrajectories { needed: 2, got: records.len() });
        }
        let times = records[0].times.clone();
        if let Some(bad) = records.iter().find(|r| r.times != times) {
            return Err(QestError::MismatchedScenarios(format!(
                "trajectory {} has a different time grid (truncated: {})",
                bad.stream_id, bad.truncated
            )));
        }
        let agg = |metric: Metric| {
            let n = records.len() as f64;
            let mut mean = Vec::with_capacity(times.len());
            let mut stderr = Vec::with_capacity(times.len());
            for i in 0..times.len() {
                let m = records.iter().map(|r| r.series(metric)[i]).sum::<f64>() / n;
                let var = records.iter().map(|r| (r.series(metric)[i] - m).powi(2)).sum::<f64>() / (n - 1.0);
                mean.push(m);
                stderr.push((var / n).sqrt());
            }
            SeriesStats { mean, stderr }
        };
        Ok(EnsembleStats {
            fidelity: agg(Metric::Fidelity),
            purity_true: agg(Metric::PurityTrue),
            purity_est: agg(Metric::PurityEst),
            hs_distance: agg(Metric::HsDistance),
            times,
            n_trajectories: records.len(),
        })
    }

    pub fn series(&self, metric: Metric) -> &SeriesStats {
        match metric {
            Metric::Fidelity => &self.fidelity,
            Metric::PurityTrue => &self.purity_true,
            Metric::PurityEst => &self.purity_est,
            Metric::HsDistance => &self.hs_distance,
        }
    }

    fn select(&self, idx: &[usize]) -> EnsembleStats {
        EnsembleStats {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            fidelity: self.fidelity.select(idx),
            purity_true: self.purity_true.select(idx),
            purity_est: self.purity_est.select(idx),
            hs_distance: self.hs_distance.select(idx),
            n_trajectories: self.n_trajectories,
        }
    }

    /// `n` evenly spaced checkpoints after the initial sample (the initial
    /// sample is kept as well), so `n + 1` entries at most.
    pub fn checkpoints(&self, n: usize) -> EnsembleStats {
        let len = self.times.len();
        if len <= n + 1 || n == 0 {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..=n).map(|j| (j * (len - 1) + n / 2) / n).collect();
        idx.dedup();
        self.select(&idx)
    }

    /// Entries with `t >= t_from`.
    pub fn window(&self, t_from: f64) -> EnsembleStats {
        let idx: Vec<usize> = (0..self.times.len()).filter(|&i| self.times[i] >= t_from).collect();
        self.select(&idx)
    }
}

fn check_unit_efficiency(channel: &MeasurementChannel) -> Result<()> {
    if channel.eta() != 1.0 {
        return Err(QestError::param(
            "eta",
            format!("rate formulas hold at unit efficiency only, got {}", channel.eta()),
        ));
    }
    Ok(())
}

/// Expected purity growth rate `γ tr[(ρ^{1/2} q̃ ρ^{1/2})²]`, `q̃ = q − ⟨q⟩_ρ`.
pub fn purity_rate(rho: &DensityMatrix, channel: &MeasurementChannel) -> Result<f64> {
    check_unit_efficiency(channel)?;
    let mean = expectation(channel.obs(), rho)?;
    let centered = channel.obs().shifted(-mean);
    let root = psd_sqrt(rho)?;
    let sandwich = &root * centered.matrix() * &root;
    Ok(channel.gamma() * trace_product(&sandwich, &sandwich).re)
}

/// Expected growth rate of `tr[ρ ρᵉ]`.
///
/// The observable is shifted so that `⟨q⟩_ρ + ⟨q⟩_ρᵉ = 0`; in that frame the
/// rate is `γ tr[ρ^{1/2} (q + ⟨q⟩_ρ) ρᵉ (q + ⟨q⟩_ρ) ρ^{1/2}]`.
pub fn fidelity_rate(rho: &DensityMatrix, rho_e: &DensityMatrix, channel: &MeasurementChannel) -> Result<f64> {
    check_unit_efficiency(channel)?;
    let m_true = expectation(channel.obs(), rho)?;
    let m_est = expectation(channel.obs(), rho_e)?;
    let r = -0.5 * (m_true + m_est);
    // q + r + ⟨q + r⟩_ρ
    let op = channel.obs().shifted(r + m_true + r);
    let root = psd_sqrt(rho)?;
    let left = &root * op.matrix();
    let inner = &left * rho_e.matrix() * left.adjoint();
    Ok(channel.gamma() * inner.trace().re)
}

/// A flagged decrease (or increase, for decaying metrics) between checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub t_from: f64,
    pub t_to: f64,
    pub change: f64,
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityResult {
    pub metric: Metric,
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Largest adverse step measured in combined standard errors.
    pub worst_sigma: f64,
}

/// Flags consecutive-checkpoint moves against the predicted direction that
/// exceed `n_sigma` combined standard errors.
pub fn monotonicity_check(stats: &EnsembleStats, metric: Metric, n_sigma: f64) -> Result<MonotonicityResult> {
    if stats.n_trajectories < 30 {
        return Err(QestError::InsufficientTrajectories { needed: 30, got: stats.n_trajectories });
    }
    let s = stats.series(metric);
    let sign = if metric.expected_increasing() { 1.0 } else { -1.0 };
    let mut violations = Vec::new();
    let mut worst_sigma = 0.0f64;
    for i in 0..s.mean.len().saturating_sub(1) {
        let adverse = -sign * (s.mean[i + 1] - s.mean[i]);
        let se = s.stderr[i].hypot(s.stderr[i + 1]);
        if adverse > 0.0 {
            worst_sigma = worst_sigma.max(if se > 0.0 { adverse / se } else { f64::INFINITY });
        }
        if adverse > n_sigma * se {
            violations.push(Violation {
                index: i,
                t_from: stats.times[i],
                t_to: stats.times[i + 1],
                change: s.mean[i + 1] - s.mean[i],
                allowed: n_sigma * se,
            });
        }
    }
    Ok(MonotonicityResult {
        metric,
        passed: violations.is_empty(),
        violations,
        worst_sigma,
    })
}

/// First time the fidelity reaches `threshold` and stays above `threshold − 0.02`.
pub fn convergence_time(rec: &TrajectoryRecord, threshold: f64) -> Option<f64> {
    let f = &rec.fidelity;
    let floor = threshold - 0.02;
    let mut first = None;
    for i in (0..f.len()).rev() {
        if f[i] < floor {
            break;
        }
        if f[i] >= threshold {
            first = Some(i);
        }
    }
    first.map(|i| rec.times[i])
}

/// Orthonormal bases of the eigenspaces of `q`, grouping eigenvalues closer than `tol`.
fn eigenspaces(q: &Observable, tol: f64) -> Vec<ComplexMatrix> {
    let spec = eigh(q.matrix());
    let scale = spec.spectral_radius().max(1.0);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, v) in spec.values.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (v - spec.values[*g.last().unwrap()]).abs() <= tol * scale => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    groups
        .into_iter()
        .map(|g| ComplexMatrix::from_fn(q.dim(), g.len(), |i, j| spec.vectors[(i, g[j])]))
        .collect()
}

/// Basis of the intersection of the column spans of `a` and `b`.
fn intersect(a: &ComplexMatrix, b: &ComplexMatrix, cutoff: f64) -> ComplexMatrix {
    let d = a.nrows();
    let id = ComplexMatrix::identity(d, d);
    let comp_a = &id - a * a.adjoint();
    let comp_b = &id - b * b.adjoint();
    let mut stacked = ComplexMatrix::zeros(2 * d, d);
    stacked.view_mut((0, 0), (d, d)).copy_from(&comp_a);
    stacked.view_mut((d, 0), (d, d)).copy_from(&comp_b);
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= cutoff)
        .collect();
    ComplexMatrix::from_fn(d, null.len(), |i, j| v_t[(null[j], i)].conj())
}

/// Dimension of the largest subspace that is an eigenspace of every sampled
/// Heisenberg observable `q_t` (t = 0 is always included).
pub fn common_eigenspace_dim(h: &Observable, q: &Observable, times: &[f64]) -> Result<usize> {
    const CUTOFF: f64 = 1e-8;
    let mut current = eigenspaces(q, CUTOFF);
    for &t in times.iter().filter(|&&t| t != 0.0) {
        let qt = heisenberg_observable(q, h, t)?;
        let spaces = eigenspaces(&qt, CUTOFF);
        let mut next = Vec::new();
        for u in &current {
            for v in &spaces {
                let w = intersect(u, v, CUTOFF);
                if w.ncols() > 0 {
                    next.push(w);
                }
            }
        }
        current = next;
        if current.is_empty() {
            break;
        }
    }
    Ok(current.iter().map(|w| w.ncols()).max().unwrap_or(0))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// `⟨q_0⟩_ρ` at `t_star` across runs.
pub fn expectation_samples(runs: &[TrajectoryRecord], t_star: f64) -> Result<Vec<f64>> {
    let tol = 1e-6 * t_star.abs().max(1.0);
    runs.iter()
        .map(|r| {
            let i = r.index_near(t_star, tol).ok_or_else(|| {
                QestError::MismatchedScenarios(format!("trajectory {} has no record at t={t_star}", r.stream_id))
            })?;
            r.expect_true
                .first()
                .map(|s| s[i])
                .ok_or_else(|| QestError::MismatchedScenarios("record has no channels".into()))
        })
        .collect()
}

/// KS distance between the distributions of `⟨q⟩_ρ` at `t_star` produced by
/// the discrete measurement cycle and by the continuous equations.
pub fn weak_limit_distance(
    cycle_runs: &[TrajectoryRecord],
    sde_runs: &[TrajectoryRecord],
    t_star: f64,
) -> Result<f64> {
    if cycle_runs.is_empty() || sde_runs.is_empty() {
        return Err(QestError::InsufficientTrajectories { needed: 1, got: 0 });
    }
    if cycle_runs[0].n_channels() != sde_runs[0].n_channels() {
        return Err(QestError::MismatchedScenarios(format!(
            "{} channels vs {}",
            cycle_runs[0].n_channels(),
            sde_runs[0].n_channels()
        )));
    }
    let a = expectation_samples(cycle_runs, t_star)?;
    let b = expectation_samples(sde_runs, t_star)?;
    Ok(ks_two_sample(&a, &b))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolated quantile, `p` in `[0, 1]`.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Median convergence time with its interquartile range; non-converged runs
/// count as `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n_converged: usize,
    pub n_runs: usize,
}

pub fn convergence_summary(records: &[TrajectoryRecord], threshold: f64) -> ConvergenceSummary {
    let times: Vec<f64> = records
        .iter()
        .map(|r| convergence_time(r, threshold).unwrap_or(f64::INFINITY))
        .collect();
    ConvergenceSummary {
        median: median(&times),
        q25: quantile(&times, 0.25),
        q75: quantile(&times, 0.75),
        n_converged: times.iter().filter(|t| t.is_finite()).count(),
        n_runs: records.len(),
    }
}
