//! Dense complex linear algebra and quantum-state primitives.
//!
//! Everything here works on small dense matrices (`d <= 64`). Matrix
//! functions (square roots, exponentials) all go through the Hermitian
//! eigendecomposition in [`eigh`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QestError, Result};
use crate::noise::NoiseStream;

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Largest Hilbert-space dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 64;

/// Imaginary parts of traces below this are treated as roundoff.
pub const IMAG_TOL: f64 = 1e-10;

/// Numerical tolerances used when validating states and operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max entry deviation from Hermiticity.
    pub herm: f64,
    /// Max deviation of the trace from 1.
    pub trace: f64,
    /// Largest tolerated negative eigenvalue magnitude.
    pub pos: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-10,
            trace: 1e-10,
            pos: 1e-8,
        }
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Checks that `m` is square, within the supported dimension range and finite.
pub fn check_operator(m: &ComplexMatrix) -> Result<usize> {
    let (r, cols) = m.shape();
    if r != cols {
        return Err(QestError::InvalidMatrix(format!("matrix is {r}x{cols}, not square")));
    }
    if !(2..=MAX_DIM).contains(&r) {
        return Err(QestError::InvalidMatrix(format!(
            "dimension {r} outside supported range 2..={MAX_DIM}"
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QestError::InvalidMatrix("non-finite entry".into()));
    }
    Ok(r)
}

fn check_same_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(QestError::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// Largest absolute entry of `m - m†`.
pub fn hermiticity_deviation(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `(m + m†) / 2`.
pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    let n = m.nrows();
    ComplexMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// `tr[a b]` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn real_trace(m: &ComplexMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors matching `values`.
    pub vectors: ComplexMatrix,
}

impl Spectrum {
    /// `V f(Λ) V†`.
    pub fn apply<F: Fn(f64) -> C64>(&self, f: F) -> ComplexMatrix {
        let n = self.values.len();
        let scaled = ComplexMatrix::from_fn(n, n, |i, j| self.vectors[(i, j)] * f(self.values[j]));
        scaled * self.vectors.adjoint()
    }

    /// Diagonal of `V† m V`, i.e. the populations of `m` in this eigenbasis.
    pub fn populations(&self, m: &ComplexMatrix) -> Vec<f64> {
        let n = self.values.len();
        (0..n)
            .map(|k| {
                let v = self.vectors.column(k);
                let mv = m * v;
                v.dotc(&mv).re
            })
            .collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Hermitian eigendecomposition. The input is symmetrized first.
pub fn eigh(m: &ComplexMatrix) -> Spectrum {
    let eig = hermitize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Spectrum { values, vectors }
}

/// Smallest eigenvalue of a Hermitian matrix (closed form for qubits).
pub fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    if m.nrows() == 2 {
        let a = m[(0, 0)].re;
        let d = m[(1, 1)].re;
        let b = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
        let half = 0.5 * (a - d);
        0.5 * (a + d) - (half * half + b.norm_sqr()).sqrt()
    } else {
        eigh(m).values[0]
    }
}

/// A Hermitian operator: measured observable or Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: ComplexMatrix,
}

impl Observable {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, Tolerances::default().herm)
    }

    /// Validates Hermiticity within `tol` and stores the exactly symmetrized matrix.
    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self> {
        check_operator(&m)?;
        let deviation = hermiticity_deviation(&m);
        if deviation > tol {
            return Err(QestError::NotHermitian { deviation, tolerance: tol });
        }
        Ok(Observable { matrix: hermitize(&m) })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        Self::new(ComplexMatrix::from_fn(n, n, |i, j| c(rows[i][j], 0.0)))
    }

    pub fn pauli_x() -> Self {
        Observable {
            matrix: ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        }
    }

    pub fn pauli_y() -> Self {
        Observable {
            matrix: ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        }
    }

    pub fn pauli_z() -> Self {
        Observable {
            matrix: ComplexMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
        }
    }

    pub fn identity(d: usize) -> Self {
        Observable { matrix: ComplexMatrix::identity(d, d) }
    }

    pub fn zero(d: usize) -> Self {
        Observable { matrix: ComplexMatrix::zeros(d, d) }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `q + r I`.
    pub fn shifted(&self, r: f64) -> Observable {
        let d = self.dim();
        Observable {
            matrix: &self.matrix + ComplexMatrix::identity(d, d) * c(r, 0.0),
        }
    }

    pub fn scaled(&self, s: f64) -> Observable {
        Observable { matrix: &self.matrix * c(s, 0.0) }
    }

    pub fn spectrum(&self) -> Spectrum {
        eigh(&self.matrix)
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// Frobenius norm of `[self, other]`.
    pub fn commutator_norm(&self, other: &Observable) -> f64 {
        frobenius(&(&self.matrix * &other.matrix - &other.matrix * &self.matrix))
    }
}

/// Hermitian, unit-trace operator.
///
/// Construction through [`DensityMatrix::new`] also checks positivity. States
/// produced by [`normalize`] inside the integrator are Hermitian and unit-trace
/// by construction; their positivity is monitored by the caller instead.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerances(m, &Tolerances::default())
    }

    pub fn with_tolerances(m: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        check_operator(&m)?;
        let deviation = hermiticity_deviation(&m);
        if deviation > tol.herm {
            return Err(QestError::NotHermitian { deviation, tolerance: tol.herm });
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(QestError::TraceNotUnit { trace: tr.re, tolerance: tol.trace });
        }
        let min_eigenvalue = min_eigenvalue(&m);
        if min_eigenvalue < -tol.pos {
            return Err(QestError::NotPositive { min_eigenvalue });
        }
        Ok(DensityMatrix { matrix: m })
    }

    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        DensityMatrix { matrix }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix {
            matrix: ComplexMatrix::identity(d, d) * c(1.0 / d as f64, 0.0),
        }
    }

    /// Projector onto computational basis state `k`.
    pub fn basis(d: usize, k: usize) -> Result<Self> {
        Ok(PureState::basis(d, k)?.projector())
    }

    /// `(I + x σx + y σy + z σz) / 2`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let m = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.5 * (1.0 + z), 0.0), c(0.5 * x, -0.5 * y), c(0.5 * x, 0.5 * y), c(0.5 * (1.0 - z), 0.0)],
        );
        Self::new(m)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    /// Bloch components `(tr ρσx, tr ρσy, tr ρσz)` of a qubit state.
    pub fn bloch(&self) -> Option<[f64; 3]> {
        if self.dim() != 2 {
            return None;
        }
        let m = &self.matrix;
        Some([2.0 * m[(1, 0)].re, 2.0 * m[(1, 0)].im, (m[(0, 0)] - m[(1, 1)]).re])
    }
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: ComplexVector,
}

impl PureState {
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        let d = amplitudes.len();
        if !(2..=MAX_DIM).contains(&d) {
            return Err(QestError::InvalidMatrix(format!("state dimension {d} out of range")));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QestError::NotNormalized { norm });
        }
        Ok(PureState { amplitudes })
    }

    /// Rescales an arbitrary nonzero vector to unit norm.
    pub fn normalized(v: ComplexVector) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(QestError::NotNormalized { norm });
        }
        Self::new(v.unscale(norm))
    }

    pub fn basis(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(QestError::param("basis", format!("index {k} out of range for d={d}")));
        }
        let mut v = ComplexVector::zeros(d);
        v[k] = c(1.0, 0.0);
        Self::new(v)
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        check_same_dim(obs.dim(), self.dim())?;
        let qv = obs.matrix() * &self.amplitudes;
        Ok(self.amplitudes.dotc(&qv).re)
    }
}

/// `tr[obs · state]`, rejecting a non-negligible imaginary part.
pub fn expectation(obs: &Observable, state: &DensityMatrix) -> Result<f64> {
    check_same_dim(obs.dim(), state.dim())?;
    let t = trace_product(obs.matrix(), state.matrix());
    if t.im.abs() > IMAG_TOL {
        return Err(QestError::ComplexExpectation { imag: t.im });
    }
    Ok(t.re)
}

/// Commutator and anticommutator `(ab - ba, ab + ba)`.
pub fn brackets(a: &Observable, b: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    check_same_dim(a.dim(), b.nrows())?;
    check_same_dim(a.dim(), b.ncols())?;
    let ab = a.matrix() * b;
    let ba = b * a.matrix();
    Ok((&ab - &ba, ab + ba))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub purity_true: f64,
    pub purity_est: f64,
    /// Hilbert-Schmidt overlap `tr[ρ ρᵉ]`.
    pub fidelity: f64,
    /// Frobenius norm of `ρ - ρᵉ`.
    pub hs_distance: f64,
}

pub fn state_metrics(rho: &DensityMatrix, rho_e: &DensityMatrix) -> Result<StateMetrics> {
    check_same_dim(rho.dim(), rho_e.dim())?;
    Ok(metrics_unchecked(rho.matrix(), rho_e.matrix()))
}

pub(crate) fn metrics_unchecked(rho: &ComplexMatrix, rho_e: &ComplexMatrix) -> StateMetrics {
    StateMetrics {
        purity_true: trace_product(rho, rho).re,
        purity_est: trace_product(rho_e, rho_e).re,
        fidelity: trace_product(rho, rho_e).re,
        hs_distance: frobenius(&(rho - rho_e)),
    }
}

/// Hermitian PSD square root; eigenvalues in `[-tol_pos, 0)` are clamped to zero.
pub fn psd_sqrt(rho: &DensityMatrix) -> Result<ComplexMatrix> {
    psd_sqrt_with(rho.matrix(), Tolerances::default().pos)
}

pub fn psd_sqrt_with(m: &ComplexMatrix, tol_pos: f64) -> Result<ComplexMatrix> {
    let spec = eigh(m);
    if spec.values[0] < -tol_pos {
        return Err(QestError::NotPositive { min_eigenvalue: spec.values[0] });
    }
    // Eigenvalues at roundoff level are zero; their square roots (about 1e-8)
    // would otherwise dominate the error of the root.
    let floor = 16.0 * f64::EPSILON * spec.spectral_radius().max(1.0);
    Ok(hermitize(&spec.apply(|v| c(if v <= floor { 0.0 } else { v.sqrt() }, 0.0))))
}

/// `(m + m†) / (2 Re tr m)`.
pub fn normalize(m: &ComplexMatrix) -> Result<DensityMatrix> {
    check_operator(m)?;
    let tr = real_trace(m);
    if !(tr > 1e-12) {
        return Err(QestError::DegenerateTrace { trace: tr });
    }
    let n = m.nrows();
    let scale = 0.5 / tr;
    let mut out = ComplexMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * scale);
    // Pin the diagonal sum to exactly one; the off-diagonal part is already Hermitian.
    let diag_sum: f64 = (0..n).map(|i| out[(i, i)].re).sum();
    let fix = (1.0 - diag_sum) / n as f64;
    if fix != 0.0 {
        for i in 0..n {
            out[(i, i)] = c(out[(i, i)].re + fix, 0.0);
        }
    } else {
        for i in 0..n {
            out[(i, i)].im = 0.0;
        }
    }
    Ok(DensityMatrix { matrix: out })
}

/// `e^{-iHt}` from the eigendecomposition of `H`.
pub fn propagator(h: &Observable, t: f64) -> ComplexMatrix {
    if h.is_zero() || t == 0.0 {
        return ComplexMatrix::identity(h.dim(), h.dim());
    }
    h.spectrum().apply(|e| C64::from_polar(1.0, -e * t))
}

/// Heisenberg-picture observable `e^{iHt} q e^{-iHt}`.
pub fn heisenberg_observable(q: &Observable, h: &Observable, t: f64) -> Result<Observable> {
    check_same_dim(q.dim(), h.dim())?;
    let u = propagator(h, t);
    let qt = u.adjoint() * q.matrix() * u;
    Ok(Observable { matrix: hermitize(&qt) })
}

/// Haar-random pure state from a complex Gaussian vector.
pub fn random_pure_state(d: usize, noise: &mut NoiseStream) -> Result<PureState> {
    let v = ComplexVector::from_fn(d, |_, _| c(noise.standard_normal(), noise.standard_normal()));
    PureState::normalized(v)
}

/// Full-rank random mixed state `G G† / tr` with Ginibre `G`.
pub fn random_density_matrix(d: usize, noise: &mut NoiseStream) -> Result<DensityMatrix> {
    let g = ComplexMatrix::from_fn(d, d, |_, _| c(noise.standard_normal(), noise.standard_normal()));
    normalize(&(&g * g.adjoint()))
}

/// Random Hermitian matrix with independent Gaussian entries.
pub fn random_observable(d: usize, noise: &mut NoiseStream) -> Observable {
    let g = ComplexMatrix::from_fn(d, d, |_, _| c(noise.standard_normal(), noise.standard_normal()));
    Observable { matrix: hermitize(&g) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        frobenius(&(a - b)) <= tol
    }

    #[test]
    fn expectation_examples() {
        let z = Observable::pauli_z();
        let x = Observable::pauli_x();
        assert_eq!(expectation(&z, &DensityMatrix::basis(2, 0).unwrap()).unwrap(), 1.0);
        assert_eq!(expectation(&z, &DensityMatrix::maximally_mixed(2)).unwrap(), 0.0);
        let r = DensityMatrix::from_bloch(0.6, 0.0, 0.0).unwrap();
        assert!((expectation(&x, &r).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn expectation_errors() {
        let z = Observable::pauli_z();
        let r3 = DensityMatrix::maximally_mixed(3);
        assert!(matches!(expectation(&z, &r3), Err(QestError::DimensionMismatch { .. })));
        // A corrupted "state" carrying an anti-Hermitian part.
        let bad = DensityMatrix::from_matrix_unchecked(ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.5, 0.0), c(0.0, 0.0), c(0.1, 0.0), c(0.5, 0.0)],
        ));
        let y = Observable::pauli_y();
        assert!(matches!(expectation(&y, &bad), Err(QestError::ComplexExpectation { .. })));
    }

    #[test]
    fn bracket_examples() {
        let (comm, _) = brackets(&Observable::pauli_x(), Observable::pauli_y().matrix()).unwrap();
        let expect = Observable::pauli_z().matrix() * c(0.0, 2.0);
        assert!(close(&comm, &expect, 0.0));

        let (comm, anti) = brackets(&Observable::pauli_x(), Observable::pauli_x().matrix()).unwrap();
        assert!(close(&comm, &ComplexMatrix::zeros(2, 2), 0.0));
        assert!(close(&anti, &(ComplexMatrix::identity(2, 2) * c(2.0, 0.0)), 0.0));

        let z = Observable::pauli_z();
        let rho = DensityMatrix::from_bloch(1.0, 0.0, 0.0).unwrap();
        let (inner, _) = brackets(&z, rho.matrix()).unwrap();
        let (outer, _) = brackets(&z, &inner).unwrap();
        let expect = Observable::pauli_x().matrix() * c(2.0, 0.0);
        assert!(close(&outer, &expect, 1e-15));

        assert!(brackets(&z, &ComplexMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn metric_examples() {
        let p0 = DensityMatrix::basis(2, 0).unwrap();
        let p1 = DensityMatrix::basis(2, 1).unwrap();
        let m = state_metrics(&p0, &p0).unwrap();
        assert_eq!((m.fidelity, m.hs_distance), (1.0, 0.0));
        let m = state_metrics(&p0, &p1).unwrap();
        assert_eq!(m.fidelity, 0.0);
        assert!((m.hs_distance - 2f64.sqrt()).abs() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(2);
        let m = state_metrics(&mixed, &p0).unwrap();
        assert_eq!(m.purity_true, 0.5);
        assert_eq!(m.fidelity, 0.5);
        assert!((m.hs_distance - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sqrt_examples() {
        let s = psd_sqrt(&DensityMatrix::maximally_mixed(2)).unwrap();
        assert!(close(&s, &(ComplexMatrix::identity(2, 2) * c(0.5f64.sqrt(), 0.0)), 1e-14));
        let p = DensityMatrix::from_bloch(0.6, 0.8, 0.0).unwrap();
        assert!(close(&psd_sqrt(&p).unwrap(), p.matrix(), 1e-12));
        let d = DensityMatrix::new(ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![
            c(0.75, 0.0),
            c(0.25, 0.0),
        ])))
        .unwrap();
        let s = psd_sqrt(&d).unwrap();
        assert!((s[(0, 0)].re - 0.75f64.sqrt()).abs() < 1e-14);
        assert!((s[(1, 1)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sqrt_rejects_negative() {
        let m = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(1.1, 0.0), c(-0.1, 0.0)]));
        assert!(matches!(psd_sqrt_with(&m, 1e-8), Err(QestError::NotPositive { .. })));
        let m = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(1.0 + 1e-9, 0.0), c(-1e-9, 0.0)]));
        let s = psd_sqrt_with(&m, 1e-8).unwrap();
        assert_eq!(s[(1, 1)].re, 0.0);
    }

    #[test]
    fn normalize_examples() {
        let r = DensityMatrix::from_bloch(0.3, -0.2, 0.5).unwrap();
        let n = normalize(r.matrix()).unwrap();
        assert!(close(n.matrix(), r.matrix(), 1e-15));

        let two = DensityMatrix::basis(2, 0).unwrap().matrix() * c(2.0, 0.0);
        assert!(close(normalize(&two).unwrap().matrix(), DensityMatrix::basis(2, 0).unwrap().matrix(), 0.0));

        let mut pert = r.matrix().clone();
        pert[(0, 1)] += c(1e-12, 0.0);
        pert[(1, 0)] -= c(1e-12, 0.0);
        let n = normalize(&pert).unwrap();
        assert_eq!(hermiticity_deviation(n.matrix()), 0.0);

        assert!(matches!(normalize(&ComplexMatrix::zeros(2, 2)), Err(QestError::DegenerateTrace { .. })));
    }

    #[test]
    fn heisenberg_examples() {
        let z = Observable::pauli_z();
        let h = Observable::pauli_x().scaled(0.5);
        let qt = heisenberg_observable(&z, &h, std::f64::consts::PI).unwrap();
        assert!(close(qt.matrix(), &(z.matrix() * c(-1.0, 0.0)), 1e-14));
        assert!(close(heisenberg_observable(&z, &h, 0.0).unwrap().matrix(), z.matrix(), 0.0));
        let hz = Observable::pauli_z().scaled(0.7);
        for t in [0.3, 1.0, 17.0] {
            assert!(close(heisenberg_observable(&z, &hz, t).unwrap().matrix(), z.matrix(), 1e-14));
        }
    }

    #[test]
    fn density_validation() {
        let nonherm = ComplexMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0.1, 0.), c(0.0, 0.), c(0.5, 0.)]);
        assert!(matches!(DensityMatrix::new(nonherm), Err(QestError::NotHermitian { .. })));
        let tr2 = ComplexMatrix::identity(2, 2);
        assert!(matches!(DensityMatrix::new(tr2), Err(QestError::TraceNotUnit { .. })));
        let neg = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(1.5, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(DensityMatrix::new(neg), Err(QestError::NotPositive { .. })));
        assert!(DensityMatrix::new(ComplexMatrix::identity(1, 1)).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::identity(65, 65) / c(65.0, 0.0)).is_err());
    }

    #[test]
    fn min_eigenvalue_closed_form_matches_eigh() {
        let mut noise = NoiseStream::new(7, 0);
        for _ in 0..50 {
            let o = random_observable(2, &mut noise);
            let a = min_eigenvalue(o.matrix());
            let b = eigh(o.matrix()).values[0];
            assert!((a - b).abs() < 1e-12);
        }
    }
}
