//! Two-qubit state algebra over the spin-orbit basis.
//!
//! Basis order is `Hh, Hv, Vh, Vv` (index `2a + b`): qubit A is polarization
//! (`H = 0`, `V = 1`) and qubit B is the first-order transverse mode
//! (`h = 0`, `v = 1`). Pauli index 3 is diagonal in `{H, V}` / `{h, v}` with
//! `+1` on `H`, `h`; index 1 has `+1` on the diagonal state `D`, `d`; index 2
//! has `+1` on the circular state `R = (H + iV)/√2`, `r`.
//!
//! All entropies are in bits.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues in `[-EIGEN_SLACK, 0)` are roundoff and read as zero.
pub const EIGEN_SLACK: f64 = 1e-8;
pub const PURE_NORM_TOL: f64 = 1e-6;

/// Eigenvalues below this are dropped when forming matrix square roots.
const SQRT_FLOOR: f64 = 1e-14;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Single-qubit Pauli matrix, `0` being the identity.
pub fn pauli(index: usize) -> Mat2 {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match index {
        0 => Mat2::new(o, z, z, o),
        1 => Mat2::new(z, o, o, z),
        2 => Mat2::new(z, -i, i, z),
        3 => Mat2::new(o, z, z, -o),
        _ => panic!("pauli index {index} out of range"),
    }
}

/// Kronecker product `a ⊗ b` with `a` acting on polarization.
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

pub(crate) fn max_abs(m: &Mat4) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

fn hermitian_defect(m: &Mat4) -> f64 {
    max_abs(&(m - m.adjoint()))
}

fn symmetrize(m: &Mat4) -> Mat4 {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Ascending eigenvalues of a Hermitian 4×4 matrix.
pub(crate) fn hermitian_eigenvalues(m: &Mat4) -> [f64; 4] {
    let ev = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// Eigenvalues of a 2×2 Hermitian matrix, larger first.
pub(crate) fn hermitian_eigenvalues2(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let big = mean + radius;
    // det / big keeps relative accuracy on the small root
    let small = if big > 0.0 {
        (a * d - b.norm_sqr()) / big
    } else {
        mean - radius
    };
    [big, small]
}

fn matrix_function(m: &Mat4, f: impl Fn(f64) -> f64) -> Mat4 {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut out = Mat4::zeros();
    for k in 0..4 {
        let fk = f(eig.eigenvalues[k]);
        if fk == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()) * c(fk, 0.0);
    }
    out
}

/// Shannon entropy (bits) of a spectrum.
///
/// Values in `[-EIGEN_SLACK, 0)` count as zero; anything more negative is an
/// [`Error::InvalidState`].
pub fn entropy_of_spectrum(eigenvalues: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &lambda in eigenvalues {
        if lambda < -EIGEN_SLACK {
            return Err(Error::InvalidState { eigenvalue: lambda });
        }
        if lambda > 0.0 {
            s -= lambda * lambda.log2();
        }
    }
    Ok(s.max(0.0))
}

/// Which qubit a reduction keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    /// Polarization.
    A,
    /// Transverse mode.
    B,
}

/// Normalized two-qubit amplitude vector `(a_Hh, a_Hv, a_Vh, a_Vv)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 4]", into = "[[f64; 2]; 4]")]
pub struct PureState {
    amps: [C64; 4],
}

impl PureState {
    /// Validates normalization (within `PURE_NORM_TOL`) and renormalizes
    /// exactly.
    pub fn new(amps: [C64; 4]) -> Result<Self> {
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !norm_sqr.is_finite() || (norm_sqr.sqrt() - 1.0).abs() > PURE_NORM_TOL {
            return validation(format!(
                "pure state norm {} deviates from 1",
                norm_sqr.sqrt()
            ));
        }
        Ok(Self::scaled(amps, norm_sqr))
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(amps: [C64; 4]) -> Result<Self> {
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !(norm_sqr.is_finite() && norm_sqr > 0.0) {
            return validation("cannot normalize a zero or non-finite vector");
        }
        Ok(Self::scaled(amps, norm_sqr))
    }

    fn scaled(amps: [C64; 4], norm_sqr: f64) -> Self {
        let inv = 1.0 / norm_sqr.sqrt();
        Self {
            amps: amps.map(|a| a * inv),
        }
    }

    /// Computational basis vector; `index` follows `Hh, Hv, Vh, Vv`.
    pub fn basis(index: usize) -> Self {
        assert!(index < 4, "basis index {index} out of range");
        let mut amps = [C64::new(0.0, 0.0); 4];
        amps[index] = C64::new(1.0, 0.0);
        Self { amps }
    }

    /// Product `pol ⊗ mode` of two (not necessarily normalized) qubit vectors.
    pub fn product(pol: [C64; 2], mode: [C64; 2]) -> Result<Self> {
        Self::normalized([
            pol[0] * mode[0],
            pol[0] * mode[1],
            pol[1] * mode[0],
            pol[1] * mode[1],
        ])
    }

    /// Haar-random pure state.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let amps: [C64; 4] =
                std::array::from_fn(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            if let Ok(s) = Self::normalized(amps) {
                return s;
            }
        }
    }

    pub fn amplitudes(&self) -> &[C64; 4] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn vector(&self) -> nalgebra::Vector4<C64> {
        nalgebra::Vector4::from_column_slice(&self.amps)
    }
}

impl TryFrom<[[f64; 2]; 4]> for PureState {
    type Error = Error;

    fn try_from(v: [[f64; 2]; 4]) -> Result<Self> {
        Self::new(v.map(|[re, im]| c(re, im)))
    }
}

impl From<PureState> for [[f64; 2]; 4] {
    fn from(s: PureState) -> Self {
        s.amps.map(|a| [a.re, a.im])
    }
}

/// Row-major 4×4 grid of `[re, im]` pairs, the JSON form of a density matrix.
pub type ComplexGrid = [[[f64; 2]; 4]; 4];

pub(crate) fn grid_from_matrix(m: &Mat4) -> ComplexGrid {
    std::array::from_fn(|r| std::array::from_fn(|col| [m[(r, col)].re, m[(r, col)].im]))
}

pub(crate) fn matrix_from_grid(g: &ComplexGrid) -> Mat4 {
    Mat4::from_fn(|r, col| c(g[r][col][0], g[r][col][1]))
}

/// A valid two-qubit density operator: Hermitian, unit trace and PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexGrid", into = "ComplexGrid")]
pub struct DensityOperator {
    m: Mat4,
}

impl DensityOperator {
    pub fn new(m: Mat4) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return validation("density matrix has non-finite entries");
        }
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL {
            return validation(format!("matrix is not Hermitian (defect {defect:.3e})"));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return validation(format!("trace {tr} differs from 1"));
        }
        let min = hermitian_eigenvalues(&m)[0];
        if min < -EIGEN_SLACK {
            return Err(Error::InvalidState { eigenvalue: min });
        }
        Ok(Self { m })
    }

    /// Trusted constructor for matrices that are valid by construction.
    pub(crate) fn from_matrix_unchecked(m: Mat4) -> Self {
        debug_assert!(hermitian_defect(&m) < 1e-8);
        Self { m }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let v = psi.vector();
        Self::from_matrix_unchecked(v * v.adjoint())
    }

    pub fn maximally_mixed() -> Self {
        Self::from_matrix_unchecked(Mat4::identity() * c(0.25, 0.0))
    }

    /// Diagonal state; `diag` must be a probability vector.
    pub fn diagonal(diag: [f64; 4]) -> Result<Self> {
        Self::new(Mat4::from_diagonal(&nalgebra::Vector4::from_fn(|k, _| {
            c(diag[k], 0.0)
        })))
    }

    /// Product `ρ_A ⊗ ρ_B`.
    pub fn product(a: &QubitState, b: &QubitState) -> Self {
        Self::from_matrix_unchecked(kron(a.matrix(), b.matrix()))
    }

    /// Hilbert–Schmidt random mixed state (full rank almost surely).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let g = Mat4::from_fn(|_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let m = g * g.adjoint();
        let tr = m.trace().re;
        Self::from_matrix_unchecked(symmetrize(&(m / c(tr, 0.0))))
    }

    /// Convex combination `Σ w_k ρ_k / Σ w_k`.
    pub fn mixture<'a>(
        parts: impl IntoIterator<Item = (f64, &'a DensityOperator)>,
    ) -> Result<Self> {
        let mut total = 0.0;
        let mut m = Mat4::zeros();
        for (w, rho) in parts {
            if !(w.is_finite() && w >= 0.0) {
                return validation(format!("mixture weight {w} must be nonnegative"));
            }
            total += w;
            m += rho.m * c(w, 0.0);
        }
        if total <= 0.0 {
            return validation("mixture weights are all zero");
        }
        Ok(Self::from_matrix_unchecked(m / c(total, 0.0)))
    }

    /// `U ρ U†` for a unitary `U`.
    pub fn transformed(&self, u: &Mat4) -> Self {
        Self::from_matrix_unchecked(symmetrize(&(u * self.m * u.adjoint())))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues(&self.m)
    }

    pub fn purity(&self) -> f64 {
        (self.m * self.m).trace().re
    }

    pub fn entropy(&self) -> Result<f64> {
        entropy_of_spectrum(&self.eigenvalues())
    }

    pub fn reduce(&self, keep: Subsystem) -> QubitState {
        partial_trace(self, keep)
    }

    pub fn stokes(&self) -> StokesTensor {
        pauli_expand(self)
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &DensityOperator) -> f64 {
        max_abs(&(self.m - other.m))
    }
}

impl TryFrom<ComplexGrid> for DensityOperator {
    type Error = Error;

    fn try_from(g: ComplexGrid) -> Result<Self> {
        Self::new(matrix_from_grid(&g))
    }
}

impl From<DensityOperator> for ComplexGrid {
    fn from(rho: DensityOperator) -> Self {
        grid_from_matrix(&rho.m)
    }
}

/// Single-qubit density operator produced by reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitState {
    m: Mat2,
}

impl QubitState {
    pub fn new(m: Mat2) -> Result<Self> {
        let defect = (m - m.adjoint())
            .iter()
            .fold(0.0_f64, |a, z| a.max(z.norm()));
        if defect > HERMITIAN_TOL {
            return validation("qubit matrix is not Hermitian");
        }
        if (m.trace().re - 1.0).abs() > TRACE_TOL {
            return validation("qubit trace differs from 1");
        }
        let q = Self { m };
        let [_, small] = q.eigenvalues();
        if small < -EIGEN_SLACK {
            return Err(Error::InvalidState { eigenvalue: small });
        }
        Ok(q)
    }

    /// Bloch-vector parametrization `(I + r·σ)/2`, `|r| ≤ 1`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let m = (pauli(0)
            + pauli(1) * c(r[0], 0.0)
            + pauli(2) * c(r[1], 0.0)
            + pauli(3) * c(r[2], 0.0))
            * c(0.5, 0.0);
        Self::new(m)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    /// Eigenvalues, larger first.
    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues2(&self.m)
    }

    pub fn entropy(&self) -> Result<f64> {
        entropy_of_spectrum(&self.eigenvalues())
    }
}

/// 4×4 real Stokes tensor `s[i][j] = Tr[ρ (σ_i ⊗ σ_j)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StokesTensor {
    pub s: [[f64; 4]; 4],
}

impl StokesTensor {
    pub fn identity_only() -> Self {
        let mut s = [[0.0; 4]; 4];
        s[0][0] = 1.0;
        Self { s }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i][j]
    }
}

/// Hermitian unit-trace matrix that may fail positivity, e.g. a linear
/// tomographic inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexGrid", into = "ComplexGrid")]
pub struct RawDensity {
    m: Mat4,
}

impl RawDensity {
    pub fn new(m: Mat4) -> Result<Self> {
        if hermitian_defect(&m) > 1e-8 {
            return validation("raw density matrix is not Hermitian");
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return validation(format!("raw density trace {tr} differs from 1"));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues(&self.m)
    }

    /// Validates as a physical state without projecting.
    pub fn to_density(&self) -> Result<DensityOperator> {
        DensityOperator::new(self.m)
    }
}

impl TryFrom<ComplexGrid> for RawDensity {
    type Error = Error;

    fn try_from(g: ComplexGrid) -> Result<Self> {
        Self::new(matrix_from_grid(&g))
    }
}

impl From<RawDensity> for ComplexGrid {
    fn from(r: RawDensity) -> Self {
        grid_from_matrix(&r.m)
    }
}

impl From<DensityOperator> for RawDensity {
    fn from(rho: DensityOperator) -> Self {
        Self { m: rho.m }
    }
}

/// `|ψ⟩⟨ψ|` from raw amplitudes, rejecting vectors whose norm is off by more
/// than `PURE_NORM_TOL`.
pub fn density_from_pure(amps: [C64; 4]) -> Result<DensityOperator> {
    Ok(DensityOperator::from_pure(&PureState::new(amps)?))
}

pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    rho.entropy()
}

pub fn partial_trace(rho: &DensityOperator, keep: Subsystem) -> QubitState {
    let m = rho.matrix();
    let reduced = Mat2::from_fn(|r, col| match keep {
        Subsystem::A => m[(2 * r, 2 * col)] + m[(2 * r + 1, 2 * col + 1)],
        Subsystem::B => m[(r, col)] + m[(2 + r, 2 + col)],
    });
    QubitState { m: reduced }
}

/// Uhlmann fidelity `[Tr √(√ρ σ √ρ)]²`.
///
/// Evaluated as the squared trace norm of `√ρ √σ`, whose singular values
/// equal the eigenvalue square roots of `√ρ σ √ρ` but stay accurate on
/// rank-deficient inputs.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> f64 {
    let root = |m: &Mat4| matrix_function(m, |x| if x > SQRT_FLOOR { x.sqrt() } else { 0.0 });
    let product = root(rho.matrix()) * root(sigma.matrix());
    let trace_norm: f64 = product.singular_values().iter().sum();
    (trace_norm * trace_norm).clamp(0.0, 1.0)
}

pub fn pauli_expand(rho: &DensityOperator) -> StokesTensor {
    let mut s = [[0.0; 4]; 4];
    for (i, row) in s.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (rho.matrix() * kron(&pauli(i), &pauli(j))).trace().re;
        }
    }
    s[0][0] = 1.0;
    StokesTensor { s }
}

/// `(1/4) Σ s[i][j] σ_i ⊗ σ_j`; positivity is not guaranteed.
pub fn pauli_assemble(stokes: &StokesTensor) -> RawDensity {
    let mut m = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            if stokes.s[i][j] != 0.0 {
                m += kron(&pauli(i), &pauli(j)) * c(stokes.s[i][j], 0.0);
            }
        }
    }
    RawDensity {
        m: symmetrize(&(m * c(0.25, 0.0))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn phi_plus() -> PureState {
        PureState::new([c(S, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(S, 0.0)]).unwrap()
    }

    #[test]
    fn density_of_basis_and_bell_states() {
        let hh = DensityOperator::from_pure(&PureState::basis(0));
        let expect = DensityOperator::diagonal([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(hh.max_abs_diff(&expect), 0.0);

        let bell = DensityOperator::from_pure(&phi_plus());
        for r in 0..4 {
            for col in 0..4 {
                let v = if [0, 3].contains(&r) && [0, 3].contains(&col) {
                    0.5
                } else {
                    0.0
                };
                assert_abs_diff_eq!(bell.get(r, col).re, v, epsilon = 1e-15);
                assert_abs_diff_eq!(bell.get(r, col).im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let amps = [c(1.0, 0.0), c(0.01, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert!(matches!(density_from_pure(amps), Err(Error::Validation(_))));
        // within tolerance is accepted and renormalized
        let amps = [c(1.0 + 1e-8, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let psi = PureState::new(amps).unwrap();
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn random_pure_states_have_unit_purity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let rho = DensityOperator::from_pure(&PureState::random(&mut rng));
            assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn entropy_examples() {
        let pure = DensityOperator::from_pure(&phi_plus());
        assert_abs_diff_eq!(pure.entropy().unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            DensityOperator::maximally_mixed().entropy().unwrap(),
            2.0,
            epsilon = 1e-12
        );
        let half = DensityOperator::diagonal([0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(half.entropy().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_rejects_negative_spectrum() {
        assert!(entropy_of_spectrum(&[1.0, -5e-9]).is_ok());
        assert!(matches!(
            entropy_of_spectrum(&[1.1, -1e-3]),
            Err(Error::InvalidState { .. })
        ));
    }

    #[test]
    fn density_validation() {
        let mut m = Mat4::identity() * c(0.25, 0.0);
        m[(0, 1)] = c(0.1, 0.0);
        assert!(DensityOperator::new(m).is_err());
        let m = Mat4::identity() * c(0.3, 0.0);
        assert!(DensityOperator::new(m).is_err());
        assert!(matches!(
            DensityOperator::diagonal([1.2, -0.2, 0.0, 0.0]),
            Err(Error::InvalidState { .. })
        ));
    }

    #[test]
    fn partial_trace_examples() {
        let bell = DensityOperator::from_pure(&phi_plus());
        let a = bell.reduce(Subsystem::A);
        assert_abs_diff_eq!(a.matrix()[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a.matrix()[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-15);

        let hh = DensityOperator::diagonal([1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = hh.reduce(Subsystem::B);
        assert_eq!(b.matrix()[(0, 0)].re, 1.0);
        assert_eq!(b.matrix()[(1, 1)].re, 0.0);
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = DensityOperator::random(&mut rng);
        assert_abs_diff_eq!(fidelity(&rho, &rho), 1.0, epsilon = 1e-9);

        let hh = DensityOperator::from_pure(&PureState::basis(0));
        let vv = DensityOperator::from_pure(&PureState::basis(3));
        assert_abs_diff_eq!(fidelity(&hh, &vv), 0.0, epsilon = 1e-12);

        // pure target: F = <psi|sigma|psi> = 0.9 + 0.1/4
        let bell = DensityOperator::from_pure(&phi_plus());
        let noisy =
            DensityOperator::mixture([(0.9, &bell), (0.1, &DensityOperator::maximally_mixed())])
                .unwrap();
        assert_abs_diff_eq!(fidelity(&bell, &noisy), 0.925, epsilon = 1e-9);
        assert_abs_diff_eq!(fidelity(&noisy, &bell), 0.925, epsilon = 1e-9);
    }

    #[test]
    fn stokes_examples() {
        let s = pauli_expand(&DensityOperator::maximally_mixed());
        assert_eq!(s, StokesTensor::identity_only());

        let hh = pauli_expand(&DensityOperator::from_pure(&PureState::basis(0)));
        for i in 0..4 {
            for j in 0..4 {
                let v = if [0, 3].contains(&i) && [0, 3].contains(&j) {
                    1.0
                } else {
                    0.0
                };
                assert_abs_diff_eq!(hh.s[i][j], v, epsilon = 1e-15);
            }
        }

        let bell = pauli_expand(&DensityOperator::from_pure(&phi_plus()));
        let mut expect = [[0.0; 4]; 4];
        expect[0][0] = 1.0;
        expect[1][1] = 1.0;
        expect[2][2] = -1.0;
        expect[3][3] = 1.0;
        for (row, want) in bell.s.iter().zip(expect) {
            for (got, want) in row.iter().zip(want) {
                assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn assemble_examples() {
        let mm = pauli_assemble(&StokesTensor::identity_only());
        assert_abs_diff_eq!(
            max_abs(&(mm.matrix() - DensityOperator::maximally_mixed().matrix())),
            0.0,
            epsilon = 1e-16
        );

        let mut bad = StokesTensor::identity_only();
        bad.s[3][3] = 1.5;
        let raw = pauli_assemble(&bad);
        assert!(hermitian_defect(raw.matrix()) < 1e-15);
        assert_abs_diff_eq!(raw.matrix().trace().re, 1.0, epsilon = 1e-15);
        // diag(2.5, -0.5, -0.5, 2.5)/4
        let ev = raw.eigenvalues();
        assert_abs_diff_eq!(ev[0], -0.125, epsilon = 1e-14);
        assert!(raw.to_density().is_err());
    }

    #[test]
    fn json_layout() {
        let rho = DensityOperator::from_pure(&PureState::basis(1));
        let v = serde_json::to_value(&rho).unwrap();
        assert_eq!(v[1][1], serde_json::json!([1.0, 0.0]));
        assert_eq!(v[0][0], serde_json::json!([0.0, 0.0]));
        let back: DensityOperator = serde_json::from_value(v).unwrap();
        assert_eq!(back, rho);
        let s = serde_json::to_value(pauli_expand(&rho)).unwrap();
        assert_eq!(s[3][3], serde_json::json!(-1.0));
    }

    fn random_state() -> impl Strategy<Value = DensityOperator> {
        any::<u64>().prop_map(|seed| DensityOperator::random(&mut ChaCha8Rng::seed_from_u64(seed)))
    }

    fn random_qubit() -> impl Strategy<Value = QubitState> {
        (
            0.0..1.0f64,
            0.0..std::f64::consts::PI,
            0.0..std::f64::consts::TAU,
        )
            .prop_map(|(r, t, p)| {
                QubitState::from_bloch([r * t.sin() * p.cos(), r * t.sin() * p.sin(), r * t.cos()])
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn outputs_satisfy_invariants(rho in random_state()) {
            prop_assert!(DensityOperator::new(*rho.matrix()).is_ok());
            let a = rho.reduce(Subsystem::A);
            prop_assert!((a.matrix().trace().re - 1.0).abs() < 1e-12);
            prop_assert!(QubitState::new(*a.matrix()).is_ok());
            let s = rho.entropy().unwrap();
            prop_assert!((0.0..=2.0).contains(&s));
        }

        #[test]
        fn entropy_is_additive(a in random_qubit(), b in random_qubit()) {
            let joint = DensityOperator::product(&a, &b).entropy().unwrap();
            let sum = a.entropy().unwrap() + b.entropy().unwrap();
            prop_assert!((joint - sum).abs() < 1e-9);
        }

        #[test]
        fn fidelity_is_symmetric(rho in random_state(), sigma in random_state()) {
            let f = fidelity(&rho, &sigma);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!((f - fidelity(&sigma, &rho)).abs() < 1e-9);
        }

        #[test]
        fn pauli_round_trip(rho in random_state()) {
            let back = pauli_assemble(&pauli_expand(&rho));
            prop_assert!(max_abs(&(back.matrix() - rho.matrix())) < 1e-12);
            let s = pauli_expand(&rho);
            prop_assert_eq!(s.s[0][0], 1.0);
            prop_assert!(s.s.iter().flatten().all(|v| v.abs() <= 1.0 + 1e-8));
        }
    }

    #[test]
    fn pauli_round_trip_hundred_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for k in 0..100 {
            let rho = if k % 2 == 0 {
                DensityOperator::random(&mut rng)
            } else {
                DensityOperator::from_pure(&PureState::random(&mut rng))
            };
            let back = pauli_assemble(&pauli_expand(&rho));
            assert!(max_abs(&(back.matrix() - rho.matrix())) < 1e-12);
        }
    }
}
