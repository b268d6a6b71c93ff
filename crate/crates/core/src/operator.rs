//! Dense operators and superoperators.
//!
//! Operators are `d x d` complex matrices. Superoperators act on operators
//! through column-stacking vectorization: entry `(i, j)` of an operator lives
//! at index `i + d * j` of its vector. Under this convention
//!
//! ```text
//! vec(L X R) = (R^T ⊗ L) vec(X)
//! ```
//!
//! and every superoperator constructor in this crate is built from that
//! identity.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::expm;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Tolerance used when validating Hamiltonians and observables.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Relative tolerance separating zero modes from the rest of a spectrum.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// A square complex matrix: density matrices, observables, jump operators.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: CMatrix,
}

impl Operator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        check_finite(&m)?;
        Ok(Self { m })
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self { m }
    }

    pub fn from_fn(d: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::from_matrix_unchecked(CMatrix::from_fn(d, d, f))
    }

    /// Builds an operator from row-major `(re, im)` pairs.
    pub fn from_rows(rows: &[Vec<(f64, f64)>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            if r.len() != d {
                return Err(Error::NotSquare {
                    rows: d,
                    cols: r.len(),
                });
            }
        }
        Self::new(CMatrix::from_fn(d, d, |i, j| {
            let (re, im) = rows[i][j];
            C64::new(re, im)
        }))
    }

    pub fn zeros(d: usize) -> Self {
        Self::from_matrix_unchecked(CMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self::from_matrix_unchecked(CMatrix::identity(d, d))
    }

    /// `|i><j|` in dimension `d`.
    pub fn ket_bra(i: usize, j: usize, d: usize) -> Self {
        let mut m = CMatrix::zeros(d, d);
        m[(i, j)] = C64::new(1.0, 0.0);
        Self::from_matrix_unchecked(m)
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Self::from_fn(d, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Ginibre-distributed random density matrix of full rank.
    pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let g = Self::random(d, rng);
        let m = &g.m * g.m.adjoint();
        let tr = m.trace();
        Self::from_matrix_unchecked(m / tr)
    }

    /// Random pure state `|psi><psi|`.
    pub fn random_pure<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let v = CVector::from_fn(d, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let v = &v / C64::new(v.norm(), 0.0);
        Self::from_matrix_unchecked(&v * v.adjoint())
    }

    /// Matrix with independent standard complex Gaussian entries.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        Self::from_fn(d, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn dagger(&self) -> Self {
        Self::from_matrix_unchecked(self.m.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn kron(&self, other: &Operator) -> Self {
        Self::from_matrix_unchecked(self.m.kronecker(&other.m))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_matrix_unchecked(&self.m * c)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// `(X + X^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_matrix_unchecked((&self.m + self.m.adjoint()) * C64::new(0.5, 0.0))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.m)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        max_abs(&(&self.m - &other.m))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// Sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        self.m.clone().singular_values().iter().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.m - self.m.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Hermitian, unit trace and positive semidefinite, each within `tol`.
    pub fn is_density_matrix(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return false;
        }
        self.hermitian_eigenvalues().iter().all(|&l| l >= -tol)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .hermitian_part()
            .m
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Eigen-decomposition of the Hermitian part: `(eigenvalues, eigenvectors)`
    /// with eigenvectors as columns.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, CMatrix) {
        let eig = self.hermitian_part().m.symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }

    /// Expectation value `tr(self * rho)`.
    pub fn expectation(&self, rho: &Operator) -> C64 {
        (&self.m * &rho.m).trace()
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m + &rhs.m)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m - &rhs.m)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m * &rhs.m)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator::from_matrix_unchecked(-&self.m)
    }
}

/// Column-stacking vectorization.
pub fn vectorize(x: &Operator) -> CVector {
    CVector::from_column_slice(x.m.as_slice())
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &CVector, d: usize) -> Result<Operator> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: v.len(),
        });
    }
    Ok(Operator::from_matrix_unchecked(CMatrix::from_column_slice(
        d,
        d,
        v.as_slice(),
    )))
}

/// Position of operator entry `(i, j)` inside its vectorization.
pub fn vec_index(i: usize, j: usize, d: usize) -> usize {
    i + d * j
}

/// Linear map on `d x d` operators stored as a `d^2 x d^2` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator {
    d: usize,
    m: CMatrix,
}

impl SuperOperator {
    pub fn new(d: usize, m: CMatrix) -> Result<Self> {
        if m.nrows() != d * d || m.ncols() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: m.nrows().max(m.ncols()),
            });
        }
        check_finite(&m)?;
        Ok(Self { d, m })
    }

    pub(crate) fn from_matrix_unchecked(d: usize, m: CMatrix) -> Self {
        debug_assert_eq!(m.nrows(), d * d);
        Self { d, m }
    }

    pub fn identity(d: usize) -> Self {
        Self::from_matrix_unchecked(d, CMatrix::identity(d * d, d * d))
    }

    pub fn zeros(d: usize) -> Self {
        Self::from_matrix_unchecked(d, CMatrix::zeros(d * d, d * d))
    }

    /// `X -> A X`.
    pub fn left(a: &Operator) -> Self {
        let d = a.dim();
        Self::from_matrix_unchecked(d, CMatrix::identity(d, d).kronecker(&a.m))
    }

    /// `X -> X B`.
    pub fn right(b: &Operator) -> Self {
        let d = b.dim();
        Self::from_matrix_unchecked(d, b.m.transpose().kronecker(&CMatrix::identity(d, d)))
    }

    /// `X -> L X R`.
    pub fn sandwich(l: &Operator, r: &Operator) -> Self {
        Self::from_matrix_unchecked(l.dim(), r.m.transpose().kronecker(&l.m))
    }

    /// Tabulates a linear map by its action on the matrix units `|i><j|`.
    pub fn from_action(d: usize, f: impl Fn(&Operator) -> Operator) -> Self {
        let mut m = CMatrix::zeros(d * d, d * d);
        for j in 0..d {
            for i in 0..d {
                let image = f(&Operator::ket_bra(i, j, d));
                m.set_column(vec_index(i, j, d), &vectorize(&image));
            }
        }
        Self::from_matrix_unchecked(d, m)
    }

    /// System dimension `d` (the matrix is `d^2 x d^2`).
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        assert_eq!(x.dim(), self.d, "operator dimension mismatch");
        let v = &self.m * vectorize(x);
        Operator::from_matrix_unchecked(CMatrix::from_column_slice(self.d, self.d, v.as_slice()))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SuperOperator) -> Self {
        Self::from_matrix_unchecked(self.d, &self.m * &other.m)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_matrix_unchecked(self.d, &self.m * c)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.m)
    }

    pub fn max_abs_diff(&self, other: &SuperOperator) -> f64 {
        max_abs(&(&self.m - &other.m))
    }

    /// `max_X |tr(M X)|` over matrix units, i.e. the size of `vec(1)^dagger M`.
    pub fn trace_defect(&self) -> f64 {
        let d = self.d;
        (0..d * d)
            .map(|col| {
                (0..d)
                    .map(|k| self.m[(vec_index(k, k, d), col)])
                    .sum::<C64>()
                    .norm()
            })
            .fold(0.0, f64::max)
    }

    /// Adjoint map with respect to the Hilbert-Schmidt inner product.
    pub fn adjoint(&self) -> Self {
        Self::from_matrix_unchecked(self.d, self.m.adjoint())
    }

    /// Tensor product of two maps acting on independent subsystems.
    pub fn tensor(&self, other: &SuperOperator) -> Self {
        let (da, db) = (self.d, other.d);
        let d = da * db;
        let mut m = CMatrix::zeros(d * d, d * d);
        for j in 0..d {
            for i in 0..d {
                let a = self.apply(&Operator::ket_bra(i / db, j / db, da));
                let b = other.apply(&Operator::ket_bra(i % db, j % db, db));
                m.set_column(vec_index(i, j, d), &vectorize(&a.kron(&b)));
            }
        }
        Self::from_matrix_unchecked(d, m)
    }
}

impl Add for &SuperOperator {
    type Output = SuperOperator;
    fn add(self, rhs: &SuperOperator) -> SuperOperator {
        SuperOperator::from_matrix_unchecked(self.d, &self.m + &rhs.m)
    }
}

impl Sub for &SuperOperator {
    type Output = SuperOperator;
    fn sub(self, rhs: &SuperOperator) -> SuperOperator {
        SuperOperator::from_matrix_unchecked(self.d, &self.m - &rhs.m)
    }
}

impl Mul for &SuperOperator {
    type Output = SuperOperator;
    fn mul(self, rhs: &SuperOperator) -> SuperOperator {
        self.compose(rhs)
    }
}

/// GKLS generator `-i[H, .] + Σ γ_k (L_k . L_k^† - ½{L_k^† L_k, .})`.
pub fn lindblad_superoperator(h: &Operator, jumps: &[(Operator, f64)]) -> Result<SuperOperator> {
    let d = h.dim();
    let defect = h.hermiticity_defect();
    if defect > HERMITIAN_TOL * h.max_abs().max(1.0) {
        return Err(Error::NonHermitian(defect));
    }
    let mut m = (SuperOperator::left(h).m - SuperOperator::right(h).m) * (-I);
    for (l, rate) in jumps {
        if !rate.is_finite() || *rate < 0.0 {
            return Err(Error::InvalidRate(*rate));
        }
        if l.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: l.dim(),
            });
        }
        if *rate == 0.0 {
            continue;
        }
        let ldl = &l.dagger() * l;
        let term = SuperOperator::sandwich(l, &l.dagger()).m
            - (SuperOperator::left(&ldl).m + SuperOperator::right(&ldl).m) * C64::new(0.5, 0.0);
        m += term * C64::new(*rate, 0.0);
    }
    SuperOperator::new(d, m)
}

/// `e^{M t}` by scaling and squaring with Padé approximants.
pub fn mat_exp(m: &SuperOperator, t: f64) -> Result<SuperOperator> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidTime(t));
    }
    if t == 0.0 {
        return Ok(SuperOperator::identity(m.d));
    }
    let e = expm::expm(&(&m.m * C64::new(t, 0.0)))?;
    Ok(SuperOperator::from_matrix_unchecked(m.d, e))
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<C64>,
    pub zero_modes: Vec<usize>,
    pub gap: f64,
}

/// Eigenvalues of a superoperator and its dissipative gap.
///
/// An eigenvalue counts as a zero mode when `|λ| <= tol * ρ(M)`, with `ρ` the
/// spectral radius. Fails with [`Error::NoGap`] unless every other eigenvalue
/// has a strictly negative real part.
pub fn spectrum(m: &SuperOperator, tol: f64) -> Result<SpectrumReport> {
    // Highly degenerate spectra can stall the QR sweeps at machine epsilon.
    let schur = [f64::EPSILON, 4.0 * f64::EPSILON, 64.0 * f64::EPSILON]
        .into_iter()
        .find_map(|eps| m.m.clone().try_schur(eps, 10_000))
        .ok_or(Error::EigenSolver)?;
    let mut eigenvalues: Vec<C64> = schur.eigenvalues().ok_or(Error::EigenSolver)?.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));

    let radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let threshold = tol * radius;
    let zero_modes: Vec<usize> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm() <= threshold)
        .map(|(k, _)| k)
        .collect();
    let max_re = eigenvalues
        .iter()
        .filter(|z| z.norm() > threshold)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re == f64::NEG_INFINITY || max_re >= -threshold {
        return Err(Error::NoGap);
    }
    Ok(SpectrumReport {
        eigenvalues,
        zero_modes,
        gap: -max_re,
    })
}

/// Single-qubit operators and embeddings into multi-qubit registers.
///
/// Basis order is `|0>, |1>`; in a register, qubit 0 is the leftmost tensor
/// factor.
pub mod qubit {
    use super::{Operator, C64};

    /// `|0><1|`
    pub fn sigma_minus() -> Operator {
        Operator::ket_bra(0, 1, 2)
    }

    /// `|1><0|`
    pub fn sigma_plus() -> Operator {
        Operator::ket_bra(1, 0, 2)
    }

    pub fn sigma_x() -> Operator {
        Operator::from_fn(2, |i, j| C64::new(if i != j { 1.0 } else { 0.0 }, 0.0))
    }

    pub fn sigma_y() -> Operator {
        Operator::from_fn(2, |i, j| match (i, j) {
            (0, 1) => C64::new(0.0, -1.0),
            (1, 0) => C64::new(0.0, 1.0),
            _ => C64::new(0.0, 0.0),
        })
    }

    /// `|0><0| - |1><1|`
    pub fn sigma_z() -> Operator {
        Operator::diag(&[1.0, -1.0])
    }

    /// `|0><0|`
    pub fn ground_projector() -> Operator {
        Operator::ket_bra(0, 0, 2)
    }

    /// `1 ⊗ .. ⊗ op ⊗ .. ⊗ 1` with `op` on qubit `site` of `n` qubits.
    pub fn embed(op: &Operator, site: usize, n: usize) -> Operator {
        assert!(site < n);
        (0..n).fold(Operator::identity(1), |acc, k| {
            if k == site {
                acc.kron(op)
            } else {
                acc.kron(&Operator::identity(op.dim()))
            }
        })
    }
}
