//! Parameterized Lindblad models, steady states and the Liouvillian
//! pseudoinverse.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::{
    lindblad_superoperator, qubit, spectrum, vectorize, CMatrix, Operator, SuperOperator, C64,
    ZERO_EIGENVALUE_TOL,
};

/// Eigenvalues of a steady state below zero but above `-STATE_TOL` are
/// treated as numerical noise and clipped.
pub const STATE_TOL: f64 = 1e-10;

/// Hamiltonian plus weighted jump operators.
#[derive(Clone, Debug)]
pub struct GkslTriple {
    pub hamiltonian: Operator,
    pub jumps: Vec<(Operator, f64)>,
}

impl GkslTriple {
    pub fn liouvillian(&self) -> Result<SuperOperator> {
        lindblad_superoperator(&self.hamiltonian, &self.jumps)
    }
}

/// Open box `(lower_i, upper_i)` per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDomain {
    bounds: Vec<(f64, f64)>,
}

impl ParamDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("empty parameter domain".into()));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "invalid parameter interval ({lo}, {hi})"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn unit_box(dim: usize) -> Self {
        Self {
            bounds: vec![(0.0, 1.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn width(&self, i: usize) -> f64 {
        self.bounds[i].1 - self.bounds[i].0
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        for (index, (&value, &(lower, upper))) in theta.iter().zip(&self.bounds).enumerate() {
            if !(value > lower && value < upper) {
                return Err(Error::OutOfDomain {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// Nearest point of the closed box.
    pub fn clamp(&self, theta: &[f64]) -> (Vec<f64>, bool) {
        let mut clamped = false;
        let out = theta
            .iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| {
                let c = if v.is_nan() { 0.5 * (lo + hi) } else { v.clamp(lo, hi) };
                clamped |= c != v;
                c
            })
            .collect();
        (out, clamped)
    }
}

pub type GeneratorFn = dyn Fn(&[f64]) -> Result<GkslTriple> + Send + Sync;
pub type StateDerivativeFn = dyn Fn(&[f64], usize) -> Operator + Send + Sync;

/// A family `θ -> (H(θ), {(L_k, γ_k(θ))})` of GKLS generators.
#[derive(Clone)]
pub struct LindbladModel {
    name: String,
    system_dim: usize,
    domain: ParamDomain,
    generator: Arc<GeneratorFn>,
    steady_derivative: Option<Arc<StateDerivativeFn>>,
}

impl fmt::Debug for LindbladModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LindbladModel")
            .field("name", &self.name)
            .field("param_dim", &self.param_dim())
            .field("system_dim", &self.system_dim)
            .field("domain", &self.domain)
            .finish()
    }
}

impl LindbladModel {
    /// Wraps a generator and checks that the steady state is unique with a
    /// gap at the centre of the domain.
    pub fn new(
        name: impl Into<String>,
        system_dim: usize,
        domain: ParamDomain,
        generator: Arc<GeneratorFn>,
    ) -> Result<Self> {
        let model = Self {
            name: name.into(),
            system_dim,
            domain,
            generator,
            steady_derivative: None,
        };
        let probe = model.domain.midpoint();
        let triple = model.gksl(&probe)?;
        if triple.hamiltonian.dim() != system_dim {
            return Err(Error::DimensionMismatch {
                expected: system_dim,
                found: triple.hamiltonian.dim(),
            });
        }
        steady_state_bundle(&model, &probe)?;
        Ok(model)
    }

    /// Attaches an analytic `∂ρ_θ/∂θ_i`.
    pub fn with_steady_state_derivative(mut self, f: Arc<StateDerivativeFn>) -> Self {
        self.steady_derivative = Some(f);
        self
    }

    /// Constant Hamiltonian and jump operators with rates affine in θ:
    /// `γ_k(θ) = constant_k + slope_k · θ`.
    pub fn affine(
        name: impl Into<String>,
        hamiltonian: Operator,
        jumps: Vec<AffineJump>,
        domain: ParamDomain,
    ) -> Result<Self> {
        let d = hamiltonian.dim();
        let m = domain.dim();
        for j in &jumps {
            if j.operator.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: j.operator.dim(),
                });
            }
            if j.slope.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: j.slope.len(),
                });
            }
        }
        let generator = move |theta: &[f64]| -> Result<GkslTriple> {
            let jumps = jumps
                .iter()
                .map(|j| {
                    let rate = j.rate(theta);
                    if rate < 0.0 || !rate.is_finite() {
                        Err(Error::InvalidRate(rate))
                    } else {
                        Ok((j.operator.clone(), rate))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GkslTriple {
                hamiltonian: hamiltonian.clone(),
                jumps,
            })
        };
        Self::new(name, d, domain, Arc::new(generator))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn param_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn domain(&self) -> &ParamDomain {
        &self.domain
    }

    pub fn gksl(&self, theta: &[f64]) -> Result<GkslTriple> {
        self.domain.check(theta)?;
        (self.generator)(theta)
    }

    pub fn liouvillian(&self, theta: &[f64]) -> Result<SuperOperator> {
        self.gksl(theta)?.liouvillian()
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.steady_derivative.is_some()
    }

    /// `∂ρ_θ/∂θ_index`: analytic when registered, otherwise a central finite
    /// difference of the numerical steady state.
    pub fn steady_state_derivative(&self, theta: &[f64], index: usize) -> Result<Operator> {
        self.domain.check(theta)?;
        if let Some(f) = &self.steady_derivative {
            return Ok(f(theta, index));
        }
        let h = 1e-5 * self.domain.width(index);
        let shifted = |delta: f64| -> Result<Operator> {
            let mut t = theta.to_vec();
            t[index] += delta;
            Ok(steady_state_bundle(self, &t)?.rho)
        };
        let plus = shifted(h)?;
        let minus = shifted(-h)?;
        Ok((&plus - &minus).scale_real(0.5 / h))
    }
}

#[derive(Clone, Debug)]
pub struct AffineJump {
    pub operator: Operator,
    pub constant: f64,
    pub slope: Vec<f64>,
}

impl AffineJump {
    pub fn rate(&self, theta: &[f64]) -> f64 {
        self.constant + self.slope.iter().zip(theta).map(|(s, t)| s * t).sum::<f64>()
    }
}

/// Generalized amplitude damping: `σ₋` at rate θ, `σ₊` at rate 1 - θ.
pub fn gad_model() -> LindbladModel {
    product_gad_model(1).expect("single-qubit model is valid")
}

/// `m` independent generalized amplitude damping qubits, qubit `i` driven by
/// `θ_i`.
pub fn product_gad_model(m: usize) -> Result<LindbladModel> {
    if m == 0 || m > 3 {
        return Err(Error::InvalidArgument(format!(
            "product GAD model supports 1 to 3 qubits, got {m}"
        )));
    }
    let d = 1 << m;
    let lowering: Vec<Operator> = (0..m)
        .map(|k| qubit::embed(&qubit::sigma_minus(), k, m))
        .collect();
    let raising: Vec<Operator> = (0..m)
        .map(|k| qubit::embed(&qubit::sigma_plus(), k, m))
        .collect();
    let generator = move |theta: &[f64]| -> Result<GkslTriple> {
        let mut jumps = Vec::with_capacity(2 * m);
        for k in 0..m {
            jumps.push((lowering[k].clone(), theta[k]));
            jumps.push((raising[k].clone(), 1.0 - theta[k]));
        }
        Ok(GkslTriple {
            hamiltonian: Operator::zeros(d),
            jumps,
        })
    };
    let derivative = move |theta: &[f64], index: usize| -> Operator {
        (0..m).fold(Operator::identity(1), |acc, k| {
            let factor = if k == index {
                Operator::diag(&[1.0, -1.0])
            } else {
                Operator::diag(&[theta[k], 1.0 - theta[k]])
            };
            acc.kron(&factor)
        })
    };
    let name = if m == 1 {
        "gad".to_string()
    } else {
        format!("product_gad_{m}")
    };
    Ok(LindbladModel::new(name, d, ParamDomain::unit_box(m), Arc::new(generator))?
        .with_steady_state_derivative(Arc::new(derivative)))
}

/// Steady state of a gapped Liouvillian together with the projectors onto and
/// away from it and the pseudoinverse restricted to the decaying sector.
#[derive(Clone, Debug)]
pub struct SteadyStateBundle {
    pub theta: Vec<f64>,
    pub liouvillian: SuperOperator,
    pub rho: Operator,
    pub gap: f64,
    /// `X -> tr(X) ρ`
    pub projector: SuperOperator,
    /// `1 - P`
    pub complement: SuperOperator,
    /// `S` with `L S = S L = Q` and `S P = P S = 0`.
    pub pseudoinverse: SuperOperator,
}

impl SteadyStateBundle {
    pub fn from_liouvillian(liouvillian: SuperOperator, theta: Vec<f64>) -> Result<Self> {
        let report = spectrum(&liouvillian, ZERO_EIGENVALUE_TOL)?;
        match report.zero_modes.len() {
            0 => return Err(Error::NoGap),
            1 => {}
            n => return Err(Error::DegenerateSteadyState(n)),
        }
        let d = liouvillian.dim();
        let rho = null_state(&liouvillian)?;

        let id_vec = vectorize(&Operator::identity(d));
        let projector =
            SuperOperator::from_matrix_unchecked(d, vectorize(&rho) * id_vec.transpose());
        let complement = &SuperOperator::identity(d) - &projector;
        let bordered = (liouvillian.matrix() + projector.matrix())
            .lu()
            .try_inverse()
            .ok_or(Error::Singular)?;
        let pseudoinverse = SuperOperator::from_matrix_unchecked(
            d,
            complement.matrix() * bordered * complement.matrix(),
        );
        Ok(Self {
            theta,
            liouvillian,
            rho,
            gap: report.gap,
            projector,
            complement,
            pseudoinverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    /// `⟨A⟩_θ = tr(A ρ_θ)`.
    pub fn expectation(&self, a: &Operator) -> f64 {
        a.expectation(&self.rho).re
    }

    /// `tr[A S(A ρ_θ)]`, the integrated connected autocorrelation of `A`
    /// with a minus sign.
    pub fn correlation_integral(&self, a: &Operator) -> C64 {
        let inner = self.pseudoinverse.apply(&(a * &self.rho));
        a.expectation(&inner)
    }
}

/// Zero mode of `l` normalized to unit trace, Hermitized and with tiny
/// negative eigenvalues clipped.
fn null_state(l: &SuperOperator) -> Result<Operator> {
    let d = l.dim();
    let svd = l.matrix().clone().svd(false, true);
    let v_t = svd.v_t.ok_or(Error::EigenSolver)?;
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .ok_or(Error::EigenSolver)?;
    let v = v_t.row(k).adjoint();
    let x = CMatrix::from_column_slice(d, d, v.as_slice());
    let tr = x.trace();
    if tr.norm() < 1e-12 {
        return Err(Error::Validation("steady mode is traceless".into()));
    }
    let rho = Operator::from_matrix_unchecked(x / tr).hermitian_part();

    let (values, vectors) = rho.hermitian_eigen();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -STATE_TOL {
        return Err(Error::Validation(format!(
            "steady mode is not positive (eigenvalue {min:.3e})"
        )));
    }
    if min >= 0.0 {
        return Ok(rho);
    }
    let clipped = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        values.iter().map(|&l| C64::new(l.max(0.0), 0.0)),
    ));
    let m = &vectors * clipped * vectors.adjoint();
    let tr = m.trace();
    Ok(Operator::from_matrix_unchecked(m / tr).hermitian_part())
}

pub fn steady_state_bundle(model: &LindbladModel, theta: &[f64]) -> Result<SteadyStateBundle> {
    let l = model.liouvillian(theta)?;
    if l.dim() != model.system_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.system_dim(),
            found: l.dim(),
        });
    }
    SteadyStateBundle::from_liouvillian(l, theta.to_vec())
}

/// `P_θ(X) - X - |0><0|X|1><1| - |1><1|X|0><0|`, the generalized amplitude
/// damping pseudoinverse in closed form.
pub fn gad_pseudoinverse_closed_form(x: &Operator, theta: f64) -> Result<Operator> {
    if x.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: x.dim(),
        });
    }
    ParamDomain::unit_box(1).check(&[theta])?;
    let rho = Operator::diag(&[theta, 1.0 - theta]);
    let p_x = rho.scale(x.trace());
    let upper = Operator::ket_bra(0, 1, 2).scale(x.get(0, 1));
    let lower = Operator::ket_bra(1, 0, 2).scale(x.get(1, 0));
    Ok(&(&(&p_x - x) - &upper) - &lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::mat_exp;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gad_steady_state_and_gap() {
        let model = gad_model();
        assert_eq!(model.param_dim(), 1);
        assert_eq!(model.system_dim(), 2);
        for theta in [0.1, 0.3, 0.5, 0.9] {
            let b = steady_state_bundle(&model, &[theta]).unwrap();
            assert!(b.rho.max_abs_diff(&Operator::diag(&[theta, 1.0 - theta])) < 1e-13);
            assert_abs_diff_eq!(b.gap, 0.5, epsilon = 1e-12);
        }
        let half = steady_state_bundle(&model, &[0.5]).unwrap();
        assert!(half.rho.max_abs_diff(&Operator::identity(2).scale_real(0.5)) < 1e-13);
    }

    #[test]
    fn product_model_steady_state() {
        let model = product_gad_model(2).unwrap();
        assert_eq!(model.system_dim(), 4);
        let b = steady_state_bundle(&model, &[0.2, 0.6]).unwrap();
        let expected = Operator::diag(&[0.12, 0.08, 0.48, 0.32]);
        assert!(b.rho.max_abs_diff(&expected) < 1e-13);
        assert_abs_diff_eq!(b.gap, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn product_model_of_one_matches_gad() {
        let one = product_gad_model(1).unwrap();
        let gad = gad_model();
        let a = one.liouvillian(&[0.37]).unwrap();
        let b = gad.liouvillian(&[0.37]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn product_model_dimension_cap() {
        assert!(product_gad_model(3).is_ok());
        assert!(matches!(product_gad_model(4), Err(Error::InvalidArgument(_))));
        assert!(matches!(product_gad_model(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn domain_is_enforced() {
        let model = gad_model();
        assert!(matches!(
            steady_state_bundle(&model, &[1.2]),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(
            steady_state_bundle(&model, &[0.2, 0.3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pseudoinverse_on_coherence_and_steady_state() {
        let b = steady_state_bundle(&gad_model(), &[0.3]).unwrap();
        let s01 = b.pseudoinverse.apply(&Operator::ket_bra(0, 1, 2));
        assert!(s01.max_abs_diff(&Operator::ket_bra(0, 1, 2).scale_real(-2.0)) < 1e-12);
        assert!(b.pseudoinverse.apply(&b.rho).max_abs() < 1e-13);
        let a = qubit::ground_projector();
        let c = b.correlation_integral(&a);
        assert_abs_diff_eq!(c.re, -0.21, epsilon = 1e-12);
        assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_examples() {
        let theta = 0.3;
        let out = gad_pseudoinverse_closed_form(&Operator::ket_bra(0, 1, 2), theta).unwrap();
        assert!(out.max_abs_diff(&Operator::ket_bra(0, 1, 2).scale_real(-2.0)) < 1e-15);
        let rho = Operator::diag(&[theta, 1.0 - theta]);
        assert!(gad_pseudoinverse_closed_form(&rho, theta).unwrap().max_abs() < 1e-15);
        let z = qubit::sigma_z();
        let out = gad_pseudoinverse_closed_form(&z, theta).unwrap();
        assert!(out.max_abs_diff(&(-&z)) < 1e-15);
        assert!(gad_pseudoinverse_closed_form(&Operator::zeros(3), theta).is_err());
    }

    #[test]
    fn numeric_pseudoinverse_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = gad_model();
        for _ in 0..200 {
            let theta = rng.random_range(0.05..0.95);
            let b = steady_state_bundle(&model, &[theta]).unwrap();
            let x = Operator::random(2, &mut rng);
            let numeric = b.pseudoinverse.apply(&x);
            let closed = gad_pseudoinverse_closed_form(&x, theta).unwrap();
            assert!(numeric.max_abs_diff(&closed) <= 1e-9);
        }
    }

    #[test]
    fn bundle_identities_hold() {
        for (model, theta) in [
            (gad_model(), vec![0.3]),
            (product_gad_model(2).unwrap(), vec![0.2, 0.6]),
            (product_gad_model(3).unwrap(), vec![0.2, 0.6, 0.45]),
        ] {
            let b = steady_state_bundle(&model, &theta).unwrap();
            let (l, p, q, s) = (&b.liouvillian, &b.projector, &b.complement, &b.pseudoinverse);
            assert!((l * s).max_abs_diff(q) < 1e-9);
            assert!((s * l).max_abs_diff(q) < 1e-9);
            assert!((s * p).max_abs() < 1e-9);
            assert!((p * s).max_abs() < 1e-9);
            assert!((p * p).max_abs_diff(p) < 1e-12);
            assert!((p * q).max_abs() < 1e-12);
            assert!((q * p).max_abs() < 1e-12);
            assert!(l.apply(&b.rho).max_abs() < 1e-12);
            assert!(b.rho.is_density_matrix(1e-12));
        }
    }

    #[test]
    fn pseudoinverse_matches_integral_representation() {
        // -∫_0^τ e^{tL} Q dt by composite Simpson on a fine grid
        let b = steady_state_bundle(&gad_model(), &[0.3]).unwrap();
        let horizon = 40.0 / b.gap;
        let steps = 4000;
        let h = horizon / steps as f64;
        let step = mat_exp(&b.liouvillian, h).unwrap();
        let mut current = b.complement.clone();
        let mut acc = SuperOperator::zeros(2);
        for k in 0..=steps {
            let w = if k == 0 || k == steps {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc = &acc + &current.scale(C64::new(w * h / 3.0, 0.0));
            current = &step * &current;
        }
        let integral = acc.scale(C64::new(-1.0, 0.0));
        assert!(integral.max_abs_diff(&b.pseudoinverse) < 1e-6);
    }

    #[test]
    fn steady_state_is_fixed_by_evolution() {
        let b = steady_state_bundle(&gad_model(), &[0.3]).unwrap();
        for t in [1.0, 10.0, 100.0] {
            let out = mat_exp(&b.liouvillian, t).unwrap().apply(&b.rho);
            assert!(out.max_abs_diff(&b.rho) < 1e-10);
        }
    }

    #[test]
    fn degenerate_steady_space_is_rejected() {
        // pure dephasing leaves both populations invariant
        let l = lindblad_superoperator(&Operator::zeros(2), &[(qubit::sigma_z(), 1.0)]).unwrap();
        assert_eq!(
            SteadyStateBundle::from_liouvillian(l, vec![]).unwrap_err(),
            Error::DegenerateSteadyState(2)
        );
    }

    #[test]
    fn affine_model_reproduces_gad() {
        let jumps = vec![
            AffineJump {
                operator: qubit::sigma_minus(),
                constant: 0.0,
                slope: vec![1.0],
            },
            AffineJump {
                operator: qubit::sigma_plus(),
                constant: 1.0,
                slope: vec![-1.0],
            },
        ];
        let model =
            LindbladModel::affine("custom", Operator::zeros(2), jumps, ParamDomain::unit_box(1))
                .unwrap();
        assert_eq!(
            model.liouvillian(&[0.3]).unwrap(),
            gad_model().liouvillian(&[0.3]).unwrap()
        );
        let fd = model.steady_state_derivative(&[0.3], 0).unwrap();
        assert!(fd.max_abs_diff(&Operator::diag(&[1.0, -1.0])) < 1e-8);
    }

    #[test]
    fn affine_model_rejects_degenerate_family() {
        let jumps = vec![AffineJump {
            operator: qubit::sigma_z(),
            constant: 1.0,
            slope: vec![0.0],
        }];
        assert!(matches!(
            LindbladModel::affine("deph", Operator::zeros(2), jumps, ParamDomain::unit_box(1)),
            Err(Error::DegenerateSteadyState(2))
        ));
    }
}
