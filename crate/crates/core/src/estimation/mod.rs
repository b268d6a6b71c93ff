//! Estimators built on DAM pointer readings, their predicted errors, the
//! conventional coin-flip baseline and quantum Fisher information checks.

mod link;
mod monte_carlo;
mod qfi;

use nalgebra::DMatrix;

use crate::dam::variance_closed_form;
use crate::error::{Error, Result};
use crate::liouvillian::SteadyStateBundle;
use crate::operator::Operator;

pub use link::{dam_estimate, Estimate, LinkFunction, MatrixFn, VectorFn, FD_RELATIVE_STEP};
pub use monte_carlo::{
    chi_squared_interval, conventional_povm_error, mc_dam_error, mc_multiparam_error,
    trial_rng, EstimationReport, CONFIDENCE_LEVEL, MAX_CLAMPED_FRACTION,
};
pub use qfi::{
    bloch_channel, cramer_rao_bound, gad_channel_decomposition_check, qfi_output_bound_check,
    qfi_state, BoundCheckReport, ProbeBound, QfiValue, BOUND_SLACK, QFI_EIGEN_TOL,
    RICHARDSON_TOL,
};

/// `(1/N) √(Σ_ij (J_{f^{-1}})_ij² Var(q_j))`, shared by the single- and
/// multi-parameter formulas.
fn propagate(jacobian_inverse: &DMatrix<f64>, variances: &[f64], n: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..jacobian_inverse.nrows() {
        for (j, v) in variances.iter().enumerate() {
            let jij = jacobian_inverse[(i, j)];
            acc += jij * jij * v;
        }
    }
    acc.sqrt() / n
}

fn checked_jacobian_inverse(link: &LinkFunction, theta: &[f64]) -> Result<DMatrix<f64>> {
    let forward = link.forward_jacobian(theta)?;
    let scale = forward.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if forward.determinant().abs() <= 1e-12 * scale.powi(theta.len() as i32) {
        return Err(Error::NonIdentifiable(theta.to_vec()));
    }
    let jinv = link.jacobian_inverse(theta)?;
    if jinv.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonIdentifiable(theta.to_vec()));
    }
    Ok(jinv)
}

/// Eq. (8): `√(σ² - (2N/T) Re c + (N Im c / (Tσ))²) / (N |∂f/∂θ|)`.
pub fn dam_error_formula(
    bundle: &SteadyStateBundle,
    a: &Operator,
    link: &LinkFunction,
    sigma: f64,
    n: f64,
    t: f64,
) -> Result<f64> {
    if link.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "single-parameter formula called with a {}-parameter link",
            link.dim()
        )));
    }
    multiparam_error_formula(bundle, std::slice::from_ref(a), link, sigma, n, t)
}

/// Multi-parameter error with one pointer per observable, all coupled to the
/// same steady state.
pub fn multiparam_error_formula(
    bundle: &SteadyStateBundle,
    observables: &[Operator],
    link: &LinkFunction,
    sigma: f64,
    n: f64,
    t: f64,
) -> Result<f64> {
    if observables.len() != link.dim() {
        return Err(Error::DimensionMismatch {
            expected: link.dim(),
            found: observables.len(),
        });
    }
    if !(sigma > 0.0 && n >= 1.0 && t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need σ > 0, N ≥ 1, T > 0 (got {sigma}, {n}, {t})"
        )));
    }
    let jinv = checked_jacobian_inverse(link, &bundle.theta)?;
    let variances: Vec<f64> = observables
        .iter()
        .map(|a| variance_closed_form(bundle, a, sigma, n, t))
        .collect();
    Ok(propagate(&jinv, &variances, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouvillian::{gad_model, product_gad_model, steady_state_bundle, ParamDomain};
    use crate::operator::qubit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eq9(theta: f64, sigma: f64, n: f64, t: f64) -> f64 {
        (sigma * sigma + 2.0 * theta * (1.0 - theta) * n / t).sqrt() / n
    }

    #[test]
    fn gad_formula_value() {
        let b = steady_state_bundle(&gad_model(), &[0.3]).unwrap();
        let link = LinkFunction::identity(ParamDomain::unit_box(1));
        let a = qubit::ground_projector();
        let v = dam_error_formula(&b, &a, &link, 0.1, 100.0, 1000.0).unwrap();
        assert!((v - 2.2803508501982757e-3).abs() < 1e-12);
        let ideal = dam_error_formula(&b, &a, &link, 0.1, 5.0, 1e15).unwrap();
        assert!((ideal - 0.1 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn generic_formula_matches_eq9_for_random_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let link = LinkFunction::identity(ParamDomain::unit_box(1));
        let a = qubit::ground_projector();
        for _ in 0..20 {
            let theta = rng.random_range(0.02..0.98);
            let b = steady_state_bundle(&gad_model(), &[theta]).unwrap();
            let v = dam_error_formula(&b, &a, &link, 0.1, 40.0, 700.0).unwrap();
            let e = eq9(theta, 0.1, 40.0, 700.0);
            assert!(((v - e) / e).abs() < 1e-9);
        }
    }

    #[test]
    fn single_and_multi_parameter_agree_bitwise() {
        let b = steady_state_bundle(&gad_model(), &[0.42]).unwrap();
        let link = LinkFunction::identity(ParamDomain::unit_box(1));
        let a = qubit::ground_projector();
        let single = dam_error_formula(&b, &a, &link, 0.1, 7.0, 300.0).unwrap();
        let multi = multiparam_error_formula(&b, &[a], &link, 0.1, 7.0, 300.0).unwrap();
        assert_eq!(single.to_bits(), multi.to_bits());
    }

    #[test]
    fn product_model_is_quadrature_sum() {
        let model = product_gad_model(2).unwrap();
        let b = steady_state_bundle(&model, &[0.2, 0.6]).unwrap();
        let obs = [
            qubit::embed(&qubit::ground_projector(), 0, 2),
            qubit::embed(&qubit::ground_projector(), 1, 2),
        ];
        let link = LinkFunction::identity(ParamDomain::unit_box(2));
        let v = multiparam_error_formula(&b, &obs, &link, 0.1, 50.0, 2000.0).unwrap();
        let e = eq9(0.2, 0.1, 50.0, 2000.0).hypot(eq9(0.6, 0.1, 50.0, 2000.0));
        assert!((v - e).abs() < 1e-12);
    }

    #[test]
    fn formula_is_homogeneous_in_jacobian() {
        let b = steady_state_bundle(&gad_model(), &[0.3]).unwrap();
        let a = qubit::ground_projector();
        let id = LinkFunction::identity(ParamDomain::unit_box(1));
        // f(θ) = θ/2 has J_{f^{-1}} = 2
        let halved = LinkFunction::from_table(vec![0.0, 1.0], vec![0.0, 0.5]).unwrap();
        let base = dam_error_formula(&b, &a, &id, 0.1, 10.0, 500.0).unwrap();
        let doubled = dam_error_formula(&b, &a, &halved, 0.1, 10.0, 500.0).unwrap();
        assert!((doubled / base - 2.0).abs() < 1e-6);
    }

    #[test]
    fn flat_link_is_not_identifiable() {
        let b = steady_state_bundle(&gad_model(), &[0.5]).unwrap();
        let flat = LinkFunction::new(
            ParamDomain::unit_box(1),
            ParamDomain::unit_box(1),
            std::sync::Arc::new(|_: &[f64]| Ok(vec![0.5])),
            std::sync::Arc::new(|_: &[f64]| Ok(vec![0.5])),
        )
        .unwrap();
        assert!(matches!(
            dam_error_formula(&b, &qubit::ground_projector(), &flat, 0.1, 1.0, 100.0),
            Err(Error::NonIdentifiable(_))
        ));
    }
}
