//! Quantum Fisher information and the optimality checks for the GAD channel.

use crate::error::{Error, Result};
use crate::liouvillian::{gad_model, product_gad_model, LindbladModel, ParamDomain};
use crate::operator::{mat_exp, qubit, Operator, SuperOperator, C64};

/// Eigenvalue pairs with `λ_i + λ_j` at or below this are dropped.
pub const QFI_EIGEN_TOL: f64 = 1e-12;
/// Allowed excess of the output QFI over `N / (θ(1-θ))`.
pub const BOUND_SLACK: f64 = 1e-4;
/// Largest tolerated change of the derivative under Richardson refinement.
pub const RICHARDSON_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-5;
const DROPPED_WEIGHT_WARN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QfiValue {
    pub value: f64,
    /// `Σ |<i|dρ|j>|²` over dropped pairs.
    pub dropped_weight: f64,
}

/// `F = 2 Σ_ij |<i|dρ|j>|² / (λ_i + λ_j)` in the eigenbasis of `ρ`.
pub fn qfi_state(rho: &Operator, d_rho: &Operator) -> Result<QfiValue> {
    if rho.dim() != d_rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: d_rho.dim(),
        });
    }
    if !rho.is_density_matrix(1e-9) {
        return Err(Error::Validation("QFI needs a density matrix".into()));
    }
    let defect = d_rho.hermiticity_defect();
    if defect > 1e-9 * d_rho.max_abs().max(1.0) {
        return Err(Error::NonHermitian(defect));
    }
    let (values, vectors) = rho.hermitian_eigen();
    let rotated = vectors.adjoint() * d_rho.matrix() * &vectors;
    let d = rho.dim();
    let mut value = 0.0;
    let mut dropped_weight = 0.0;
    for i in 0..d {
        for j in 0..d {
            let w = rotated[(i, j)].norm_sqr();
            let s = values[i] + values[j];
            if s > QFI_EIGEN_TOL {
                value += 2.0 * w / s;
            } else {
                dropped_weight += w;
            }
        }
    }
    if dropped_weight > DROPPED_WEIGHT_WARN {
        log::warn!("QFI: derivative weight {dropped_weight:.3e} on the kernel of ρ was dropped");
    }
    Ok(QfiValue {
        value,
        dropped_weight,
    })
}

/// `δθ ≥ 1/√F`.
pub fn cramer_rao_bound(fisher: f64) -> Result<f64> {
    if !(fisher.is_finite() && fisher > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Fisher information must be positive, got {fisher}"
        )));
    }
    Ok(1.0 / fisher.sqrt())
}

/// Amplitude damping towards `|0>` (`toward_ground`) or `|1>` written through
/// its Bloch action: `r_x, r_y → e^{-t/2} r_{x,y}`,
/// `r_z → ±(1 - e^{-t}) + e^{-t} r_z` with `σ_z = diag(1, -1)`.
pub fn bloch_channel(toward_ground: bool, t: f64) -> Result<SuperOperator> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    let transverse = (-0.5 * t).exp();
    let longitudinal = (-t).exp();
    let offset = if toward_ground { 1.0 } else { -1.0 } * (1.0 - longitudinal);
    let (sx, sy, sz) = (qubit::sigma_x(), qubit::sigma_y(), qubit::sigma_z());
    Ok(SuperOperator::from_action(2, |x| {
        // X = (tr X · 1 + Σ r_k σ_k) / 2 with r_k = tr(σ_k X); the affine part
        // scales with tr X to keep the map linear
        let tr = x.trace();
        let rx = (&sx * x).trace() * transverse;
        let ry = (&sy * x).trace() * transverse;
        let rz = (&sz * x).trace() * longitudinal + tr * offset;
        let out = &(&(&Operator::identity(2).scale(tr) + &sx.scale(rx)) + &sy.scale(ry))
            + &sz.scale(rz);
        out.scale_real(0.5)
    }))
}

/// `max |Λ_θ(t) - θ Λ_0(t) - (1-θ) Λ_1(t)|` entrywise.
pub fn gad_channel_decomposition_check(theta: f64, t: f64) -> Result<f64> {
    let l = gad_model().liouvillian(&[theta])?;
    let lambda = mat_exp(&l, t)?;
    let mix = &bloch_channel(true, t)?.scale(C64::from(theta))
        + &bloch_channel(false, t)?.scale(C64::from(1.0 - theta));
    Ok(lambda.max_abs_diff(&mix))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeBound {
    pub fisher: f64,
    pub bound: f64,
    /// `max |D_R - D(h)|` between the refined and plain central differences.
    pub richardson_change: f64,
}

impl ProbeBound {
    pub fn holds(&self) -> bool {
        self.fisher <= self.bound + BOUND_SLACK
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheckReport {
    pub theta: f64,
    pub time: f64,
    pub copies: usize,
    pub probes: Vec<ProbeBound>,
}

impl BoundCheckReport {
    pub fn passed(&self) -> bool {
        self.probes.iter().all(ProbeBound::holds)
    }

    pub fn max_fisher(&self) -> f64 {
        self.probes.iter().map(|p| p.fisher).fold(0.0, f64::max)
    }
}

/// QFI of `Λ_θ(t)^{⊗copies}[probe]` against `copies / (θ(1-θ))` for each
/// probe. `copies = 2` evolves two-qubit probes with the product model at
/// `(θ, θ)`.
pub fn qfi_output_bound_check(
    theta: f64,
    t: f64,
    probes: &[Operator],
    copies: usize,
) -> Result<BoundCheckReport> {
    ParamDomain::unit_box(1).check(&[theta])?;
    let model: LindbladModel = match copies {
        1 => gad_model(),
        2 => product_gad_model(2)?,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "bound check supports 1 or 2 copies, got {copies}"
            )))
        }
    };
    let channel = |th: f64| -> Result<SuperOperator> {
        mat_exp(&model.liouvillian(&vec![th; copies])?, t)
    };
    let centre = channel(theta)?;
    let plus = channel(theta + FD_STEP)?;
    let minus = channel(theta - FD_STEP)?;
    let plus_half = channel(theta + 0.5 * FD_STEP)?;
    let minus_half = channel(theta - 0.5 * FD_STEP)?;
    let bound = copies as f64 / (theta * (1.0 - theta));

    let probes = probes
        .iter()
        .map(|probe| -> Result<ProbeBound> {
            if probe.dim() != model.system_dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.system_dim(),
                    found: probe.dim(),
                });
            }
            if !probe.is_density_matrix(1e-9) {
                return Err(Error::Validation("probe is not a density matrix".into()));
            }
            let out = centre.apply(probe).hermitian_part();
            let coarse = (&plus.apply(probe) - &minus.apply(probe)).scale_real(0.5 / FD_STEP);
            let fine = (&plus_half.apply(probe) - &minus_half.apply(probe)).scale_real(1.0 / FD_STEP);
            let refined = (&fine.scale_real(4.0) - &coarse).scale_real(1.0 / 3.0);
            let change = refined.max_abs_diff(&coarse);
            if change > RICHARDSON_TOL {
                return Err(Error::Validation(format!(
                    "finite-difference derivative unstable (Richardson change {change:.3e})"
                )));
            }
            let fisher = qfi_state(&out, &refined.hermitian_part())?.value;
            Ok(ProbeBound {
                fisher,
                bound,
                richardson_change: change,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundCheckReport {
        theta,
        time: t,
        copies,
        probes,
    })
}
