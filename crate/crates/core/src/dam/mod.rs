//! Dissipative adiabatic measurement of an observable.
//!
//! The system, prepared in `ρ_θ`, couples to a pointer through
//! `H_I = T^{-1} A ⊗ p̂` for a total time `N T`. In the momentum basis of the
//! pointer the joint evolution factorizes: the block `|p><p'|` carries the
//! system operator `e^{L_{p,p'} N T} ρ_θ` with
//! `L_{p,p'} ρ = L_θ ρ - i T^{-1} (p A ρ - p' ρ A)`. The pointer state is then
//! fully described by the scalar kernel `tr(e^{L_{p,p'} N T} ρ_θ)`, so the
//! apparatus never needs a truncated Hilbert space.

mod kernel;
mod pointer;

use std::f64::consts::PI;
use std::sync::Arc;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::liouvillian::{steady_state_bundle, LindbladModel, SteadyStateBundle};
use crate::operator::{Operator, SuperOperator, HERMITIAN_TOL};

pub use kernel::{
    coupled_generator, ideal_kernel, nonadiabaticity, perturbative_kernel, trace_kernel,
    KernelSource,
};
pub use pointer::{
    pointer_distribution, sample_pointer, variance_closed_form, PointerDistribution,
    PointerSampler,
};

/// Largest Gaussian mass allowed outside the momentum grid.
pub const MAX_TAIL_MASS: f64 = 1e-10;
/// Largest tolerated `|∫Pr(q) dq - 1|` before renormalization.
pub const MAX_NORMALIZATION_DEFECT: f64 = 1e-4;
/// Most negative density value accepted as quadrature noise.
pub const NEGATIVE_DENSITY_TOL: f64 = 1e-8;

/// Uniform grid `min, min + h, ..., max` with `points` nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) || points < 2 {
            return Err(Error::InvalidArgument(format!(
                "invalid grid [{min}, {max}] with {points} points"
            )));
        }
        Ok(Self { min, max, points })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }
}

/// Gaussian pointer and the grids used to resolve it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApparatusConfig {
    /// Position-space standard deviation σ.
    pub sigma: f64,
    pub p_grid: Grid,
    pub q_points: usize,
    /// Half-width of the position grid in units of the predicted pointer
    /// standard deviation.
    pub q_half_width: f64,
}

impl ApparatusConfig {
    pub const DEFAULT_P_POINTS: usize = 161;
    /// Half-width of the default momentum grid in units of σ' = 1/(2σ).
    pub const DEFAULT_P_HALF_WIDTH: f64 = 6.5;
    pub const DEFAULT_Q_POINTS: usize = 2048;
    pub const DEFAULT_Q_HALF_WIDTH: f64 = 8.0;

    /// Default grids around a pointer of width `sigma`.
    pub fn new(sigma: f64) -> Result<Self> {
        Self::with_resolution(
            sigma,
            Self::DEFAULT_P_POINTS,
            Self::DEFAULT_P_HALF_WIDTH,
            Self::DEFAULT_Q_POINTS,
            Self::DEFAULT_Q_HALF_WIDTH,
        )
    }

    /// `p_half_width` is in units of σ', `q_half_width` in units of the
    /// predicted pointer standard deviation.
    pub fn with_resolution(
        sigma: f64,
        p_points: usize,
        p_half_width: f64,
        q_points: usize,
        q_half_width: f64,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        let w = p_half_width / (2.0 * sigma);
        let config = Self {
            sigma,
            p_grid: Grid::new(-w, w, p_points)?,
            q_points,
            q_half_width,
        };
        config.validate()?;
        Ok(config)
    }

    /// Momentum-space standard deviation σ' = 1/(2σ).
    pub fn momentum_std(&self) -> f64 {
        0.5 / self.sigma
    }

    /// Momentum wavefunction `φ(p) = (2π σ'^2)^{-1/4} exp(-p^2 / (4 σ'^2))`.
    pub fn wavefunction(&self, p: f64) -> f64 {
        let s = self.momentum_std();
        (2.0 * PI * s * s).powf(-0.25) * (-p * p / (4.0 * s * s)).exp()
    }

    /// Probability mass of `|φ(p)|^2` outside the momentum grid.
    pub fn tail_mass(&self) -> f64 {
        let s = self.momentum_std() * std::f64::consts::SQRT_2;
        0.5 * erfc(-self.p_grid.min / s) + 0.5 * erfc(self.p_grid.max / s)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.momentum_std();
        if self.p_grid.min > -6.0 * s || self.p_grid.max < 6.0 * s {
            return Err(Error::GridTooCoarse(format!(
                "momentum grid [{:.4}, {:.4}] does not span ±6σ' = ±{:.4}",
                self.p_grid.min,
                self.p_grid.max,
                6.0 * s
            )));
        }
        let tail = self.tail_mass();
        if tail >= MAX_TAIL_MASS {
            return Err(Error::GridTooCoarse(format!(
                "Gaussian tail mass {tail:.3e} outside the momentum grid"
            )));
        }
        if self.q_points < 16 || self.q_half_width.is_nan() || self.q_half_width < 8.0 {
            return Err(Error::GridTooCoarse(format!(
                "position grid of {} points over ±{}σ",
                self.q_points, self.q_half_width
            )));
        }
        Ok(())
    }
}

/// One measurement configuration: model at θ, observable, coupling strength
/// `1/T`, coupling time `N T` and pointer.
#[derive(Clone, Debug)]
pub struct DamRun {
    model: LindbladModel,
    theta: Vec<f64>,
    observable: Operator,
    coupling_time: f64,
    multiplier: f64,
    apparatus: ApparatusConfig,
    bundle: Arc<SteadyStateBundle>,
    left_a: Arc<SuperOperator>,
    right_a: Arc<SuperOperator>,
}

impl DamRun {
    pub fn new(
        model: LindbladModel,
        theta: &[f64],
        observable: Operator,
        coupling_time: f64,
        multiplier: f64,
        apparatus: ApparatusConfig,
    ) -> Result<Self> {
        let bundle = Arc::new(steady_state_bundle(&model, theta)?);
        Self::with_bundle(model, bundle, observable, coupling_time, multiplier, apparatus)
    }

    /// Reuses a steady-state bundle computed for `bundle.theta`.
    pub fn with_bundle(
        model: LindbladModel,
        bundle: Arc<SteadyStateBundle>,
        observable: Operator,
        coupling_time: f64,
        multiplier: f64,
        apparatus: ApparatusConfig,
    ) -> Result<Self> {
        if observable.dim() != model.system_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.system_dim(),
                found: observable.dim(),
            });
        }
        let defect = observable.hermiticity_defect();
        if defect > HERMITIAN_TOL * observable.max_abs().max(1.0) {
            return Err(Error::NonHermitian(defect));
        }
        if !(coupling_time.is_finite() && coupling_time > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coupling time T must be positive, got {coupling_time}"
            )));
        }
        if !(multiplier.is_finite() && multiplier >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "time multiplier N must be at least 1, got {multiplier}"
            )));
        }
        apparatus.validate()?;
        Ok(Self {
            theta: bundle.theta.clone(),
            left_a: Arc::new(SuperOperator::left(&observable)),
            right_a: Arc::new(SuperOperator::right(&observable)),
            model,
            observable,
            coupling_time,
            multiplier,
            apparatus,
            bundle,
        })
    }

    /// Same system and pointer with different `T` and `N`.
    pub fn with_times(&self, coupling_time: f64, multiplier: f64) -> Result<Self> {
        Self::with_bundle(
            self.model.clone(),
            Arc::clone(&self.bundle),
            self.observable.clone(),
            coupling_time,
            multiplier,
            self.apparatus,
        )
    }

    pub fn with_apparatus(&self, apparatus: ApparatusConfig) -> Result<Self> {
        Self::with_bundle(
            self.model.clone(),
            Arc::clone(&self.bundle),
            self.observable.clone(),
            self.coupling_time,
            self.multiplier,
            apparatus,
        )
    }

    pub fn model(&self) -> &LindbladModel {
        &self.model
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn observable(&self) -> &Operator {
        &self.observable
    }

    /// `T`
    pub fn coupling_time(&self) -> f64 {
        self.coupling_time
    }

    /// `N`
    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn total_time(&self) -> f64 {
        self.coupling_time * self.multiplier
    }

    pub fn apparatus(&self) -> &ApparatusConfig {
        &self.apparatus
    }

    pub fn bundle(&self) -> &SteadyStateBundle {
        &self.bundle
    }

    pub fn bundle_arc(&self) -> Arc<SteadyStateBundle> {
        Arc::clone(&self.bundle)
    }

    /// `⟨A⟩_θ`
    pub fn expectation(&self) -> f64 {
        self.bundle.expectation(&self.observable)
    }

    /// Ideal pointer displacement `N ⟨A⟩_θ`.
    pub fn ideal_shift(&self) -> f64 {
        self.multiplier * self.expectation()
    }

    /// Pointer variance predicted by the second-order kernel.
    pub fn predicted_variance(&self) -> f64 {
        variance_closed_form(
            &self.bundle,
            &self.observable,
            self.apparatus.sigma,
            self.multiplier,
            self.coupling_time,
        )
    }

    pub(crate) fn left_a(&self) -> &SuperOperator {
        &self.left_a
    }

    pub(crate) fn right_a(&self) -> &SuperOperator {
        &self.right_a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouvillian::gad_model;
    use crate::operator::qubit;

    #[test]
    fn grid_basics() {
        let g = Grid::new(-1.0, 1.0, 5).unwrap();
        assert_eq!(g.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(Grid::new(1.0, -1.0, 5).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn default_apparatus() {
        let a = ApparatusConfig::new(0.1).unwrap();
        assert_eq!(a.momentum_std(), 5.0);
        assert_eq!(a.p_grid.points, 161);
        assert!(a.p_grid.max >= 30.0);
        assert!(a.tail_mass() < MAX_TAIL_MASS);
        let norm: f64 = a
            .p_grid
            .values()
            .iter()
            .map(|&p| a.wavefunction(p).powi(2))
            .sum::<f64>()
            * a.p_grid.step();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn narrow_momentum_grid_is_rejected() {
        assert!(matches!(
            ApparatusConfig::with_resolution(0.1, 161, 5.0, 2048, 8.0),
            Err(Error::GridTooCoarse(_))
        ));
        // spans 6σ' but leaves ~2e-9 of the Gaussian outside
        assert!(matches!(
            ApparatusConfig::with_resolution(0.1, 161, 6.0, 2048, 8.0),
            Err(Error::GridTooCoarse(_))
        ));
        assert!(ApparatusConfig::new(-1.0).is_err());
    }

    #[test]
    fn run_validation() {
        let a = ApparatusConfig::new(0.1).unwrap();
        let obs = qubit::ground_projector();
        assert!(DamRun::new(gad_model(), &[0.3], obs.clone(), 0.0, 1.0, a).is_err());
        assert!(DamRun::new(gad_model(), &[0.3], obs.clone(), 10.0, 0.5, a).is_err());
        assert!(matches!(
            DamRun::new(gad_model(), &[0.3], qubit::sigma_minus(), 10.0, 1.0, a),
            Err(Error::NonHermitian(_))
        ));
        let run = DamRun::new(gad_model(), &[0.3], obs, 10.0, 2.5, a).unwrap();
        assert!((run.ideal_shift() - 0.75).abs() < 1e-12);
        assert_eq!(run.total_time(), 25.0);
    }
}
