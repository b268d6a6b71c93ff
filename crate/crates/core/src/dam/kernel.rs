//! The pointer kernel `k(p, p') = tr(e^{L_{p,p'} N T} ρ_θ)` and its
//! approximations.

use rayon::prelude::*;

use super::DamRun;
use crate::error::{Error, Result};
use crate::operator::{mat_exp, vec_index, vectorize, SuperOperator, C64, I};

/// Which kernel to feed into the pointer reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelSource {
    /// Matrix exponential of the coupled generator.
    Exact,
    /// Second-order expression in `1/T`.
    Perturbative,
    /// Adiabatic limit, a pure phase.
    Ideal,
}

impl KernelSource {
    pub const ALL: [KernelSource; 3] = [Self::Exact, Self::Perturbative, Self::Ideal];

    pub fn name(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Perturbative => "perturbative",
            Self::Ideal => "ideal",
        }
    }
}

impl std::str::FromStr for KernelSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "perturbative" | "pert" => Ok(Self::Perturbative),
            "ideal" => Ok(Self::Ideal),
            other => Err(Error::InvalidArgument(format!("unknown kernel source '{other}'"))),
        }
    }
}

/// `L_θ - i T^{-1} (p A . - p' . A)`.
pub fn coupled_generator(run: &DamRun, p: f64, p_prime: f64) -> SuperOperator {
    let g = -I / run.coupling_time();
    let coupling = &run.left_a().scale(C64::from(p)) - &run.right_a().scale(C64::from(p_prime));
    &run.bundle().liouvillian + &coupling.scale(g)
}

/// `tr(e^{L_{p,p'} N T} ρ_θ)`.
pub fn trace_kernel(run: &DamRun, p: f64, p_prime: f64) -> Result<C64> {
    let generator = coupled_generator(run, p, p_prime);
    let propagator = mat_exp(&generator, run.total_time())?;
    let d = run.bundle().dim();
    let evolved = propagator.matrix() * vectorize(&run.bundle().rho);
    Ok((0..d).map(|k| evolved[vec_index(k, k, d)]).sum())
}

/// Kernel with the propagator expanded to second order in `1/T`.
pub fn perturbative_kernel(run: &DamRun, p: f64, p_prime: f64) -> C64 {
    let c = run.bundle().correlation_integral(run.observable());
    perturbative_from_parts(run, c, p, p_prime)
}

pub(crate) fn perturbative_from_parts(run: &DamRun, c: C64, p: f64, p_prime: f64) -> C64 {
    let n = run.multiplier();
    let t = run.coupling_time();
    let x = p - p_prime;
    let y = p + p_prime;
    let exponent = C64::new(
        n / t * x * x * c.re,
        -x * n * run.expectation() + n / t * x * y * c.im,
    );
    exponent.exp()
}

/// `e^{-i (p - p') N ⟨A⟩_θ}`.
pub fn ideal_kernel(run: &DamRun, p: f64, p_prime: f64) -> C64 {
    C64::new(0.0, -(p - p_prime) * run.ideal_shift()).exp()
}

/// Kernel evaluator with per-run constants hoisted.
pub(crate) struct KernelEval<'a> {
    run: &'a DamRun,
    source: KernelSource,
    correlation: C64,
}

impl<'a> KernelEval<'a> {
    pub(crate) fn new(run: &'a DamRun, source: KernelSource) -> Self {
        let correlation = match source {
            KernelSource::Perturbative => run.bundle().correlation_integral(run.observable()),
            _ => C64::new(0.0, 0.0),
        };
        Self {
            run,
            source,
            correlation,
        }
    }

    pub(crate) fn eval(&self, p: f64, p_prime: f64) -> Result<C64> {
        match self.source {
            KernelSource::Exact => trace_kernel(self.run, p, p_prime),
            KernelSource::Perturbative => {
                Ok(perturbative_from_parts(self.run, self.correlation, p, p_prime))
            }
            KernelSource::Ideal => Ok(ideal_kernel(self.run, p, p_prime)),
        }
    }
}

/// Non-adiabaticity
/// `Δ = (∬ |φ(p)|^2 |φ(p')|^2 |k(p,p') - e^{-i(p-p')⟨A⟩}|^2 dp dp')^{1/2}`
/// on the momentum grid. Requires `N = 1`.
pub fn nonadiabaticity(run: &DamRun) -> Result<f64> {
    if run.multiplier() != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "non-adiabaticity is defined at N = 1, got N = {}",
            run.multiplier()
        )));
    }
    let grid = run.apparatus().p_grid;
    let h = grid.step();
    let p = grid.values();
    let weight: Vec<f64> = p.iter().map(|&x| run.apparatus().wavefunction(x).powi(2)).collect();

    // |Δ(p, p')| is symmetric and vanishes on the diagonal, so sum i > j twice.
    let rows: Vec<f64> = (1..p.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut acc = 0.0;
            for j in 0..i {
                let k = trace_kernel(run, p[i], p[j])?;
                let dev = k - ideal_kernel(run, p[i], p[j]);
                acc += weight[i] * weight[j] * dev.norm_sqr();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total: f64 = rows.iter().sum();
    Ok((2.0 * total * h * h).sqrt())
}
