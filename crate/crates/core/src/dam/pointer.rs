//! Pointer distribution `Pr(q)` from the characteristic function of the
//! pointer reading, plus sampling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kernel::KernelEval;
use super::{DamRun, Grid, KernelSource, MAX_NORMALIZATION_DEFECT, NEGATIVE_DENSITY_TOL};
use crate::error::{Error, Result};
use crate::liouvillian::SteadyStateBundle;
use crate::operator::{Operator, C64};

/// Density of the pointer position after the coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerDistribution {
    pub source: KernelSource,
    pub q_grid: Grid,
    /// Clipped and renormalized so that `Σ density * step = 1`.
    pub density: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// `|Σ density * step - 1|` before renormalization.
    pub normalization_defect: f64,
    /// Upper bound on `|Im Pr(q)|` from the measured conjugate-symmetry
    /// defect of the kernel.
    pub imaginary_residue: f64,
    /// Mass removed by clipping negative values.
    pub clipped_mass: f64,
}

impl PointerDistribution {
    pub fn step(&self) -> f64 {
        self.q_grid.step()
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.q_grid.values()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `½ ∫ |Pr - Pr'| dq` for two distributions on the same grid.
    pub fn total_variation(&self, other: &PointerDistribution) -> Result<f64> {
        if self.q_grid != other.q_grid {
            return Err(Error::InvalidArgument(
                "total variation needs a shared position grid".into(),
            ));
        }
        Ok(0.5 * l1_distance(&self.density, &other.density) * self.step())
    }
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Position grid centred on `N ⟨A⟩_θ` spanning `q_half_width` predicted
/// standard deviations on either side.
pub(crate) fn position_grid(run: &DamRun) -> Result<Grid> {
    let ap = run.apparatus();
    let spread = run.predicted_variance().max(ap.sigma * ap.sigma).sqrt();
    let centre = run.ideal_shift();
    let w = ap.q_half_width * spread;
    Grid::new(centre - w, centre + w, ap.q_points)
}

/// `C(x_j) = ∫ φ(p) φ(p - x_j) k(p, p - x_j) dp` for lags `x_j = j h`,
/// `j = 0..K-1`.
fn characteristic_function(run: &DamRun, eval: &KernelEval<'_>) -> Result<Vec<C64>> {
    let grid = run.apparatus().p_grid;
    let h = grid.step();
    let p = grid.values();
    let phi: Vec<f64> = p.iter().map(|&x| run.apparatus().wavefunction(x)).collect();
    (0..p.len())
        .into_par_iter()
        .map(|j| -> Result<C64> {
            let mut acc = C64::new(0.0, 0.0);
            for i in j..p.len() {
                let w = phi[i] * phi[i - j];
                acc += eval.eval(p[i], p[i - j])? * w;
            }
            Ok(acc * h)
        })
        .collect()
}

/// Largest `|k(p', p) - conj k(p, p')|` over a sparse set of grid pairs.
fn symmetry_defect(run: &DamRun, eval: &KernelEval<'_>) -> Result<f64> {
    let p = run.apparatus().p_grid.values();
    let k = p.len();
    let stride = (k / 8).max(1);
    let mut worst: f64 = 0.0;
    for i in (0..k).step_by(stride) {
        for j in (0..i).step_by(stride) {
            let a = eval.eval(p[i], p[j])?;
            let b = eval.eval(p[j], p[i])?;
            worst = worst.max((b - a.conj()).norm());
        }
    }
    Ok(worst)
}

/// `Pr(q) = (1/2π) ∬ φ(p) φ(p') e^{i(p-p')q} k(p, p') dp dp'` evaluated as
/// the Fourier sum `(h/2π) [C_0 + 2 Re Σ_{j≥1} e^{i x_j q} C_j]`.
pub fn pointer_distribution(run: &DamRun, source: KernelSource) -> Result<PointerDistribution> {
    let ap = run.apparatus();
    ap.validate()?;
    let eval = KernelEval::new(run, source);
    let c = characteristic_function(run, &eval)?;
    let h = ap.p_grid.step();

    let q_grid = position_grid(run)?;
    let q = q_grid.values();
    let raw: Vec<f64> = q
        .par_iter()
        .map(|&qv| {
            let mut s = 0.0;
            for (j, cj) in c.iter().enumerate().skip(1) {
                let phase = C64::new(0.0, j as f64 * h * qv).exp();
                s += (phase * cj).re;
            }
            h / (2.0 * PI) * (c[0].re + 2.0 * s)
        })
        .collect();

    let dq = q_grid.step();
    let mass: f64 = raw.iter().sum::<f64>() * dq;
    let normalization_defect = (mass - 1.0).abs();
    if normalization_defect > MAX_NORMALIZATION_DEFECT {
        return Err(Error::GridTooCoarse(format!(
            "pointer density integrates to {mass:.6} ({} kernel)",
            source.name()
        )));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVE_DENSITY_TOL {
        return Err(Error::Validation(format!(
            "pointer density reaches {min:.3e} ({} kernel)",
            source.name()
        )));
    }
    let clipped_mass: f64 = raw.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * dq;
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum::<f64>() * dq;
    let density: Vec<f64> = clipped.iter().map(|v| v / total).collect();
    if normalization_defect > 0.0 || clipped_mass > 0.0 {
        log::debug!(
            "{} kernel: normalization defect {normalization_defect:.3e}, clipped {clipped_mass:.3e}",
            source.name()
        );
    }

    let mean = q.iter().zip(&density).map(|(x, w)| x * w).sum::<f64>() * dq;
    let variance = q
        .iter()
        .zip(&density)
        .map(|(x, w)| (x - mean) * (x - mean) * w)
        .sum::<f64>()
        * dq;

    let phi_mass: f64 = ap.p_grid.values().iter().map(|&p| ap.wavefunction(p)).sum::<f64>() * h;
    let imaginary_residue = symmetry_defect(run, &eval)? * phi_mass * phi_mass / (2.0 * PI);

    Ok(PointerDistribution {
        source,
        q_grid,
        density,
        mean,
        variance,
        normalization_defect,
        imaginary_residue,
        clipped_mass,
    })
}

/// `σ² - (2N/T) Re c + (N Im c / (T σ))²` with `c = tr[A S_θ(A ρ_θ)]`.
pub fn variance_closed_form(
    bundle: &SteadyStateBundle,
    a: &Operator,
    sigma: f64,
    n: f64,
    t: f64,
) -> f64 {
    let c = bundle.correlation_integral(a);
    let im = n * c.im / (t * sigma);
    sigma * sigma - 2.0 * n / t * c.re + im * im
}

/// Inverse-CDF sampler treating the density as constant on each grid cell.
#[derive(Clone, Debug)]
pub struct PointerSampler {
    lower_edge: f64,
    step: f64,
    /// Cumulative mass at the right edge of each cell.
    cdf: Vec<f64>,
}

impl PointerSampler {
    pub fn new(dist: &PointerDistribution) -> Self {
        let step = dist.step();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = dist
            .density
            .iter()
            .map(|w| {
                acc += w * step;
                acc
            })
            .collect();
        let total = acc;
        for v in &mut cdf {
            *v /= total;
        }
        Self {
            lower_edge: dist.q_grid.min - 0.5 * step,
            step,
            cdf,
        }
    }

    /// Maps `u ∈ [0, 1)` to a pointer reading.
    pub fn quantile(&self, u: f64) -> f64 {
        let cell = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let lo = if cell == 0 { 0.0 } else { self.cdf[cell - 1] };
        let width = self.cdf[cell] - lo;
        let frac = if width > 0.0 { ((u - lo) / width).clamp(0.0, 1.0) } else { 0.5 };
        self.lower_edge + (cell as f64 + frac) * self.step
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// CDF of the piecewise-constant density.
    pub fn cdf(&self, x: f64) -> f64 {
        let pos = (x - self.lower_edge) / self.step;
        if pos <= 0.0 {
            return 0.0;
        }
        let cell = pos.floor() as usize;
        if cell >= self.cdf.len() {
            return 1.0;
        }
        let lo = if cell == 0 { 0.0 } else { self.cdf[cell - 1] };
        lo + (pos - cell as f64) * (self.cdf[cell] - lo)
    }
}

/// `count` i.i.d. readings from `dist` on the ChaCha8 stream seeded by `seed`.
pub fn sample_pointer(dist: &PointerDistribution, seed: u64, count: usize) -> Vec<f64> {
    let sampler = PointerSampler::new(dist);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| sampler.sample(&mut rng)).collect()
}
