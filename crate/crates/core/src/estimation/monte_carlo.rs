//! Monte Carlo estimation experiments with per-trial random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{dam_error_formula, multiparam_error_formula, LinkFunction};
use crate::dam::{pointer_distribution, DamRun, KernelSource, PointerSampler};
use crate::error::{Error, Result};

/// Runs with a larger share of clamped estimates are rejected.
pub const MAX_CLAMPED_FRACTION: f64 = 0.01;
/// Two-sided confidence level of the reported interval.
pub const CONFIDENCE_LEVEL: f64 = 0.95;
const MIN_TRIALS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationReport {
    pub theta_true: Vec<f64>,
    /// Mean of the estimates over trials.
    pub theta_hat: Vec<f64>,
    pub predicted_error: f64,
    pub empirical_error: f64,
    /// Confidence interval of `empirical_error` at [`CONFIDENCE_LEVEL`].
    pub ci: (f64, f64),
    /// `N`
    pub multiplier: f64,
    /// `T`; infinite for the conventional baseline.
    pub coupling_time: f64,
    pub trials: usize,
    pub seed: u64,
    pub clamped: usize,
    pub notes: Vec<String>,
}

impl EstimationReport {
    pub fn relative_deviation(&self) -> f64 {
        self.empirical_error / self.predicted_error - 1.0
    }

    /// Largest `|mean(θ̂_i) - θ_i|`.
    pub fn bias(&self) -> f64 {
        self.theta_hat
            .iter()
            .zip(&self.theta_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Standard error of the mean estimate, `empirical_error / √trials`.
    pub fn standard_error(&self) -> f64 {
        self.empirical_error / (self.trials as f64).sqrt()
    }
}

/// Generator for trial `trial`: stream `trial` of the ChaCha8 key derived
/// from `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Interval for a standard deviation estimated from `dof` degrees of
/// freedom, from the χ² law of the sample variance.
pub fn chi_squared_interval(std: f64, dof: usize) -> Result<(f64, f64)> {
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let alpha = 1.0 - CONFIDENCE_LEVEL;
    let k = dof as f64;
    let upper_q = chi.inverse_cdf(1.0 - alpha / 2.0);
    let lower_q = chi.inverse_cdf(alpha / 2.0);
    Ok((std * (k / upper_q).sqrt(), std * (k / lower_q).sqrt()))
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_TRIALS} trials are required, got {trials}"
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn check_clamped(clamped: usize, trials: usize) -> Result<()> {
    if clamped as f64 > MAX_CLAMPED_FRACTION * trials as f64 {
        return Err(Error::Validation(format!(
            "{clamped} of {trials} readings fell outside the image of the link function"
        )));
    }
    Ok(())
}

/// Samples one reading per trial from the exact pointer distribution,
/// estimates `θ̂ = f^{-1}(q/N)` and reports the spread of `θ̂` against Eq. (8).
pub fn mc_dam_error(
    run: &DamRun,
    link: &LinkFunction,
    trials: usize,
    seed: u64,
) -> Result<EstimationReport> {
    check_trials(trials)?;
    let predicted = dam_error_formula(
        run.bundle(),
        run.observable(),
        link,
        run.apparatus().sigma,
        run.multiplier(),
        run.coupling_time(),
    )?;
    let dist = pointer_distribution(run, KernelSource::Exact)?;
    let sampler = PointerSampler::new(&dist);
    let n = run.multiplier();
    let estimates: Vec<(f64, bool)> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<(f64, bool)> {
            let q = sampler.sample(&mut trial_rng(seed, trial));
            let est = link.estimate(&[q], n)?;
            Ok((est.theta[0], est.clamped))
        })
        .collect::<Result<_>>()?;
    let clamped = estimates.iter().filter(|e| e.1).count();
    check_clamped(clamped, trials)?;
    let values: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    let std = sample_std(&values);
    let mut notes = Vec::new();
    if dist.normalization_defect > 0.0 {
        notes.push(format!("normalization defect {:.3e}", dist.normalization_defect));
    }
    Ok(EstimationReport {
        theta_true: run.theta().to_vec(),
        theta_hat: vec![mean(&values)],
        predicted_error: predicted,
        empirical_error: std,
        ci: chi_squared_interval(std, trials - 1)?,
        multiplier: n,
        coupling_time: run.coupling_time(),
        trials,
        seed,
        clamped,
        notes,
    })
}

/// One pointer per run (all runs share θ, N and T); readings are drawn
/// independently and the error is `√(mean ‖θ̂ - θ‖²)`.
pub fn mc_multiparam_error(
    runs: &[DamRun],
    link: &LinkFunction,
    trials: usize,
    seed: u64,
) -> Result<EstimationReport> {
    check_trials(trials)?;
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no pointer runs given".into()))?;
    if runs.len() != link.dim() {
        return Err(Error::DimensionMismatch {
            expected: link.dim(),
            found: runs.len(),
        });
    }
    let (n, t) = (first.multiplier(), first.coupling_time());
    if runs
        .iter()
        .any(|r| r.theta() != first.theta() || r.multiplier() != n || r.coupling_time() != t)
    {
        return Err(Error::InvalidArgument(
            "all pointers must share θ, N and T".into(),
        ));
    }
    let observables: Vec<_> = runs.iter().map(|r| r.observable().clone()).collect();
    let predicted = multiparam_error_formula(
        first.bundle(),
        &observables,
        link,
        first.apparatus().sigma,
        n,
        t,
    )?;
    let samplers: Vec<PointerSampler> = runs
        .iter()
        .map(|r| Ok(PointerSampler::new(&pointer_distribution(r, KernelSource::Exact)?)))
        .collect::<Result<_>>()?;
    let theta = first.theta().to_vec();
    let outcomes: Vec<(Vec<f64>, bool)> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<(Vec<f64>, bool)> {
            let mut rng = trial_rng(seed, trial);
            let q: Vec<f64> = samplers.iter().map(|s| s.sample(&mut rng)).collect();
            let est = link.estimate(&q, n)?;
            Ok((est.theta, est.clamped))
        })
        .collect::<Result<_>>()?;
    let clamped = outcomes.iter().filter(|o| o.1).count();
    check_clamped(clamped, trials)?;
    let squared: f64 = outcomes
        .iter()
        .map(|(est, _)| est.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    let rms = (squared / trials as f64).sqrt();
    let theta_hat: Vec<f64> = (0..theta.len())
        .map(|i| outcomes.iter().map(|o| o.0[i]).sum::<f64>() / trials as f64)
        .collect();
    Ok(EstimationReport {
        theta_true: theta,
        theta_hat,
        predicted_error: predicted,
        empirical_error: rms,
        ci: chi_squared_interval(rms, trials)?,
        multiplier: n,
        coupling_time: t,
        trials,
        seed,
        clamped,
        notes: vec!["interval treats the summed squared error as χ² with `trials` dof".into()],
    })
}

/// `N` projective measurements of `|0><0|` per trial; `θ̂` is the frequency
/// of outcome 1, compared against `√(θ(1-θ)/N)`.
pub fn conventional_povm_error(
    theta: f64,
    n: u64,
    trials: usize,
    seed: u64,
) -> Result<EstimationReport> {
    check_trials(trials)?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::OutOfDomain {
            index: 0,
            value: theta,
            lower: 0.0,
            upper: 1.0,
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let binomial = Binomial::new(n, theta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let estimates: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| binomial.sample(&mut trial_rng(seed, trial)) as f64 / n as f64)
        .collect();
    let std = sample_std(&estimates);
    Ok(EstimationReport {
        theta_true: vec![theta],
        theta_hat: vec![mean(&estimates)],
        predicted_error: (theta * (1.0 - theta) / n as f64).sqrt(),
        empirical_error: std,
        ci: chi_squared_interval(std, trials - 1)?,
        multiplier: n as f64,
        coupling_time: f64::INFINITY,
        trials,
        seed,
        clamped: 0,
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dam::ApparatusConfig;
    use crate::liouvillian::{gad_model, ParamDomain};
    use crate::operator::qubit;

    fn gad_run(t: f64, n: f64) -> DamRun {
        DamRun::new(
            gad_model(),
            &[0.3],
            qubit::ground_projector(),
            t,
            n,
            ApparatusConfig::new(0.1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn chi_squared_interval_brackets_estimate() {
        let (lo, hi) = chi_squared_interval(1.0, 3999).unwrap();
        assert!(lo < 1.0 && hi > 1.0);
        // half-width ≈ 1.96 / √(2·3999)
        assert!((hi - lo) / 2.0 > 0.02 && (hi - lo) / 2.0 < 0.024);
    }

    #[test]
    fn substreams_are_distinct_and_reproducible() {
        use rand::Rng;
        let a: u64 = trial_rng(5, 0).random();
        let b: u64 = trial_rng(5, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, trial_rng(5, 0).random::<u64>());
    }

    #[test]
    fn povm_baseline_values() {
        let r = conventional_povm_error(0.5, 100, 4000, 1).unwrap();
        assert_eq!(r.predicted_error, 0.05);
        assert!(r.relative_deviation().abs() < 0.05);
        assert!(conventional_povm_error(0.0, 10, 100, 1).is_err());
        assert!(conventional_povm_error(0.3, 10, 10, 1).is_err());
        let near_zero = conventional_povm_error(1e-9, 100, 200, 3).unwrap();
        assert!(near_zero.empirical_error < 1e-3);
    }

    #[test]
    fn dam_reports_are_deterministic() {
        let link = LinkFunction::identity(ParamDomain::unit_box(1));
        let run = gad_run(500.0, 10.0);
        let a = mc_dam_error(&run, &link, 100, 77).unwrap();
        let b = mc_dam_error(&run, &link, 100, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.empirical_error.to_bits(), b.empirical_error.to_bits());
    }

    #[test]
    fn dam_error_matches_formula() {
        let link = LinkFunction::identity(ParamDomain::unit_box(1));
        let r = mc_dam_error(&gad_run(500.0, 10.0), &link, 4000, 2).unwrap();
        assert!(r.relative_deviation().abs() < 0.05, "{r:?}");
        assert!(r.bias() < 3.0 * r.standard_error());
    }

    #[test]
    fn heavy_clamping_is_rejected() {
        // at N = 1 a σ = 0.1 pointer at θ = 0.02 often reads below zero
        let run = DamRun::new(
            gad_model(),
            &[0.02],
            qubit::ground_projector(),
            500.0,
            1.0,
            ApparatusConfig::new(0.1).unwrap(),
        )
        .unwrap();
        let link = LinkFunction::identity(ParamDomain::unit_box(1));
        assert!(matches!(mc_dam_error(&run, &link, 400, 1), Err(Error::Validation(_))));
    }
}
