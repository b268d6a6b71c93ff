//! Link functions `f: θ ↦ (⟨A_1⟩_θ, ..., ⟨A_M⟩_θ)` and their inverses.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::liouvillian::ParamDomain;

pub type VectorFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
pub type MatrixFn = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync;

/// Relative step of the central differences, in units of the interval width.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

#[derive(Clone)]
pub struct LinkFunction {
    domain: ParamDomain,
    image: ParamDomain,
    forward: Arc<VectorFn>,
    inverse: Arc<VectorFn>,
    jacobian_inverse: Option<Arc<MatrixFn>>,
}

impl fmt::Debug for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkFunction")
            .field("domain", &self.domain)
            .field("image", &self.image)
            .field("analytic_jacobian", &self.jacobian_inverse.is_some())
            .finish()
    }
}

/// Estimate obtained from pointer readings.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub theta: Vec<f64>,
    /// The reading fell outside the image of `f` and was moved to its edge.
    pub clamped: bool,
}

impl LinkFunction {
    /// General link. `image` is the box that `forward` maps the domain onto.
    pub fn new(
        domain: ParamDomain,
        image: ParamDomain,
        forward: Arc<VectorFn>,
        inverse: Arc<VectorFn>,
    ) -> Result<Self> {
        if domain.dim() != image.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: image.dim(),
            });
        }
        Ok(Self {
            domain,
            image,
            forward,
            inverse,
            jacobian_inverse: None,
        })
    }

    pub fn with_jacobian_inverse(mut self, j: Arc<MatrixFn>) -> Self {
        self.jacobian_inverse = Some(j);
        self
    }

    /// `f(θ) = θ` on `domain`, as for GAD and its products with `A_i = |0><0|_i`.
    pub fn identity(domain: ParamDomain) -> Self {
        let m = domain.dim();
        let id: Arc<VectorFn> = Arc::new(|x: &[f64]| Ok(x.to_vec()));
        Self {
            image: domain.clone(),
            domain,
            forward: Arc::clone(&id),
            inverse: id,
            jacobian_inverse: Some(Arc::new(move |_: &[f64]| Ok(DMatrix::identity(m, m)))),
        }
    }

    /// Single-parameter link interpolated linearly through `(θ_k, f_k)`.
    /// Both columns must be strictly monotone.
    pub fn from_table(thetas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if thetas.len() != values.len() || thetas.len() < 2 {
            return Err(Error::InvalidArgument(
                "link table needs at least two (theta, value) rows of equal length".into(),
            ));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
        if !increasing(&thetas) {
            return Err(Error::InvalidArgument("link table theta column must increase".into()));
        }
        if !(increasing(&values) || decreasing(&values)) {
            return Err(Error::InvalidArgument("link table values must be strictly monotone".into()));
        }
        if thetas.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n = thetas.len();
        let domain = ParamDomain::new(vec![(thetas[0], thetas[n - 1])])?;
        let (lo, hi) = (values[0].min(values[n - 1]), values[0].max(values[n - 1]));
        let image = ParamDomain::new(vec![(lo, hi)])?;

        let (tx, vy) = (thetas.clone(), values.clone());
        let forward = move |x: &[f64]| Ok(vec![interpolate(&tx, &vy, x[0])]);
        // inverse interpolation needs increasing abscissae
        let (mut vx, mut ty) = (values, thetas);
        if vx[0] > vx[n - 1] {
            vx.reverse();
            ty.reverse();
        }
        let inverse = move |y: &[f64]| Ok(vec![interpolate(&vx, &ty, y[0])]);
        Self::new(domain, image, Arc::new(forward), Arc::new(inverse))
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &ParamDomain {
        &self.domain
    }

    pub fn image(&self) -> &ParamDomain {
        &self.image
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian_inverse.is_some()
    }

    pub fn forward(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta)?;
        (self.forward)(theta)
    }

    pub fn inverse(&self, expectations: &[f64]) -> Result<Vec<f64>> {
        self.check_len(expectations)?;
        (self.inverse)(expectations)
    }

    /// `∂f_i/∂θ_j` by Richardson-refined central differences.
    pub fn forward_jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.domain.check(theta)?;
        richardson_jacobian(&*self.forward, theta, &self.domain)
    }

    /// `J_{f^{-1}}` at `f(θ)`: analytic when supplied, otherwise a
    /// Richardson-refined central difference of the inverse.
    pub fn jacobian_inverse(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.domain.check(theta)?;
        if let Some(j) = &self.jacobian_inverse {
            return j(theta);
        }
        let y = self.forward(theta)?;
        richardson_jacobian(&*self.inverse, &y, &self.image)
    }

    /// `θ̂ = f^{-1}(q / N)`, with readings outside the image moved to its
    /// closest point.
    pub fn estimate(&self, readings: &[f64], n: f64) -> Result<Estimate> {
        self.check_len(readings)?;
        let scaled: Vec<f64> = readings.iter().map(|q| q / n).collect();
        let (inside, clamped_image) = self.image.clamp(&scaled);
        let raw = (self.inverse)(&inside)?;
        let (theta, clamped_domain) = self.domain.clamp(&raw);
        Ok(Estimate {
            theta,
            clamped: clamped_image || clamped_domain,
        })
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// `θ̂ = f^{-1}(q / N)`.
pub fn dam_estimate(readings: &[f64], n: f64, link: &LinkFunction) -> Result<Estimate> {
    link.estimate(readings, n)
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = (x - x0) / (x1 - x0);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

fn central_jacobian(f: &VectorFn, x: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
    let m = x.len();
    let mut jac = DMatrix::zeros(m, m);
    for (j, &h) in steps.iter().enumerate() {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let (fp, fm) = (f(&plus)?, f(&minus)?);
        if fp.len() != m || fm.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: fp.len(),
            });
        }
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn richardson_jacobian(f: &VectorFn, x: &[f64], scale: &ParamDomain) -> Result<DMatrix<f64>> {
    let steps: Vec<f64> = (0..x.len()).map(|i| FD_RELATIVE_STEP * scale.width(i)).collect();
    let half: Vec<f64> = steps.iter().map(|h| 0.5 * h).collect();
    let coarse = central_jacobian(f, x, &steps)?;
    let fine = central_jacobian(f, x, &half)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic_link() -> LinkFunction {
        // f(θ) = θ + θ³ on (0, 1), inverted by Newton
        let forward = |x: &[f64]| Ok(vec![x[0] + x[0].powi(3)]);
        let inverse = |y: &[f64]| {
            let mut t = y[0].clamp(0.0, 1.0);
            for _ in 0..60 {
                t -= (t + t.powi(3) - y[0]) / (1.0 + 3.0 * t * t);
            }
            Ok(vec![t])
        };
        LinkFunction::new(
            ParamDomain::unit_box(1),
            ParamDomain::new(vec![(0.0, 2.0)]).unwrap(),
            Arc::new(forward),
            Arc::new(inverse),
        )
        .unwrap()
    }

    #[test]
    fn identity_estimates() {
        let link = LinkFunction::identity(ParamDomain::unit_box(1));
        assert_eq!(dam_estimate(&[30.0], 100.0, &link).unwrap().theta, vec![0.3]);
        let two = LinkFunction::identity(ParamDomain::unit_box(2));
        let est = dam_estimate(&[20.0, 60.0], 100.0, &two).unwrap();
        assert!((est.theta[0] - 0.2).abs() < 1e-15 && (est.theta[1] - 0.6).abs() < 1e-15);
        assert!(!est.clamped);
    }

    #[test]
    fn out_of_image_reading_is_clamped() {
        let link = LinkFunction::identity(ParamDomain::unit_box(1));
        let est = dam_estimate(&[-0.4], 2.0, &link).unwrap();
        assert_eq!(est.theta, vec![0.0]);
        assert!(est.clamped);
        let est = dam_estimate(&[3.0], 2.0, &link).unwrap();
        assert_eq!(est.theta, vec![1.0]);
        assert!(est.clamped);
    }

    #[test]
    fn fd_jacobians_of_nonlinear_link() {
        let link = cubic_link();
        for t in [0.1, 0.4, 0.8] {
            let fwd = link.forward_jacobian(&[t]).unwrap()[(0, 0)];
            assert!((fwd - (1.0 + 3.0 * t * t)).abs() < 1e-9);
            let inv = link.jacobian_inverse(&[t]).unwrap()[(0, 0)];
            assert!((inv * fwd - 1.0).abs() < 1e-6);
            let back = link.inverse(&link.forward(&[t]).unwrap()).unwrap()[0];
            assert!((back - t).abs() < 1e-12);
        }
    }

    #[test]
    fn table_link_round_trip_and_slope() {
        let thetas: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let values: Vec<f64> = thetas.iter().map(|t| 1.0 - 0.5 * t).collect();
        let link = LinkFunction::from_table(thetas, values).unwrap();
        for t in [0.123, 0.5, 0.77] {
            let y = link.forward(&[t]).unwrap();
            assert!((y[0] - (1.0 - 0.5 * t)).abs() < 1e-14);
            assert!((link.inverse(&y).unwrap()[0] - t).abs() < 1e-12);
            assert!((link.jacobian_inverse(&[t]).unwrap()[(0, 0)] + 2.0).abs() < 1e-6);
        }
        assert!(LinkFunction::from_table(vec![0.0, 1.0, 0.5], vec![0.0, 1.0, 2.0]).is_err());
        assert!(LinkFunction::from_table(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.5]).is_err());
    }
}
