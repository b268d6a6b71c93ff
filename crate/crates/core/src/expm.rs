//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham, "The scaling and squaring method for the matrix exponential
//! revisited", 2005).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operator::{CMatrix, C64};

// Largest 1-norms for which the degree 3, 5, 7, 9, 13 approximants reach
// double precision without scaling.
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 2^MAX_SQUARINGS * THETA_13 bounds the norms we accept.
const MAX_SQUARINGS: i32 = 60;

fn norm1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Returns `(U, V)` with the Padé approximant equal to `(V - U)^{-1} (V + U)`.
fn pade_low(a: &CMatrix, b: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let ident = CMatrix::identity(n, n);
    let a2 = a * a;
    let mut u = &ident * r(b[1]);
    let mut v = &ident * r(b[0]);
    let mut power = ident;
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        u += &power * r(b[2 * k + 1]);
        v += &power * r(b[2 * k]);
    }
    (a * u, v)
}

fn pade13(a: &CMatrix) -> (CMatrix, CMatrix) {
    let b = &B13;
    let n = a.nrows();
    let ident = CMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * r(b[13]) + &a4 * r(b[11]) + &a2 * r(b[9]);
    let u = a * (&a6 * inner_u
        + &a6 * r(b[7])
        + &a4 * r(b[5])
        + &a2 * r(b[3])
        + &ident * r(b[1]));
    let inner_v = &a6 * r(b[12]) + &a4 * r(b[10]) + &a2 * r(b[8]);
    let v = &a6 * inner_v + &a6 * r(b[6]) + &a4 * r(b[4]) + &a2 * r(b[2]) + &ident * r(b[0]);
    (u, v)
}

pub(crate) fn expm(a: &CMatrix) -> Result<CMatrix> {
    let norm = norm1(a);
    if !norm.is_finite() {
        return Err(Error::NonFinite);
    }
    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_low(a, &B3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_low(a, &B5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_low(a, &B7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = pade_low(a, &B9);
        (u, v, 0)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        if s > MAX_SQUARINGS {
            return Err(Error::ExpOverflow(norm));
        }
        let scaled = a * r(2f64.powi(-s));
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };

    let numer = &v + &u;
    let denom = v - u;
    let mut result: DMatrix<C64> = denom.lu().solve(&numer).ok_or(Error::Singular)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::ExpOverflow(norm));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor(a: &CMatrix, terms: usize) -> CMatrix {
        let n = a.nrows();
        let mut sum = CMatrix::identity(n, n);
        let mut term = CMatrix::identity(n, n);
        for k in 1..terms {
            term = &term * a / r(k as f64);
            sum += &term;
        }
        sum
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn matches_taylor_series_across_pade_degrees() {
        let base = CMatrix::from_fn(3, 3, |i, j| C64::new(0.3 * i as f64 - 0.2 * j as f64, 0.1 * (i + j) as f64 - 0.15));
        for scale in [1e-3, 0.05, 0.5, 1.5, 4.0, 20.0] {
            let a = &base * r(scale / norm1(&base));
            let expected = if scale > 5.0 {
                // e^{A} = (e^{A/64})^64 with an accurate Taylor inner step
                let mut e = taylor(&(&a / r(64.0)), 30);
                for _ in 0..6 {
                    e = &e * &e;
                }
                e
            } else {
                taylor(&a, 60)
            };
            let got = expm(&a).unwrap();
            assert!(max_diff(&got, &expected) < 1e-12 * scale.exp(), "scale {scale}");
        }
    }

    #[test]
    fn nilpotent_is_exact() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 1)] = r(7.0);
        let e = expm(&a).unwrap();
        assert!((e[(0, 1)] - r(7.0)).norm() < 1e-12);
        assert!((e[(0, 0)] - r(1.0)).norm() < 1e-14);
    }

    #[test]
    fn reports_overflow() {
        let a = CMatrix::from_element(2, 2, r(1e3));
        assert!(matches!(expm(&a), Err(Error::ExpOverflow(_))));
        let a = CMatrix::from_element(2, 2, r(1e30));
        assert!(matches!(expm(&a), Err(Error::ExpOverflow(_))));
    }
}
