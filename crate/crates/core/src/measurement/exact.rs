use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};

use crate::error::{Error, Result};
use crate::gaussian::{require_physical, CovMatrix, GaussianState, ESTIMATE_TOL};

use super::FilterSpec;

const ANGLES: usize = 512;

/// Population-level properties of the accepted ensemble: what an infinite
/// Monte Carlo run of the filter would reconstruct. Computed by polar
/// quadrature of the filtered heterodyne density.
#[derive(Debug, Clone)]
pub struct FilteredEnsemble {
    pub acceptance_rate: f64,
    /// Covariance matrix the reconstruction converges to, Alice first.
    pub cov: CovMatrix,
    /// Non-excess kurtosis of accepted `bob_x` and `bob_p`.
    pub kurtosis: [f64; 2],
    /// Skewness of accepted `bob_x` and `bob_p` (zero by symmetry).
    pub skewness: [f64; 2],
}

impl FilteredEnsemble {
    pub fn new(state: &GaussianState, filter: &FilterSpec) -> Result<Self> {
        filter.validate()?;
        state.require_zero_mean_1p1()?;
        require_physical(state.cov(), ESTIMATE_TOL)?;
        let (ai, bi) = state.quadratures_1p1();
        let s = |i: usize, j: usize| state.cov().get(i, j);
        let a = Matrix2::new(s(ai[0], ai[0]), s(ai[0], ai[1]), s(ai[1], ai[0]), s(ai[1], ai[1]));
        let b = Matrix2::new(s(bi[0], bi[0]), s(bi[0], bi[1]), s(bi[1], bi[0]), s(bi[1], bi[1]));
        let c = Matrix2::new(s(ai[0], bi[0]), s(ai[0], bi[1]), s(ai[1], bi[0]), s(ai[1], bi[1]));

        let h = (b + Matrix2::identity()) * 0.5;
        let q = h.try_inverse().ok_or(Error::NotPositiveDefinite { eigenvalue: 0.0 })?;
        let k = filter.exponent();
        let uc = filter.cutoff * filter.cutoff;
        let l = 2.0 * uc;
        let inside = (-k * uc).exp();

        let mut z = 0.0;
        let mut m2 = Matrix2::zeros();
        let mut m4 = [0.0; 2];
        for i in 0..ANGLES {
            let th = 2.0 * PI * i as f64 / ANGLES as f64;
            let (sn, cs) = th.sin_cos();
            let qq = cs * cs * q[(0, 0)] + 2.0 * cs * sn * q[(0, 1)] + sn * sn * q[(1, 1)];
            let radial = |p: u32| 0.5 * (inside * truncated_moment(p, 0.5 * (qq - k), l) + tail_moment(p, 0.5 * qq, l));
            z += radial(0);
            let r2 = radial(1);
            m2[(0, 0)] += r2 * cs * cs;
            m2[(0, 1)] += r2 * cs * sn;
            m2[(1, 1)] += r2 * sn * sn;
            let r4 = radial(2);
            m4[0] += r4 * cs.powi(4);
            m4[1] += r4 * sn.powi(4);
        }
        let norm = 2.0 * PI / ANGLES as f64 / (2.0 * PI * h.determinant().sqrt());
        z *= norm;
        m2[(1, 0)] = m2[(0, 1)];
        let m2 = m2 * (norm / z);
        let m4 = [m4[0] * norm / z, m4[1] * norm / z];

        let g = filter.gain;
        let r2 = std::f64::consts::SQRT_2;
        // Alice given the raw outcome: a = K h + noise, K = Cov(a, h) H⁻¹.
        let kf = c * q / r2;
        let bob = m2 * (2.0 / (g * g)) - Matrix2::identity();
        let cross = kf * m2 * (r2 / g);
        let alice = a - kf * h * kf.transpose() + kf * m2 * kf.transpose();

        let mut m = DMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = alice[(i, j)];
                m[(2 + i, 2 + j)] = bob[(i, j)];
                m[(i, 2 + j)] = cross[(i, j)];
                m[(2 + j, i)] = cross[(i, j)];
            }
        }
        Ok(Self {
            acceptance_rate: z.min(1.0),
            cov: CovMatrix::new(m)?,
            kurtosis: [m4[0] / (m2[(0, 0)] * m2[(0, 0)]), m4[1] / (m2[(1, 1)] * m2[(1, 1)])],
            skewness: [0.0, 0.0],
        })
    }
}

/// `∫₀ᴸ sᵖ e^{-a s} ds`.
fn truncated_moment(p: u32, a: f64, l: f64) -> f64 {
    let x = a * l;
    let pf = factorial(p);
    let phi = if x.abs() <= 2.0 {
        // Σ (-x)^m / (m! (p+1+m))
        let mut term = 1.0;
        let mut sum = 1.0 / (p + 1) as f64;
        let mut m = 1u32;
        loop {
            term *= -x / m as f64;
            let add = term / (p + 1 + m) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() || m > 200 {
                break;
            }
            m += 1;
        }
        sum
    } else {
        let mut partial = 0.0;
        let mut t = 1.0;
        for j in 0..=p {
            if j > 0 {
                t *= x / j as f64;
            }
            partial += t;
        }
        pf / x.powi(p as i32 + 1) * (1.0 - (-x).exp() * partial)
    };
    l.powi(p as i32 + 1) * phi
}

/// `∫ₗ^∞ sᵖ e^{-b s} ds`, `b > 0`.
fn tail_moment(p: u32, b: f64, l: f64) -> f64 {
    let pf = factorial(p);
    let mut sum = 0.0;
    let mut lj = 1.0;
    for j in 0..=p {
        if j > 0 {
            lj *= l;
        }
        sum += pf / factorial(j) * lj / b.powi((p - j + 1) as i32);
    }
    (-b * l).exp() * sum
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}
