//! Ideal noiseless linear amplification `g^n` acting on covariance matrices.
//!
//! With gain matrices `G1`, `G2` built from the two gains, the amplified
//! covariance is `G2 (2 G1 - σ)⁻¹ G2 - 2 G1`. Amplifying only one mode is the
//! limit where the other gain goes to 1, which is taken numerically.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gaussian::{require_physical, CovMatrix, GaussianState, Party, PHYSICAL_TOL};

/// Gains applied to Alice's (`g1`) and Bob's (`g2`) mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPair {
    pub g1: f64,
    pub g2: f64,
}

impl GainPair {
    pub fn new(g1: f64, g2: f64) -> Result<Self> {
        for (name, g) in [("g1", g1), ("g2", g2)] {
            if !(g >= 1.0) || !g.is_finite() {
                return Err(Error::OutOfRange {
                    name,
                    value: g,
                    reason: "gain must be finite and >= 1",
                });
            }
        }
        Ok(Self { g1, g2 })
    }
}

/// `(G1, G2)` as 4x4 diagonal matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrices {
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
}

fn strict_gain(name: &'static str, g: f64) -> Result<()> {
    if !(g > 1.0) || !g.is_finite() {
        return Err(Error::OutOfRange {
            name,
            value: g,
            reason: "two-mode transform needs gain > 1",
        });
    }
    Ok(())
}

pub fn build_gain_matrices(gains: GainPair) -> Result<GainMatrices> {
    strict_gain("g1", gains.g1)?;
    strict_gain("g2", gains.g2)?;
    let (a, c) = gain_coefficients(gains.g1);
    let (b, d) = gain_coefficients(gains.g2);
    Ok(GainMatrices {
        g1: DMatrix::from_diagonal(&DVector::from_vec(vec![a, a, b, b])),
        g2: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 * c, 2.0 * c, 2.0 * d, 2.0 * d])),
    })
}

// ((g²+1)/(2(g²-1)), g/(1-g²))
fn gain_coefficients(g: f64) -> (f64, f64) {
    let g2m1 = (g - 1.0) * (g + 1.0);
    ((g * g + 1.0) / (2.0 * g2m1), -g / g2m1)
}

fn require_two_mode(cov: &CovMatrix) -> Result<()> {
    if cov.dim() != 4 {
        return Err(Error::ModeCount {
            expected: "two-mode",
            got: cov.modes(),
        });
    }
    Ok(())
}

/// Amplifies both modes of a two-mode covariance matrix (Alice = mode 0).
pub fn nla_cov_two_mode(cov: &CovMatrix, gains: GainPair) -> Result<CovMatrix> {
    let out = two_mode_raw(cov, gains)?;
    require_physical(&out, PHYSICAL_TOL)?;
    Ok(out)
}

fn two_mode_raw(cov: &CovMatrix, gains: GainPair) -> Result<CovMatrix> {
    require_two_mode(cov)?;
    let g = build_gain_matrices(gains)?;
    let m = &g.g1 * 2.0 - cov.matrix();
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::GainTooLarge { eigenvalue: min });
    }
    let inv =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();
    let out = &g.g2 * inv * &g.g2 - &g.g1 * 2.0;
    CovMatrix::new((&out + out.transpose()) * 0.5)
}

const LIMIT_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Physicality slack for extrapolated output; pure states at large gain
/// carry a few 1e-9 of extrapolation residue.
const EXTRAPOLATION_TOL: f64 = 1e-8;

/// Amplifies only `side`'s mode by `g`. The other gain is sent to 1 by
/// evaluating at `1 + h` for `h = 1e-4, 1e-5, 1e-6` and Richardson
/// extrapolating to `h = 0`.
pub fn nla_single_mode(cov: &CovMatrix, g: f64, side: Party) -> Result<CovMatrix> {
    require_two_mode(cov)?;
    if !(g >= 1.0) || !g.is_finite() {
        return Err(Error::OutOfRange {
            name: "g",
            value: g,
            reason: "gain must be finite and >= 1",
        });
    }
    if g == 1.0 {
        return Ok(cov.clone());
    }
    let eval = |h: f64| -> Result<DMatrix<f64>> {
        let gains = match side {
            Party::Alice => GainPair { g1: g, g2: 1.0 + h },
            Party::Bob => GainPair { g1: 1.0 + h, g2: g },
        };
        Ok(two_mode_raw(cov, gains)?.into_inner())
    };
    let f1 = eval(LIMIT_STEPS[0])?;
    let f2 = eval(LIMIT_STEPS[1])?;
    let f3 = eval(LIMIT_STEPS[2])?;

    let d1 = (&f1 - &f2).amax();
    let d2 = (&f2 - &f3).amax();
    let floor = 1e-9 * f3.amax().max(1.0);
    if d1 > floor && d2 * 5.0 > d1 {
        return Err(Error::LimitNotConverged { first: d1, second: d2 });
    }

    // Steps shrink by 10: eliminate the O(h) and then the O(h²) term.
    let r12 = (&f2 * 10.0 - &f1) / 9.0;
    let r23 = (&f3 * 10.0 - &f2) / 9.0;
    let limit = (r23 * 100.0 - r12) / 99.0;
    let out = CovMatrix::new((&limit + limit.transpose()) * 0.5)?;
    require_physical(&out, EXTRAPOLATION_TOL)?;
    Ok(out)
}

/// State-level wrapper around [`nla_single_mode`]. Only zero-mean 1+1
/// states are accepted; the amplified mean of a zero-mean state is zero.
pub fn amplify(state: &GaussianState, g: f64, side: Party) -> Result<GaussianState> {
    state.require_zero_mean_1p1()?;
    let ordered = to_alice_first(state)?;
    let out = nla_single_mode(&ordered, g, side)?;
    state.with_cov(from_alice_first(state, &out)?)
}

// The transform assumes Alice is mode 0; reorder if the partition differs.
fn to_alice_first(state: &GaussianState) -> Result<CovMatrix> {
    let (a, b) = state.quadratures_1p1();
    let idx = [a[0], a[1], b[0], b[1]];
    let m = state.cov().matrix();
    CovMatrix::new(DMatrix::from_fn(4, 4, |i, j| m[(idx[i], idx[j])]))
}

fn from_alice_first(state: &GaussianState, cov: &CovMatrix) -> Result<CovMatrix> {
    let (a, b) = state.quadratures_1p1();
    let idx = [a[0], a[1], b[0], b[1]];
    let mut out = DMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            out[(idx[i], idx[j])] = cov.get(i, j);
        }
    }
    CovMatrix::new(out)
}
