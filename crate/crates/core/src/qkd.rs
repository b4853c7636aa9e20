//! One-sided device-independent QKD key-rate bound (reverse reconciliation).

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::gaussian::{require_physical, tmss_standard, CovMatrix, GaussianState, Party, ESTIMATE_TOL};
use crate::measurement::{simulate, simulate_accepted, BasisSchedule, FilterSpec, FilteredEnsemble, Reconstruction};
use crate::nla::nla_single_mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateResult {
    /// Bits per accepted symbol; negative means no key from this bound.
    pub key_rate: f64,
    pub v_x_cond: f64,
    pub v_p_cond: f64,
}

fn require_two_mode(cov: &CovMatrix) -> Result<()> {
    if cov.dim() != 4 {
        return Err(Error::ModeCount {
            expected: "2 modes",
            got: cov.modes(),
        });
    }
    Ok(())
}

/// Conditional variances of Bob's heterodyne outcome given Alice's homodyne
/// outcome, `(B_ii + 1)/2 - (C_ii/√2)² / A_ii` for `i = x, p`. Alice is mode 0.
pub fn conditional_variances(cov: &CovMatrix) -> Result<(f64, f64)> {
    require_two_mode(cov)?;
    require_physical(cov, ESTIMATE_TOL)?;
    Ok(raw_conditional(cov))
}

fn raw_conditional(cov: &CovMatrix) -> (f64, f64) {
    let cond = |i: usize| {
        let c = cov.get(i, i + 2);
        0.5 * (cov.get(i + 2, i + 2) + 1.0) - 0.5 * c * c / cov.get(i, i)
    };
    (cond(0), cond(1))
}

fn rate(vx: f64, vp: f64) -> f64 {
    (2.0 / (E * (vx * vp).sqrt())).log2()
}

pub fn key_rate(cov: &CovMatrix) -> Result<KeyRateResult> {
    require_physical(cov, ESTIMATE_TOL)?;
    key_rate_unchecked(cov)
}

// No bona-fide check, for statistical estimates.
pub(crate) fn key_rate_unchecked(cov: &CovMatrix) -> Result<KeyRateResult> {
    require_two_mode(cov)?;
    let (vx, vp) = raw_conditional(cov);
    Ok(KeyRateResult {
        key_rate: rate(vx, vp),
        v_x_cond: vx,
        v_p_cond: vp,
    })
}

/// How a key-rate sweep obtains the distilled covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyRateMode {
    /// Ideal single-mode NLA, no cutoff.
    Analytic,
    /// Population limit of the truncated filter with cutoff `beta_c`,
    /// by quadrature.
    Truncated,
    /// Sample `samples` raw records, filter, reconstruct.
    MonteCarlo { samples: usize },
    /// Draw `samples` records from the accepted distribution directly.
    Accepted { samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRatePoint {
    pub g: f64,
    pub result: KeyRateResult,
    pub acceptance_rate: f64,
    /// Standard error of the key rate; `None` in analytic mode.
    pub se_key_rate: Option<f64>,
}

fn mc_point(g: f64, rec: &Reconstruction, acceptance_rate: f64) -> Result<KeyRatePoint> {
    let (result, se) = rec.key_rate()?;
    Ok(KeyRatePoint {
        g,
        result,
        acceptance_rate,
        se_key_rate: Some(se),
    })
}

/// Key rate after distillation with gain `g` and cutoff `beta_c` on Bob's side.
pub fn key_rate_at(state: &GaussianState, g: f64, beta_c: f64, mode: KeyRateMode, seed: u64) -> Result<KeyRatePoint> {
    let filter = FilterSpec::new(g, beta_c)?;
    match mode {
        KeyRateMode::Analytic => {
            let cov = nla_single_mode(&alice_first(state)?, g, Party::Bob)?;
            let acceptance_rate = FilteredEnsemble::new(state, &filter)?.acceptance_rate;
            Ok(KeyRatePoint {
                g,
                result: key_rate(&cov)?,
                acceptance_rate,
                se_key_rate: None,
            })
        }
        KeyRateMode::Truncated => {
            let ens = FilteredEnsemble::new(state, &filter)?;
            Ok(KeyRatePoint {
                g,
                result: key_rate(&ens.cov)?,
                acceptance_rate: ens.acceptance_rate,
                se_key_rate: None,
            })
        }
        KeyRateMode::MonteCarlo { samples } => {
            let stats = simulate(
                state,
                samples,
                seed,
                BasisSchedule::Alternating,
                Some((&filter, seed ^ 0x5a5a)),
            )?;
            let rec = Reconstruction::from_stats(&stats)?;
            mc_point(g, &rec, stats.acceptance_rate())
        }
        KeyRateMode::Accepted { samples } => {
            let stats = simulate_accepted(state, &filter, samples, seed, BasisSchedule::Alternating)?;
            let rec = Reconstruction::from_stats(&stats)?;
            let rate = FilteredEnsemble::new(state, &filter)?.acceptance_rate;
            mc_point(g, &rec, rate)
        }
    }
}

fn alice_first(state: &GaussianState) -> Result<CovMatrix> {
    let (a, b) = state.quadratures_1p1();
    let order = [a[0], a[1], b[0], b[1]];
    CovMatrix::new(nalgebra::DMatrix::from_fn(4, 4, |i, j| {
        state.cov().get(order[i], order[j])
    }))
}

pub fn key_rate_sweep(
    state: &GaussianState,
    beta_c: f64,
    gains: &[f64],
    mode: KeyRateMode,
    seed: u64,
) -> Result<Vec<KeyRatePoint>> {
    state.require_zero_mean_1p1()?;
    gains
        .iter()
        .enumerate()
        .map(|(i, &g)| key_rate_at(state, g, beta_c, mode, seed.wrapping_add(i as u64)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MinGain {
    pub g: f64,
    pub sweep: Vec<KeyRatePoint>,
}

/// Smallest grid gain with a positive key rate. The sweep stops at the
/// first positive point.
pub fn min_gain_for_key(
    state: &GaussianState,
    beta_c: f64,
    gains: &[f64],
    mode: KeyRateMode,
    seed: u64,
) -> Result<MinGain> {
    state.require_zero_mean_1p1()?;
    let mut sweep = Vec::new();
    for (i, &g) in gains.iter().enumerate() {
        let p = key_rate_at(state, g, beta_c, mode, seed.wrapping_add(i as u64))?;
        sweep.push(p);
        if p.result.key_rate > 0.0 {
            return Ok(MinGain { g, sweep });
        }
    }
    let best = sweep
        .iter()
        .max_by(|a, b| a.result.key_rate.total_cmp(&b.result.key_rate));
    Err(Error::NoPositiveKey {
        best_gain: best.map_or(f64::NAN, |p| p.g),
        best_key_rate: best.map_or(f64::NAN, |p| p.result.key_rate),
    })
}

/// Squeezing (dB, negative) at which a pure two-mode squeezed state has
/// zero key rate, found by bisection.
pub fn zero_key_squeezing_db() -> Result<f64> {
    let k = |db: f64| -> Result<f64> { Ok(key_rate(tmss_standard(db, -db)?.cov())?.key_rate) };
    let (mut lo, mut hi) = (-12.0, -0.5);
    if k(lo)? <= 0.0 || k(hi)? >= 0.0 {
        return Err(Error::NoPositiveKey {
            best_gain: 1.0,
            best_key_rate: k(lo)?,
        });
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if k(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_pair() {
        let cov = CovMatrix::identity(2);
        let (vx, vp) = conditional_variances(&cov).unwrap();
        assert_eq!((vx, vp), (1.0, 1.0));
        let k = key_rate(&cov).unwrap().key_rate;
        assert!((k - (1.0 - E.log2())).abs() < 1e-12);
        assert!((k + 0.44270).abs() < 1e-5);
    }

    #[test]
    fn standard_states() {
        let s = tmss_standard(-6.0, 6.0).unwrap();
        let r = key_rate(s.cov()).unwrap();
        assert!((r.v_x_cond - 2.0 / E).abs() < 1e-3);
        assert!((r.v_x_cond - r.v_p_cond).abs() < 1e-12);
        // The exact zero sits at -6.0109 dB, so -6 dB is just below it.
        assert!((r.key_rate + 1.0222e-3).abs() < 1e-6, "{}", r.key_rate);

        let m = tmss_standard(-4.2, 7.3).unwrap();
        let r = key_rate(m.cov()).unwrap();
        assert!((r.v_x_cond - 0.85506).abs() < 1e-5);
        assert!((r.key_rate + 0.2168).abs() < 1e-4);
    }

    #[test]
    fn zero_key_squeezing() {
        let db = zero_key_squeezing_db().unwrap();
        assert!((db + 6.01).abs() < 0.02, "{db}");
    }

    #[test]
    fn rejects_wrong_size() {
        assert!(matches!(
            key_rate(&CovMatrix::identity(3)),
            Err(Error::ModeCount { .. })
        ));
    }

    fn grid(hi: f64) -> Vec<f64> {
        let n = ((hi - 1.0) / 0.01).round() as usize;
        (0..=n).map(|i| 1.0 + 0.01 * i as f64).collect()
    }

    #[test]
    fn ideal_nla_never_reaches_positive_key() {
        // Bob's marginal caps the ideal gain at √((n+1)/(n-1)) ≈ 1.4376.
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let r = min_gain_for_key(&s, 4.5, &grid(1.43), KeyRateMode::Analytic, 1);
        match r {
            Err(Error::NoPositiveKey {
                best_gain,
                best_key_rate,
            }) => {
                assert!((best_gain - 1.43).abs() < 1e-9);
                assert!(best_key_rate < 0.0 && best_key_rate > -0.02);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            key_rate_at(&s, 1.44, 4.5, KeyRateMode::Analytic, 1),
            Err(Error::GainTooLarge { .. })
        ));
    }

    #[test]
    fn truncated_filter_min_gain() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let found = min_gain_for_key(&s, 4.5, &grid(1.5), KeyRateMode::Truncated, 1).unwrap();
        assert!((found.g - 1.4).abs() <= 0.1, "{}", found.g);
        assert!((found.sweep[0].result.key_rate + 0.2168).abs() < 1e-4);
        assert!((found.sweep[0].acceptance_rate - 1.0).abs() < 1e-12);
        assert!(found.sweep[0].se_key_rate.is_none());
    }

    #[test]
    fn pure_minus_six_db_needs_one_step() {
        let s = tmss_standard(-6.0, 6.0).unwrap();
        let found = min_gain_for_key(&s, 4.5, &grid(1.1), KeyRateMode::Analytic, 1).unwrap();
        assert!((found.g - 1.01).abs() < 1e-9, "{}", found.g);
    }

    #[test]
    fn no_key_reported() {
        let s = tmss_standard(-1.0, 1.5).unwrap();
        let r = min_gain_for_key(&s, 4.5, &[1.0, 1.01], KeyRateMode::Analytic, 1);
        assert!(matches!(r, Err(Error::NoPositiveKey { .. })));
    }
}
