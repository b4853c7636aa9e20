//! Gaussian steering monotone, region classification and loss thresholds.

use std::fmt;
use std::str::FromStr;

use crate::channels::ChannelSpec;
use crate::error::{Error, Result};
use crate::gaussian::{require_physical, schur_complement, symplectic_eigenvalues, GaussianState, Party, ESTIMATE_TOL};
use crate::nla::amplify;

/// Values above this many nats count as steerable.
pub const POSITIVE_TOL: f64 = 1e-9;

/// Absolute tolerance on loss thresholds found by bisection.
pub const THRESHOLD_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Alice steers Bob: conditions on Alice, keeps Bob.
    AliceToBob,
    /// Bob steers Alice.
    BobToAlice,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::AliceToBob, Direction::BobToAlice];

    pub fn label(self) -> &'static str {
        match self {
            Direction::AliceToBob => "A->B",
            Direction::BobToAlice => "B->A",
        }
    }

    /// The party whose block remains after conditioning.
    pub fn steered(self) -> Party {
        match self {
            Direction::AliceToBob => Party::Bob,
            Direction::BobToAlice => Party::Alice,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `-Σ ln ν̄ⱼ` over the conditional symplectic eigenvalues below 1, or
/// `-ln min ν̄ⱼ` (≤ 0) when none is below 1. Continuous, and positive
/// exactly when the state is steerable in `direction`.
pub fn steering_signed(state: &GaussianState, direction: Direction) -> Result<f64> {
    require_physical(state.cov(), ESTIMATE_TOL)?;
    signed_unchecked(state, direction)
}

// Same value without the bona-fide check, for statistical estimates.
pub(crate) fn signed_unchecked(state: &GaussianState, direction: Direction) -> Result<f64> {
    let schur = schur_complement(state, direction.steered())?;
    let nu = symplectic_eigenvalues(&schur)?;
    let below: f64 = nu.iter().filter(|&&v| v < 1.0).map(|v| -v.ln()).sum();
    if nu.iter().any(|&v| v < 1.0) {
        Ok(below)
    } else {
        Ok(-nu[0].ln())
    }
}

/// `G = max{0, -Σ_{ν̄ⱼ<1} ln ν̄ⱼ}` in nats.
pub fn steerability(state: &GaussianState, direction: Direction) -> Result<f64> {
    Ok(steering_signed(state, direction)?.max(0.0))
}

/// 1+1-mode closed form `max{0, ½ ln(det A_cond / det σ)}`.
pub fn steerability_1p1(state: &GaussianState, direction: Direction) -> Result<f64> {
    if !state.is_one_plus_one() {
        return Err(Error::ModeCount {
            expected: "1+1 mode",
            got: state.cov().modes(),
        });
    }
    require_physical(state.cov(), ESTIMATE_TOL)?;
    let cond = direction.steered().other();
    let det_cond = state.block(cond, cond).determinant();
    Ok((0.5 * (det_cond / state.cov().det()).ln()).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    TwoWay,
    OneWayAToB,
    OneWayBToA,
    None,
}

impl Region {
    pub fn from_values(g_a_to_b: f64, g_b_to_a: f64) -> Self {
        match (g_a_to_b > POSITIVE_TOL, g_b_to_a > POSITIVE_TOL) {
            (true, true) => Region::TwoWay,
            (true, false) => Region::OneWayAToB,
            (false, true) => Region::OneWayBToA,
            (false, false) => Region::None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Region::TwoWay => "two_way",
            Region::OneWayAToB => "one_way_a_to_b",
            Region::OneWayBToA => "one_way_b_to_a",
            Region::None => "none",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_way" => Ok(Region::TwoWay),
            "one_way_a_to_b" => Ok(Region::OneWayAToB),
            "one_way_b_to_a" => Ok(Region::OneWayBToA),
            "none" => Ok(Region::None),
            other => Err(Error::Parse {
                line: 0,
                message: format!("unknown region {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringResult {
    pub g_a_to_b: f64,
    pub g_b_to_a: f64,
    pub region: Region,
}

pub fn classify(state: &GaussianState) -> Result<SteeringResult> {
    let g_a_to_b = steerability(state, Direction::AliceToBob)?;
    let g_b_to_a = steerability(state, Direction::BobToAlice)?;
    Ok(SteeringResult {
        g_a_to_b,
        g_b_to_a,
        region: Region::from_values(g_a_to_b, g_b_to_a),
    })
}

/// Sends `state` through `channel` and, when `gain` is given, amplifies
/// Bob's mode with ideal NLA.
pub fn propagate(state: &GaussianState, channel: &ChannelSpec, gain: Option<f64>) -> Result<GaussianState> {
    let out = channel.apply(state)?;
    match gain {
        Some(g) => amplify(&out, g, Party::Bob),
        None => Ok(out),
    }
}

/// Loss at which the steerability in `direction` first vanishes, found by
/// bisection on the signed monotone. Returns 1 when steering survives every
/// loss below 1.
pub fn steering_loss_threshold(
    state: &GaussianState,
    channel_template: &ChannelSpec,
    direction: Direction,
    gain: Option<f64>,
) -> Result<f64> {
    let f = |loss: f64| -> Result<f64> {
        steering_signed(&propagate(state, &channel_template.with_loss(loss), gain)?, direction)
    };
    if f(0.0)? <= POSITIVE_TOL {
        return Err(Error::NoThreshold {
            direction: direction.label(),
        });
    }
    if f(1.0)? > POSITIVE_TOL {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > THRESHOLD_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
