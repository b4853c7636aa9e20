//! Monte Carlo emulation of measurement-based NLA.
//!
//! Alice measures `x` or `p` by homodyne detection; Bob measures both
//! quadratures by heterodyne detection (50:50 split with vacuum), so
//! `X_het = (x_B + x_v)/√2` and `P_het = (p_B - p_v)/√2`. The complex
//! outcome is `β = (X_het + i P_het)/√2`. Bob keeps a raw outcome `γ` with
//! probability [`acceptance_probability`] and rescales kept outcomes by
//! `1/g`.
//!
//! All sampling is split into fixed-size chunks, each with its own RNG
//! stream derived from `(seed, stream, chunk index)`, so results do not
//! depend on the number of worker threads.

mod batch;
mod direct;
mod exact;
mod moments;
mod reconstruct;
mod sampling;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

pub use batch::{QuadratureBatch, Record};
pub use direct::{sample_accepted, simulate_accepted};
pub use exact::FilteredEnsemble;
pub use moments::{moment_stats, MomentStats, QuadratureMoments};
pub use reconstruct::{reconstruct_covariance, Reconstruction, MIN_ACCEPTED};
pub use sampling::{post_select, sample_batch, simulate, SampleStats};

/// Records per chunk. Fixing this fixes every RNG stream.
pub const CHUNK_SIZE: usize = 1 << 16;

/// Heralding filter: gain `g ≥ 1` and cutoff `|β_c| > 0` in raw-outcome units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub gain: f64,
    pub cutoff: f64,
}

impl FilterSpec {
    pub fn new(gain: f64, cutoff: f64) -> Result<Self> {
        let f = Self { gain, cutoff };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain >= 1.0) || !self.gain.is_finite() {
            return Err(Error::OutOfRange {
                name: "gain",
                value: self.gain,
                reason: "must be finite and >= 1",
            });
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return Err(Error::OutOfRange {
                name: "cutoff",
                value: self.cutoff,
                reason: "must be finite and > 0",
            });
        }
        Ok(())
    }

    /// `1 - g⁻²`.
    pub fn exponent(&self) -> f64 {
        1.0 - 1.0 / (self.gain * self.gain)
    }
}

/// `exp((1 - g⁻²)(|β|² - |β_c|²))` inside the cutoff, 1 outside.
pub fn acceptance_probability(beta_magnitude: f64, filter: &FilterSpec) -> f64 {
    if beta_magnitude >= filter.cutoff {
        1.0
    } else {
        (filter.exponent() * (beta_magnitude * beta_magnitude - filter.cutoff * filter.cutoff)).exp()
    }
}

/// Alice's homodyne basis for one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    X,
    P,
}

impl Basis {
    pub fn index(self) -> usize {
        match self {
            Basis::X => 0,
            Basis::P => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::X => "X",
            Basis::P => "P",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" => Ok(Basis::X),
            "P" => Ok(Basis::P),
            other => Err(Error::Parse {
                line: 0,
                message: format!("alice_basis must be X or P, got {other:?}"),
            }),
        }
    }
}

/// How Alice picks her basis for each shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisSchedule {
    /// X on even record indices, P on odd ones.
    #[default]
    Alternating,
    /// Fair coin per record, drawn from the sample stream.
    Random,
}

impl FromStr for BasisSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alternating" => Ok(BasisSchedule::Alternating),
            "random" => Ok(BasisSchedule::Random),
            other => Err(Error::Parse {
                line: 0,
                message: format!("basis schedule must be alternating or random, got {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Samples = 1,
    Filter = 2,
    Direct = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn chunk_rng(seed: u64, stream: Stream, chunk: usize) -> Xoshiro256PlusPlus {
    let key = splitmix64(splitmix64(seed ^ splitmix64(stream as u64)) ^ chunk as u64);
    Xoshiro256PlusPlus::seed_from_u64(key)
}

pub(crate) fn chunk_count(records: usize) -> usize {
    records.div_ceil(CHUNK_SIZE)
}
