//! Lossy and noisy Gaussian channels acting on one party's modes.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian::{quadrature_indices, CovMatrix, GaussianState, Party};

/// How the excess noise scales with channel loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Excess noise added independently of the loss.
    Fixed,
    /// Excess noise proportional to the loss, `ε · loss`.
    #[default]
    LossScaled,
}

impl NoiseModel {
    pub fn added_noise(self, excess_noise: f64, loss: f64) -> f64 {
        match self {
            NoiseModel::Fixed => excess_noise,
            NoiseModel::LossScaled => excess_noise * loss,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NoiseModel::Fixed => "fixed",
            NoiseModel::LossScaled => "loss_scaled",
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(NoiseModel::Fixed),
            "loss_scaled" => Ok(NoiseModel::LossScaled),
            other => Err(Error::UnknownNoiseModel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub loss: f64,
    /// Added noise variance in vacuum units.
    pub excess_noise: f64,
    pub noise_model: NoiseModel,
    pub target: Party,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            loss: 0.0,
            excess_noise: 0.0,
            noise_model: NoiseModel::LossScaled,
            target: Party::Bob,
        }
    }
}

impl ChannelSpec {
    pub fn lossy(loss: f64) -> Self {
        Self {
            loss,
            ..Self::default()
        }
    }

    pub fn noisy(loss: f64, excess_noise: f64, noise_model: NoiseModel) -> Self {
        Self {
            loss,
            excess_noise,
            noise_model,
            target: Party::Bob,
        }
    }

    pub fn with_loss(self, loss: f64) -> Self {
        Self { loss, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        check_loss(self.loss)?;
        if !(self.excess_noise >= 0.0) {
            return Err(Error::OutOfRange {
                name: "excess_noise",
                value: self.excess_noise,
                reason: "must be >= 0",
            });
        }
        Ok(())
    }

    pub fn apply(&self, state: &GaussianState) -> Result<GaussianState> {
        self.validate()?;
        let added = self.noise_model.added_noise(self.excess_noise, self.loss);
        transform(state, self.target, self.loss, added)
    }
}

fn check_loss(loss: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&loss) {
        return Err(Error::OutOfRange {
            name: "loss",
            value: loss,
            reason: "must lie in [0, 1]",
        });
    }
    Ok(())
}

/// Pure-loss beam splitter with transmissivity `1 - loss` on Bob's modes.
pub fn apply_lossy(state: &GaussianState, loss: f64) -> Result<GaussianState> {
    check_loss(loss)?;
    transform(state, Party::Bob, loss, 0.0)
}

/// Loss followed by isotropic excess noise on Bob's modes.
pub fn apply_noisy(state: &GaussianState, loss: f64, excess_noise: f64, noise_model: &str) -> Result<GaussianState> {
    let model: NoiseModel = noise_model.parse()?;
    ChannelSpec::noisy(loss, excess_noise, model).apply(state)
}

// σ' = X σ Xᵀ + Y with X = √T on the target quadratures and
// Y = ((1 - T) + added) I on the target block.
fn transform(state: &GaussianState, target: Party, loss: f64, added: f64) -> Result<GaussianState> {
    let t = 1.0 - loss;
    let sqrt_t = t.sqrt();
    let dim = state.cov().dim();
    let idx = quadrature_indices(state.partition().modes_of(target));
    let mut scale = vec![1.0; dim];
    for &i in &idx {
        scale[i] = sqrt_t;
    }
    let m = state.cov().matrix();
    let mut out = DMatrix::from_fn(dim, dim, |i, j| scale[i] * m[(i, j)] * scale[j]);
    for &i in &idx {
        out[(i, i)] += loss + added;
    }
    state.with_cov(CovMatrix::new(out)?)
}
