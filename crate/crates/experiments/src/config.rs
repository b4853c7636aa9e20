//! Experiment configuration: TOML file, then `STEERDIST_SECTION__KEY`
//! environment overrides, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use steerdist_core::cutoff::{CutoffCriteria, CutoffEvaluator};
use steerdist_core::measurement::{FilterSpec, MIN_ACCEPTED};
use steerdist_core::{tmss_standard, ChannelSpec, GaussianState, NoiseModel};

pub const ENV_PREFIX: &str = "STEERDIST_";

/// Sample count used by `--full`.
pub const FULL_SAMPLES: usize = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Analytic,
    MonteCarlo,
    Both,
}

impl Mode {
    pub fn analytic(self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    pub fn monte_carlo(self) -> bool {
        matches!(self, Mode::MonteCarlo | Mode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffSource {
    /// Nearest cell of the reference table.
    Table,
    /// Fresh cutoff search per grid point.
    Search,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateConfig {
    pub squeeze_db: f64,
    pub antisqueeze_db: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self {
            squeeze_db: -4.2,
            antisqueeze_db: 7.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Only used where the command has no loss axis (fig4, sample).
    pub loss: f64,
    pub excess_noise: f64,
    pub noise_model: String,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            loss: 0.0,
            excess_noise: 0.12,
            noise_model: "loss_scaled".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub gain: f64,
    /// Fixed cutoff for fig4 and ingest.
    pub cutoff: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { gain: 1.2, cutoff: 4.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub loss_min: Option<f64>,
    pub loss_max: Option<f64>,
    pub loss_step: Option<f64>,
    pub g_min: Option<f64>,
    pub g_max: Option<f64>,
    pub g_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub samples: usize,
    pub seed: u64,
    /// 0 lets rayon decide.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Analytic,
            samples: 1_000_000,
            seed: 1,
            threads: 0,
            output_dir: PathBuf::from("out"),
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutoffConfig {
    pub source: CutoffSource,
    pub evaluator: String,
    pub skew_tol: f64,
    pub kurt_tol: f64,
    pub steering_tol: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_step: f64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        let c = CutoffCriteria::default();
        Self {
            source: CutoffSource::Table,
            evaluator: "exact".into(),
            skew_tol: c.skew_tol,
            kurt_tol: c.kurt_tol,
            steering_tol: c.steering_tol,
            grid_min: c.grid_min,
            grid_max: c.grid_max,
            grid_step: c.grid_step,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub state: StateConfig,
    pub channel: ChannelConfig,
    pub filter: FilterConfig,
    pub sweep: SweepConfig,
    pub run: RunConfig,
    pub cutoff: CutoffConfig,
}

/// Inclusive grid `min, min + step, ..., ≤ max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn values(&self, name: &str) -> Result<Vec<f64>, ConfigError> {
        let Range { min, max, step } = *self;
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(bad(format!("{name} grid must be finite")));
        }
        if !(step > 0.0) {
            return Err(bad(format!("{name}_step must be positive, got {step}")));
        }
        if max < min {
            return Err(bad(format!("{name} grid is empty: max {max} < min {min}")));
        }
        let n = ((max - min) / step + 1e-9).floor() as usize;
        if n > 1_000_000 {
            return Err(bad(format!("{name} grid has more than 10^6 points")));
        }
        // Rounded so printed grid values stay short.
        Ok((0..=n).map(|i| ((min + i as f64 * step) * 1e9).round() / 1e9).collect())
    }
}

impl Config {
    /// Reads `path` (if any) and applies environment overrides from `env`.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| bad(format!("reading {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| bad(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        apply_env(&mut table, env)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| bad(e.message().to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.state()?;
        self.noise_model()?;
        self.evaluator()?;
        if !(0.0..=1.0).contains(&self.channel.loss) {
            return Err(bad(format!(
                "channel.loss must lie in [0, 1], got {}",
                self.channel.loss
            )));
        }
        if !(self.channel.excess_noise >= 0.0) {
            return Err(bad("channel.excess_noise must be >= 0"));
        }
        FilterSpec::new(self.filter.gain, self.filter.cutoff).map_err(|e| bad(format!("filter: {e}")))?;
        self.criteria()?.validate().map_err(|e| bad(format!("cutoff: {e}")))?;
        if self.run.samples == 0 {
            return Err(bad("run.samples must be positive"));
        }
        if self.run.mode.monte_carlo() && (self.run.samples as u64) < MIN_ACCEPTED {
            return Err(bad(format!(
                "run.samples must be at least {MIN_ACCEPTED} in monte_carlo mode, got {}",
                self.run.samples
            )));
        }
        Ok(())
    }

    pub fn state(&self) -> Result<GaussianState, ConfigError> {
        tmss_standard(self.state.squeeze_db, self.state.antisqueeze_db).map_err(|e| bad(format!("state: {e}")))
    }

    pub fn noise_model(&self) -> Result<NoiseModel, ConfigError> {
        self.channel
            .noise_model
            .parse()
            .map_err(|e| bad(format!("channel.noise_model: {e}")))
    }

    pub fn evaluator(&self) -> Result<CutoffEvaluator, ConfigError> {
        self.cutoff.evaluator.parse().map_err(|_| {
            bad(format!(
                "cutoff.evaluator must be exact or monte_carlo, got {:?}",
                self.cutoff.evaluator
            ))
        })
    }

    /// Noisy channel template at zero loss.
    pub fn noisy_channel(&self) -> Result<ChannelSpec, ConfigError> {
        Ok(ChannelSpec::noisy(0.0, self.channel.excess_noise, self.noise_model()?))
    }

    pub fn criteria(&self) -> Result<CutoffCriteria, ConfigError> {
        let c = &self.cutoff;
        Ok(CutoffCriteria {
            skew_tol: c.skew_tol,
            kurt_tol: c.kurt_tol,
            steering_tol: c.steering_tol,
            grid_step: c.grid_step,
            grid_min: c.grid_min,
            grid_max: c.grid_max,
            sample_count: self.run.samples,
            evaluator: self.evaluator()?,
        })
    }

    pub fn loss_grid(&self, default: Range) -> Result<Vec<f64>, ConfigError> {
        let s = &self.sweep;
        let r = Range::new(
            s.loss_min.unwrap_or(default.min),
            s.loss_max.unwrap_or(default.max),
            s.loss_step.unwrap_or(default.step),
        );
        let v = r.values("loss")?;
        if v.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(bad("loss grid must lie in [0, 1]"));
        }
        Ok(v)
    }

    pub fn gain_grid(&self, default: Range) -> Result<Vec<f64>, ConfigError> {
        let s = &self.sweep;
        let r = Range::new(
            s.g_min.unwrap_or(default.min),
            s.g_max.unwrap_or(default.max),
            s.g_step.unwrap_or(default.step),
        );
        let v = r.values("g")?;
        if v[0] < 1.0 {
            return Err(bad(format!("g grid must start at >= 1, got {}", v[0])));
        }
        Ok(v)
    }
}

/// `STEERDIST_RUN__SAMPLES=1000` sets `run.samples`. Values are read as
/// TOML literals, falling back to plain strings.
fn apply_env<I>(table: &mut toml::Table, env: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (name, raw) in env {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let Some((section, key)) = rest.split_once("__") else {
            return Err(bad(format!("{name}: expected {ENV_PREFIX}SECTION__KEY")));
        };
        let (section, key) = (section.to_ascii_lowercase(), key.to_ascii_lowercase());
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(raw));
        let entry = table
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key, value);
            }
            _ => return Err(bad(format!("{section} is not a section"))),
        }
    }
    Ok(())
}
