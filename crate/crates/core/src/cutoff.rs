//! Optimal-cutoff search: the smallest `|β_c|` on a grid whose accepted
//! ensemble looks Gaussian and reproduces the ideal-NLA steerability.

use std::str::FromStr;

use rayon::prelude::*;

use crate::channels::ChannelSpec;
use crate::error::{Error, Result};
use crate::gaussian::{check_physical_within, GaussianState, Party, ESTIMATE_TOL};
use crate::measurement::{simulate_accepted, BasisSchedule, FilterSpec, FilteredEnsemble, Reconstruction};
use crate::nla::amplify;
use crate::steering::{signed_unchecked, steerability, Direction};

/// How the accepted ensemble at each grid point is characterised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutoffEvaluator {
    /// Population moments by quadrature (no sampling noise).
    #[default]
    Exact,
    /// `sample_count` accepted records, reconstructed.
    MonteCarlo,
}

impl FromStr for CutoffEvaluator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "monte_carlo" => Ok(Self::MonteCarlo),
            other => Err(Error::Parse {
                line: 0,
                message: format!("cutoff evaluator must be exact or monte_carlo, got {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffCriteria {
    pub skew_tol: f64,
    pub kurt_tol: f64,
    /// Nats.
    pub steering_tol: f64,
    pub grid_step: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub sample_count: usize,
    pub evaluator: CutoffEvaluator,
}

impl Default for CutoffCriteria {
    fn default() -> Self {
        Self {
            skew_tol: 0.05,
            kurt_tol: 0.1,
            steering_tol: 0.004,
            grid_step: 0.25,
            grid_min: 1.0,
            grid_max: 10.0,
            sample_count: 1_000_000,
            evaluator: CutoffEvaluator::Exact,
        }
    }
}

impl CutoffCriteria {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("skew_tol", self.skew_tol),
            ("kurt_tol", self.kurt_tol),
            ("steering_tol", self.steering_tol),
            ("grid_step", self.grid_step),
            ("grid_min", self.grid_min),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    reason: "must be finite and positive",
                });
            }
        }
        if !(self.grid_max >= self.grid_min) {
            return Err(Error::OutOfRange {
                name: "grid_max",
                value: self.grid_max,
                reason: "must be >= grid_min",
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.grid_max - self.grid_min) / self.grid_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.grid_min + i as f64 * self.grid_step).collect()
    }

    /// Same criteria with all three tolerances scaled by `factor`.
    pub fn widened(&self, factor: f64) -> Self {
        Self {
            skew_tol: self.skew_tol * factor,
            kurt_tol: self.kurt_tol * factor,
            steering_tol: self.steering_tol * factor,
            ..*self
        }
    }
}

/// Diagnostics at one grid point. Pairs are `[bob_x, bob_p]` for the
/// moments and `[A->B, B->A]` for steering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffPoint {
    pub beta_c: f64,
    pub acceptance_rate: f64,
    pub skewness: [f64; 2],
    pub kurtosis: [f64; 2],
    pub steering: [f64; 2],
    pub steering_ideal: [f64; 2],
    /// Whether the ensemble's covariance matrix is bona fide.
    pub physical: bool,
}

impl CutoffPoint {
    pub fn passes(&self, c: &CutoffCriteria) -> bool {
        self.physical
            && (0..2).all(|i| {
                self.skewness[i].abs() < c.skew_tol
                    && (self.kurtosis[i] - 3.0).abs() < c.kurt_tol
                    && (self.steering[i] - self.steering_ideal[i]).abs() < c.steering_tol
            })
    }
}

#[derive(Debug, Clone)]
pub struct CutoffScan {
    pub selected: Option<f64>,
    pub trace: Vec<CutoffPoint>,
}

fn ideal_steering(state: &GaussianState, g: f64) -> Result<[f64; 2]> {
    let amplified = amplify(state, g, Party::Bob)?;
    Ok([
        steerability(&amplified, Direction::AliceToBob)?,
        steerability(&amplified, Direction::BobToAlice)?,
    ])
}

/// Characterises the accepted ensemble of `state` (already through the
/// channel) at one cutoff.
pub fn evaluate_cutoff(
    state: &GaussianState,
    g: f64,
    beta_c: f64,
    criteria: &CutoffCriteria,
    seed: u64,
) -> Result<CutoffPoint> {
    let filter = FilterSpec::new(g, beta_c)?;
    let exact = FilteredEnsemble::new(state, &filter)?;
    let steering_ideal = ideal_steering(state, g)?;
    let (cov, skewness, kurtosis) = match criteria.evaluator {
        CutoffEvaluator::Exact => (exact.cov.clone(), exact.skewness, exact.kurtosis),
        CutoffEvaluator::MonteCarlo => {
            let stats = simulate_accepted(state, &filter, criteria.sample_count, seed, BasisSchedule::Alternating)?;
            match Reconstruction::from_stats(&stats) {
                Ok(rec) => (
                    rec.cov,
                    [rec.bob_x.skewness, rec.bob_p.skewness],
                    [rec.bob_x.kurtosis, rec.bob_p.kurtosis],
                ),
                Err(Error::Unphysical { .. }) => {
                    return Ok(CutoffPoint {
                        beta_c,
                        acceptance_rate: exact.acceptance_rate,
                        skewness: [f64::NAN; 2],
                        kurtosis: [f64::NAN; 2],
                        steering: [f64::NAN; 2],
                        steering_ideal,
                        physical: false,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    };
    let physical = check_physical_within(&cov, ESTIMATE_TOL).physical;
    let filtered = GaussianState::bipartite(cov)?;
    let value = |d| -> Result<f64> {
        if physical {
            Ok(signed_unchecked(&filtered, d)?.max(0.0))
        } else {
            Ok(f64::NAN)
        }
    };
    Ok(CutoffPoint {
        beta_c,
        acceptance_rate: exact.acceptance_rate,
        skewness,
        kurtosis,
        steering: [value(Direction::AliceToBob)?, value(Direction::BobToAlice)?],
        steering_ideal,
        physical,
    })
}

/// Evaluates every grid point and records the smallest passing one.
pub fn scan_cutoffs(
    state: &GaussianState,
    channel: &ChannelSpec,
    g: f64,
    criteria: &CutoffCriteria,
    seed: u64,
) -> Result<CutoffScan> {
    criteria.validate()?;
    if !(g > 1.0) {
        return Err(Error::OutOfRange {
            name: "g",
            value: g,
            reason: "cutoff search needs g > 1",
        });
    }
    let out = channel.apply(state)?;
    let trace: Vec<CutoffPoint> = criteria
        .grid()
        .into_par_iter()
        .enumerate()
        .map(|(i, b)| evaluate_cutoff(&out, g, b, criteria, seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    let selected = trace.iter().find(|p| p.passes(criteria)).map(|p| p.beta_c);
    Ok(CutoffScan { selected, trace })
}

pub fn select_cutoff(
    state: &GaussianState,
    channel: &ChannelSpec,
    g: f64,
    criteria: &CutoffCriteria,
    seed: u64,
) -> Result<CutoffScan> {
    let scan = scan_cutoffs(state, channel, g, criteria, seed)?;
    if scan.selected.is_none() {
        return Err(Error::CutoffSearchFailed {
            lo: criteria.grid_min,
            hi: criteria.grid_max,
        });
    }
    Ok(scan)
}

/// One row of the reference cutoff table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub loss: f64,
    pub g: f64,
    pub beta_c: f64,
}

const TABLE_CSV: &str = include_str!("../data/table_si.csv");

/// The published optimal-cutoff table, loss 0..0.8 by g 1.05..1.25.
pub fn reference_table() -> Vec<TableEntry> {
    TABLE_CSV
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.trim().parse().expect("fixture")).collect();
            TableEntry {
                loss: v[0],
                g: v[1],
                beta_c: v[2],
            }
        })
        .collect()
}

/// Reference cutoff at the table cell nearest to `(loss, g)`.
pub fn reference_cutoff(loss: f64, g: f64) -> f64 {
    reference_table()
        .into_iter()
        .min_by(|a, b| {
            let da = ((a.loss - loss) / 0.2).powi(2) + ((a.g - g) / 0.05).powi(2);
            let db = ((b.loss - loss) / 0.2).powi(2) + ((b.g - g) / 0.05).powi(2);
            da.total_cmp(&db)
        })
        .map(|e| e.beta_c)
        .expect("fixture is not empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::tmss_standard;

    #[test]
    fn grid_layout() {
        let g = CutoffCriteria::default().grid();
        assert_eq!(g.len(), 37);
        assert_eq!(g[0], 1.0);
        assert_eq!(*g.last().unwrap(), 10.0);
    }

    #[test]
    fn reference_table_shape() {
        let t = reference_table();
        assert_eq!(t.len(), 25);
        assert_eq!(reference_cutoff(0.0, 1.2), 5.5);
        assert_eq!(reference_cutoff(0.8, 1.05), 3.0);
        assert_eq!(reference_cutoff(0.33, 1.2), 4.5);
        assert_eq!(reference_cutoff(1.0, 1.2), 3.75);
    }

    #[test]
    fn corner_cells() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let c = CutoffCriteria::default();
        let a = select_cutoff(&s, &ChannelSpec::lossy(0.0), 1.2, &c, 1).unwrap();
        assert!((a.selected.unwrap() - 5.5).abs() <= 0.5);
        let b = select_cutoff(&s, &ChannelSpec::lossy(0.8), 1.05, &c, 1).unwrap();
        assert!((b.selected.unwrap() - 3.0).abs() <= 0.5);
        let p = a.trace.iter().find(|p| Some(p.beta_c) == a.selected).unwrap();
        assert!(p.passes(&c));
        assert!(!a.trace[0].passes(&c));
    }

    #[test]
    fn impossible_criteria_fail_with_trace() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let c = CutoffCriteria {
            grid_max: 2.0,
            ..Default::default()
        };
        let r = select_cutoff(&s, &ChannelSpec::lossy(0.0), 1.2, &c, 1);
        assert!(matches!(r, Err(Error::CutoffSearchFailed { .. })));
        let scan = scan_cutoffs(&s, &ChannelSpec::lossy(0.0), 1.2, &c, 1).unwrap();
        assert_eq!(scan.trace.len(), 5);
        assert!(scan.selected.is_none());
    }

    #[test]
    fn validation() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let bad = CutoffCriteria {
            kurt_tol: 0.0,
            ..Default::default()
        };
        assert!(scan_cutoffs(&s, &ChannelSpec::lossy(0.0), 1.2, &bad, 1).is_err());
        assert!(scan_cutoffs(&s, &ChannelSpec::lossy(0.0), 1.0, &CutoffCriteria::default(), 1).is_err());
    }
}
