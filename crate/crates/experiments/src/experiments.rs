//! One function per figure or table. Each returns the CSV table; writing
//! and rendering live in the CLI.

use std::path::Path;

use rayon::prelude::*;
use steerdist_core::cutoff::{reference_cutoff, scan_cutoffs};
use steerdist_core::measurement::{
    simulate, simulate_accepted, BasisSchedule, FilterSpec, FilteredEnsemble, QuadratureBatch, Reconstruction,
    MIN_ACCEPTED,
};
use steerdist_core::qkd::{key_rate_at, KeyRateMode, KeyRatePoint};
use steerdist_core::steering::{propagate, steerability};
use steerdist_core::{classify, tmss_standard, ChannelSpec, Direction, Error, GaussianState};

use crate::config::{Config, ConfigError, CutoffSource, Mode, Range, RunConfig};
use crate::table::{Cell, Table};
use crate::RunError;

pub const FIG3_LOSSES: Range = Range::new(0.0, 1.0, 0.01);
pub const FIG3_LOSSES_MC: Range = Range::new(0.0, 1.0, 0.05);
pub const REGION_GAINS: Range = Range::new(1.0, 1.3, 0.01);
pub const REGION_LOSSES: Range = Range::new(0.0, 1.0, 0.01);
pub const FIG4_GAINS: Range = Range::new(1.0, 1.5, 0.01);
pub const TABLE_LOSSES: Range = Range::new(0.0, 0.8, 0.2);
pub const TABLE_GAINS: Range = Range::new(1.05, 1.25, 0.05);

const DIRECTIONS: [Direction; 2] = [Direction::AliceToBob, Direction::BobToAlice];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fig3Variant {
    Lossy,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Appendix {
    FigS1,
    FigS2,
    FigS4,
    TableS1,
}

fn point_seed(seed: u64, index: usize, stream: u64) -> u64 {
    seed.wrapping_add(4 * index as u64 + stream)
}

/// Unphysical or unnormalizable points become missing cells instead of
/// aborting a sweep.
fn or_missing<T>(r: steerdist_core::Result<T>) -> steerdist_core::Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Unphysical { .. } | Error::GainTooLarge { .. } | Error::DeterminantBelowVacuum { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn cutoff_at(cfg: &Config, state: &GaussianState, channel: &ChannelSpec, g: f64, seed: u64) -> Result<f64, RunError> {
    match cfg.cutoff.source {
        CutoffSource::Table => Ok(reference_cutoff(channel.loss, g)),
        CutoffSource::Search => {
            let scan = scan_cutoffs(state, channel, g, &cfg.criteria()?, seed)?;
            Ok(scan.selected.unwrap_or(f64::NAN))
        }
    }
}

fn both_directions(state: &GaussianState) -> steerdist_core::Result<[f64; 2]> {
    Ok([
        steerability(state, Direction::AliceToBob)?,
        steerability(state, Direction::BobToAlice)?,
    ])
}

fn mc_steering(rec: Option<Reconstruction>) -> steerdist_core::Result<[(f64, f64); 2]> {
    match rec {
        Some(rec) => Ok([rec.steering(DIRECTIONS[0])?, rec.steering(DIRECTIONS[1])?]),
        None => Ok([(f64::NAN, f64::NAN); 2]),
    }
}

/// Accepted-ensemble estimate equivalent to heralding `raw` records:
/// draws `round(raw · p_acc)` accepted records directly. `None` when that
/// is below the reconstruction minimum or the estimate is unphysical.
pub fn heralded_reconstruction(
    state: &GaussianState,
    filter: &FilterSpec,
    raw: usize,
    seed: u64,
) -> steerdist_core::Result<Option<Reconstruction>> {
    let rate = FilteredEnsemble::new(state, filter)?.acceptance_rate;
    let n = (raw as f64 * rate).round() as usize;
    if (n as u64) < MIN_ACCEPTED {
        return Ok(None);
    }
    let mut stats = simulate_accepted(state, filter, n, seed, BasisSchedule::Alternating)?;
    stats.records = raw as u64;
    or_missing(Reconstruction::from_stats(&stats))
}

fn steering_header(mode: Mode, with_acceptance: bool) -> Vec<String> {
    let base = ["g_ab_raw", "g_ba_raw", "g_ab_nla", "g_ba_nla"];
    let mut h = vec!["loss".to_string()];
    h.extend(base.iter().map(|s| s.to_string()));
    if with_acceptance {
        h.push("acceptance_rate".into());
        h.push("beta_c".into());
    }
    if mode == Mode::Both {
        h.extend(base.iter().map(|s| format!("mc_{s}")));
    }
    if mode.monte_carlo() {
        h.extend(base.iter().map(|s| format!("se_{s}")));
    }
    h
}

/// Steerability versus loss, with and without NLA at `filter.gain`.
pub fn fig3(variant: Fig3Variant, cfg: &Config) -> Result<Table, RunError> {
    cfg.validate()?;
    let channel = match variant {
        Fig3Variant::Lossy => ChannelSpec::lossy(0.0),
        Fig3Variant::Noisy => {
            if !(cfg.channel.excess_noise > 0.0) {
                return Err(RunError::Config(ConfigError(
                    "fig3b needs channel.excess_noise > 0".into(),
                )));
            }
            cfg.noisy_channel()?
        }
    };
    let default = if cfg.run.mode.monte_carlo() {
        FIG3_LOSSES_MC
    } else {
        FIG3_LOSSES
    };
    steering_sweep(&cfg.state()?, &channel, cfg, &cfg.loss_grid(default)?, true)
}

fn steering_sweep(
    state: &GaussianState,
    channel: &ChannelSpec,
    cfg: &Config,
    losses: &[f64],
    with_acceptance: bool,
) -> Result<Table, RunError> {
    let mode = cfg.run.mode;
    let g = cfg.filter.gain;
    let samples = cfg.run.samples;
    let seed = cfg.run.seed;
    let rows: Vec<Vec<Cell>> = losses
        .par_iter()
        .enumerate()
        .map(|(i, &loss)| -> Result<Vec<Cell>, RunError> {
            let ch = channel.with_loss(loss);
            let out = ch.apply(state)?;
            let beta_c = if with_acceptance || mode.monte_carlo() {
                cutoff_at(cfg, state, &ch, g, point_seed(seed, i, 2))?
            } else {
                f64::NAN
            };
            let mut analytic = [f64::NAN; 4];
            if mode.analytic() {
                let raw = both_directions(&out)?;
                let nla = match or_missing(propagate(state, &ch, Some(g)))? {
                    Some(s) => both_directions(&s)?,
                    None => [f64::NAN; 2],
                };
                analytic = [raw[0], raw[1], nla[0], nla[1]];
            }
            let mut mc = [(f64::NAN, f64::NAN); 4];
            if mode.monte_carlo() {
                let stats = simulate(&out, samples, point_seed(seed, i, 0), BasisSchedule::Alternating, None)?;
                let raw = mc_steering(or_missing(Reconstruction::from_stats(&stats))?)?;
                let nla = if beta_c.is_nan() {
                    [(f64::NAN, f64::NAN); 2]
                } else {
                    let filter = FilterSpec::new(g, beta_c)?;
                    mc_steering(heralded_reconstruction(&out, &filter, samples, point_seed(seed, i, 1))?)?
                };
                mc = [raw[0], raw[1], nla[0], nla[1]];
            }

            let mut row: Vec<Cell> = vec![loss.into()];
            let main = if mode.analytic() { analytic } else { mc.map(|v| v.0) };
            row.extend(main.iter().map(|&v| Cell::from(v)));
            if with_acceptance {
                let rate = if beta_c.is_nan() {
                    f64::NAN
                } else {
                    FilteredEnsemble::new(&out, &FilterSpec::new(g, beta_c)?)?.acceptance_rate
                };
                row.push(rate.into());
                row.push(beta_c.into());
            }
            if mode == Mode::Both {
                row.extend(mc.iter().map(|v| Cell::from(v.0)));
            }
            if mode.monte_carlo() {
                row.extend(mc.iter().map(|v| Cell::from(v.1)));
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&steering_header(mode, with_acceptance));
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

/// Steering region on the (g, loss) grid from the analytic NLA pipeline.
pub fn regions(variant: Fig3Variant, cfg: &Config) -> Result<Table, RunError> {
    cfg.validate()?;
    let channel = match variant {
        Fig3Variant::Lossy => ChannelSpec::lossy(0.0),
        Fig3Variant::Noisy => cfg.noisy_channel()?,
    };
    let state = cfg.state()?;
    let gains = cfg.gain_grid(REGION_GAINS)?;
    let losses = cfg.loss_grid(REGION_LOSSES)?;
    let points: Vec<(f64, f64)> = gains
        .iter()
        .flat_map(|&g| losses.iter().map(move |&l| (g, l)))
        .collect();
    let rows: Vec<Vec<Cell>> = points
        .par_iter()
        .map(|&(g, loss)| -> Result<Vec<Cell>, RunError> {
            let label = match or_missing(propagate(&state, &channel.with_loss(loss), Some(g)))? {
                Some(s) => classify(&s)?.region.label(),
                None => "undefined",
            };
            Ok(vec![g.into(), loss.into(), label.into()])
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&["g", "loss", "region"]);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

fn key_cells(p: Option<KeyRatePoint>) -> [f64; 4] {
    match p {
        Some(p) => [
            p.result.key_rate,
            p.result.v_x_cond,
            p.result.v_p_cond,
            p.se_key_rate.unwrap_or(f64::NAN),
        ],
        None => [f64::NAN; 4],
    }
}

/// Key-rate bound versus gain at the fixed cutoff `filter.cutoff`.
///
/// `key_rate` follows the truncated filter (analytic mode: its population
/// limit; Monte Carlo: reconstructed samples). `key_rate_ideal` and the
/// pure -6 dB reference use untruncated NLA, missing above its
/// normalizability bound.
pub fn fig4(cfg: &Config) -> Result<Table, RunError> {
    cfg.validate()?;
    let mode = cfg.run.mode;
    let beta_c = cfg.filter.cutoff;
    let state = cfg.noisy_channel()?.with_loss(cfg.channel.loss).apply(&cfg.state()?)?;
    let pure = tmss_standard(-6.0, 6.0)?;
    let gains = cfg.gain_grid(FIG4_GAINS)?;
    let samples = cfg.run.samples;
    let mut header: Vec<String> = [
        "g",
        "key_rate",
        "v_x_cond",
        "v_p_cond",
        "acceptance_rate",
        "se_key_rate",
        "key_rate_ideal",
        "key_rate_pure_6db",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if mode == Mode::Both {
        header.extend(
            ["mc_key_rate", "mc_v_x_cond", "mc_v_p_cond"]
                .iter()
                .map(|s| s.to_string()),
        );
    }
    let rows: Vec<Vec<Cell>> = gains
        .par_iter()
        .enumerate()
        .map(|(i, &g)| -> Result<Vec<Cell>, RunError> {
            let seed = point_seed(cfg.run.seed, i, 0);
            let truncated = or_missing(key_rate_at(&state, g, beta_c, KeyRateMode::Truncated, seed))?;
            let mc = if mode.monte_carlo() {
                match heralded_reconstruction(&state, &FilterSpec::new(g, beta_c)?, samples, seed)? {
                    Some(rec) => {
                        let (result, se) = rec.key_rate()?;
                        Some(KeyRatePoint {
                            g,
                            result,
                            acceptance_rate: rec.acceptance_rate(),
                            se_key_rate: Some(se),
                        })
                    }
                    None => None,
                }
            } else {
                None
            };
            let ideal = or_missing(key_rate_at(&state, g, beta_c, KeyRateMode::Analytic, seed))?;
            let reference = or_missing(key_rate_at(&pure, g, beta_c, KeyRateMode::Analytic, seed))?;
            let rate = FilteredEnsemble::new(&state, &FilterSpec::new(g, beta_c)?)?.acceptance_rate;
            let main = if mode.analytic() {
                key_cells(truncated)
            } else {
                key_cells(mc)
            };
            let mc_cells = key_cells(mc);
            let mut row: Vec<Cell> = vec![
                g.into(),
                main[0].into(),
                main[1].into(),
                main[2].into(),
                rate.into(),
                mc_cells[3].into(),
                key_cells(ideal)[0].into(),
                key_cells(reference)[0].into(),
            ];
            if mode == Mode::Both {
                row.extend(mc_cells[..3].iter().map(|&v| Cell::from(v)));
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&header);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

fn worst(pair: [f64; 2], centre: f64) -> f64 {
    if (pair[0] - centre).abs() >= (pair[1] - centre).abs() {
        pair[0]
    } else {
        pair[1]
    }
}

pub fn appendix(item: Appendix, cfg: &Config) -> Result<Table, RunError> {
    cfg.validate()?;
    match item {
        Appendix::FigS1 => {
            // Pure state with the experiment's squeezing on both quadratures.
            let pure = tmss_standard(-4.2, 4.2)?;
            let analytic = Config {
                run: RunConfig {
                    mode: Mode::Analytic,
                    ..cfg.run.clone()
                },
                ..cfg.clone()
            };
            steering_sweep(
                &pure,
                &ChannelSpec::lossy(0.0),
                &analytic,
                &cfg.loss_grid(FIG3_LOSSES)?,
                false,
            )
        }
        Appendix::FigS2 => cell_grid(cfg, |cfg, state, ch, g, i| {
            let beta_c = cutoff_at(cfg, state, ch, g, point_seed(cfg.run.seed, i, 2))?;
            let out = ch.apply(state)?;
            let mut row: Vec<Cell> = vec![g.into(), ch.loss.into(), beta_c.into()];
            if beta_c.is_nan() {
                row.extend(std::iter::repeat_n(Cell::from(f64::NAN), 6));
                return Ok(row);
            }
            let filter = FilterSpec::new(g, beta_c)?;
            let (skew, kurt) = if cfg.run.mode == Mode::Analytic {
                let e = FilteredEnsemble::new(&out, &filter)?;
                (e.skewness, e.kurtosis)
            } else {
                match heralded_reconstruction(&out, &filter, cfg.run.samples, point_seed(cfg.run.seed, i, 1))? {
                    Some(rec) => (
                        [rec.bob_x.skewness, rec.bob_p.skewness],
                        [rec.bob_x.kurtosis, rec.bob_p.kurtosis],
                    ),
                    None => ([f64::NAN; 2], [f64::NAN; 2]),
                }
            };
            row.extend(
                [worst(skew, 0.0), worst(kurt, 3.0), skew[0], skew[1], kurt[0], kurt[1]]
                    .iter()
                    .map(|&v| Cell::from(v)),
            );
            Ok(row)
        })
        .map(|rows| {
            let mut t = Table::new(&[
                "g",
                "loss",
                "beta_c",
                "skewness",
                "kurtosis",
                "skewness_x",
                "skewness_p",
                "kurtosis_x",
                "kurtosis_p",
            ]);
            rows.into_iter().for_each(|r| t.push(r));
            t
        }),
        Appendix::FigS4 => {
            let mc = cfg.run.mode.monte_carlo();
            cell_grid(cfg, |cfg, state, ch, g, i| {
                let beta_c = cutoff_at(cfg, state, ch, g, point_seed(cfg.run.seed, i, 2))?;
                let out = ch.apply(state)?;
                let mut row: Vec<Cell> = vec![g.into(), ch.loss.into(), beta_c.into()];
                let (rate, se) = if beta_c.is_nan() {
                    (f64::NAN, f64::NAN)
                } else if mc {
                    let filter = FilterSpec::new(g, beta_c)?;
                    let seed = point_seed(cfg.run.seed, i, 0);
                    let stats = simulate(
                        &out,
                        cfg.run.samples,
                        seed,
                        BasisSchedule::Alternating,
                        Some((&filter, seed ^ 0x5a5a)),
                    )?;
                    let p = stats.acceptance_rate();
                    (p, (p * (1.0 - p) / stats.records as f64).sqrt())
                } else {
                    let e = FilteredEnsemble::new(&out, &FilterSpec::new(g, beta_c)?)?;
                    (e.acceptance_rate, f64::NAN)
                };
                row.push(rate.into());
                if mc {
                    row.push(se.into());
                }
                Ok(row)
            })
            .map(|rows| {
                let mut h = vec!["g", "loss", "beta_c", "acceptance_rate"];
                if mc {
                    h.push("se_acceptance_rate");
                }
                let mut t = Table::new(&h);
                rows.into_iter().for_each(|r| t.push(r));
                t
            })
        }
        Appendix::TableS1 => {
            let state = cfg.state()?;
            let criteria = cfg.criteria()?;
            let mut t = Table::new(&["loss", "g", "beta_c"]);
            let losses = cfg.loss_grid(TABLE_LOSSES)?;
            let gains = cfg.gain_grid(TABLE_GAINS)?;
            let mut i = 0;
            for &loss in &losses {
                for &g in &gains {
                    let scan = scan_cutoffs(
                        &state,
                        &ChannelSpec::lossy(loss),
                        g,
                        &criteria,
                        point_seed(cfg.run.seed, i, 0).wrapping_mul(1000),
                    )?;
                    t.push(vec![loss.into(), g.into(), scan.selected.unwrap_or(f64::NAN).into()]);
                    i += 1;
                }
            }
            Ok(t)
        }
    }
}

/// Runs `f` on every (loss, g) cell of the appendix grid, loss-major,
/// through a pure-loss channel.
fn cell_grid<F>(cfg: &Config, f: F) -> Result<Vec<Vec<Cell>>, RunError>
where
    F: Fn(&Config, &GaussianState, &ChannelSpec, f64, usize) -> Result<Vec<Cell>, RunError> + Sync,
{
    let state = cfg.state()?;
    let losses = cfg.loss_grid(TABLE_LOSSES)?;
    let gains = cfg.gain_grid(TABLE_GAINS)?;
    let cells: Vec<(f64, f64)> = losses
        .iter()
        .flat_map(|&l| gains.iter().map(move |&g| (l, g)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(i, &(loss, g))| f(cfg, &state, &ChannelSpec::lossy(loss), g, i))
        .collect()
}

/// Reads a recorded batch, optionally heralds it with `filter`, and
/// reports the reconstruction with standard errors.
pub fn ingest(path: &Path, filter: Option<&FilterSpec>, seed: u64) -> Result<Table, RunError> {
    let file = std::fs::File::open(path).map_err(|e| RunError::Io(path.display().to_string(), e))?;
    let batch = QuadratureBatch::read_csv(std::io::BufReader::new(file))?;
    ingest_batch(&batch, filter, seed)
}

pub fn ingest_batch(batch: &QuadratureBatch, filter: Option<&FilterSpec>, seed: u64) -> Result<Table, RunError> {
    let filtered;
    let batch = match filter {
        Some(f) => {
            filtered = steerdist_core::measurement::post_select(batch, f, seed)?.0;
            &filtered
        }
        None => batch,
    };
    let rec = steerdist_core::measurement::reconstruct_covariance(batch)?;
    let mut t = Table::new(&["quantity", "value", "se"]);
    let p = rec.acceptance_rate();
    t.push(vec!["records".into(), (rec.records as f64).into(), f64::NAN.into()]);
    t.push(vec!["accepted".into(), (rec.accepted as f64).into(), f64::NAN.into()]);
    t.push(vec![
        "acceptance_rate".into(),
        p.into(),
        (p * (1.0 - p) / rec.records as f64).sqrt().into(),
    ]);
    for r in 0..4 {
        for c in r..4 {
            t.push(vec![
                Cell::Text(format!("cov_{r}_{c}")),
                rec.cov.get(r, c).into(),
                rec.se[(r, c)].into(),
            ]);
        }
    }
    for (name, d) in [("g_ab", Direction::AliceToBob), ("g_ba", Direction::BobToAlice)] {
        let (v, se) = rec.steering(d)?;
        t.push(vec![name.into(), v.into(), se.into()]);
    }
    let (k, se) = rec.key_rate()?;
    t.push(vec!["key_rate".into(), k.key_rate.into(), se.into()]);
    t.push(vec!["v_x_cond".into(), k.v_x_cond.into(), f64::NAN.into()]);
    t.push(vec!["v_p_cond".into(), k.v_p_cond.into(), f64::NAN.into()]);
    Ok(t)
}

/// Synthetic quadrature records of the configured state after the
/// configured channel, in the batch CSV schema.
pub fn sample(cfg: &Config) -> Result<QuadratureBatch, RunError> {
    cfg.validate()?;
    let out = cfg.noisy_channel()?.with_loss(cfg.channel.loss).apply(&cfg.state()?)?;
    Ok(steerdist_core::measurement::sample_batch(
        &out,
        cfg.run.samples,
        cfg.run.seed,
        BasisSchedule::Alternating,
    )?)
}
