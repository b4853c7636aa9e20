use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use steerdist_core::measurement::FilterSpec;

use crate::config::{Config, ConfigError, Mode, FULL_SAMPLES};
use crate::experiments::{self, Appendix, Fig3Variant};
use crate::svg::{self, Series};
use crate::table::Table;
use crate::RunError;

#[derive(Debug, Parser)]
#[command(
    name = "steerdist",
    version,
    about = "Gaussian EPR steering distillation experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo samples per evaluation.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Also render an SVG next to the CSV.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Use 10^8 samples unless --samples is given.
    #[arg(long, global = true)]
    pub full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Analytic,
    #[value(name = "monte_carlo")]
    MonteCarlo,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Analytic => Mode::Analytic,
            ModeArg::MonteCarlo => Mode::MonteCarlo,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Steerability vs loss, lossy channel.
    Fig3a,
    /// Steerability vs loss, noisy channel.
    Fig3b,
    /// Steering regions over (g, loss), lossy channel.
    RegionsC,
    /// Steering regions over (g, loss), noisy channel.
    RegionsD,
    /// Key-rate bound vs gain.
    Fig4,
    /// Pure-state steerability vs loss.
    FigS1,
    /// Skewness and kurtosis at the optimal cutoffs.
    FigS2,
    /// Acceptance rate at the optimal cutoffs.
    FigS4,
    /// Optimal-cutoff table.
    TableS1,
    /// Reconstruct a recorded quadrature CSV and report values with errors.
    Ingest {
        path: PathBuf,
        /// Heralding gain (default: filter.gain).
        #[arg(long)]
        gain: Option<f64>,
        /// Heralding cutoff (default: filter.cutoff).
        #[arg(long)]
        cutoff: Option<f64>,
        /// Use the records as they are, without heralding.
        #[arg(long)]
        no_filter: bool,
    },
    /// Write synthetic quadrature records of the configured state.
    Sample,
    /// Quick checks against analytic results.
    Selfcheck,
}

impl Command {
    fn stem(&self) -> &'static str {
        match self {
            Command::Fig3a => "fig3a",
            Command::Fig3b => "fig3b",
            Command::RegionsC => "regions_c",
            Command::RegionsD => "regions_d",
            Command::Fig4 => "fig4",
            Command::FigS1 => "fig_s1",
            Command::FigS2 => "fig_s2",
            Command::FigS4 => "fig_s4",
            Command::TableS1 => "table_s1",
            Command::Ingest { .. } => "ingest_report",
            Command::Sample => "samples",
            Command::Selfcheck => "selfcheck",
        }
    }
}

/// Config file, then environment, then flags.
pub fn resolve_config<I>(common: &Common, env: I) -> Result<Config, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut cfg = Config::load(common.config.as_deref(), env)?;
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    if common.full {
        cfg.run.samples = FULL_SAMPLES;
    }
    if let Some(n) = common.samples {
        cfg.run.samples = n;
    }
    if let Some(t) = common.threads {
        cfg.run.threads = t;
    }
    if let Some(o) = &common.out {
        cfg.run.output_dir = o.clone();
    }
    if let Some(m) = common.mode {
        cfg.run.mode = m.into();
    }
    cfg.run.svg |= common.svg;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and returns the files written.
pub fn run(command: &Command, cfg: &Config) -> Result<Vec<PathBuf>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| RunError::Config(ConfigError(format!("thread pool: {e}"))))?;
    pool.install(|| run_in_pool(command, cfg))
}

fn run_in_pool(command: &Command, cfg: &Config) -> Result<Vec<PathBuf>, RunError> {
    if let Command::Selfcheck = command {
        let checks = crate::selfcheck::run();
        let failed = checks.iter().filter(|c| !c.passed).count();
        for c in &checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        if failed > 0 {
            return Err(RunError::Numerical(steerdist_core::Error::OutOfRange {
                name: "selfcheck",
                value: failed as f64,
                reason: "checks failed",
            }));
        }
        return Ok(Vec::new());
    }

    let dir = &cfg.run.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io(dir.display().to_string(), e))?;
    let csv_path = dir.join(format!("{}.csv", command.stem()));

    if let Command::Sample = command {
        let batch = experiments::sample(cfg)?;
        let file = std::fs::File::create(&csv_path).map_err(|e| RunError::Io(csv_path.display().to_string(), e))?;
        batch.write_csv(std::io::BufWriter::new(file))?;
        return Ok(vec![csv_path]);
    }

    let table = match command {
        Command::Fig3a => experiments::fig3(Fig3Variant::Lossy, cfg)?,
        Command::Fig3b => experiments::fig3(Fig3Variant::Noisy, cfg)?,
        Command::RegionsC => experiments::regions(Fig3Variant::Lossy, cfg)?,
        Command::RegionsD => experiments::regions(Fig3Variant::Noisy, cfg)?,
        Command::Fig4 => experiments::fig4(cfg)?,
        Command::FigS1 => experiments::appendix(Appendix::FigS1, cfg)?,
        Command::FigS2 => experiments::appendix(Appendix::FigS2, cfg)?,
        Command::FigS4 => experiments::appendix(Appendix::FigS4, cfg)?,
        Command::TableS1 => experiments::appendix(Appendix::TableS1, cfg)?,
        Command::Ingest {
            path,
            gain,
            cutoff,
            no_filter,
        } => {
            let filter = if *no_filter {
                None
            } else {
                let f = FilterSpec::new(gain.unwrap_or(cfg.filter.gain), cutoff.unwrap_or(cfg.filter.cutoff))
                    .map_err(|e| RunError::Config(ConfigError(format!("filter: {e}"))))?;
                Some(f)
            };
            let t = experiments::ingest(path, filter.as_ref(), cfg.run.seed)?;
            print_report(&t);
            t
        }
        Command::Sample | Command::Selfcheck => unreachable!("handled above"),
    };
    table
        .save(&csv_path)
        .map_err(|e| RunError::Io(csv_path.display().to_string(), e))?;
    let mut written = vec![csv_path];
    if cfg.run.svg {
        if let Some(svg) = render(command, &table) {
            let p = dir.join(format!("{}.svg", command.stem()));
            std::fs::write(&p, svg).map_err(|e| RunError::Io(p.display().to_string(), e))?;
            written.push(p);
        }
    }
    Ok(written)
}

fn print_report(t: &Table) {
    for row in &t.rows {
        let name = match &row[0] {
            crate::Cell::Text(s) => s.as_str(),
            crate::Cell::Num(_) => "",
        };
        let v = row[1].num().unwrap_or(f64::NAN);
        let se = row[2].num().unwrap_or(f64::NAN);
        if se.is_nan() {
            println!("{name:>16} = {v}");
        } else {
            println!("{name:>16} = {v:.6} ± {se:.6}");
        }
    }
}

fn series<'a>(t: &Table, x: &str, y: &str, name: &'a str, dashed: bool) -> Option<Series<'a>> {
    let xs = t.column(x)?;
    let ys = t.column(y)?;
    Some(Series {
        name,
        points: xs.into_iter().zip(ys).collect(),
        dashed,
    })
}

fn render(command: &Command, t: &Table) -> Option<String> {
    match command {
        Command::Fig3a | Command::Fig3b | Command::FigS1 => {
            let s: Vec<Series> = [
                ("g_ab_raw", "A->B raw", true),
                ("g_ba_raw", "B->A raw", true),
                ("g_ab_nla", "A->B NLA", false),
                ("g_ba_nla", "B->A NLA", false),
            ]
            .iter()
            .filter_map(|&(col, name, dashed)| series(t, "loss", col, name, dashed))
            .collect();
            Some(svg::line_chart(command.stem(), "loss", "steerability", &s))
        }
        Command::Fig4 => {
            let s: Vec<Series> = [
                ("key_rate", "model state", false),
                ("key_rate_ideal", "model state, ideal NLA", true),
                ("key_rate_pure_6db", "pure -6 dB", false),
            ]
            .iter()
            .filter_map(|&(col, name, dashed)| series(t, "g", col, name, dashed))
            .collect();
            Some(svg::line_chart("fig4", "g", "key rate (bits)", &s))
        }
        Command::RegionsC | Command::RegionsD => {
            let g = t.column("g")?;
            let l = t.column("loss")?;
            let r = t.text_column("region")?;
            let cells: Vec<(f64, f64, &str)> = g
                .iter()
                .zip(&l)
                .zip(&r)
                .map(|((&g, &l), r)| (g, l, r.as_str()))
                .collect();
            Some(svg::heat_map(
                command.stem(),
                "g",
                "loss",
                &cells,
                &[
                    ("two_way", "#6baed6"),
                    ("one_way_a_to_b", "#fdd049"),
                    ("one_way_b_to_a", "#fd8d3c"),
                    ("none", "#bdbdbd"),
                    ("undefined", "#ffffff"),
                ],
            ))
        }
        Command::FigS2 | Command::FigS4 => {
            let y = if matches!(command, Command::FigS2) {
                "kurtosis"
            } else {
                "acceptance_rate"
            };
            let loss = t.column("loss")?;
            let mut levels = loss.clone();
            levels.dedup();
            let names: Vec<String> = levels.iter().map(|l| format!("loss {l}")).collect();
            let g = t.column("g")?;
            let v = t.column(y)?;
            let s: Vec<Series> = levels
                .iter()
                .zip(&names)
                .map(|(&lv, name)| Series {
                    name,
                    points: (0..g.len()).filter(|&i| loss[i] == lv).map(|i| (g[i], v[i])).collect(),
                    dashed: false,
                })
                .collect();
            Some(svg::line_chart(command.stem(), "g", y, &s))
        }
        _ => None,
    }
}

/// Parses arguments, runs, and maps errors to exit codes.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match resolve_config(&cli.common, std::env::vars()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    match run(&cli.command, &cfg) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", display(&f));
            }
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
