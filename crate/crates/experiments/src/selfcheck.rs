//! Fast sanity checks against analytic oracles, run by `steerdist selfcheck`.

use steerdist_core::measurement::{simulate, BasisSchedule, FilterSpec, Reconstruction};
use steerdist_core::qkd::{key_rate, min_gain_for_key, zero_key_squeezing_db, KeyRateMode};
use steerdist_core::{
    nla_single_mode, steering_loss_threshold, tmss_pure, tmss_standard, ChannelSpec, CovMatrix, Direction, NoiseModel,
    Party,
};

use crate::config::Range;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn within(name: &'static str, got: steerdist_core::Result<f64>, target: f64, tol: f64) -> Check {
    match got {
        Ok(v) => check(
            name,
            (v - target).abs() <= tol,
            format!("{v:.5} (want {target} ± {tol})"),
        ),
        Err(e) => check(name, false, e.to_string()),
    }
}

fn in_range(name: &'static str, got: steerdist_core::Result<f64>, lo: f64, hi: f64) -> Check {
    match got {
        Ok(v) => check(name, (lo..=hi).contains(&v), format!("{v:.5} (want [{lo}, {hi}])")),
        Err(e) => check(name, false, e.to_string()),
    }
}

pub fn run() -> Vec<Check> {
    let mut out = Vec::new();
    let model = match tmss_standard(-4.2, 7.3) {
        Ok(s) => s,
        Err(e) => return vec![check("model state", false, e.to_string())],
    };
    let lossy = ChannelSpec::lossy(0.0);
    let noisy = ChannelSpec::noisy(0.0, 0.12, NoiseModel::LossScaled);
    let threshold = |ch: &ChannelSpec, d, g| steering_loss_threshold(&model, ch, d, g);

    out.push(within(
        "lossy B->A threshold",
        threshold(&lossy, Direction::BobToAlice, None),
        0.3077,
        1e-3,
    ));
    out.push(in_range(
        "lossy B->A threshold, g = 1.2",
        threshold(&lossy, Direction::BobToAlice, Some(1.2)),
        0.38,
        0.48,
    ));
    out.push(within(
        "noisy B->A threshold",
        threshold(&noisy, Direction::BobToAlice, None),
        0.2841,
        1e-3,
    ));
    out.push(within(
        "noisy A->B threshold",
        threshold(&noisy, Direction::AliceToBob, None),
        0.7072,
        1e-3,
    ));
    out.push(in_range(
        "noisy B->A threshold, g = 1.2",
        threshold(&noisy, Direction::BobToAlice, Some(1.2)),
        0.35,
        0.45,
    ));

    let tmss = (|| -> steerdist_core::Result<f64> {
        let got = nla_single_mode(tmss_pure(1.0 / 3.0)?.cov(), 1.5, Party::Bob)?;
        Ok((got.matrix() - tmss_pure(0.5)?.cov().matrix()).amax())
    })();
    out.push(within("TMSS eigen-relation max error", tmss, 0.0, 1e-6));
    let thermal = (|| -> steerdist_core::Result<f64> {
        let cov = CovMatrix::from_row_slice(
            4,
            &[
                1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 2.0,
            ],
        )?;
        Ok(nla_single_mode(&cov, 1.2, Party::Bob)?.get(2, 2))
    })();
    out.push(within("thermal V = 2, g^2 = 1.44", thermal, 2.84615, 1e-5));

    out.push(within("zero-key squeezing (dB)", zero_key_squeezing_db(), -6.01, 0.05));
    out.push(within(
        "model key rate at g = 1",
        key_rate(model.cov()).map(|k| k.key_rate),
        -0.2168,
        1e-3,
    ));
    let gains = Range::new(1.0, 1.5, 0.01).values("g").expect("fixed grid");
    out.push(within(
        "minimum gain for key, beta_c = 4.5",
        min_gain_for_key(&model, 4.5, &gains, KeyRateMode::Truncated, 1).map(|m| m.g),
        1.4,
        0.1,
    ));

    let mc = (|| -> steerdist_core::Result<(bool, String)> {
        let out_state = ChannelSpec::lossy(0.4).apply(&model)?;
        let filter = FilterSpec::new(1.05, 3.75)?;
        let stats = simulate(&out_state, 1_000_000, 7, BasisSchedule::Alternating, Some((&filter, 8)))?;
        let rec = Reconstruction::from_stats(&stats)?;
        let ideal = nla_single_mode(out_state.cov(), 1.05, Party::Bob)?;
        let mut worst: f64 = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                let se = rec.se[(r, c)];
                if se > 0.0 {
                    worst = worst.max((rec.cov.get(r, c) - ideal.get(r, c)).abs() / se);
                }
            }
        }
        Ok((worst < 5.0, format!("max deviation {worst:.2} SE")))
    })();
    out.push(match mc {
        Ok((ok, d)) => check("Monte Carlo vs analytic NLA", ok, d),
        Err(e) => check("Monte Carlo vs analytic NLA", false, e.to_string()),
    });
    out
}
