use steerdist_core::channels::{apply_lossy, ChannelSpec};
use steerdist_core::cutoff::{reference_cutoff, reference_table, select_cutoff, CutoffCriteria, CutoffEvaluator};
use steerdist_core::gaussian::{tmss_standard, GaussianState, Party};
use steerdist_core::measurement::{
    post_select, reconstruct_covariance, sample_accepted, sample_batch, simulate, BasisSchedule, FilterSpec,
    FilteredEnsemble, QuadratureBatch, Reconstruction,
};
use steerdist_core::nla::nla_single_mode;
use steerdist_core::steering::Direction;

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn seeded_pipelines_ignore_thread_count() {
    let s = apply_lossy(&tmss_standard(-4.2, 7.3).unwrap(), 0.2).unwrap();
    let f = FilterSpec::new(1.2, 4.75).unwrap();
    let count = 5 * 65_536 + 17;
    let run = || {
        let batch = sample_batch(&s, count, 77, BasisSchedule::Random).unwrap();
        let (filtered, rate) = post_select(&batch, &f, 78).unwrap();
        let stats = simulate(&s, count, 77, BasisSchedule::Random, Some((&f, 78))).unwrap();
        let direct = sample_accepted(&s, &f, 200_000, 79, BasisSchedule::Alternating).unwrap();
        (filtered, rate, stats, direct)
    };
    let one = pool(1).install(run);
    for threads in [2, 4] {
        let other = pool(threads).install(run);
        assert_eq!(one.0, other.0);
        assert_eq!(one.1.to_bits(), other.1.to_bits());
        assert_eq!(one.2, other.2);
        assert_eq!(one.3, other.3);
    }
}

#[test]
fn csv_roundtrip_feeds_identical_pipeline() {
    let s = tmss_standard(-4.2, 7.3).unwrap();
    let batch = sample_batch(&s, 60_000, 5, BasisSchedule::Alternating).unwrap();
    let mut buf = Vec::new();
    batch.write_csv(&mut buf).unwrap();
    let back = QuadratureBatch::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, batch);

    let f = FilterSpec::new(1.05, 4.25).unwrap();
    let (a, ra) = post_select(&batch, &f, 6).unwrap();
    let (b, rb) = post_select(&back, &f, 6).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let rec_a = reconstruct_covariance(&a).unwrap();
    let rec_b = reconstruct_covariance(&b).unwrap();
    assert_eq!(rec_a.cov, rec_b.cov);
}

#[test]
fn reconstruction_error_halves_at_four_times_samples() {
    let s = tmss_standard(-4.2, 7.3).unwrap();
    // Average the spread over several seeds so the check is about scaling,
    // not one draw.
    let spread = |n: usize| -> f64 {
        let mut total = 0.0;
        for seed in 0..8 {
            let rec =
                Reconstruction::from_stats(&simulate(&s, n, 100 + seed, BasisSchedule::Alternating, None).unwrap())
                    .unwrap();
            total += (rec.cov.matrix() - s.cov().matrix()).map(|v| v * v).sum();
        }
        (total / 8.0).sqrt()
    };
    let ratio = spread(200_000) / spread(800_000);
    assert!((ratio - 2.0).abs() < 0.6, "{ratio}");
}

#[test]
fn filtered_reconstruction_matches_analytic_nla() {
    for (loss, g) in [(0.0, 1.05), (0.4, 1.2)] {
        let s = apply_lossy(&tmss_standard(-4.2, 7.3).unwrap(), loss).unwrap();
        let f = FilterSpec::new(g, reference_cutoff(loss, g)).unwrap();
        let batch = sample_accepted(&s, &f, 2_000_000, 11, BasisSchedule::Alternating).unwrap();
        let rec = reconstruct_covariance(&batch).unwrap();
        let ideal = nla_single_mode(s.cov(), g, Party::Bob).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let d = (rec.cov.get(r, c) - ideal.get(r, c)).abs();
                let se = rec.se[(r, c)];
                assert!(
                    d <= 5.0 * se || (se == 0.0 && d < 1e-8),
                    "loss {loss} g {g} ({r},{c}): {d} vs {se}"
                );
            }
        }
        let ideal_state = GaussianState::bipartite(ideal).unwrap();
        for d in Direction::BOTH {
            let (v, se) = rec.steering(d).unwrap();
            let target = steerdist_core::steering::steerability(&ideal_state, d).unwrap();
            assert!((v - target).abs() <= 3.0 * se, "{d}: {v} ± {se} vs {target}");
        }
    }
}

#[test]
fn reproduced_table_within_half_step_and_monotone() {
    let s = tmss_standard(-4.2, 7.3).unwrap();
    let crit = CutoffCriteria::default();
    let table = reference_table();
    let losses = [0.0, 0.2, 0.4, 0.6, 0.8];
    let gains = [1.05, 1.10, 1.15, 1.20, 1.25];
    let mut got = [[0.0; 5]; 5];
    for (i, &loss) in losses.iter().enumerate() {
        for (j, &g) in gains.iter().enumerate() {
            let scan = select_cutoff(&s, &ChannelSpec::lossy(loss), g, &crit, 1).unwrap();
            got[i][j] = scan.selected.unwrap();
            let paper = table
                .iter()
                .find(|e| (e.loss - loss).abs() < 1e-9 && (e.g - g).abs() < 1e-9)
                .unwrap()
                .beta_c;
            assert!(
                (got[i][j] - paper).abs() <= 0.5,
                "loss {loss} g {g}: {} vs {paper}",
                got[i][j]
            );
        }
    }
    for i in 0..5 {
        for j in 0..5 {
            if i + 1 < 5 {
                assert!(got[i + 1][j] <= got[i][j], "loss trend at g {}", gains[j]);
            }
            if j + 1 < 5 {
                assert!(got[i][j + 1] >= got[i][j], "g trend at loss {}", losses[i]);
            }
        }
    }
}

#[test]
fn selected_cutoff_passes_fresh_monte_carlo_check() {
    let s = tmss_standard(-4.2, 7.3).unwrap();
    let crit = CutoffCriteria::default();
    let scan = select_cutoff(&s, &ChannelSpec::lossy(0.4), 1.2, &crit, 1).unwrap();
    let beta = scan.selected.unwrap();
    let mc = CutoffCriteria {
        evaluator: CutoffEvaluator::MonteCarlo,
        sample_count: 10_000_000,
        ..crit
    };
    let out = ChannelSpec::lossy(0.4).apply(&s).unwrap();
    let exact = steerdist_core::cutoff::evaluate_cutoff(&out, 1.2, beta, &crit, 991).unwrap();
    let point = steerdist_core::cutoff::evaluate_cutoff(&out, 1.2, beta, &mc, 991).unwrap();
    assert!(exact.passes(&crit));
    for i in 0..2 {
        assert!(
            (point.steering[i] - exact.steering[i]).abs() < crit.steering_tol,
            "{point:?}"
        );
        assert!((point.kurtosis[i] - exact.kurtosis[i]).abs() < 0.03, "{point:?}");
        assert!(point.skewness[i].abs() < crit.skew_tol);
    }
}

#[test]
fn acceptance_rate_trends_at_reference_cutoffs() {
    let s = tmss_standard(-4.2, 7.3).unwrap();
    let rate = |loss: f64, g: f64| {
        let out = apply_lossy(&s, loss).unwrap();
        FilteredEnsemble::new(&out, &FilterSpec::new(g, reference_cutoff(loss, g)).unwrap())
            .unwrap()
            .acceptance_rate
    };
    let losses = [0.0, 0.2, 0.4, 0.6, 0.8];
    let gains = [1.05, 1.10, 1.15, 1.20, 1.25];
    for &loss in &losses {
        for w in gains.windows(2) {
            assert!(
                rate(loss, w[1]) < rate(loss, w[0]),
                "loss {loss}, g {} -> {}",
                w[0],
                w[1]
            );
        }
    }
    for &g in &gains {
        for w in losses.windows(2) {
            assert!(rate(w[1], g) > rate(w[0], g), "g {g}, loss {} -> {}", w[0], w[1]);
        }
    }
    assert!(rate(0.8, 1.05) > rate(0.0, 1.25));
}
