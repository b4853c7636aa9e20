use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use steerdist_core::channels::{apply_lossy, ChannelSpec, NoiseModel};
use steerdist_core::gaussian::{
    check_physical, purity, schur_complement, symplectic_eigenvalues, tmss_pure, tmss_standard, CovMatrix,
    GaussianState, Partition, Party,
};
use steerdist_core::nla::{nla_cov_two_mode, nla_single_mode, GainPair};
use steerdist_core::steering::{steerability, steerability_1p1, Direction};

fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn squeezer(r: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[(-r).exp(), 0.0, 0.0, r.exp()])
}

fn local(alice: &DMatrix<f64>, bob: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(4, 4);
    s.view_mut((0, 0), (2, 2)).copy_from(alice);
    s.view_mut((2, 2), (2, 2)).copy_from(bob);
    s
}

fn beam_splitter(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    let i = DMatrix::<f64>::identity(2, 2);
    let mut m = DMatrix::zeros(4, 4);
    m.view_mut((0, 0), (2, 2)).copy_from(&(&i * c));
    m.view_mut((0, 2), (2, 2)).copy_from(&(&i * s));
    m.view_mut((2, 0), (2, 2)).copy_from(&(&i * -s));
    m.view_mut((2, 2), (2, 2)).copy_from(&(&i * c));
    m
}

fn two_mode_squeezer(r: f64) -> DMatrix<f64> {
    let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let mut m = DMatrix::zeros(4, 4);
    let i = DMatrix::<f64>::identity(2, 2);
    m.view_mut((0, 0), (2, 2)).copy_from(&(&i * r.cosh()));
    m.view_mut((2, 2), (2, 2)).copy_from(&(&i * r.cosh()));
    m.view_mut((0, 2), (2, 2)).copy_from(&(&z * r.sinh()));
    m.view_mut((2, 0), (2, 2)).copy_from(&(&z * r.sinh()));
    m
}

/// Williamson form: S diag(ν₁,ν₁,ν₂,ν₂) Sᵀ with S a random symplectic.
#[derive(Debug, Clone)]
struct Params {
    nu: [f64; 2],
    r: f64,
    bs: f64,
    rot: [f64; 4],
    sq: [f64; 2],
}

fn params() -> impl Strategy<Value = Params> {
    (
        1.0..3.0f64,
        1.0..3.0f64,
        0.0..1.2f64,
        0.0..std::f64::consts::PI,
        prop::array::uniform4(0.0..std::f64::consts::TAU),
        prop::array::uniform2(-0.6..0.6f64),
    )
        .prop_map(|(n1, n2, r, bs, rot, sq)| Params {
            nu: [n1, n2],
            r,
            bs,
            rot,
            sq,
        })
}

fn build(p: &Params) -> GaussianState {
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![p.nu[0], p.nu[0], p.nu[1], p.nu[1]]));
    let s = local(
        &(rotation(p.rot[0]) * squeezer(p.sq[0]) * rotation(p.rot[1])),
        &(rotation(p.rot[2]) * squeezer(p.sq[1]) * rotation(p.rot[3])),
    ) * beam_splitter(p.bs)
        * two_mode_squeezer(p.r);
    let m = &s * d * s.transpose();
    GaussianState::bipartite(CovMatrix::new((&m + m.transpose()) * 0.5).unwrap()).unwrap()
}

fn max_diff(a: &CovMatrix, b: &CovMatrix) -> f64 {
    (a.matrix() - b.matrix()).abs().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn channels_preserve_physicality(
        p in params(),
        loss in 0.0..=1.0f64,
        eps in 0.0..0.5f64,
        scaled in any::<bool>(),
    ) {
        let s = build(&p);
        prop_assert!(check_physical(s.cov()).physical);
        let model = if scaled { NoiseModel::LossScaled } else { NoiseModel::Fixed };
        let out = ChannelSpec::noisy(loss, eps, model).apply(&s).unwrap();
        let report = check_physical(out.cov());
        prop_assert!(report.physical, "{report:?}");
        let lossy = apply_lossy(&s, loss).unwrap();
        prop_assert!(check_physical(lossy.cov()).physical);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn loss_composition(p in params(), l1 in 0.0..=1.0f64, l2 in 0.0..=1.0f64) {
        let s = build(&p);
        let twice = apply_lossy(&apply_lossy(&s, l1).unwrap(), l2).unwrap();
        let once = apply_lossy(&s, 1.0 - (1.0 - l1) * (1.0 - l2)).unwrap();
        prop_assert!(max_diff(twice.cov(), once.cov()) < 1e-12);
    }

    #[test]
    fn steering_non_increasing_in_loss(p in params(), eps in 0.0..0.3f64) {
        let s = build(&p);
        for d in Direction::BOTH {
            let mut last = f64::INFINITY;
            for i in 0..=20 {
                let loss = i as f64 / 20.0;
                let out = ChannelSpec::noisy(loss, eps, NoiseModel::LossScaled).apply(&s).unwrap();
                let g = steerability(&out, d).unwrap();
                prop_assert!(g <= last + 1e-12, "{d} loss {loss}: {g} > {last}");
                last = g;
            }
        }
    }

    #[test]
    fn steering_local_symplectic_invariance(p in params(), a in prop::array::uniform3(-1.0..1.0f64), b in prop::array::uniform3(-1.0..1.0f64)) {
        let s = build(&p);
        let l = local(
            &(rotation(a[0]) * squeezer(0.5 * a[1]) * rotation(a[2])),
            &(rotation(b[0]) * squeezer(0.5 * b[1]) * rotation(b[2])),
        );
        let m = &l * s.cov().matrix() * l.transpose();
        let t = GaussianState::bipartite(CovMatrix::new((&m + m.transpose()) * 0.5).unwrap()).unwrap();
        for d in Direction::BOTH {
            let g0 = steerability(&s, d).unwrap();
            let g1 = steerability(&t, d).unwrap();
            prop_assert!((g0 - g1).abs() < 1e-9, "{d}: {g0} vs {g1}");
        }
    }

    #[test]
    fn fast_path_matches_spectrum(p in params()) {
        let s = build(&p);
        for d in Direction::BOTH {
            let a = steerability(&s, d).unwrap();
            let b = steerability_1p1(&s, d).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * a.max(1.0), "{d}: {a} vs {b}");
        }
    }

    #[test]
    fn pure_states_are_symmetric_at_zero_loss(mut p in params()) {
        p.nu = [1.0, 1.0];
        let s = build(&p);
        let ab = steerability(&s, Direction::AliceToBob).unwrap();
        let ba = steerability(&s, Direction::BobToAlice).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9 * ab.max(1.0), "{ab} vs {ba}");
    }

    #[test]
    fn purity_bounds_and_symplectic_invariance(p in params(), t in 0.0..1.0f64) {
        let s = build(&p);
        let mu = purity(s.cov()).unwrap();
        prop_assert!(mu > 0.0 && mu <= 1.0 + 1e-9);
        let expect = 1.0 / (p.nu[0] * p.nu[1]);
        prop_assert!((mu - expect).abs() < 1e-8);
        let bs = beam_splitter(t);
        let m = &bs * s.cov().matrix() * bs.transpose();
        let moved = CovMatrix::new((&m + m.transpose()) * 0.5).unwrap();
        prop_assert!((purity(&moved).unwrap() - mu).abs() < 1e-9);
    }

    #[test]
    fn schur_determinant_factorization(p in params()) {
        let s = build(&p);
        for keep in [Party::Alice, Party::Bob] {
            let schur = schur_complement(&s, keep).unwrap();
            let cond = s.block(keep.other(), keep.other());
            let lhs = schur.determinant() * cond.determinant();
            let rhs = s.cov().det();
            prop_assert!((lhs - rhs).abs() < 1e-9 * rhs.abs(), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn single_mode_symplectic_eigenvalue_is_sqrt_det(a in 1.0..5.0f64, b in 1.0..5.0f64, c in -0.9..0.9f64) {
        let off = c * (a * b).sqrt();
        let m = DMatrix::from_row_slice(2, 2, &[a, off, off, b]);
        let nu = symplectic_eigenvalues(&m).unwrap();
        prop_assert!((nu[0] - m.determinant().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nla_tmss_eigen_relation(lambda in 0.05..0.8f64, ratio in 0.05..1.0f64) {
        // g in (1, min(5, 0.9/λ)).
        let g = 1.0 + ratio * ((0.9 / lambda).min(5.0) - 1.0);
        let out = nla_single_mode(tmss_pure(lambda).unwrap().cov(), g, Party::Bob).unwrap();
        let expect = tmss_pure(g * lambda).unwrap();
        prop_assert!(max_diff(&out, expect.cov()) < 1e-6 * expect.cov().get(0, 0).max(1.0));
    }

    #[test]
    fn nla_output_physical(p in params(), g in 1.01..1.3f64) {
        let s = build(&p);
        if let Ok(out) = nla_single_mode(s.cov(), g, Party::Bob) {
            prop_assert!(check_physical(&out).physical);
        }
        if let Ok(out) = nla_cov_two_mode(s.cov(), GainPair::new(g, g).unwrap()) {
            prop_assert!(check_physical(&out).physical);
        }
    }
}

#[test]
fn nla_identity_limit_is_linear() {
    let s = tmss_standard(-4.2, 7.3).unwrap();
    let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|e| {
            let g = 1.0 + e;
            max_diff(
                &nla_cov_two_mode(s.cov(), GainPair::new(g, g).unwrap()).unwrap(),
                s.cov(),
            )
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 10.0).abs() < 1.0, "{errs:?}");
    }
}

#[test]
fn model_state_survives_all_pure_loss_alice_to_bob() {
    let s = tmss_standard(-4.2, 7.3).unwrap();
    let n = s.cov().get(0, 0);
    let c = s.cov().get(0, 2);
    assert!(n * n - c * c < n);
    for i in 0..100 {
        let loss = i as f64 / 100.0;
        let g = steerability(&apply_lossy(&s, loss).unwrap(), Direction::AliceToBob).unwrap();
        assert!(g > 0.0, "loss {loss}");
    }
}

#[test]
fn pure_state_never_surpasses_after_nla() {
    let s = tmss_standard(-4.2, 4.2).unwrap();
    for li in 0..=10 {
        let loss = 0.05 * li as f64;
        let out = apply_lossy(&s, loss).unwrap();
        for gi in 0..=6 {
            let g = 1.0 + 0.05 * gi as f64;
            let amp = GaussianState::bipartite(nla_single_mode(out.cov(), g, Party::Bob).unwrap()).unwrap();
            let ab = steerability(&amp, Direction::AliceToBob).unwrap();
            let ba = steerability(&amp, Direction::BobToAlice).unwrap();
            assert!(ba <= ab + 1e-9, "loss {loss} g {g}: {ba} > {ab}");
        }
    }
}

#[test]
fn impure_state_crossover() {
    let s = tmss_standard(-4.2, 7.3).unwrap();
    let amp = GaussianState::bipartite(nla_single_mode(s.cov(), 1.2, Party::Bob).unwrap()).unwrap();
    let ab = steerability(&amp, Direction::AliceToBob).unwrap();
    let ba = steerability(&amp, Direction::BobToAlice).unwrap();
    assert!(ba > ab, "{ba} vs {ab}");
}

#[test]
fn multimode_partition_with_idle_vacuum() {
    // Alice holds mode 0 and an idle vacuum mode 2; Bob holds mode 1.
    let s = tmss_standard(-4.2, 7.3).unwrap();
    let mut m = DMatrix::identity(6, 6);
    m.view_mut((0, 0), (4, 4)).copy_from(s.cov().matrix());
    let state = GaussianState::new(
        DVector::zeros(6),
        CovMatrix::new(m).unwrap(),
        Partition::new(vec![0, 2], vec![1], 3).unwrap(),
    )
    .unwrap();
    for d in Direction::BOTH {
        let a = steerability(&state, d).unwrap();
        let b = steerability(&s, d).unwrap();
        assert!((a - b).abs() < 1e-12, "{d}: {a} vs {b}");
    }
}
