use nalgebra::{Cholesky, Matrix3};
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{require_physical, GaussianState, ESTIMATE_TOL};

use super::moments::QuadratureMoments;
use super::{
    acceptance_probability, chunk_count, chunk_rng, Basis, BasisSchedule, FilterSpec, QuadratureBatch, Record, Stream,
    CHUNK_SIZE,
};

/// Lower Cholesky factors of the joint covariance of
/// `(alice quadrature, X_het, P_het)` for each of Alice's bases.
#[derive(Debug, Clone)]
pub(crate) struct HeterodyneModel {
    factors: [[[f64; 3]; 3]; 2],
}

impl HeterodyneModel {
    pub(crate) fn new(state: &GaussianState) -> Result<Self> {
        state.require_zero_mean_1p1()?;
        require_physical(state.cov(), ESTIMATE_TOL)?;
        let joint = joint_covariances(state);
        let mut factors = [[[0.0; 3]; 3]; 2];
        for (f, m) in factors.iter_mut().zip(joint.iter()) {
            let l = Cholesky::new(*m)
                .ok_or(Error::NotPositiveDefinite {
                    eigenvalue: m.symmetric_eigenvalues().min(),
                })?
                .unpack();
            for i in 0..3 {
                for j in 0..=i {
                    f[i][j] = l[(i, j)];
                }
            }
        }
        Ok(Self { factors })
    }

    #[inline]
    fn draw(&self, basis: Basis, rng: &mut Xoshiro256PlusPlus) -> [f64; 3] {
        let l = &self.factors[basis.index()];
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        [
            l[0][0] * z0,
            l[1][0] * z0 + l[1][1] * z1,
            l[2][0] * z0 + l[2][1] * z1 + l[2][2] * z2,
        ]
    }
}

/// Joint covariance of `(a, X_het, P_het)` where `a` is Alice's `x` (index
/// 0) or `p` (index 1): `Var(X_het) = (B_xx + 1)/2`, `Cov(a, X_het) =
/// C_ax/√2`, and likewise for `P_het`.
pub(crate) fn joint_covariances(state: &GaussianState) -> [Matrix3<f64>; 2] {
    let (a, b) = state.quadratures_1p1();
    let s = |i: usize, j: usize| state.cov().get(i, j);
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let bob = [
        [0.5 * (s(b[0], b[0]) + 1.0), 0.5 * s(b[0], b[1])],
        [0.5 * s(b[1], b[0]), 0.5 * (s(b[1], b[1]) + 1.0)],
    ];
    let mk = |q: usize| {
        Matrix3::new(
            s(q, q),
            r2 * s(q, b[0]),
            r2 * s(q, b[1]),
            r2 * s(q, b[0]),
            bob[0][0],
            bob[0][1],
            r2 * s(q, b[1]),
            bob[1][0],
            bob[1][1],
        )
    };
    [mk(a[0]), mk(a[1])]
}

#[inline]
fn basis_for(schedule: BasisSchedule, index: usize, rng: &mut Xoshiro256PlusPlus) -> Basis {
    match schedule {
        BasisSchedule::Alternating => {
            if index.is_multiple_of(2) {
                Basis::X
            } else {
                Basis::P
            }
        }
        BasisSchedule::Random => {
            if rng.random::<bool>() {
                Basis::X
            } else {
                Basis::P
            }
        }
    }
}

fn chunk_len(count: usize, chunk: usize) -> usize {
    CHUNK_SIZE.min(count - chunk * CHUNK_SIZE)
}

fn for_each_sample(
    model: &HeterodyneModel,
    count: usize,
    chunk: usize,
    seed: u64,
    schedule: BasisSchedule,
    mut f: impl FnMut(Record),
) {
    let mut rng = chunk_rng(seed, Stream::Samples, chunk);
    let start = chunk * CHUNK_SIZE;
    for i in start..start + chunk_len(count, chunk) {
        let basis = basis_for(schedule, i, &mut rng);
        let [a, x, p] = model.draw(basis, &mut rng);
        f(Record {
            basis,
            alice_value: a,
            bob_x: x,
            bob_p: p,
            accepted: true,
        });
    }
}

/// Draws `count` unfiltered records.
pub fn sample_batch(
    state: &GaussianState,
    count: usize,
    seed: u64,
    schedule: BasisSchedule,
) -> Result<QuadratureBatch> {
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let model = HeterodyneModel::new(state)?;
    let chunks: Vec<Vec<Record>> = (0..chunk_count(count))
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::with_capacity(chunk_len(count, c));
            for_each_sample(&model, count, c, seed, schedule, |r| out.push(r));
            out
        })
        .collect();
    Ok(QuadratureBatch::new(chunks.concat()))
}

#[inline]
fn filter_record(mut r: Record, filter: &FilterSpec, u: f64) -> Record {
    let p = acceptance_probability(r.outcome_norm_sqr().sqrt(), filter);
    if r.accepted && u < p {
        r.bob_x /= filter.gain;
        r.bob_p /= filter.gain;
    } else {
        r.accepted = false;
    }
    r
}

/// Heralds each record with one uniform variate from the filter stream;
/// kept records are rescaled by `1/g`. Returns the filtered batch and the
/// fraction of records kept.
pub fn post_select(batch: &QuadratureBatch, filter: &FilterSpec, seed: u64) -> Result<(QuadratureBatch, f64)> {
    filter.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let chunks: Vec<Vec<Record>> = batch
        .records
        .par_chunks(CHUNK_SIZE)
        .enumerate()
        .map(|(c, recs)| {
            let mut rng = chunk_rng(seed, Stream::Filter, c);
            recs.iter()
                .map(|r| filter_record(*r, filter, rng.random::<f64>()))
                .collect()
        })
        .collect();
    let out = QuadratureBatch::new(chunks.concat());
    let rate = out.accepted_count() as f64 / out.len() as f64;
    Ok((out, rate))
}

/// Mergeable sufficient statistics of accepted records, split by Alice's
/// basis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleStats {
    pub by_basis: [QuadratureMoments; 2],
    /// Records drawn before filtering.
    pub records: u64,
    pub accepted: u64,
}

impl SampleStats {
    #[inline]
    pub fn push(&mut self, r: &Record) {
        self.records += 1;
        if r.accepted {
            self.accepted += 1;
            self.by_basis[r.basis.index()].push([r.alice_value, r.bob_x, r.bob_p]);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.records += other.records;
        self.accepted += other.accepted;
        for (a, b) in self.by_basis.iter_mut().zip(other.by_basis.iter()) {
            a.merge(b);
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.records as f64
    }

    /// Merges per-chunk statistics in chunk order.
    pub fn merge_ordered(chunks: &[SampleStats]) -> Self {
        let mut total = SampleStats::default();
        for c in chunks {
            total.merge(c);
        }
        total
    }

    pub fn from_batch(batch: &QuadratureBatch) -> Self {
        let chunks: Vec<SampleStats> = batch
            .records
            .par_chunks(CHUNK_SIZE)
            .map(|recs| {
                let mut s = SampleStats::default();
                recs.iter().for_each(|r| s.push(r));
                s
            })
            .collect();
        Self::merge_ordered(&chunks)
    }
}

/// Streaming equivalent of `sample_batch` followed by `post_select` and
/// accumulation: same streams, same values, no materialized batch.
pub fn simulate(
    state: &GaussianState,
    count: usize,
    seed: u64,
    schedule: BasisSchedule,
    filter: Option<(&FilterSpec, u64)>,
) -> Result<SampleStats> {
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    if let Some((f, _)) = filter {
        f.validate()?;
    }
    let model = HeterodyneModel::new(state)?;
    let chunks: Vec<SampleStats> = (0..chunk_count(count))
        .into_par_iter()
        .map(|c| {
            let mut stats = SampleStats::default();
            let mut frng = filter.map(|(_, s)| chunk_rng(s, Stream::Filter, c));
            for_each_sample(&model, count, c, seed, schedule, |r| {
                let r = match (filter, frng.as_mut()) {
                    (Some((f, _)), Some(rng)) => filter_record(r, f, rng.random::<f64>()),
                    _ => r,
                };
                stats.push(&r);
            });
            stats
        })
        .collect();
    Ok(SampleStats::merge_ordered(&chunks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::tmss_standard;
    use crate::measurement::moments::{BOB_P, BOB_X};

    #[test]
    fn vacuum_heterodyne_variance() {
        let stats = simulate(&GaussianState::vacuum(), 1_000_000, 5, BasisSchedule::Alternating, None).unwrap();
        let mut all = stats.by_basis[0].clone();
        all.merge(&stats.by_basis[1]);
        let var = all.covariance(BOB_X, BOB_X);
        // SE of a unit-variance estimate is √(2/n).
        let se = (2.0f64 / 1e6).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn model_state_heterodyne_moments() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let n = s.cov().get(0, 0);
        let c = s.cov().get(0, 2);
        let stats = simulate(&s, 1_000_000, 9, BasisSchedule::Alternating, None).unwrap();
        let mut all = stats.by_basis[0].clone();
        all.merge(&stats.by_basis[1]);
        let vx = all.covariance(BOB_X, BOB_X);
        let expect_v = 0.5 * (n + 1.0);
        assert!((expect_v - 1.93763).abs() < 1e-5);
        assert!((vx - expect_v).abs() < 3.0 * expect_v * (2.0f64 / 1e6).sqrt());

        let xb = &stats.by_basis[0];
        let cov_ax = xb.covariance(0, BOB_X);
        let expect_c = c / 2f64.sqrt();
        assert!((expect_c - 1.76427).abs() < 1e-5);
        // Var of a covariance estimate: (σ_aa σ_bb + σ_ab²)/n.
        let se = ((n * expect_v + expect_c * expect_c) / xb.count() as f64).sqrt();
        assert!((cov_ax - expect_c).abs() < 3.0 * se, "{cov_ax} vs {expect_c}");

        let pb = &stats.by_basis[1];
        let cov_pp = pb.covariance(0, BOB_P);
        assert!((cov_pp + expect_c).abs() < 3.0 * se, "{cov_pp}");
    }

    #[test]
    fn streaming_matches_batch_bit_for_bit() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let count = 3 * CHUNK_SIZE + 123;
        let f = FilterSpec::new(1.2, 4.75).unwrap();
        for schedule in [BasisSchedule::Alternating, BasisSchedule::Random] {
            let batch = sample_batch(&s, count, 42, schedule).unwrap();
            let (filtered, rate) = post_select(&batch, &f, 7).unwrap();
            let via_batch = SampleStats::from_batch(&filtered);
            let streamed = simulate(&s, count, 42, schedule, Some((&f, 7))).unwrap();
            assert_eq!(via_batch, streamed);
            assert_eq!(rate, streamed.acceptance_rate());
        }
    }

    #[test]
    fn unit_gain_keeps_everything() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let batch = sample_batch(&s, 10_000, 1, BasisSchedule::Alternating).unwrap();
        let (out, rate) = post_select(&batch, &FilterSpec::new(1.0, 4.5).unwrap(), 2).unwrap();
        assert_eq!(rate, 1.0);
        assert_eq!(out, batch);
    }

    #[test]
    fn acceptance_falls_with_gain() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let batch = sample_batch(&s, 200_000, 3, BasisSchedule::Alternating).unwrap();
        let mut last = 1.0;
        for g in [1.05, 1.1, 1.15, 1.2] {
            let (_, rate) = post_select(&batch, &FilterSpec::new(g, 4.0).unwrap(), 4).unwrap();
            assert!(rate < last, "g = {g}: {rate} !< {last}");
            last = rate;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        assert!(matches!(
            sample_batch(&s, 0, 1, BasisSchedule::Alternating),
            Err(Error::EmptyBatch)
        ));
        assert!(post_select(&QuadratureBatch::default(), &FilterSpec::new(1.2, 4.0).unwrap(), 1).is_err());
        let shifted = GaussianState::new(
            nalgebra::DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]),
            s.cov().clone(),
            s.partition().clone(),
        )
        .unwrap();
        assert!(matches!(
            sample_batch(&shifted, 10, 1, BasisSchedule::Alternating),
            Err(Error::NonzeroMean(_))
        ));
    }

    #[test]
    fn alternating_schedule_layout() {
        let batch = sample_batch(&GaussianState::vacuum(), 10, 1, BasisSchedule::Alternating).unwrap();
        for (i, r) in batch.records.iter().enumerate() {
            assert_eq!(r.basis, if i % 2 == 0 { Basis::X } else { Basis::P });
        }
    }
}
