use nalgebra::{Cholesky, Matrix2, Vector2};
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{require_physical, GaussianState, ESTIMATE_TOL};

use super::{
    chunk_count, chunk_rng, Basis, BasisSchedule, FilterSpec, QuadratureBatch, Record, SampleStats, Stream, CHUNK_SIZE,
};

/// Draws `count` records straight from the accepted distribution of the
/// filter, without simulating the rejected ones.
///
/// The raw outcome is proposed from `N(0, (H⁻¹ - k'I)⁻¹)` with
/// `k' = min(k, 0.9 λ_min(H⁻¹))` and kept with probability
/// `e^{(k-k')(u-u_c)}` inside the cutoff and `e^{-k'(u-u_c)}` outside,
/// `u = |γ|²`. When `k' = k` every proposal inside the cutoff is kept.
/// Alice's value is then drawn from her conditional distribution. Statistically identical to
/// `sample_batch` + `post_select` restricted to accepted records, and
/// usable at acceptance rates far too small for plain rejection.
pub fn sample_accepted(
    state: &GaussianState,
    filter: &FilterSpec,
    count: usize,
    seed: u64,
    schedule: BasisSchedule,
) -> Result<QuadratureBatch> {
    let model = AcceptedModel::new(state, filter, count)?;
    let chunks: Vec<Vec<Record>> = (0..chunk_count(count))
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::with_capacity(CHUNK_SIZE);
            model.for_each(count, c, seed, schedule, |r| out.push(r));
            out
        })
        .collect();
    Ok(QuadratureBatch::new(chunks.concat()))
}

/// Streaming equivalent of `sample_accepted` followed by accumulation.
/// `records` and `accepted` both equal `count`.
pub fn simulate_accepted(
    state: &GaussianState,
    filter: &FilterSpec,
    count: usize,
    seed: u64,
    schedule: BasisSchedule,
) -> Result<SampleStats> {
    let model = AcceptedModel::new(state, filter, count)?;
    let chunks: Vec<SampleStats> = (0..chunk_count(count))
        .into_par_iter()
        .map(|c| {
            let mut stats = SampleStats::default();
            model.for_each(count, c, seed, schedule, |r| stats.push(&r));
            stats
        })
        .collect();
    Ok(SampleStats::merge_ordered(&chunks))
}

struct AcceptedModel {
    lp: Matrix2<f64>,
    gains: [Vector2<f64>; 2],
    sd: [f64; 2],
    k: f64,
    kp: f64,
    uc: f64,
    g: f64,
}

impl AcceptedModel {
    fn new(state: &GaussianState, filter: &FilterSpec, count: usize) -> Result<Self> {
        filter.validate()?;
        if count == 0 {
            return Err(Error::EmptyBatch);
        }
        state.require_zero_mean_1p1()?;
        require_physical(state.cov(), ESTIMATE_TOL)?;
        let (ai, bi) = state.quadratures_1p1();
        let s = |i: usize, j: usize| state.cov().get(i, j);
        let b = Matrix2::new(s(bi[0], bi[0]), s(bi[0], bi[1]), s(bi[1], bi[0]), s(bi[1], bi[1]));
        let h = (b + Matrix2::identity()) * 0.5;
        let q = h.try_inverse().ok_or(Error::NotPositiveDefinite { eigenvalue: 0.0 })?;
        let k = filter.exponent();
        let kp = k.min(0.9 * q.symmetric_eigenvalues().min());
        let prec = q - Matrix2::identity() * kp;
        let proposal = prec
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite { eigenvalue: 0.0 })?;
        let lp = Cholesky::new(proposal)
            .ok_or(Error::NotPositiveDefinite { eigenvalue: 0.0 })?
            .unpack();

        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut gains = [Vector2::zeros(); 2];
        let mut sd = [0.0; 2];
        for basis in 0..2 {
            let cov_ah = Vector2::new(s(ai[basis], bi[0]), s(ai[basis], bi[1])) * r2;
            gains[basis] = q * cov_ah;
            let var = s(ai[basis], ai[basis]) - cov_ah.dot(&(q * cov_ah));
            sd[basis] = var.max(0.0).sqrt();
        }
        Ok(Self {
            lp,
            gains,
            sd,
            k,
            kp,
            uc: filter.cutoff * filter.cutoff,
            g: filter.gain,
        })
    }

    fn for_each(&self, count: usize, chunk: usize, seed: u64, schedule: BasisSchedule, mut f: impl FnMut(Record)) {
        let mut rng = chunk_rng(seed, Stream::Direct, chunk);
        let start = chunk * CHUNK_SIZE;
        let len = CHUNK_SIZE.min(count - start);
        for i in start..start + len {
            let basis = match schedule {
                BasisSchedule::Alternating if i % 2 == 0 => Basis::X,
                BasisSchedule::Alternating => Basis::P,
                BasisSchedule::Random if rng.random::<bool>() => Basis::X,
                BasisSchedule::Random => Basis::P,
            };
            let hv = loop {
                let z = Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                let hv = self.lp * z;
                let u = 0.5 * hv.norm_squared();
                let log_keep = if u < self.uc {
                    (self.k - self.kp) * (u - self.uc)
                } else {
                    -self.kp * (u - self.uc)
                };
                if log_keep >= 0.0 || rng.random::<f64>() < log_keep.exp() {
                    break hv;
                }
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            let bi = basis.index();
            f(Record {
                basis,
                alice_value: self.gains[bi].dot(&hv) + self.sd[bi] * z,
                bob_x: hv[0] / self.g,
                bob_p: hv[1] / self.g,
                accepted: true,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::apply_lossy;
    use crate::gaussian::tmss_standard;
    use crate::measurement::{reconstruct_covariance, FilteredEnsemble};

    #[test]
    fn matches_population_ensemble() {
        let s = apply_lossy(&tmss_standard(-4.2, 7.3).unwrap(), 0.2).unwrap();
        let f = FilterSpec::new(1.2, 4.75).unwrap();
        let batch = sample_accepted(&s, &f, 1_000_000, 5, BasisSchedule::Alternating).unwrap();
        assert_eq!(batch.accepted_count(), 1_000_000);
        let rec = reconstruct_covariance(&batch).unwrap();
        let exact = FilteredEnsemble::new(&s, &f).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let d = (rec.cov.get(r, c) - exact.cov.get(r, c)).abs();
                assert!(d <= 5.0 * rec.se[(r, c)] || d < 1e-12, "({r},{c}) {d}");
            }
        }
        assert!((rec.bob_x.kurtosis - exact.kurtosis[0]).abs() < 0.03);
    }

    #[test]
    fn deterministic() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let f = FilterSpec::new(1.1, 4.5).unwrap();
        let a = sample_accepted(&s, &f, 70_000, 9, BasisSchedule::Random).unwrap();
        let b = sample_accepted(&s, &f, 70_000, 9, BasisSchedule::Random).unwrap();
        assert_eq!(a, b);
        let streamed = simulate_accepted(&s, &f, 70_000, 9, BasisSchedule::Random).unwrap();
        assert_eq!(streamed, SampleStats::from_batch(&a));
    }

    #[test]
    fn gain_beyond_ideal_bound() {
        // Ideal NLA does not exist here; the truncated filter still does.
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let f = FilterSpec::new(1.5, 4.5).unwrap();
        let batch = sample_accepted(&s, &f, 1_000_000, 3, BasisSchedule::Alternating).unwrap();
        let rec = reconstruct_covariance(&batch).unwrap();
        let exact = FilteredEnsemble::new(&s, &f).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let d = (rec.cov.get(r, c) - exact.cov.get(r, c)).abs();
                assert!(d <= 5.0 * rec.se[(r, c)] || d < 1e-12, "({r},{c}) {d}");
            }
        }
    }
}
