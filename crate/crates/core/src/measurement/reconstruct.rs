use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::gaussian::{symplectic_eigenvalues, CovMatrix, GaussianState, ESTIMATE_TOL};
use crate::qkd::{key_rate_unchecked, KeyRateResult};
use crate::steering::{signed_unchecked, Direction};

use super::moments::{MomentStats, ALICE, BOB_P, BOB_X};
use super::sampling::SampleStats;
use super::QuadratureBatch;

/// Fewest accepted records a reconstruction will accept.
pub const MIN_ACCEPTED: u64 = 10_000;

const NSTATS: usize = 12;
const NPARAM: usize = 10;

// Covariance-matrix entries (row, col) of each parameter, interleaved
// (x_A, p_A, x_B, p_B) ordering.
const PARAM_ENTRIES: [(usize, usize); NPARAM] = [
    (0, 0), // A_xx
    (0, 1), // A_xp, not observable with single-quadrature homodyne
    (1, 1), // A_pp
    (0, 2), // C_xx
    (0, 3), // C_xp
    (1, 2), // C_px
    (1, 3), // C_pp
    (2, 2), // B_xx
    (2, 3), // B_xp
    (3, 3), // B_pp
];

// Per-basis second-moment pairs, 6 per basis.
const PAIRS: [(usize, usize); 6] = [
    (ALICE, ALICE),
    (ALICE, BOB_X),
    (ALICE, BOB_P),
    (BOB_X, BOB_X),
    (BOB_X, BOB_P),
    (BOB_P, BOB_P),
];

/// Covariance matrix estimated from accepted records, with delta-method
/// standard errors.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub cov: CovMatrix,
    /// Per-entry standard errors, same layout as `cov`.
    pub se: DMatrix<f64>,
    param_cov: SMatrix<f64, NPARAM, NPARAM>,
    pub records: u64,
    pub accepted: u64,
    pub bob_x: MomentStats,
    pub bob_p: MomentStats,
}

impl Reconstruction {
    pub fn from_stats(stats: &SampleStats) -> Result<Self> {
        if stats.accepted < MIN_ACCEPTED {
            return Err(Error::TooFewRecords {
                got: stats.accepted,
                required: MIN_ACCEPTED,
            });
        }
        for (m, name) in stats.by_basis.iter().zip(["X", "P"]) {
            if m.count() < 2 {
                return Err(Error::MissingBasis(name));
            }
        }

        let mut s = SVector::<f64, NSTATS>::zeros();
        let mut s_cov = SMatrix::<f64, NSTATS, NSTATS>::zeros();
        for (b, m) in stats.by_basis.iter().enumerate() {
            let n = m.count() as f64;
            for (i, &(p, q)) in PAIRS.iter().enumerate() {
                s[6 * b + i] = m.covariance(p, q);
            }
            for (i, &(p, q)) in PAIRS.iter().enumerate() {
                for (j, &(r, t)) in PAIRS.iter().enumerate() {
                    let mu4 = m.central4([p, q, r, t]);
                    s_cov[(6 * b + i, 6 * b + j)] = (mu4 - s[6 * b + i] * s[6 * b + j]) / n;
                }
            }
        }

        let total = (stats.by_basis[0].count() + stats.by_basis[1].count()) as f64;
        let w = [
            stats.by_basis[0].count() as f64 / total,
            stats.by_basis[1].count() as f64 / total,
        ];
        let j = jacobian(w);
        let mut theta = j * s;
        // Bob's block subtracts the vacuum unit on the diagonal.
        theta[7] -= 1.0;
        theta[9] -= 1.0;
        let param_cov = j * s_cov * j.transpose();

        let cov = CovMatrix::new(assemble(&theta))?;
        let mut se = DMatrix::zeros(4, 4);
        for (k, &(r, c)) in PARAM_ENTRIES.iter().enumerate() {
            let v = param_cov[(k, k)].max(0.0).sqrt();
            se[(r, c)] = v;
            se[(c, r)] = v;
        }

        let mut pooled = stats.by_basis[0].clone();
        pooled.merge(&stats.by_basis[1]);
        let rec = Self {
            cov,
            se,
            param_cov,
            records: stats.records,
            accepted: stats.accepted,
            bob_x: pooled.stats(BOB_X)?,
            bob_p: pooled.stats(BOB_P)?,
        };
        rec.require_bona_fide()?;
        Ok(rec)
    }

    /// Rejects estimates whose smallest symplectic eigenvalue lies below 1
    /// by more than `max(1e-3, 5 SE)`.
    fn require_bona_fide(&self) -> Result<()> {
        let min_nu = |c: &CovMatrix| -> Result<f64> {
            match symplectic_eigenvalues(c.matrix()) {
                Ok(nu) => Ok(nu[0]),
                Err(Error::NotPositiveDefinite { eigenvalue }) => Ok(eigenvalue),
                Err(e) => Err(e),
            }
        };
        let (nu, se) = self.propagate(min_nu)?;
        if nu < 1.0 - ESTIMATE_TOL.max(5.0 * se) {
            return Err(Error::Unphysical {
                min_symplectic_eigenvalue: nu,
            });
        }
        Ok(())
    }

    /// Steerability of the estimate with its standard error.
    pub fn steering(&self, direction: Direction) -> Result<(f64, f64)> {
        self.propagate(|c| Ok(signed_unchecked(&GaussianState::bipartite(c.clone())?, direction)?.max(0.0)))
    }

    /// Key-rate bound of the estimate with its standard error.
    pub fn key_rate(&self) -> Result<(KeyRateResult, f64)> {
        let k = key_rate_unchecked(&self.cov)?;
        let (_, se) = self.propagate(|c| Ok(key_rate_unchecked(c)?.key_rate))?;
        Ok((k, se))
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.records as f64
    }

    /// Value of `f` at the estimate and its delta-method standard error
    /// (central differences over the ten parameters).
    pub fn propagate<F>(&self, f: F) -> Result<(f64, f64)>
    where
        F: Fn(&CovMatrix) -> Result<f64>,
    {
        let value = f(&self.cov)?;
        let theta = params(&self.cov);
        let mut grad = SVector::<f64, NPARAM>::zeros();
        for k in 0..NPARAM {
            if self.param_cov[(k, k)] <= 0.0 {
                continue;
            }
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut up = theta;
            let mut dn = theta;
            up[k] += h;
            dn[k] -= h;
            let fu = f(&CovMatrix::new(assemble(&up))?)?;
            let fd = f(&CovMatrix::new(assemble(&dn))?)?;
            grad[k] = (fu - fd) / (2.0 * h);
        }
        let var = (grad.transpose() * self.param_cov * grad)[(0, 0)];
        Ok((value, var.max(0.0).sqrt()))
    }
}

fn jacobian(w: [f64; 2]) -> SMatrix<f64, NPARAM, NSTATS> {
    let r2 = std::f64::consts::SQRT_2;
    let mut j = SMatrix::<f64, NPARAM, NSTATS>::zeros();
    // basis X stats at 0..6, basis P at 6..12
    j[(0, 0)] = 1.0;
    j[(2, 6)] = 1.0;
    j[(3, 1)] = r2;
    j[(4, 2)] = r2;
    j[(5, 7)] = r2;
    j[(6, 8)] = r2;
    for (b, wb) in w.iter().enumerate() {
        j[(7, 6 * b + 3)] = 2.0 * wb;
        j[(8, 6 * b + 4)] = 2.0 * wb;
        j[(9, 6 * b + 5)] = 2.0 * wb;
    }
    j
}

fn assemble(theta: &SVector<f64, NPARAM>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    for (k, &(r, c)) in PARAM_ENTRIES.iter().enumerate() {
        m[(r, c)] = theta[k];
        m[(c, r)] = theta[k];
    }
    m
}

fn params(cov: &CovMatrix) -> SVector<f64, NPARAM> {
    SVector::from_fn(|k, _| {
        let (r, c) = PARAM_ENTRIES[k];
        cov.get(r, c)
    })
}

/// Reconstructs the covariance matrix from the accepted records of a batch.
pub fn reconstruct_covariance(batch: &QuadratureBatch) -> Result<Reconstruction> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Reconstruction::from_stats(&SampleStats::from_batch(batch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::apply_lossy;
    use crate::gaussian::{tmss_standard, GaussianState, Party};
    use crate::measurement::{post_select, sample_batch, simulate, BasisSchedule, FilterSpec};
    use crate::nla::nla_single_mode;

    fn within_se(rec: &Reconstruction, truth: &CovMatrix, k: f64) {
        for r in 0..4 {
            for c in 0..4 {
                let d = (rec.cov.get(r, c) - truth.get(r, c)).abs();
                let se = rec.se[(r, c)];
                assert!(
                    d <= k * se || (se == 0.0 && d < 1e-8),
                    "entry ({r},{c}): {} vs {} (se {se})",
                    rec.cov.get(r, c),
                    truth.get(r, c)
                );
            }
        }
    }

    #[test]
    fn vacuum_roundtrip() {
        let stats = simulate(
            &GaussianState::vacuum(),
            1_000_000,
            21,
            BasisSchedule::Alternating,
            None,
        )
        .unwrap();
        let rec = Reconstruction::from_stats(&stats).unwrap();
        within_se(&rec, &CovMatrix::identity(2), 5.0);
        for d in Direction::BOTH {
            let (g, se) = rec.steering(d).unwrap();
            assert!(g <= 3.0 * se.max(1e-12), "{d}: {g} ± {se}");
        }
    }

    #[test]
    fn model_state_roundtrip() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let batch = sample_batch(&s, 1_000_000, 22, BasisSchedule::Alternating).unwrap();
        let rec = reconstruct_covariance(&batch).unwrap();
        within_se(&rec, s.cov(), 5.0);
        assert_eq!(rec.acceptance_rate(), 1.0);
        let (g, se) = rec.steering(Direction::BobToAlice).unwrap();
        assert!(se > 0.0);
        assert!((g - 0.34224).abs() < 3.0 * se, "{g} ± {se}");
    }

    #[test]
    fn filtered_lossy_state_matches_analytic_nla() {
        let s = apply_lossy(&tmss_standard(-4.2, 7.3).unwrap(), 0.2).unwrap();
        let f = FilterSpec::new(1.2, 4.75).unwrap();
        let stats = simulate(&s, 10_000_000, 23, BasisSchedule::Alternating, Some((&f, 24))).unwrap();
        let rec = Reconstruction::from_stats(&stats).unwrap();
        let target = nla_single_mode(s.cov(), 1.2, Party::Bob).unwrap();
        within_se(&rec, &target, 5.0);
    }

    #[test]
    fn error_scales_as_inverse_root_n() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let small =
            Reconstruction::from_stats(&simulate(&s, 100_000, 1, BasisSchedule::Alternating, None).unwrap()).unwrap();
        let large =
            Reconstruction::from_stats(&simulate(&s, 400_000, 1, BasisSchedule::Alternating, None).unwrap()).unwrap();
        let ratio = small.se[(0, 2)] / large.se[(0, 2)];
        assert!((ratio - 2.0).abs() < 0.6, "{ratio}");
    }

    #[test]
    fn too_few_or_one_basis() {
        let s = tmss_standard(-4.2, 7.3).unwrap();
        let small = sample_batch(&s, 5000, 1, BasisSchedule::Alternating).unwrap();
        assert!(matches!(
            reconstruct_covariance(&small),
            Err(Error::TooFewRecords { .. })
        ));

        let mut only_x = sample_batch(&s, 30_000, 1, BasisSchedule::Alternating).unwrap();
        for r in only_x.records.iter_mut() {
            r.basis = crate::measurement::Basis::X;
        }
        assert!(matches!(reconstruct_covariance(&only_x), Err(Error::MissingBasis("P"))));

        let (filtered, _) = post_select(&small, &FilterSpec::new(1.2, 4.0).unwrap(), 2).unwrap();
        assert!(reconstruct_covariance(&filtered).is_err());
    }

    #[test]
    fn grossly_unphysical_data_is_rejected() {
        // Perfectly correlated x and p between the parties: violates uncertainty.
        let mut batch = sample_batch(&GaussianState::vacuum(), 40_000, 3, BasisSchedule::Alternating).unwrap();
        for r in batch.records.iter_mut() {
            r.alice_value = match r.basis {
                crate::measurement::Basis::X => 3.0 * r.bob_x,
                crate::measurement::Basis::P => 3.0 * r.bob_p,
            };
        }
        assert!(matches!(reconstruct_covariance(&batch), Err(Error::Unphysical { .. })));
    }
}
