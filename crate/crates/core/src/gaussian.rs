//! Covariance-matrix algebra for Gaussian states.
//!
//! Quadratures are `x = a + a†`, `p = -i(a - a†)` so the vacuum has unit
//! variance, and modes are interleaved as `(x1, p1, x2, p2, ...)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`CovMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Slack on the smallest symplectic eigenvalue for exact (analytic) states.
pub const PHYSICAL_TOL: f64 = 1e-9;

/// Slack for matrices estimated from finite samples. Estimates further below
/// the vacuum bound than this are rejected.
pub const ESTIMATE_TOL: f64 = 1e-3;

/// Converts a decibel figure to a variance ratio, `10^(dB/10)`.
pub fn db_to_variance(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// The block-diagonal symplectic form with 2x2 blocks `[[0, 1], [-1, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymplecticForm {
    dim: usize,
}

impl SymplecticForm {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::OddDimension(dim));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut omega = DMatrix::zeros(self.dim, self.dim);
        for k in 0..self.dim / 2 {
            omega[(2 * k, 2 * k + 1)] = 1.0;
            omega[(2 * k + 1, 2 * k)] = -1.0;
        }
        omega
    }
}

/// A real symmetric `2N x 2N` matrix of quadrature second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    m: DMatrix<f64>,
}

impl CovMatrix {
    /// Validates shape and symmetry. The stored matrix is the exact
    /// symmetrization `(M + Mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if rows == 0 || rows % 2 != 0 {
            return Err(Error::OddDimension(rows));
        }
        let scale = m.amax().max(1.0);
        for i in 0..rows {
            for j in (i + 1)..cols {
                let diff = (m[(i, j)] - m[(j, i)]).abs();
                if diff > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric { row: i, col: j, diff });
                }
            }
        }
        Ok(Self {
            m: (&m + m.transpose()) * 0.5,
        })
    }

    pub fn identity(modes: usize) -> Self {
        Self {
            m: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn modes(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[(row, col)]
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    /// Sub-matrix on the quadratures of `row_modes` x `col_modes`.
    pub fn block(&self, row_modes: &[usize], col_modes: &[usize]) -> DMatrix<f64> {
        let rows = quadrature_indices(row_modes);
        let cols = quadrature_indices(col_modes);
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.m[(rows[i], cols[j])])
    }

    /// Plain-text form: a `covmatrix v1 <dim>` header, then one line per row.
    pub fn to_text(&self) -> String {
        let dim = self.dim();
        let mut out = format!("covmatrix v1 {dim}\n");
        for i in 0..dim {
            let row: Vec<String> = (0..dim).map(|j| format!("{:.16e}", self.m[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let dim = match fields.as_slice() {
            ["covmatrix", "v1", d] => d.parse::<usize>().map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad dimension {d:?}: {e}"),
            })?,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected \"covmatrix v1 <dim>\", got {header:?}"),
                })
            }
        };
        let mut data = Vec::with_capacity(dim * dim);
        for row in 0..dim {
            let (idx, line) = lines.next().ok_or(Error::Parse {
                line: row + 2,
                message: format!("expected {dim} rows, found {row}"),
            })?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad number {tok:?}: {e}"),
                })?);
            }
            if data.len() - before != dim {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {dim} entries, found {}", data.len() - before),
                });
            }
        }
        if let Some((idx, _)) = lines.next() {
            return Err(Error::Parse {
                line: idx + 1,
                message: "trailing data after matrix".into(),
            });
        }
        Self::from_row_slice(dim, &data)
    }
}

pub(crate) fn quadrature_indices(modes: &[usize]) -> Vec<usize> {
    modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect()
}

/// Which party a block or direction refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Self {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

/// Assignment of modes to Alice and Bob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    alice: Vec<usize>,
    bob: Vec<usize>,
}

impl Partition {
    pub fn new(alice: Vec<usize>, bob: Vec<usize>, modes: usize) -> Result<Self> {
        if alice.is_empty() || bob.is_empty() {
            return Err(Error::InvalidPartition("both parties need at least one mode".into()));
        }
        let mut seen = vec![false; modes];
        for &m in alice.iter().chain(&bob) {
            if m >= modes {
                return Err(Error::InvalidPartition(format!("mode {m} out of range")));
            }
            if seen[m] {
                return Err(Error::InvalidPartition(format!("mode {m} assigned twice")));
            }
            seen[m] = true;
        }
        if let Some(m) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("mode {m} unassigned")));
        }
        Ok(Self { alice, bob })
    }

    /// Mode 0 to Alice, mode 1 to Bob.
    pub fn one_plus_one() -> Self {
        Self {
            alice: vec![0],
            bob: vec![1],
        }
    }

    pub fn modes_of(&self, party: Party) -> &[usize] {
        match party {
            Party::Alice => &self.alice,
            Party::Bob => &self.bob,
        }
    }
}

/// Zero or nonzero mean, covariance and bipartition.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: CovMatrix,
    partition: Partition,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: CovMatrix, partition: Partition) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::MeanLength {
                mean: mean.len(),
                dim: cov.dim(),
            });
        }
        let n = partition.alice.len() + partition.bob.len();
        if n != cov.modes() {
            return Err(Error::InvalidPartition(format!(
                "partition covers {n} modes, covariance has {}",
                cov.modes()
            )));
        }
        Ok(Self { mean, cov, partition })
    }

    /// Zero-mean state with the 1+1 partition.
    pub fn bipartite(cov: CovMatrix) -> Result<Self> {
        if cov.modes() != 2 {
            return Err(Error::ModeCount {
                expected: "1+1 mode",
                got: cov.modes(),
            });
        }
        Ok(Self {
            mean: DVector::zeros(4),
            cov,
            partition: Partition::one_plus_one(),
        })
    }

    pub fn vacuum() -> Self {
        Self::bipartite(CovMatrix::identity(2)).expect("vacuum is 1+1")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &CovMatrix {
        &self.cov
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Same mean and partition, new covariance.
    pub fn with_cov(&self, cov: CovMatrix) -> Result<Self> {
        Self::new(self.mean.clone(), cov, self.partition.clone())
    }

    pub fn block(&self, rows: Party, cols: Party) -> DMatrix<f64> {
        self.cov
            .block(self.partition.modes_of(rows), self.partition.modes_of(cols))
    }

    pub fn is_one_plus_one(&self) -> bool {
        self.partition.alice.len() == 1 && self.partition.bob.len() == 1
    }

    /// Rejects states that are not zero-mean 1+1 mode states.
    pub fn require_zero_mean_1p1(&self) -> Result<()> {
        if !self.is_one_plus_one() {
            return Err(Error::ModeCount {
                expected: "1+1 mode",
                got: self.cov.modes(),
            });
        }
        let amax = self.mean.amax();
        if amax != 0.0 {
            return Err(Error::NonzeroMean(amax));
        }
        Ok(())
    }

    /// Alice's and Bob's quadrature indices in the covariance matrix,
    /// for 1+1 mode states.
    pub(crate) fn quadratures_1p1(&self) -> ([usize; 2], [usize; 2]) {
        let a = self.partition.alice[0];
        let b = self.partition.bob[0];
        ([2 * a, 2 * a + 1], [2 * b, 2 * b + 1])
    }
}

/// Symmetric standard-form two-mode squeezed state from measured squeezing
/// and antisqueezing levels (dB): `A = B = n I`, `C = c diag(1, -1)`.
pub fn tmss_standard(squeeze_db: f64, antisqueeze_db: f64) -> Result<GaussianState> {
    if !(squeeze_db <= 0.0) {
        return Err(Error::OutOfRange {
            name: "squeeze_db",
            value: squeeze_db,
            reason: "must be <= 0",
        });
    }
    if !(antisqueeze_db >= 0.0) {
        return Err(Error::OutOfRange {
            name: "antisqueeze_db",
            value: antisqueeze_db,
            reason: "must be >= 0",
        });
    }
    let v_sq = db_to_variance(squeeze_db);
    let v_anti = db_to_variance(antisqueeze_db);
    let n = 0.5 * (v_sq + v_anti);
    let c = 0.5 * (v_anti - v_sq);
    #[rustfmt::skip]
    let cov = CovMatrix::from_row_slice(4, &[
        n,   0.0, c,   0.0,
        0.0, n,   0.0, -c,
        c,   0.0, n,   0.0,
        0.0, -c,  0.0, n,
    ])?;
    let report = check_physical(&cov);
    if !report.physical {
        return Err(Error::Unphysical {
            min_symplectic_eigenvalue: report.min_symplectic_eigenvalue,
        });
    }
    GaussianState::bipartite(cov)
}

/// Pure two-mode squeezed vacuum with Schmidt parameter `lambda = tanh r`.
pub fn tmss_pure(lambda: f64) -> Result<GaussianState> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            reason: "must lie in [0, 1)",
        });
    }
    let l2 = lambda * lambda;
    let n = (1.0 + l2) / (1.0 - l2);
    let c = 2.0 * lambda / (1.0 - l2);
    #[rustfmt::skip]
    let cov = CovMatrix::from_row_slice(4, &[
        n,   0.0, c,   0.0,
        0.0, n,   0.0, -c,
        c,   0.0, n,   0.0,
        0.0, -c,  0.0, n,
    ])?;
    GaussianState::bipartite(cov)
}

fn symmetric_eigen_checked(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { eigenvalue: min });
    }
    Ok(eig)
}

/// Symplectic eigenvalues of a symmetric positive-definite `2k x 2k`
/// matrix, ascending. These are the moduli of the eigenvalues of `iΩM`.
pub fn symplectic_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows == 0 || rows % 2 != 0 {
        return Err(Error::OddDimension(rows));
    }
    let eig = symmetric_eigen_checked(m)?;
    if rows == 2 {
        return Ok(vec![m.determinant().sqrt()]);
    }
    // K = M^½ Ω M^½ is antisymmetric with spectrum ±iν, so KᵀK carries
    // each ν² twice.
    let sqrt_m =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let omega = SymplecticForm::new(rows)?.matrix();
    let k = &sqrt_m * omega * &sqrt_m;
    let ktk = k.transpose() * &k;
    let mut sq: Vec<f64> = SymmetricEigen::new((&ktk + ktk.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    sq.sort_by(f64::total_cmp);
    Ok(sq
        .chunks(2)
        .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
        .collect())
}

/// Result of the bona-fide test `σ + iΩ ⪰ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalityReport {
    pub physical: bool,
    /// Smallest symplectic eigenvalue, or the smallest ordinary eigenvalue
    /// when the matrix is not even positive definite.
    pub min_symplectic_eigenvalue: f64,
}

pub fn check_physical(cov: &CovMatrix) -> PhysicalityReport {
    check_physical_within(cov, PHYSICAL_TOL)
}

pub fn check_physical_within(cov: &CovMatrix, tol: f64) -> PhysicalityReport {
    match symplectic_eigenvalues(cov.matrix()) {
        Ok(nu) => {
            let min = nu[0];
            PhysicalityReport {
                physical: min >= 1.0 - tol,
                min_symplectic_eigenvalue: min,
            }
        }
        Err(Error::NotPositiveDefinite { eigenvalue }) => PhysicalityReport {
            physical: false,
            min_symplectic_eigenvalue: eigenvalue,
        },
        Err(_) => PhysicalityReport {
            physical: false,
            min_symplectic_eigenvalue: f64::NAN,
        },
    }
}

pub(crate) fn require_physical(cov: &CovMatrix, tol: f64) -> Result<()> {
    let report = check_physical_within(cov, tol);
    if report.physical {
        Ok(())
    } else {
        Err(Error::Unphysical {
            min_symplectic_eigenvalue: report.min_symplectic_eigenvalue,
        })
    }
}

/// `μ = 1/√det σ`.
pub fn purity(cov: &CovMatrix) -> Result<f64> {
    let det = cov.det();
    if !(det >= 1.0 - PHYSICAL_TOL) {
        return Err(Error::DeterminantBelowVacuum { det });
    }
    Ok(1.0 / det.sqrt())
}

/// Schur complement of the conditioning party's block. Keeping Bob gives
/// `B - Cᵀ A⁻¹ C`; keeping Alice gives `A - C B⁻¹ Cᵀ`.
pub fn schur_complement(state: &GaussianState, keep: Party) -> Result<DMatrix<f64>> {
    let cond = keep.other();
    let kept = state.block(keep, keep);
    let conditioning = state.block(cond, cond);
    let cross = state.block(cond, keep);
    let chol = nalgebra::Cholesky::new((&conditioning + conditioning.transpose()) * 0.5).ok_or_else(|| {
        Error::NotPositiveDefinite {
            eigenvalue: SymmetricEigen::new(conditioning.clone()).eigenvalues.min(),
        }
    })?;
    let solved = chol.solve(&cross);
    let schur = kept - cross.transpose() * solved;
    Ok((&schur + schur.transpose()) * 0.5)
}
