use crate::error::{Error, Result};

/// Sample moments of one real variable. `kurtosis` is the plain fourth
/// standardized moment (3 for a Gaussian).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentStats {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl MomentStats {
    fn from_central(mean: f64, m2: f64, m3: f64, m4: f64, n: f64) -> Result<Self> {
        if !(m2 > 0.0) {
            return Err(Error::ZeroVariance);
        }
        Ok(Self {
            mean,
            variance: m2 * n / (n - 1.0),
            skewness: m3 / m2.powf(1.5),
            kurtosis: m4 / (m2 * m2),
        })
    }
}

pub fn moment_stats(values: &[f64]) -> Result<MomentStats> {
    if values.len() < 2 {
        return Err(Error::TooFewRecords {
            got: values.len() as u64,
            required: 2,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    MomentStats::from_central(mean, m2 / n, m3 / n, m4 / n, n)
}

const VARS: usize = 3;

// Exponent triples of every monomial of degree 1..=4 in three variables.
const fn monomials() -> [[u8; VARS]; 34] {
    let mut out = [[0u8; VARS]; 34];
    let mut k = 0;
    let mut deg = 1;
    while deg <= 4 {
        let mut i = deg;
        loop {
            let mut j = deg - i;
            loop {
                let l = deg - i - j;
                out[k] = [i as u8, j as u8, l as u8];
                k += 1;
                if j == 0 {
                    break;
                }
                j -= 1;
            }
            if i == 0 {
                break;
            }
            i -= 1;
        }
        deg += 1;
    }
    out
}

const MONOMIALS: [[u8; VARS]; 34] = monomials();

fn monomial_index(e: [u8; VARS]) -> Option<usize> {
    MONOMIALS.iter().position(|m| *m == e)
}

/// Raw power sums up to fourth order of `(alice, bob_x, bob_p)`.
///
/// Chunks accumulate independently and merge by addition; merging in a
/// fixed order keeps results bit-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMoments {
    count: u64,
    sums: [f64; 34],
}

impl Default for QuadratureMoments {
    fn default() -> Self {
        Self {
            count: 0,
            sums: [0.0; 34],
        }
    }
}

/// Variable index: Alice's measured quadrature.
pub const ALICE: usize = 0;
/// Variable index: Bob's heterodyne `X` (rescaled when filtered).
pub const BOB_X: usize = 1;
/// Variable index: Bob's heterodyne `P`.
pub const BOB_P: usize = 2;

impl QuadratureMoments {
    #[inline]
    pub fn push(&mut self, v: [f64; VARS]) {
        let mut pow = [[1.0f64; 5]; VARS];
        for (p, &x) in pow.iter_mut().zip(&v) {
            for k in 1..5 {
                p[k] = p[k - 1] * x;
            }
        }
        for (s, e) in self.sums.iter_mut().zip(MONOMIALS.iter()) {
            *s += pow[0][e[0] as usize] * pow[1][e[1] as usize] * pow[2][e[2] as usize];
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(other.sums.iter()) {
            *a += b;
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `E[Π vᵢ^eᵢ]`.
    fn raw(&self, e: [u8; VARS]) -> f64 {
        if e == [0, 0, 0] {
            return 1.0;
        }
        let idx = monomial_index(e).expect("degree <= 4");
        self.sums[idx] / self.count as f64
    }

    pub fn mean(&self, var: usize) -> f64 {
        let mut e = [0u8; VARS];
        e[var] = 1;
        self.raw(e)
    }

    /// Central moment `E[Π (vᵢ - μᵢ)^eᵢ]` (divisor n), degree <= 4.
    pub fn central(&self, e: [u8; VARS]) -> f64 {
        let mu = [self.mean(0), self.mean(1), self.mean(2)];
        let mut total = 0.0;
        for i in 0..=e[0] {
            for j in 0..=e[1] {
                for k in 0..=e[2] {
                    let coeff = binom(e[0], i) * binom(e[1], j) * binom(e[2], k);
                    let shift = (-mu[0]).powi((e[0] - i) as i32)
                        * (-mu[1]).powi((e[1] - j) as i32)
                        * (-mu[2]).powi((e[2] - k) as i32);
                    total += coeff * self.raw([i, j, k]) * shift;
                }
            }
        }
        total
    }

    /// Unbiased sample covariance of variables `a`, `b`.
    pub fn covariance(&self, a: usize, b: usize) -> f64 {
        let mut e = [0u8; VARS];
        e[a] += 1;
        e[b] += 1;
        let n = self.count as f64;
        self.central(e) * n / (n - 1.0)
    }

    /// `E[(va-μa)(vb-μb)(vc-μc)(vd-μd)]`.
    pub fn central4(&self, idx: [usize; 4]) -> f64 {
        let mut e = [0u8; VARS];
        for i in idx {
            e[i] += 1;
        }
        self.central(e)
    }

    pub fn stats(&self, var: usize) -> Result<MomentStats> {
        if self.count < 2 {
            return Err(Error::TooFewRecords {
                got: self.count,
                required: 2,
            });
        }
        let pick = |k: u8| {
            let mut e = [0u8; VARS];
            e[var] = k;
            self.central(e)
        };
        MomentStats::from_central(self.mean(var), pick(2), pick(3), pick(4), self.count as f64)
    }
}

fn binom(n: u8, k: u8) -> f64 {
    const T: [[f64; 5]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0, 0.0],
        [1.0, 3.0, 3.0, 1.0, 0.0],
        [1.0, 4.0, 6.0, 4.0, 1.0],
    ];
    T[n as usize][k as usize]
}
