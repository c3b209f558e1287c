use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cholesky factor `L` of a symmetric positive definite band matrix.
///
/// Row `k` stores `L[k][k - bw..=k]` in `band[k * (bw + 1)..]`, with the
/// diagonal last.
#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    n: usize,
    bw: usize,
    band: Vec<T>,
}

impl<T: Scalar> BandedCholesky<T> {
    /// Factorizes the matrix whose lower band is given by `entry(k, j)` for
    /// `k - bw <= j <= k`. Fails on a non-positive pivot.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> T) -> Result<Self> {
        let stride = bw + 1;
        let mut band = vec![T::zero(); n * stride];
        for k in 0..n {
            let lo = k.saturating_sub(bw);
            for j in lo..=k {
                // sum_{l} L[k][l] L[j][l], l in max(lo, j - bw)..j
                let lstart = lo.max(j.saturating_sub(bw));
                let mut s = entry(k, j);
                for l in lstart..j {
                    s -= band[k * stride + (l + bw - k)] * band[j * stride + (l + bw - j)];
                }
                if j == k {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(Error::OperatorEvaluation {
                            reason: format!("non-positive pivot {s:e} at row {k}"),
                            min: f64::NAN,
                            max: f64::NAN,
                        });
                    }
                    band[k * stride + bw] = s.sqrt();
                } else {
                    band[k * stride + (j + bw - k)] = s / band[j * stride + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, bw, stride) = (self.n, self.bw, self.bw + 1);
        debug_assert_eq!(b.len(), n);
        for k in 0..n {
            let lo = k.saturating_sub(bw);
            let mut s = b[k];
            for l in lo..k {
                s -= self.band[k * stride + (l + bw - k)] * b[l];
            }
            b[k] = s / self.band[k * stride + bw];
        }
        for k in (0..n).rev() {
            let hi = (k + bw).min(n - 1);
            let mut s = b[k];
            for l in k + 1..=hi {
                s -= self.band[l * stride + (k + bw - l)] * b[l];
            }
            b[k] = s / self.band[k * stride + bw];
        }
    }
}

/// Symmetric band matrix assembled entry by entry (lower band stored).
#[derive(Debug, Clone)]
pub struct SymBand<T> {
    n: usize,
    bw: usize,
    band: Vec<T>,
}

impl<T: Scalar> SymBand<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBand {
            n,
            bw,
            band: vec![T::zero(); n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Adds `v` to entry `(k, j)` (and its mirror). Panics outside the band.
    pub fn add(&mut self, k: usize, j: usize, v: T) {
        let (k, j) = if k >= j { (k, j) } else { (j, k) };
        assert!(
            k - j <= self.bw && k < self.n,
            "entry ({k}, {j}) outside the band"
        );
        self.band[k * (self.bw + 1) + (j + self.bw - k)] += v;
    }

    pub fn get(&self, k: usize, j: usize) -> T {
        let (k, j) = if k >= j { (k, j) } else { (j, k) };
        if k - j > self.bw {
            return T::zero();
        }
        self.band[k * (self.bw + 1) + (j + self.bw - k)]
    }

    pub fn add_diagonal(&mut self, d: &[T]) {
        for (k, &v) in d.iter().enumerate() {
            self.add(k, k, v);
        }
    }

    pub fn scale(&mut self, a: T) {
        for v in &mut self.band {
            *v *= a;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for k in 0..self.n {
            for j in k.saturating_sub(self.bw)..=k {
                let a = self.band[k * (self.bw + 1) + (j + self.bw - k)];
                y[k] += a * x[j];
                if j != k {
                    y[j] += a * x[k];
                }
            }
        }
        y
    }

    pub fn cholesky(&self) -> Result<BandedCholesky<T>> {
        BandedCholesky::factor(self.n, self.bw, |k, j| self.get(k, j))
    }
}
