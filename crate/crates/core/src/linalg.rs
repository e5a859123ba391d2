//! Banded LU with partial pivoting and small dense helpers.
//!
//! Every one-dimensional solver in the crate couples only neighbouring
//! cells, so its Newton matrix is banded; the band is discovered from the
//! assembled entries rather than declared up front.

use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// Sparse entries collected during assembly; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct Triplets<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> Triplets<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.n && col < self.n);
        if value != T::zero() {
            self.entries.push((row, col, value));
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn to_band(&self) -> BandMatrix<T> {
        let (mut kl, mut ku) = (0usize, 0usize);
        for &(i, j, _) in &self.entries {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let mut band = BandMatrix::zeros(self.n, kl, ku);
        for &(i, j, v) in &self.entries {
            band.add(i, j, v);
        }
        band
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }
}

/// Row-wise band storage with room for the fill-in created by row swaps:
/// entry `(i, j)` lives at offset `j + kl - i` of row `i`, `j - i ∈ [-kl, kl + ku]`.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
    pivots: Vec<usize>,
    factored: bool,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
            pivots: vec![0; n],
            factored: false,
        }
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(!self.factored, "matrix already factored");
        assert!(j + self.kl >= i && j <= i + self.ku, "entry outside band");
        let k = self.at(i, j);
        self.data[k] += v;
    }

    /// In-place LU factorization with partial pivoting.
    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let reach = self.kl + self.ku;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.at(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::Singular(k));
            }
            self.pivots[k] = p;
            let jmax = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (self.at(k, j), self.at(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.at(k, k)];
            for i in k + 1..=last {
                let ik = self.at(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != T::zero() {
                    for j in k + 1..=jmax {
                        let kj = self.data[self.at(k, j)];
                        let ij = self.at(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place; `factor` must have succeeded.
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert!(self.factored, "factor before solving");
        let n = self.n;
        let reach = self.kl + self.ku;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.data[self.at(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= self.data[self.at(k, j)] * b[j];
            }
            b[k] = s / self.data[self.at(k, k)];
        }
    }
}

/// Solves a dense square system by LU with partial pivoting.
pub fn dense_solve<T: Real>(a: DMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let lu = a.lu();
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
        .ok_or(Error::Singular(0))
}
