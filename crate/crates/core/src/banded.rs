//! Banded matrices with an in-place LU factorization (no pivoting).
//!
//! Every system factored here is either symmetric positive definite up to a
//! positive diagonal row scaling, or strictly column diagonally dominant, so
//! elimination without pivoting is stable and keeps the band intact.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    // row-major, row i holds columns i-bw ..= i+bw
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.offset(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.offset(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.offset(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Factor in place; consumes the matrix.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, bw) = (self.n, self.bw);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let pivot = self.data[self.offset(k, k)];
            if !(pivot.abs() > 1e-300 * scale) || !pivot.is_finite() {
                return Err(Error::SingularOperator(k));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let ik = self.offset(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=last {
                    let kj = self.data[self.offset(k, j)];
                    let ij = self.offset(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

/// Packed unit-lower / upper factors sharing the band storage.
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.m.n, self.m.bw);
        assert_eq!(b.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut acc = b[i];
            for (j, bj) in b.iter().enumerate().take(i).skip(lo) {
                acc -= self.m.data[self.m.offset(i, j)] * bj;
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut acc = b[i];
            for (j, bj) in b.iter().enumerate().take(hi + 1).skip(i + 1) {
                acc -= self.m.data[self.m.offset(i, j)] * bj;
            }
            b[i] = acc / self.m.data[self.m.offset(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
