//! Banded LU factorization with partial pivoting for complex matrices.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals, factorized in place.
///
/// Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl` columns hold
/// fill-in from row interchanges.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
    pivots: Vec<usize>,
    factored: bool,
}

impl BandLu {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![C64::new(0.0, 0.0); n * width], pivots: vec![0; n], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let lo = row as isize - self.kl as isize;
        let off = col as isize - lo;
        if off < 0 || off >= self.width as isize {
            None
        } else {
            Some(row * self.width + off as usize)
        }
    }

    /// Add `value` at `(row, col)`; panics outside the declared band.
    pub fn add(&mut self, row: usize, col: usize, value: C64) {
        assert!(!self.factored, "matrix already factorized");
        assert!(col + self.kl >= row && col <= row + self.ku, "entry ({row}, {col}) outside the band");
        let s = self.slot(row, col).expect("inside storage");
        self.data[s] += value;
    }

    fn get(&self, row: usize, col: usize) -> C64 {
        self.slot(row, col).map(|s| self.data[s]).unwrap_or(C64::new(0.0, 0.0))
    }

    fn set(&mut self, row: usize, col: usize, v: C64) {
        let s = self.slot(row, col).expect("inside storage");
        self.data[s] = v;
    }

    pub fn factorize(&mut self) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).norm();
            for r in k + 1..=last_row {
                let v = self.get(r, k).norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::Convergence(format!("singular banded matrix at column {k}")));
            }
            self.pivots[k] = p;
            let last_col = (k + self.ku + self.kl).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let a = self.get(k, c);
                    let b = self.get(p, c);
                    self.set(k, c, b);
                    self.set(p, c, a);
                }
            }
            let pivot = self.get(k, k);
            for r in k + 1..=last_row {
                let l = self.get(r, k) / pivot;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                self.set(r, k, l);
                for c in k + 1..=last_col {
                    let u = self.get(k, c);
                    if u != C64::new(0.0, 0.0) {
                        let s = self.slot(r, c).expect("inside storage");
                        self.data[s] -= l * u;
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solve `A x = b` in place after [`factorize`](Self::factorize).
    pub fn solve(&self, b: &mut [C64]) -> Result<()> {
        if !self.factored {
            return Err(Error::invalid("banded matrix not factorized"));
        }
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let last_row = (k + self.kl).min(n - 1);
            let bk = b[k];
            for r in k + 1..=last_row {
                b[r] -= self.get(r, k) * bk;
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.ku + self.kl).min(n - 1);
            let mut acc = b[k];
            for c in k + 1..=last_col {
                acc -= self.get(k, c) * b[c];
            }
            b[k] = acc / self.get(k, k);
        }
        Ok(())
    }
}
