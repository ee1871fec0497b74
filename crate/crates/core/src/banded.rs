//! Symmetric banded matrices: assembly, Cholesky, pivoted LU, dense export.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

/// Symmetric matrix stored by its lower band: `data[i * (kd + 1) + d] = A[i][i - d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, kd: usize) -> Self {
        SymBand {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.kd {
            0.0
        } else {
            self.data[i * (self.kd + 1) + (i - j)]
        }
    }

    /// Adds `v` to `A[i][j]` (and by symmetry `A[j][i]`). Only call once per unordered pair.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(
            i - j <= self.kd,
            "entry ({i}, {j}) outside band {}",
            self.kd
        );
        self.data[i * (self.kd + 1) + (i - j)] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            for j in lo..=i {
                let a = self.data[i * (self.kd + 1) + (i - j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `A = L Lᵀ`; fails if a pivot is not strictly positive.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, kd) = (self.n, self.kd);
        let w = kd + 1;
        let mut l = self.data.clone();
        for j in 0..n {
            let lo = j.saturating_sub(kd);
            let mut s = l[j * w];
            for k in lo..j {
                let v = l[j * w + (j - k)];
                s -= v * v;
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let d = s.sqrt();
            l[j * w] = d;
            for i in j + 1..(j + w).min(n) {
                let lo_i = i.saturating_sub(kd);
                let mut s = l[i * w + (i - j)];
                for k in lo_i.max(lo)..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                l[i * w + (i - j)] = s / d;
            }
        }
        Ok(BandCholesky { n, kd, l })
    }

    /// Pivoted LU for symmetric indefinite systems.
    pub fn lu(&self) -> Result<BandLu> {
        BandLu::factor(self)
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    kd: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    #[allow(clippy::needless_range_loop)] // indices follow the band layout
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim("right-hand side", self.n, b.len())?;
        let w = self.kd + 1;
        let mut x = b.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let hi = (i + w).min(self.n);
            let mut s = x[i];
            for k in i + 1..hi {
                s -= self.l[k * w + (k - i)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        Ok(x)
    }
}

/// LU with partial pivoting in band storage (lower bandwidth `kd`, upper `2 kd` after fill).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kd: usize,
    // row i holds columns i - kd ..= i + 2 kd at offset (j + kd - i)
    rows: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    fn width(kd: usize) -> usize {
        3 * kd + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * Self::width(self.kd) + (j + self.kd - i)
    }

    fn factor(a: &SymBand) -> Result<Self> {
        let (n, kd) = (a.n, a.kd);
        let w = Self::width(kd);
        let mut lu = BandLu {
            n,
            kd,
            rows: vec![0.0; n * w],
            pivots: vec![0; n],
        };
        for i in 0..n {
            for j in i.saturating_sub(kd)..(i + kd + 1).min(n) {
                let k = lu.idx(i, j);
                lu.rows[k] = a.get(i, j);
            }
        }
        for k in 0..n {
            let last = (k + kd).min(n - 1);
            let mut p = k;
            let mut best = lu.rows[lu.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = lu.rows[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { pivot: k });
            }
            lu.pivots[k] = p;
            let col_hi = (k + 2 * kd).min(n - 1);
            if p != k {
                for j in k..=col_hi {
                    let (a, b) = (lu.idx(k, j), lu.idx(p, j));
                    lu.rows.swap(a, b);
                }
            }
            let pivot = lu.rows[lu.idx(k, k)];
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let factor = lu.rows[ik] / pivot;
                lu.rows[ik] = factor;
                if factor != 0.0 {
                    for j in k + 1..=col_hi {
                        let kj = lu.rows[lu.idx(k, j)];
                        let ij = lu.idx(i, j);
                        lu.rows[ij] -= factor * kj;
                    }
                }
            }
        }
        Ok(lu)
    }

    #[allow(clippy::needless_range_loop)] // indices follow the band layout
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim("right-hand side", self.n, b.len())?;
        let (n, kd) = (self.n, self.kd);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            for i in k + 1..=(k + kd).min(n - 1) {
                x[i] -= self.rows[self.idx(i, k)] * xk;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + 2 * kd).min(n - 1) {
                s -= self.rows[self.idx(i, j)] * x[j];
            }
            x[i] = s / self.rows[self.idx(i, i)];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tridiag(n: usize, diag: f64, off: f64) -> SymBand {
        let mut a = SymBand::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, diag);
            if i > 0 {
                a.add(i, i - 1, off);
            }
        }
        a
    }

    #[test]
    fn cholesky_solves_laplacian() {
        let a = tridiag(50, 2.0, -1.0);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = a.cholesky().unwrap().solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = tridiag(10, 1.0, -1.0);
        assert!(matches!(
            a.cholesky(),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn lu_solves_indefinite() {
        let a = tridiag(40, 0.5, -1.0);
        let x_true: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
        let b = a.mul_vec(&x_true);
        let x = a.lu().unwrap().solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-8 * v.abs());
        }
    }

    #[test]
    fn lu_pivots_through_zero_diagonal() {
        let mut a = SymBand::zeros(2, 1);
        a.add(1, 0, 1.0);
        let x = a.lu().unwrap().solve(&[3.0, 4.0]).unwrap();
        assert_eq!(x, vec![4.0, 3.0]);
    }

    proptest! {
        #[test]
        fn lu_and_cholesky_agree_on_spd(
            n in 3usize..30,
            kd in 1usize..4,
            vals in proptest::collection::vec(-1.0f64..1.0, 200),
        ) {
            let mut a = SymBand::zeros(n, kd);
            let mut it = vals.iter().cycle();
            for i in 0..n {
                for j in i.saturating_sub(kd)..i {
                    a.add(i, j, *it.next().unwrap());
                }
                a.add(i, i, 2.0 * kd as f64 + 1.0);
            }
            let b: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
            let x1 = a.cholesky().unwrap().solve(&b).unwrap();
            let x2 = a.lu().unwrap().solve(&b).unwrap();
            let r = a.mul_vec(&x1);
            for i in 0..n {
                prop_assert!((x1[i] - x2[i]).abs() < 1e-10);
                prop_assert!((r[i] - b[i]).abs() < 1e-10);
            }
        }
    }
}
