//! Small dense and banded linear algebra kernels.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            y[i] = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                let (dst, src) = (&mut out.data[i * n..(i + 1) * n], &other.data[k * n..(k + 1) * n]);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + a * s;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }
}

impl<T> std::ops::Index<(usize, usize)> for Dense<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Dense<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// In-place Cholesky factorization `A = L·Lᵀ` (lower triangle overwritten).
///
/// Fails with [`Error::Singular`] if a pivot is not positive.
pub fn cholesky_in_place<T: Real>(a: &mut Dense<T>) -> Result<()> {
    let n = a.n;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - a[(j, k)] * a[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::Singular("dense Cholesky"));
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / d;
        }
    }
    Ok(())
}

/// Solves `L·Lᵀ x = b` with a factor from [`cholesky_in_place`].
pub fn cholesky_solve<T: Real>(l: &Dense<T>, b: &mut [T]) {
    let n = l.n;
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Dense<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(mut a: Dense<T>) -> Result<Self> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, -T::one()), |best, c| if c.1 > best.1 { c } else { best });
            if !(pv > scale * T::epsilon()) {
                return Err(Error::Singular("LU"));
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / piv;
                a[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let v = a[(k, j)];
                        a[(i, j)] = a[(i, j)] - f * v;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn solve(&self, b: &mut [T]) {
        let n = self.lu.n;
        let pb: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        b.copy_from_slice(&pb);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - self.lu[(i, k)] * b[k];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s = s - self.lu[(i, k)] * b[k];
            }
            b[i] = s / self.lu[(i, i)];
        }
    }
}

/// Symmetric band matrix stored by lower diagonals: `band[i][d] = A[i][i-d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand<T> {
    pub n: usize,
    pub bw: usize,
    data: Vec<T>,
}

impl<T: Real> SymBand<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![T::zero(); n * (bw + 1)],
        }
    }

    /// Resets to zero with a new size and bandwidth, reusing the allocation.
    pub fn reset(&mut self, n: usize, bw: usize) {
        self.n = n;
        self.bw = bw;
        self.data.clear();
        self.data.resize(n * (bw + 1), T::zero());
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        (d <= self.bw).then(|| hi * (self.bw + 1) + d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |s| self.data[s])
    }

    /// Adds `v` to entry `(i, j)` (and its mirror). Panics outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = self.data[s] + v;
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            y[i] = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> Dense<T> {
        let mut d = Dense::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                d[(i, j)] = self.get(i, j);
            }
        }
        d
    }
}

/// Band Cholesky factor `L` of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky<T> {
    l: SymBand<T>,
}

impl<T: Real> BandCholesky<T> {
    /// Factors in O(n·bw²). Fails if any pivot is not positive.
    pub fn factor(a: &SymBand<T>) -> Result<Self> {
        let mut l = a.clone();
        Self::factor_in_place(&mut l)?;
        Ok(Self { l })
    }

    fn factor_in_place(l: &mut SymBand<T>) -> Result<()> {
        let (n, bw) = (l.n, l.bw);
        let w = bw + 1;
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            let mut d = l.data[j * w];
            for k in k0..j {
                let v = l.data[j * w + (j - k)];
                d = d - v * v;
            }
            if !(d > T::zero()) {
                return Err(Error::Singular("band Cholesky"));
            }
            let d = d.sqrt();
            l.data[j * w] = d;
            for i in j + 1..(j + bw + 1).min(n) {
                let mut s = l.data[i * w + (i - j)];
                let k0 = i.saturating_sub(bw);
                for k in k0..j {
                    s = s - l.data[i * w + (i - k)] * l.data[j * w + (j - k)];
                }
                l.data[i * w + (i - j)] = s / d;
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &mut [T]) {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let d = &self.l.data;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s = s - d[i * w + (i - k)] * b[k];
            }
            b[i] = s / d[i * w];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s = s - d[k * w + (k - i)] * b[k];
            }
            b[i] = s / d[i * w];
        }
    }

    /// `log det A = 2·Σ log L_ii`.
    pub fn log_det(&self) -> T {
        let w = self.l.bw + 1;
        (0..self.l.n).map(|i| self.l.data[i * w].ln()).sum::<T>() * T::lit(2.0)
    }

    /// Smallest diagonal entry of the factor.
    pub fn min_pivot(&self) -> T {
        let w = self.l.bw + 1;
        (0..self.l.n).map(|i| self.l.data[i * w]).fold(T::infinity(), T::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spd_band(n: usize, bw: usize, seed: u64) -> SymBand<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = SymBand::<f64>::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
            a.add(i, i, off + 1.0);
        }
        a
    }

    #[test]
    fn band_cholesky_matches_dense() {
        let a = spd_band(25, 4, 1);
        let f = BandCholesky::factor(&a).unwrap();
        let mut dense = a.to_dense();
        cholesky_in_place(&mut dense).unwrap();
        let ld: f64 = (0..25).map(|i| dense[(i, i)].ln()).sum::<f64>() * 2.0;
        assert!((f.log_det() - ld).abs() < 1e-10);
        let b: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        f.solve(&mut x);
        let mut y = vec![0.0; 25];
        a.matvec(&x, &mut y);
        for (u, v) in y.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_band_is_rejected() {
        let mut a = SymBand::<f64>::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(BandCholesky::factor(&a).is_err());
    }

    #[test]
    fn lu_solves_nonsymmetric_system() {
        let a = Dense::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]]);
        let lu = Lu::factor(a.clone()).unwrap();
        let mut x = vec![1.0, 2.0, 3.0];
        lu.solve(&mut x);
        let mut y = vec![0.0; 3];
        a.matvec(&x, &mut y);
        for (u, v) in y.iter().zip(&[1.0f64, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-14);
        }
        assert!(Lu::factor(Dense::<f64>::zeros(2)).is_err());
    }

    proptest! {
        #[test]
        fn band_solve_residual_small(n in 1usize..40, bw in 0usize..6, seed in 0u64..1000) {
            let a = spd_band(n, bw, seed);
            let f = BandCholesky::factor(&a).unwrap();
            prop_assert!(f.min_pivot() > 0.0);
            let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let mut x = b.clone();
            f.solve(&mut x);
            let mut y = vec![0.0; n];
            a.matvec(&x, &mut y);
            for (u, v) in y.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9 * v.abs().max(1.0));
            }
        }
    }
}
