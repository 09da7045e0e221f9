//! Small dense matrices over a [`Scalar`] field.

use std::ops::{Index, IndexMut};

use crate::error::{QmfError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, S::one())
    }

    pub fn scalar(n: usize, c: S) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c.clone();
        }
        m
    }

    pub fn diag(values: &[S]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = v.clone();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, c: &S) -> Self {
        self.map(|v| v.clone() * c.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs_f64()).fold(0.0, f64::max)
    }

    /// Returns `c` when the matrix equals `c·1`.
    pub fn as_scalar(&self) -> Option<S> {
        if !self.is_square() {
            return None;
        }
        let c = if self.rows == 0 {
            S::zero()
        } else {
            self[(0, 0)].clone()
        };
        let dev = self.clone() - Mat::scalar(self.rows, c.clone());
        dev.is_zero().then_some(c)
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)].is_zero()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)].approx_eq(&self[(j, i)])))
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        (0..self.rows)
            .map(|i| {
                let mut acc = S::zero();
                for (j, vj) in v.iter().enumerate() {
                    if !self[(i, j)].is_zero() {
                        acc = acc + self[(i, j)].clone() * vj.clone();
                    }
                }
                acc
            })
            .collect()
    }

    /// Submatrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Mat::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])].clone())
    }

    /// Gauss–Jordan inverse. Exact pivots for rationals, partial pivoting for floats.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(QmfError::Dimension("inverse of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        for c in 0..n {
            let pivot = pick_pivot(&a, c, c).ok_or_else(|| QmfError::Numeric("singular matrix".into()))?;
            a.swap_rows(c, pivot);
            inv.swap_rows(c, pivot);
            let p = a[(c, c)].inv();
            a.scale_row(c, &p);
            inv.scale_row(c, &p);
            for r in 0..n {
                if r != c && !a[(r, c)].is_zero() {
                    let f = a[(r, c)].clone();
                    a.axpy_row(r, c, &f);
                    inv.axpy_row(r, c, &f);
                }
            }
        }
        Ok(inv)
    }

    /// Basis of the null space from the reduced row echelon form, one vector per free column.
    pub fn nullspace(&self) -> Vec<Vec<S>> {
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![S::zero(); self.cols];
                v[f] = S::one();
                for (row, &pc) in pivots.iter().enumerate() {
                    v[pc] = -r[(row, f)].clone();
                }
                v
            })
            .collect()
    }

    /// Reduced row echelon form with the pivot columns, scanning columns left to right.
    pub fn rref(&self) -> (Self, Vec<usize>) {
        let mut a = self.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for c in 0..self.cols {
            if row == self.rows {
                break;
            }
            let Some(p) = pick_pivot(&a, row, c) else {
                continue;
            };
            a.swap_rows(row, p);
            let inv = a[(row, c)].inv();
            a.scale_row(row, &inv);
            for r in 0..self.rows {
                if r != row && !a[(r, c)].is_zero() {
                    let f = a[(r, c)].clone();
                    a.axpy_row(r, row, &f);
                }
            }
            pivots.push(c);
            row += 1;
        }
        (a, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    fn scale_row(&mut self, r: usize, f: &S) {
        for j in 0..self.cols {
            let v = self[(r, j)].clone() * f.clone();
            self[(r, j)] = v;
        }
    }

    /// row[target] -= f · row[source]
    fn axpy_row(&mut self, target: usize, source: usize, f: &S) {
        for j in 0..self.cols {
            if !self[(source, j)].is_zero() {
                let v = self[(target, j)].clone() - f.clone() * self[(source, j)].clone();
                self[(target, j)] = v;
            }
        }
    }
}

fn pick_pivot<S: Scalar>(a: &Mat<S>, from_row: usize, col: usize) -> Option<usize> {
    if S::EXACT {
        (from_row..a.rows).find(|&r| !a[(r, col)].is_zero())
    } else {
        let best = (from_row..a.rows).max_by(|&x, &y| {
            a[(x, col)]
                .abs_f64()
                .partial_cmp(&a[(y, col)].abs_f64())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        (!a[(best, col)].is_zero()).then_some(best)
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> Mat<S> {
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

impl<S: Scalar> std::ops::Add for Mat<S> {
    type Output = Mat<S>;
    fn add(self, o: Mat<S>) -> Mat<S> {
        &self + &o
    }
}

impl<S: Scalar> std::ops::Sub for Mat<S> {
    type Output = Mat<S>;
    fn sub(self, o: Mat<S>) -> Mat<S> {
        &self - &o
    }
}

impl<S: Scalar> std::ops::Mul for Mat<S> {
    type Output = Mat<S>;
    fn mul(self, o: Mat<S>) -> Mat<S> {
        &self * &o
    }
}

impl<S: Scalar> std::ops::Add for &Mat<S> {
    type Output = Mat<S>;
    fn add(self, o: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.clone() + b.clone()).collect(),
        }
    }
}

impl<S: Scalar> std::ops::Sub for &Mat<S> {
    type Output = Mat<S>;
    fn sub(self, o: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.clone() - b.clone()).collect(),
        }
    }
}

impl<S: Scalar> std::ops::Mul for &Mat<S> {
    type Output = Mat<S>;
    fn mul(self, o: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, o.rows);
        let mut out: Mat<S> = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let b = &o[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] = out[(i, j)].clone() + a.clone() * b.clone();
                    }
                }
            }
        }
        out
    }
}

impl<S: Scalar> std::ops::Neg for Mat<S> {
    type Output = Mat<S>;
    fn neg(self) -> Mat<S> {
        self.map(|v| -v.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from_ratio(a, b)
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat::from_fn(3, 3, |i, j| q((i * 3 + j) as i64 % 5 + (i == j) as i64 * 4, 1));
        let inv = m.inverse().unwrap();
        assert_eq!(&m * &inv, Mat::identity(3));
    }

    #[test]
    fn nullspace_of_rank_one() {
        let m = Mat::from_fn(2, 2, |_, _| q(1, 1));
        let ns = m.nullspace();
        assert_eq!(ns, vec![vec![q(-1, 1), q(1, 1)]]);
    }
}
