//! Dense complex matrices in row-major storage.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        Ok(m)
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from separate real and imaginary nested row arrays.
    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let rows = re.len();
        if im.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: im.len(),
            });
        }
        let cols = re.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for (r, i) in re.iter().zip(im) {
            if r.len() != cols || i.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: if r.len() != cols { r.len() } else { i.len() },
                });
            }
            data.extend(r.iter().zip(i).map(|(&a, &b)| Complex64::new(a, b)));
        }
        Self::from_row_major(rows, cols, data)
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

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn real_parts(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(|r| r.iter().map(|z| z.re).collect()).collect()
    }

    pub fn imag_parts(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(|r| r.iter().map(|z| z.im).collect()).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self {
            rows: self.cols,
            cols: self.rows,
            data: vec![Complex64::new(0.0, 0.0); self.data.len()],
        };
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: rhs.rows,
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols)?;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// max |(M^dag M - I)_{ij}|, or infinity for non-square input.
    pub fn unitarity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += self[(k, a)].conj() * self[(k, b)];
                }
                if a == b {
                    s -= 1.0;
                }
                worst = worst.max(s.norm());
            }
        }
        worst
    }

    /// Apply a 2x2 block `[[a, b], [c, d]]` from the left on rows `(m, m + 1)`.
    #[inline]
    pub fn apply_rows(&mut self, m: usize, block: &[[Complex64; 2]; 2]) {
        let cols = self.cols;
        let (head, tail) = self.data.split_at_mut((m + 1) * cols);
        let top = &mut head[m * cols..];
        let bottom = &mut tail[..cols];
        for (x, y) in top.iter_mut().zip(bottom.iter_mut()) {
            let (u, v) = (*x, *y);
            *x = block[0][0] * u + block[0][1] * v;
            *y = block[1][0] * u + block[1][1] * v;
        }
    }

    /// Multiply from the right by a 2x2 block acting on columns `(m, m + 1)`.
    #[inline]
    pub fn apply_cols(&mut self, m: usize, block: &[[Complex64; 2]; 2]) {
        let cols = self.cols;
        for row in self.data.chunks_mut(cols) {
            let (u, v) = (row[m], row[m + 1]);
            row[m] = u * block[0][0] + v * block[1][0];
            row[m + 1] = u * block[0][1] + v * block[1][1];
        }
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &nalgebra::DMatrix<Complex64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self { rows, cols, data }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_empty() {
        assert!(ComplexMatrix::zeros(0, 3).is_err());
        assert!(ComplexMatrix::from_row_major(2, 2, vec![c(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn block_ops_match_dense_products() {
        let a = ComplexMatrix::from_row_major(
            3,
            3,
            (0..9).map(|k| c(k as f64, (k * k) as f64 * 0.1)).collect(),
        )
        .unwrap();
        let block = [[c(0.3, 0.1), c(-0.2, 0.0)], [c(0.5, -0.4), c(0.9, 0.2)]];
        let mut dense = ComplexMatrix::identity(3).unwrap();
        dense[(1, 1)] = block[0][0];
        dense[(1, 2)] = block[0][1];
        dense[(2, 1)] = block[1][0];
        dense[(2, 2)] = block[1][1];

        let mut left = a.clone();
        left.apply_rows(1, &block);
        assert!(left.max_abs_diff(&dense.matmul(&a).unwrap()).unwrap() < 1e-14);

        let mut right = a.clone();
        right.apply_cols(1, &block);
        assert!(right.max_abs_diff(&a.matmul(&dense).unwrap()).unwrap() < 1e-14);
    }

    #[test]
    fn adjoint_of_product() {
        let a = ComplexMatrix::from_row_major(2, 2, vec![c(1.0, 2.0), c(0.0, 1.0), c(3.0, 0.0), c(-1.0, -1.0)]).unwrap();
        let b = ComplexMatrix::from_row_major(2, 2, vec![c(0.5, 0.0), c(2.0, -1.0), c(0.0, 0.0), c(1.0, 1.0)]).unwrap();
        let lhs = a.matmul(&b).unwrap().adjoint();
        let rhs = b.adjoint().matmul(&a.adjoint()).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-14);
    }
}
