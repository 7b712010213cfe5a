//! Minimal row-major matrix with the three products training needs.
//!
//! Heavy products parallelize over output rows with rayon; every output
//! cell is written by exactly one task and accumulated in a fixed index
//! order, so results are independent of thread scheduling.

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Below this many multiply-adds the rayon fan-out costs more than it saves.
const PAR_THRESHOLD: usize = 32_768;

/// Dot product with four lanes of independent accumulation. The summation
/// order is fixed (lane k sums indices k, k+4, k+8, ... and lanes combine
/// as (0+1)+(2+3)), so results are reproducible.
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * b`, (m x k) * (k x n).
    pub fn matmul(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.rows);
        let mut c = Matrix::zeros(self.rows, b.cols);
        let work = self.rows * self.cols * b.cols;
        let body = |i: usize, crow: &mut [f64]| {
            let arow = self.row(i);
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                for (cj, &bj) in crow.iter_mut().zip(brow) {
                    *cj += aik * bj;
                }
            }
        };
        if work < PAR_THRESHOLD {
            for i in 0..self.rows {
                let (lo, hi) = (i * b.cols, (i + 1) * b.cols);
                body(i, &mut c.data[lo..hi]);
            }
        } else {
            c.data
                .par_chunks_mut(b.cols)
                .enumerate()
                .for_each(|(i, crow)| body(i, crow));
        }
        c
    }

    /// `self * b^T`, (m x k) * (n x k)^T -> (m x n).
    pub fn matmul_bt(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.cols);
        let mut c = Matrix::zeros(self.rows, b.rows);
        let work = self.rows * self.cols * b.rows;
        let body = |i: usize, crow: &mut [f64]| {
            let arow = self.row(i);
            for (j, cj) in crow.iter_mut().enumerate() {
                *cj = dot4(arow, b.row(j));
            }
        };
        if work < PAR_THRESHOLD {
            for i in 0..self.rows {
                let (lo, hi) = (i * b.rows, (i + 1) * b.rows);
                body(i, &mut c.data[lo..hi]);
            }
        } else {
            c.data
                .par_chunks_mut(b.rows)
                .enumerate()
                .for_each(|(i, crow)| body(i, crow));
        }
        c
    }

    /// `self^T * b`, (n x m)^T * (n x p) -> (m x p). Used for weight
    /// gradients `X^T * dY`.
    pub fn matmul_at(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.rows, b.rows);
        let mut c = Matrix::zeros(self.cols, b.cols);
        let work = self.rows * self.cols * b.cols;
        let body = |i: usize, crow: &mut [f64]| {
            for r in 0..self.rows {
                let ari = self.data[r * self.cols + i];
                if ari == 0.0 {
                    continue;
                }
                let brow = &b.data[r * b.cols..(r + 1) * b.cols];
                for (cj, &bj) in crow.iter_mut().zip(brow) {
                    *cj += ari * bj;
                }
            }
        };
        if work < PAR_THRESHOLD {
            for i in 0..self.cols {
                let (lo, hi) = (i * b.cols, (i + 1) * b.cols);
                body(i, &mut c.data[lo..hi]);
            }
        } else {
            c.data
                .par_chunks_mut(b.cols)
                .enumerate()
                .for_each(|(i, crow)| body(i, crow));
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut acc = 0.0;
                for k in 0..a.cols {
                    acc += a.data[i * a.cols + k] * b.data[k * b.cols + j];
                }
                c.data[i * b.cols + j] = acc;
            }
        }
        c
    }

    fn arbitrary(rows: usize, cols: usize, salt: u64) -> Matrix {
        let data = (0..rows * cols)
            .map(|i| {
                let v = crate::seed::split(salt, i as u64);
                (v % 1000) as f64 / 500.0 - 1.0
            })
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    #[test]
    fn products_agree_with_naive_reference() {
        let a = arbitrary(7, 13, 1);
        let b = arbitrary(13, 5, 2);
        let c = a.matmul(&b);
        let r = naive_matmul(&a, &b);
        for (x, y) in c.data.iter().zip(r.data.iter()) {
            assert!((x - y).abs() < 1e-12);
        }

        let bt = arbitrary(5, 13, 3);
        let c = a.matmul_bt(&bt);
        for i in 0..7 {
            for j in 0..5 {
                let mut acc = 0.0;
                for k in 0..13 {
                    acc += a.data[i * 13 + k] * bt.data[j * 13 + k];
                }
                assert!((c.data[i * 5 + j] - acc).abs() < 1e-12);
            }
        }

        let a2 = arbitrary(9, 6, 4);
        let b2 = arbitrary(9, 4, 5);
        let c = a2.matmul_at(&b2);
        for i in 0..6 {
            for j in 0..4 {
                let mut acc = 0.0;
                for r in 0..9 {
                    acc += a2.data[r * 6 + i] * b2.data[r * 4 + j];
                }
                assert!((c.data[i * 4 + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_path_matches_serial_path_bitwise() {
        // Big enough to cross PAR_THRESHOLD; same accumulation order means
        // bit-identical results.
        let a = arbitrary(64, 128, 6);
        let b = arbitrary(128, 64, 7);
        let big = a.matmul(&b);
        let mut serial = Matrix::zeros(64, 64);
        for i in 0..64 {
            let crow = serial.row_mut(i);
            for k in 0..128 {
                let aik = a.data[i * 128 + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..64 {
                    crow[j] += aik * b.data[k * 64 + j];
                }
            }
        }
        assert_eq!(big.data, serial.data);
    }
}
