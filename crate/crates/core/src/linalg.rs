//! Dense row-major matrices and a blocked Cholesky factorization.
//!
//! Every reduction here runs in a fixed order, so results are bit-identical
//! across runs and independent of how queries are batched.

use std::cell::Cell;

use crate::error::{Error, Result};

const BLOCK: usize = 64;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of Cholesky factorizations attempted on the calling thread.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(Cell::get)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn add_to_diagonal(&mut self, values: impl IntoIterator<Item = f64>) {
        for (i, v) in values.into_iter().enumerate().take(self.rows.min(self.cols)) {
            self.data[i * self.cols + i] += v;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }
}

/// Dot product with eight independent partial sums, combined in a fixed order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    // row-major n×n; only the lower triangle is meaningful
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    ///
    /// Fails with the index and value of the first pivot that is not positive
    /// beyond rounding, i.e. not above `n·ε` times its original diagonal entry.
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                actual: a.cols(),
            });
        }
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        let n = a.rows();
        let mut l = a.data.clone();
        let tol = n as f64 * f64::EPSILON;
        let mut panel = vec![0.0; n * BLOCK];

        let mut kb = 0;
        while kb < n {
            let ke = (kb + BLOCK).min(n);
            let bw = ke - kb;

            // diagonal block
            for i in kb..ke {
                for j in kb..=i {
                    let s = {
                        let (ri, rj) = (i * n, j * n);
                        l[ri + j] - dot(&l[ri + kb..ri + j], &l[rj + kb..rj + j])
                    };
                    if i == j {
                        if !(s > tol * a.data[i * n + i].abs()) || !s.is_finite() {
                            return Err(Error::NotPositiveDefinite { index: i, value: s });
                        }
                        l[i * n + i] = s.sqrt();
                    } else {
                        l[i * n + j] = s / l[j * n + j];
                    }
                }
            }

            // panel below the diagonal block
            for i in ke..n {
                for j in kb..ke {
                    let ri = i * n;
                    let rj = j * n;
                    let s = l[ri + j] - dot(&l[ri + kb..ri + j], &l[rj + kb..rj + j]);
                    l[ri + j] = s / l[rj + j];
                }
            }

            // copy the finished panel rows contiguously, then update the trailing block
            for i in ke..n {
                let src = &l[i * n + kb..i * n + ke];
                panel[(i - ke) * bw..(i - ke + 1) * bw].copy_from_slice(src);
            }
            trailing_update(&mut l, n, ke, bw, &panel);
            kb = ke;
        }

        for i in 0..n {
            for j in i + 1..n {
                l[i * n + j] = 0.0;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.l[i * self.n..i * self.n + i + 1]
    }

    pub fn factor_matrix(&self) -> Matrix {
        Matrix {
            rows: self.n,
            cols: self.n,
            data: self.l.clone(),
        }
    }

    /// Smallest diagonal entry of `L`.
    pub fn min_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.l[i * self.n + i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Solves `L v = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
        }
    }

    /// Solves `L v_q = b_q` for several right-hand sides at once.
    ///
    /// Each column runs the same arithmetic as [`Self::forward_solve_in_place`],
    /// so results do not depend on how right-hand sides are grouped.
    pub fn forward_solve_many(&self, rhs: &mut [Vec<f64>]) {
        for b in rhs.iter() {
            assert_eq!(b.len(), self.n);
        }
        for i in 0..self.n {
            let row = self.row(i);
            for b in rhs.iter_mut() {
                b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
            }
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn backward_solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let row = self.row(i);
            b[i] /= row[i];
            let xi = b[i];
            for (bj, lij) in b[..i].iter_mut().zip(&row[..i]) {
                *bj -= lij * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_solve_in_place(&mut x);
        self.backward_solve_in_place(&mut x);
        x
    }
}

/// `A[i][j] -= panel_i · panel_j` for `ke <= j <= i < n`, in 4×4 register tiles.
fn trailing_update(l: &mut [f64], n: usize, ke: usize, bw: usize, panel: &[f64]) {
    let m = n - ke;
    let p = |r: usize| &panel[r * bw..(r + 1) * bw];
    let mut i = 0;
    while i < m {
        let ih = (i + 4).min(m);
        let mut j = 0;
        while j < ih {
            let jh = (j + 4).min(ih);
            if ih - i == 4 && jh - j == 4 {
                let acc = tile_4x4(
                    [p(i), p(i + 1), p(i + 2), p(i + 3)],
                    [p(j), p(j + 1), p(j + 2), p(j + 3)],
                );
                for (a, r) in acc.iter().enumerate() {
                    let gi = ke + i + a;
                    for (b, v) in r.iter().enumerate() {
                        let gj = ke + j + b;
                        if gj <= gi {
                            l[gi * n + gj] -= v;
                        }
                    }
                }
            } else {
                for a in i..ih {
                    for b in j..jh.min(a + 1) {
                        let gi = ke + a;
                        let gj = ke + b;
                        l[gi * n + gj] -= tile_dot(p(a), p(b));
                    }
                }
            }
            j = jh;
        }
        i = ih;
    }
}

// Sequential sum, identical to one lane of `tile_4x4`.
#[inline]
fn tile_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
fn tile_4x4(a: [&[f64]; 4], b: [&[f64]; 4]) -> [[f64; 4]; 4] {
    let len = a[0].len();
    let mut acc = [[0.0f64; 4]; 4];
    for k in 0..len {
        let bk = [b[0][k], b[1][k], b[2][k], b[3][k]];
        for r in 0..4 {
            let ar = a[r][k];
            for c in 0..4 {
                acc[r][c] += ar * bk[c];
            }
        }
    }
    acc
}
