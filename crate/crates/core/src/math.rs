//! Dense vector/matrix kernels, activations, loss, and the deterministic RNG
//! shared by every other module. Everything here is pure and reentrant;
//! matrices are tiny (at most ~20x40) so there is no point in BLAS.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Row-major dense matrix of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dims must be positive, got {rows}x{cols}");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            rows * cols,
            data.len(),
            "matrix {rows}x{cols} needs {} elements, got {}",
            rows * cols,
            data.len()
        );
        Matrix { rows, cols, data }
    }

    /// Convenience constructor for tests and hand-built toys.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows in matrix literal");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// self * x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(
            self.cols,
            x.len(),
            "matvec shape mismatch: matrix {}x{} vs vector of length {}",
            self.rows,
            self.cols,
            x.len()
        );
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *o = acc;
        }
        out
    }

    /// self^T * y
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(
            self.rows,
            y.len(),
            "matvec_t shape mismatch: matrix {}x{} vs vector of length {}",
            self.rows,
            self.cols,
            y.len()
        );
        let mut out = vec![0.0; self.cols];
        for (r, yv) in y.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yv;
            }
        }
        out
    }

    /// self += y * x^T (rank-1 update, used to accumulate weight gradients)
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        assert_eq!(self.rows, y.len(), "add_outer row mismatch");
        assert_eq!(self.cols, x.len(), "add_outer col mismatch");
        for (r, yv) in y.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += yv * xv;
            }
        }
    }
}

/// W*x + b
pub fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    assert_eq!(
        w.rows(),
        b.len(),
        "affine shape mismatch: matrix {}x{} vs bias of length {}",
        w.rows(),
        w.cols(),
        b.len()
    );
    let mut out = w.matvec(x);
    for (o, bv) in out.iter_mut().zip(b) {
        *o += bv;
    }
    out
}

pub fn tanh_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn sigmoid_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| sigmoid(*v)).collect()
}

/// Mean of squared componentwise differences.
pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(
        pred.len(),
        truth.len(),
        "mse length mismatch: {} vs {}",
        pred.len(),
        truth.len()
    );
    let n = pred.len();
    assert!(n > 0, "mse of empty vectors");
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n as f64
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Counter-based deterministic generator. The same seed yields the same
/// stream on every platform, and `substream` derives independent streams
/// from one seed so consumers (e.g. one per dataset segment) do not depend
/// on draw order elsewhere.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` of the same seed.
    pub fn substream(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        Rng {
            seed: self.seed,
            inner,
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.inner);
    }
}
