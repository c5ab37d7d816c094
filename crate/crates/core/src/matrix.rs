//! Dense row-major matrices, observation masks, and the loss and distance
//! functions shared by the rest of the pipeline.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols} is empty"),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!(
                    "{rows}x{cols} needs {} values, got {}",
                    rows * cols,
                    data.len()
                ),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged or empty input; meant
    /// for literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let data: Vec<f64> = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), cols, data).expect("well-formed matrix literal")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Wraps already-validated storage. Used by internal kernels whose output
    /// is finite whenever their inputs are.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix::from_parts(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * c).collect(),
        )
    }

    pub fn is_non_negative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(mul(self, other))
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "t_matmul",
                format!("{:?}ᵀ x {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(mul_tn(self, other))
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape(
                "matmul_t",
                format!("{:?} x {:?}ᵀ", self.shape(), other.shape()),
            ));
        }
        Ok(mul_nt(self, other))
    }
}

pub(crate) fn mul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, p, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for (l, &av) in a.row(i).iter().enumerate().take(p) {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(l)) {
                *o += av * bv;
            }
        }
    }
    Matrix::from_parts(n, m, out)
}

pub(crate) fn mul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, n, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for l in 0..p {
        let brow = b.row(l);
        for (i, &av) in a.row(l).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[i * m..(i + 1) * m].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Matrix::from_parts(n, m, out)
}

pub(crate) fn mul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, m) = (a.rows, b.rows);
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..m {
            out.push(dot(arow, b.row(j)));
        }
    }
    Matrix::from_parts(n, m, out)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent partial sums let the loop vectorize.
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Observation mask; `true` marks an observed entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    observed: Vec<bool>,
}

impl Mask {
    /// Every row and every column needs at least one observed entry.
    pub fn new(rows: usize, cols: usize, observed: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || observed.len() != rows * cols {
            return Err(Error::shape(
                "Mask::new",
                format!("{rows}x{cols} with {} flags", observed.len()),
            ));
        }
        let mask = Self {
            rows,
            cols,
            observed,
        };
        if let Some(i) = (0..rows).find(|&i| (0..cols).all(|j| !mask.is_observed(i, j))) {
            return Err(Error::Degenerate(format!(
                "row {i} has no observed entries"
            )));
        }
        if let Some(j) = (0..cols).find(|&j| (0..rows).all(|i| !mask.is_observed(i, j))) {
            return Err(Error::Degenerate(format!(
                "column {j} has no observed entries"
            )));
        }
        Ok(mask)
    }

    /// A mask with no coverage checks, for callers (and tests) that need
    /// sparse patterns the loss functions must reject.
    pub fn new_unchecked(rows: usize, cols: usize, observed: Vec<bool>) -> Self {
        assert_eq!(observed.len(), rows * cols);
        Self {
            rows,
            cols,
            observed,
        }
    }

    pub fn all_observed(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            observed: vec![true; rows * cols],
        }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.cols + j]
    }

    #[inline]
    pub fn as_slice(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_full(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn missing_count(&self) -> usize {
        self.observed.len() - self.observed_count()
    }
}

fn check_factors(op: &'static str, x: &Matrix, w: &Matrix, h: &Matrix) -> Result<()> {
    if w.cols != h.rows || x.rows != w.rows || x.cols != h.cols {
        return Err(Error::shape(
            op,
            format!("X {:?}, W {:?}, H {:?}", x.shape(), w.shape(), h.shape()),
        ));
    }
    Ok(())
}

/// `‖X − W·H‖_F`.
pub fn frobenius_loss(x: &Matrix, w: &Matrix, h: &Matrix) -> Result<f64> {
    check_factors("frobenius_loss", x, w, h)?;
    let wh = mul(w, h);
    let sum: f64 = x
        .data
        .iter()
        .zip(&wh.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(libm::sqrt(sum))
}

/// Frobenius norm of the residual restricted to observed entries.
pub fn masked_frobenius_loss(x: &Matrix, w: &Matrix, h: &Matrix, mask: &Mask) -> Result<f64> {
    check_factors("masked_frobenius_loss", x, w, h)?;
    if mask.shape() != x.shape() {
        return Err(Error::shape(
            "masked_frobenius_loss",
            format!("mask {:?} vs X {:?}", mask.shape(), x.shape()),
        ));
    }
    if mask.observed_count() == 0 {
        return Err(Error::Degenerate("mask has no observed entries".into()));
    }
    Ok(masked_residual(x, &mul(w, h), mask))
}

pub(crate) fn masked_residual(x: &Matrix, wh: &Matrix, mask: &Mask) -> f64 {
    let sum: f64 = x
        .data
        .iter()
        .zip(&wh.data)
        .zip(&mask.observed)
        .filter(|(_, &o)| o)
        .map(|((a, b), _)| (a - b) * (a - b))
        .sum();
    libm::sqrt(sum)
}

/// Norm of X over observed entries only.
pub fn masked_norm(x: &Matrix, mask: &Mask) -> f64 {
    let sum: f64 = x
        .data
        .iter()
        .zip(&mask.observed)
        .filter(|(_, &o)| o)
        .map(|(v, _)| v * v)
        .sum();
    libm::sqrt(sum)
}

/// `1 − p·q / (‖p‖ ‖q‖)`, clamped to `[0, 1]` for non-negative inputs.
pub fn cosine_dissimilarity(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(
            "cosine_dissimilarity",
            format!("lengths {} and {}", p.len(), q.len()),
        ));
    }
    let (np, nq) = (norm(p), norm(q));
    if np == 0.0 || nq == 0.0 {
        return Err(Error::Degenerate("zero-norm vector".into()));
    }
    Ok((1.0 - dot(p, q) / (np * nq)).clamp(0.0, 1.0))
}

/// Cosine dissimilarity of two vectors already scaled to unit length.
#[inline]
pub(crate) fn unit_dissimilarity(p: &[f64], q: &[f64]) -> f64 {
    (1.0 - dot(p, q)).clamp(0.0, 2.0)
}
