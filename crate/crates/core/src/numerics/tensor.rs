//! Dense row-major matrices and the kernels every layer is built from.
//!
//! Vectors are stored as `1 × d` matrices. All kernels compute each output
//! row from the matching input row(s) only, with a fixed summation order, so
//! evaluating a single row gives bit-identical results to evaluating it
//! inside a larger matrix. The streaming cache relies on this.

use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating point element usable by the kernels (`f64` by default, `f32` for
/// throughput runs).
pub trait Element: Float + Default + Send + Sync + fmt::Debug + 'static {
    fn erf(self) -> Self;

    fn from_f64(x: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Element for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Element for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<S: Element = f64> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Element> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)?;
        }
        Ok(())
    }
}

/// Axis selector for reductions and softmax. `Rows` reduces over the row
/// index (down each column), `Cols` over the column index (along each row).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Rows,
    Cols,
}

/// Boolean matrix; `true` marks an entry that takes part in the computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != rows * cols {
            return Err(Error::dim("mask", &[rows, cols], &[keep.len()]));
        }
        Ok(Mask { rows, cols, keep })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            keep: vec![true; rows * cols],
        }
    }

    /// Lower-triangular mask: position `i` may see positions `0..=i`.
    pub fn causal(len: usize) -> Self {
        let mut keep = vec![false; len * len];
        for i in 0..len {
            for j in 0..=i {
                keep[i * len + j] = true;
            }
        }
        Mask {
            rows: len,
            cols: len,
            keep,
        }
    }

    /// Mask selecting whole rows.
    pub fn rows_from(valid: &[bool], cols: usize) -> Self {
        let keep = valid
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, cols))
            .collect();
        Mask {
            rows: valid.len(),
            cols,
            keep,
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.keep[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.keep
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Mask {
        Mask {
            rows: len,
            cols: self.cols,
            keep: self.keep[start * self.cols..(start + len) * self.cols].to_vec(),
        }
    }
}

impl<S: Element> Tensor<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("tensor", &[rows, cols], &[data.len()]));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: S) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    pub fn row_vector(data: Vec<S>) -> Self {
        Tensor {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn scalar(value: S) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::dim("from_rows", &[cols], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> Result<S> {
        if self.data.len() != 1 {
            return Err(Error::dim("item", &self.shape(), &[1, 1]));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(self, op: &str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::Numeric { op: op.to_string() })
        }
    }

    pub fn cast<T: Element>(&self) -> Tensor<T> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| T::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(op, &self.shape(), &other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: S) -> Self {
        self.map(|v| v * c)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// Adds a `1 × cols` row to every row.
    pub fn add_row(&self, row: &Self) -> Result<Self> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::dim("add_row", &self.shape(), &row.shape()));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&row.data) {
                *o = *o + b;
            }
        }
        Ok(out)
    }

    /// Multiplies every row elementwise by a `1 × cols` row.
    pub fn mul_row(&self, row: &Self) -> Result<Self> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::dim("mul_row", &self.shape(), &row.shape()));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&row.data) {
                *o = *o * b;
            }
        }
        Ok(out)
    }

    /// Sums rows into a `1 × cols` row (the adjoint of [`Tensor::add_row`]).
    pub fn sum_rows(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, &v) in out.data.iter_mut().zip(self.row(r)) {
                *o = *o + v;
            }
        }
        out
    }

    pub fn sum(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &v| acc + v)
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim("matmul", &self.shape(), &other.shape()));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Tensor {
            rows: m,
            cols: n,
            data: out,
        })
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::dim("matmul_nt", &self.shape(), &other.shape()));
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a_row
                    .iter()
                    .zip(b_row)
                    .fold(S::zero(), |acc, (&a, &b)| acc + a * b);
            }
        }
        Ok(Tensor {
            rows: m,
            cols: n,
            data: out,
        })
    }

    /// `selfᵀ · other`
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::dim("matmul_tn", &self.shape(), &other.shape()));
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![S::zero(); m * n];
        for kk in 0..k {
            let a_row = &self.data[kk * m..(kk + 1) * m];
            let b_row = &other.data[kk * n..(kk + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Tensor {
            rows: m,
            cols: n,
            data: out,
        })
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.rows {
            return Err(Error::dim("slice_rows", &self.shape(), &[start, len]));
        }
        Ok(Tensor {
            rows: len,
            cols: self.cols,
            data: self.data[start * self.cols..(start + len) * self.cols].to_vec(),
        })
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.cols {
            return Err(Error::dim("slice_cols", &self.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(self.rows * len);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + len]);
        }
        Ok(Tensor {
            rows: self.rows,
            cols: len,
            data,
        })
    }

    pub fn concat_rows(parts: &[&Self]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::dim("concat_rows", &[rows, cols], &p.shape()));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::dim("concat_cols", &[rows], &bad.shape()));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Mean over `axis`: `Rows` gives `1 × cols`, `Cols` gives `rows × 1`.
    pub fn mean(&self, axis: Axis) -> Result<Self> {
        match axis {
            Axis::Rows => {
                if self.rows == 0 {
                    return Err(Error::contract("mean over zero rows"));
                }
                Ok(self.sum_rows().scale(S::from_f64(1.0 / self.rows as f64)))
            }
            Axis::Cols => {
                if self.cols == 0 {
                    return Err(Error::contract("mean over zero columns"));
                }
                let inv = S::from_f64(1.0 / self.cols as f64);
                let data = (0..self.rows)
                    .map(|r| self.row(r).iter().fold(S::zero(), |a, &v| a + v) * inv)
                    .collect();
                Ok(Tensor {
                    rows: self.rows,
                    cols: 1,
                    data,
                })
            }
        }
    }

    /// Max-subtracted softmax normalising along `axis`. `Rows` makes every
    /// column sum to one.
    pub fn softmax(&self, axis: Axis) -> Self {
        match axis {
            Axis::Cols => {
                let mut out = self.clone();
                for r in 0..self.rows {
                    softmax_in_place(out.row_mut(r));
                }
                out
            }
            Axis::Rows => self.transpose().softmax(Axis::Cols).transpose(),
        }
    }

    /// Row-wise softmax restricted to entries kept by `mask`; dropped entries
    /// get exactly zero weight. A row with nothing kept is a contract error.
    pub fn masked_softmax(&self, mask: &Mask) -> Result<Self> {
        if mask.shape() != self.shape() {
            return Err(Error::dim("masked_softmax", &self.shape(), &mask.shape()));
        }
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let keep = &mask.keep[r * self.cols..(r + 1) * self.cols];
            let row = self.row(r);
            let mut max = None::<S>;
            for (&v, &k) in row.iter().zip(keep) {
                if k {
                    max = Some(max.map_or(v, |m: S| m.max(v)));
                }
            }
            let Some(max) = max else {
                return Err(Error::contract(format!(
                    "attention row {r} is fully masked"
                )));
            };
            let o = out.row_mut(r);
            let mut total = S::zero();
            for ((o, &v), &k) in o.iter_mut().zip(row).zip(keep) {
                if k {
                    *o = (v - max).exp();
                    total = total + *o;
                }
            }
            for o in o.iter_mut() {
                *o = *o / total;
            }
        }
        Ok(out)
    }

    /// Replaces entries *not* kept by `mask` with `value`.
    pub fn masked_fill(&self, mask: &Mask, value: S) -> Result<Self> {
        if mask.shape() != self.shape() {
            return Err(Error::dim("masked_fill", &self.shape(), &mask.shape()));
        }
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&mask.keep)
                .map(|(&v, &k)| if k { v } else { value })
                .collect(),
        })
    }

    /// Per-row standardisation `(x - mean) / sqrt(var + eps)`, no affine part.
    pub fn layer_norm(&self, eps: S) -> Self {
        let mut out = self.clone();
        let inv_n = S::from_f64(1.0 / self.cols as f64);
        for r in 0..self.rows {
            let row = out.row_mut(r);
            let mean = row.iter().fold(S::zero(), |a, &v| a + v) * inv_n;
            let var = row
                .iter()
                .fold(S::zero(), |a, &v| a + (v - mean) * (v - mean))
                * inv_n;
            let inv_std = (var + eps).sqrt().recip();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv_std;
            }
        }
        out
    }
}

fn softmax_in_place<S: Element>(row: &mut [S]) {
    let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    let mut total = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

pub fn sigmoid<S: Element>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Exact GeLU, `x·Φ(x)`.
pub fn gelu<S: Element>(x: S) -> S {
    let half = S::from_f64(0.5);
    half * x * (S::one() + (x * S::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub fn gelu_grad<S: Element>(x: S) -> S {
    let half = S::from_f64(0.5);
    let cdf = half * (S::one() + (x * S::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-half * x * x).exp() * S::from_f64(0.398_942_280_401_432_7);
    cdf + x * pdf
}
