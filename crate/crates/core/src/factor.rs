//! KS factor storage and the representations each backend consumes.
//!
//! The canonical form keeps the `a·b·c·d` support values in `(a, b, c, d)`
//! order with `d` fastest: value `(i, k, l, j)` sits at row `i·b·d + k·d + j`
//! and column `i·c·d + l·d + j` of the dense factor. Every other store is
//! derived from it eagerly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KsError, Result};
use crate::pattern::KsPattern;
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(KsError::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(KsError::ShapeMismatch("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, s: usize) -> T {
        self.data[r * self.cols + s]
    }

    #[inline]
    pub fn set(&mut self, r: usize, s: usize, v: T) {
        self.data[r * self.cols + s] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data
            .chunks(self.cols.max(1))
            .map(<[T]>::to_vec)
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Plain triple-loop product.
    pub fn matmul(&self, rhs: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != rhs.rows {
            return Err(KsError::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let v = self.get(r, k);
                if v == T::zero() {
                    continue;
                }
                for s in 0..rhs.cols {
                    out.data[r * rhs.cols + s] += v * rhs.get(k, s);
                }
            }
        }
        Ok(out)
    }
}

/// A factor supported on a KS pattern, stored canonically.
#[derive(Clone, Debug, PartialEq)]
pub struct KsFactor<T> {
    pattern: KsPattern,
    values: Vec<T>,
}

impl<T: Scalar> KsFactor<T> {
    pub fn new(pattern: KsPattern, values: Vec<T>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(KsError::ShapeMismatch(format!(
                "{} values for pattern {pattern} with {} nonzeros",
                values.len(),
                pattern.nnz()
            )));
        }
        Ok(Self { pattern, values })
    }

    pub fn zeros(pattern: KsPattern) -> Self {
        Self {
            pattern,
            values: vec![T::zero(); pattern.nnz()],
        }
    }

    /// Canonical values from `fill(i, k, l, j)`.
    pub fn from_fn(
        pattern: KsPattern,
        mut fill: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let (a, b, c, d) = pattern.tuple();
        let mut values = Vec::with_capacity(pattern.nnz());
        for i in 0..a {
            for k in 0..b {
                for l in 0..c {
                    for j in 0..d {
                        values.push(fill(i, k, l, j));
                    }
                }
            }
        }
        Self { pattern, values }
    }

    /// i.i.d. values uniform on the open interval `(−1/√c, 1/√c)`.
    pub fn random(pattern: KsPattern, seed: u64) -> Self {
        let bound = 1.0 / (pattern.c() as f64).sqrt();
        let edge = T::from_f64(bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..pattern.nnz())
            .map(|_| loop {
                let v = T::from_f64(rng.random_range(-bound..bound));
                // rounding to T can land exactly on the boundary
                if v.abs() < edge {
                    break v;
                }
            })
            .collect();
        Self { pattern, values }
    }

    pub fn pattern(&self) -> KsPattern {
        self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, k: usize, l: usize, j: usize) -> usize {
        let (_, b, c, d) = self.pattern.tuple();
        ((i * b + k) * c + l) * d + j
    }

    #[inline]
    pub fn value(&self, i: usize, k: usize, l: usize, j: usize) -> T {
        self.values[self.index(i, k, l, j)]
    }

    /// Dense entry `(r, s)`; zero off the support.
    pub fn entry(&self, r: usize, s: usize) -> T {
        if !self.pattern.contains(r, s) {
            return T::zero();
        }
        let (_, b, c, d) = self.pattern.tuple();
        let i = r / (b * d);
        let k = (r % (b * d)) / d;
        let j = r % d;
        let l = (s % (c * d)) / d;
        self.value(i, k, l, j)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let p = self.pattern;
        let mut m = DenseMatrix::zeros(p.out_dim(), p.in_dim());
        let (a, b, c, d) = p.tuple();
        for i in 0..a {
            for k in 0..b {
                for l in 0..c {
                    for j in 0..d {
                        let r = i * b * d + k * d + j;
                        let s = i * c * d + l * d + j;
                        m.set(r, s, self.value(i, k, l, j));
                    }
                }
            }
        }
        m
    }

    /// Projection of `w` onto the support; off-support entries are dropped.
    pub fn from_dense(pattern: KsPattern, w: &DenseMatrix<T>) -> Result<Self> {
        if w.rows() != pattern.out_dim() || w.cols() != pattern.in_dim() {
            return Err(KsError::ShapeMismatch(format!(
                "{}x{} matrix for pattern {pattern} ({}x{})",
                w.rows(),
                w.cols(),
                pattern.out_dim(),
                pattern.in_dim()
            )));
        }
        let (_, b, c, d) = pattern.tuple();
        Ok(Self::from_fn(pattern, |i, k, l, j| {
            w.get(i * b * d + k * d + j, i * c * d + l * d + j)
        }))
    }

    pub fn cast<U: Scalar>(&self) -> KsFactor<U> {
        KsFactor {
            pattern: self.pattern,
            values: self
                .values
                .iter()
                .map(|v| U::from_f64(v.as_f64()))
                .collect(),
        }
    }

    /// Pre-permuted blocks: block `i·d + j` is `K[row_{i,j}, col_{i,j}]`.
    pub fn to_bmm(&self) -> BmmTensor<T> {
        let (a, b, c, d) = self.pattern.tuple();
        let mut data = Vec::with_capacity(self.pattern.nnz());
        for i in 0..a {
            for j in 0..d {
                for k in 0..b {
                    for l in 0..c {
                        data.push(self.value(i, k, l, j));
                    }
                }
            }
        }
        BmmTensor {
            pattern: self.pattern,
            data,
        }
    }

    /// Transposed tiles: tile `i·d + j` is `Kᵀ[col_{i,j}, row_{i,j}]`, `c × b`.
    pub fn to_tiles(&self) -> TileStore<T> {
        let (a, b, c, d) = self.pattern.tuple();
        let mut data = Vec::with_capacity(self.pattern.nnz());
        for i in 0..a {
            for j in 0..d {
                for l in 0..c {
                    for k in 0..b {
                        data.push(self.value(i, k, l, j));
                    }
                }
            }
        }
        TileStore {
            pattern: self.pattern,
            data,
        }
    }

    pub fn to_csr(&self) -> CsrMatrix<T> {
        let p = self.pattern;
        let (_, b, c, d) = p.tuple();
        let rows = p.out_dim();
        let mut row_offsets = Vec::with_capacity(rows + 1);
        let mut col_indices = Vec::with_capacity(p.nnz());
        let mut values = Vec::with_capacity(p.nnz());
        row_offsets.push(0);
        for r in 0..rows {
            let i = r / (b * d);
            let k = (r % (b * d)) / d;
            let j = r % d;
            for l in 0..c {
                col_indices.push(i * c * d + l * d + j);
                values.push(self.value(i, k, l, j));
            }
            row_offsets.push(col_indices.len());
        }
        CsrMatrix {
            rows,
            cols: p.in_dim(),
            row_offsets,
            col_indices,
            values,
        }
    }
}

/// `a·d` dense `b × c` blocks (row-major), `(i, j)` lexicographic, `j` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct BmmTensor<T> {
    pattern: KsPattern,
    data: Vec<T>,
}

impl<T: Scalar> BmmTensor<T> {
    pub fn from_blocks(pattern: KsPattern, data: Vec<T>) -> Result<Self> {
        if data.len() != pattern.nnz() {
            return Err(KsError::ShapeMismatch(format!(
                "{} values for {} blocks of {}x{}",
                data.len(),
                pattern.num_tiles(),
                pattern.b(),
                pattern.c()
            )));
        }
        Ok(Self { pattern, data })
    }

    pub fn pattern(&self) -> KsPattern {
        self.pattern
    }

    pub fn num_blocks(&self) -> usize {
        self.pattern.num_tiles()
    }

    pub fn block_shape(&self) -> (usize, usize) {
        (self.pattern.b(), self.pattern.c())
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn block(&self, t: usize) -> &[T] {
        let len = self.pattern.b() * self.pattern.c();
        &self.data[t * len..(t + 1) * len]
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let p = self.pattern;
        let c = p.c();
        let mut m = DenseMatrix::zeros(p.out_dim(), p.in_dim());
        for (t, tile) in p.all_tiles().iter().enumerate() {
            let block = self.block(t);
            for (k, &r) in tile.row.iter().enumerate() {
                for (l, &s) in tile.col.iter().enumerate() {
                    m.set(r, s, block[k * c + l]);
                }
            }
        }
        m
    }
}

/// `a·d` contiguous `c × b` tiles (row-major) for the fused kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct TileStore<T> {
    pattern: KsPattern,
    data: Vec<T>,
}

impl<T: Scalar> TileStore<T> {
    pub fn pattern(&self) -> KsPattern {
        self.pattern
    }

    pub fn num_tiles(&self) -> usize {
        self.pattern.num_tiles()
    }

    pub fn tile(&self, t: usize) -> &[T] {
        let len = self.pattern.b() * self.pattern.c();
        &self.data[t * len..(t + 1) * len]
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let p = self.pattern;
        let b = p.b();
        let mut m = DenseMatrix::zeros(p.out_dim(), p.in_dim());
        for (t, idx) in p.all_tiles().iter().enumerate() {
            let tile = self.tile(t);
            for (l, &s) in idx.col.iter().enumerate() {
                for (k, &r) in idx.row.iter().enumerate() {
                    m.set(r, s, tile[l * b + k]);
                }
            }
        }
        m
    }
}

/// Compressed sparse rows of the full `M × N` factor.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&s, &v) in cols.iter().zip(vals) {
                m.set(r, s, v);
            }
        }
        m
    }
}
