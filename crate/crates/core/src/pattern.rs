//! Kronecker-sparse patterns and their supports.
//!
//! A pattern `(a, b, c, d)` describes the support `I_a ⊗ 1_{b×c} ⊗ I_d`: a
//! block-diagonal matrix with `a` diagonal blocks, each made of `b × c`
//! diagonal `d × d` sub-blocks. The output dimension is `M = a·b·d`, the input
//! dimension `N = a·c·d` and the support holds `a·b·c·d` entries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{KsError, Result};

/// Supports with at most this many entries are stored as a boolean grid.
pub const DENSE_MASK_LIMIT: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KsPattern {
    a: usize,
    b: usize,
    c: usize,
    d: usize,
}

fn checked_product(factors: &[usize], what: &str) -> Result<usize> {
    factors
        .iter()
        .try_fold(1usize, |acc, &f| acc.checked_mul(f))
        .ok_or_else(|| KsError::SizeOverflow(format!("{what} of {factors:?} overflows usize")))
}

impl KsPattern {
    /// Builds a pattern, rejecting zero entries and dimensions that overflow.
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Result<Self> {
        if a == 0 || b == 0 || c == 0 || d == 0 {
            return Err(KsError::InvalidPattern { a, b, c, d });
        }
        checked_product(&[a, b, c, d], "nnz")?;
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> usize {
        self.a
    }
    pub fn b(&self) -> usize {
        self.b
    }
    pub fn c(&self) -> usize {
        self.c
    }
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tuple(&self) -> (usize, usize, usize, usize) {
        (self.a, self.b, self.c, self.d)
    }

    /// `M = a·b·d`, the number of rows of the factor.
    pub fn out_dim(&self) -> usize {
        self.a * self.b * self.d
    }

    /// `N = a·c·d`, the number of columns of the factor.
    pub fn in_dim(&self) -> usize {
        self.a * self.c * self.d
    }

    pub fn nnz(&self) -> usize {
        self.a * self.b * self.c * self.d
    }

    /// Number of independent dense `b × c` sub-products, `a·d`.
    pub fn num_tiles(&self) -> usize {
        self.a * self.d
    }

    /// `M·N`, checked.
    pub fn matrix_size(&self) -> Result<usize> {
        checked_product(&[self.out_dim(), self.in_dim()], "matrix size")
    }

    /// Denominator of the density `1/(a·d)`.
    pub fn density_denominator(&self) -> usize {
        self.a * self.d
    }

    pub fn density(&self) -> f64 {
        1.0 / self.density_denominator() as f64
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.density()
    }

    pub fn is_dense(&self) -> bool {
        self.density_denominator() == 1
    }

    /// `h(b,c) = (b+c)/(b·c)`: input/output traffic per useful multiply.
    pub fn h(&self) -> f64 {
        let (b, c) = (self.b as f64, self.c as f64);
        (b + c) / (b * c)
    }

    /// `d·h(b,c)`, the memory-energy proxy.
    pub fn energy_proxy(&self) -> f64 {
        self.d as f64 * self.h()
    }

    /// True iff entry `(r, s)` lies on the support.
    pub fn contains(&self, r: usize, s: usize) -> bool {
        r < self.out_dim()
            && s < self.in_dim()
            && r / (self.b * self.d) == s / (self.c * self.d)
            && r % self.d == s % self.d
    }

    /// Row and column index sets of tile `(i, j)`.
    pub fn tile_index_sets(&self, i: usize, j: usize) -> Result<TileIndexSets> {
        if i >= self.a {
            return Err(KsError::IndexOutOfRange {
                what: "tile block index i",
                value: i,
                bound: self.a,
            });
        }
        if j >= self.d {
            return Err(KsError::IndexOutOfRange {
                what: "tile inner index j",
                value: j,
                bound: self.d,
            });
        }
        Ok(self.tile_unchecked(i, j))
    }

    fn tile_unchecked(&self, i: usize, j: usize) -> TileIndexSets {
        let row_base = i * self.b * self.d + j;
        let col_base = i * self.c * self.d + j;
        TileIndexSets {
            i,
            j,
            row: (0..self.b).map(|k| row_base + k * self.d).collect(),
            col: (0..self.c).map(|l| col_base + l * self.d).collect(),
        }
    }

    /// All `a·d` tiles in `(i, j)` lexicographic order, `j` fastest.
    pub fn all_tiles(&self) -> Vec<TileIndexSets> {
        (0..self.a)
            .flat_map(|i| (0..self.d).map(move |j| (i, j)))
            .map(|(i, j)| self.tile_unchecked(i, j))
            .collect()
    }

    /// Tile owning output row `r`, as a flat index `i·d + j`.
    pub fn tile_of_row(&self, r: usize) -> usize {
        (r / (self.b * self.d)) * self.d + r % self.d
    }

    pub fn support_mask(&self) -> Result<SupportMask> {
        let size = self.matrix_size()?;
        let (rows, cols) = (self.out_dim(), self.in_dim());
        let repr = if size <= DENSE_MASK_LIMIT {
            let mut entries = vec![false; size];
            for tile in self.all_tiles() {
                for &r in &tile.row {
                    for &s in &tile.col {
                        entries[r * cols + s] = true;
                    }
                }
            }
            MaskRepr::Dense(entries)
        } else {
            MaskRepr::Implicit(*self)
        };
        Ok(SupportMask { rows, cols, repr })
    }
}

impl fmt::Display for KsPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.a, self.b, self.c, self.d)
    }
}

impl FromStr for KsPattern {
    type Err = KsError;

    /// Parses the text form `a,b,c,d` (decimal, no spaces).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(KsError::Parse(format!(
                "pattern {s:?} must have the form a,b,c,d"
            )));
        }
        let mut v = [0usize; 4];
        for (slot, part) in v.iter_mut().zip(&parts) {
            if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(KsError::Parse(format!(
                    "pattern {s:?}: {part:?} is not a decimal integer"
                )));
            }
            *slot = part
                .parse()
                .map_err(|e| KsError::Parse(format!("pattern {s:?}: {e}")))?;
        }
        KsPattern::new(v[0], v[1], v[2], v[3])
    }
}

impl Serialize for KsPattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KsPattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Index sets of one independent dense sub-product. Both lists are ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileIndexSets {
    pub i: usize,
    pub j: usize,
    pub row: Vec<usize>,
    pub col: Vec<usize>,
}

#[derive(Clone, Debug)]
enum MaskRepr {
    Dense(Vec<bool>),
    Implicit(KsPattern),
}

/// Boolean `rows × cols` mask, materialized only when small.
#[derive(Clone, Debug)]
pub struct SupportMask {
    rows: usize,
    cols: usize,
    repr: MaskRepr,
}

impl SupportMask {
    /// Mask from an explicit row-major grid.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<bool>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(entries.len()) {
            return Err(KsError::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} mask",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            repr: MaskRepr::Dense(entries),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_materialized(&self) -> bool {
        matches!(self.repr, MaskRepr::Dense(_))
    }

    pub fn get(&self, r: usize, s: usize) -> bool {
        assert!(r < self.rows && s < self.cols, "mask index out of range");
        match &self.repr {
            MaskRepr::Dense(e) => e[r * self.cols + s],
            MaskRepr::Implicit(p) => p.contains(r, s),
        }
    }

    pub fn count(&self) -> usize {
        match &self.repr {
            MaskRepr::Dense(e) => e.iter().filter(|&&x| x).count(),
            MaskRepr::Implicit(p) => p.nnz(),
        }
    }

    /// Row-major 0/1 rendering, handy for small masks in tests and bindings.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|s| self.get(r, s) as u8).collect())
            .collect()
    }
}

impl PartialEq for SupportMask {
    fn eq(&self, other: &Self) -> bool {
        if self.rows != other.rows || self.cols != other.cols {
            return false;
        }
        match (&self.repr, &other.repr) {
            (MaskRepr::Dense(x), MaskRepr::Dense(y)) => x == y,
            _ => (0..self.rows).all(|r| (0..self.cols).all(|s| self.get(r, s) == other.get(r, s))),
        }
    }
}
