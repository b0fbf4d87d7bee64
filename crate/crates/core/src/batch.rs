//! Dense batches of samples with an explicit memory layout.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{KsError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    /// Row-major `B × F`: each sample is contiguous.
    #[serde(rename = "bsf")]
    BatchSizeFirst,
    /// Row-major `F × B`: each feature is contiguous.
    #[serde(rename = "bsl")]
    BatchSizeLast,
}

impl Layout {
    pub const ALL: [Layout; 2] = [Layout::BatchSizeFirst, Layout::BatchSizeLast];

    pub fn code(self) -> u8 {
        match self {
            Layout::BatchSizeFirst => 0,
            Layout::BatchSizeLast => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Layout::BatchSizeFirst),
            1 => Some(Layout::BatchSizeLast),
            _ => None,
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::BatchSizeFirst => "bsf",
            Layout::BatchSizeLast => "bsl",
        })
    }
}

impl FromStr for Layout {
    type Err = KsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bsf" | "batch-size-first" => Ok(Layout::BatchSizeFirst),
            "bsl" | "batch-size-last" => Ok(Layout::BatchSizeLast),
            other => Err(KsError::Parse(format!("unknown layout {other:?}"))),
        }
    }
}

/// Default FP32 equivalence tolerances `(rel_tol, abs_tol)` for a reduction of
/// length `c`.
pub fn default_tolerances(reduction_len: usize) -> (f64, f64) {
    (1e-5 * (reduction_len as f64).sqrt(), 1e-6)
}

/// `batch` samples of `features` values stored contiguously in one buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchMatrix<T> {
    batch: usize,
    features: usize,
    layout: Layout,
    data: Vec<T>,
}

impl<T: Scalar> BatchMatrix<T> {
    pub fn zeros(batch: usize, features: usize, layout: Layout) -> Self {
        Self {
            batch,
            features,
            layout,
            data: vec![T::zero(); batch * features],
        }
    }

    pub fn from_vec(batch: usize, features: usize, layout: Layout, data: Vec<T>) -> Result<Self> {
        if batch.checked_mul(features) != Some(data.len()) {
            return Err(KsError::ShapeMismatch(format!(
                "buffer of {} values for a {batch}x{features} batch",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            features,
            layout,
            data,
        })
    }

    /// Fills logical element `(n, f)` with `fill(n, f)`.
    pub fn from_fn(
        batch: usize,
        features: usize,
        layout: Layout,
        mut fill: impl FnMut(usize, usize) -> T,
    ) -> Self {
        let mut m = Self::zeros(batch, features, layout);
        for n in 0..batch {
            for f in 0..features {
                let off = m.offset(n, f);
                m.data[off] = fill(n, f);
            }
        }
        m
    }

    /// i.i.d. standard normal entries.
    ///
    /// Sample `n` draws from its own ChaCha stream keyed by `(seed, n)`, so the
    /// logical content does not depend on the layout.
    pub fn random_normal(batch: usize, features: usize, layout: Layout, seed: u64) -> Self {
        let mut m = Self::zeros(batch, features, layout);
        for n in 0..batch {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            for f in 0..features {
                let v: f64 = rng.sample(StandardNormal);
                let off = m.offset(n, f);
                m.data[off] = T::from_f64(v);
            }
        }
        m
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, f: usize) -> usize {
        debug_assert!(n < self.batch && f < self.features);
        match self.layout {
            Layout::BatchSizeFirst => n * self.features + f,
            Layout::BatchSizeLast => f * self.batch + n,
        }
    }

    #[inline]
    pub fn get(&self, n: usize, f: usize) -> T {
        self.data[self.offset(n, f)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, f: usize, v: T) {
        let off = self.offset(n, f);
        self.data[off] = v;
    }

    /// Re-dimensions the buffer in place, keeping its allocation, and zeroes it.
    pub fn reset(&mut self, batch: usize, features: usize, layout: Layout) {
        self.batch = batch;
        self.features = features;
        self.layout = layout;
        self.data.clear();
        self.data.resize(batch * features, T::zero());
    }

    /// Re-dimensions without clearing; callers overwrite every element.
    pub(crate) fn reshape_for_overwrite(&mut self, batch: usize, features: usize, layout: Layout) {
        self.batch = batch;
        self.features = features;
        self.layout = layout;
        self.data.resize(batch * features, T::zero());
    }

    /// Physical transpose into `target`; logical values are unchanged.
    pub fn convert_layout(&self, target: Layout) -> Self {
        if target == self.layout {
            return self.clone();
        }
        let (rows, cols) = match self.layout {
            Layout::BatchSizeFirst => (self.batch, self.features),
            Layout::BatchSizeLast => (self.features, self.batch),
        };
        let mut data = vec![T::zero(); self.data.len()];
        const BLOCK: usize = 32;
        for r0 in (0..rows).step_by(BLOCK) {
            for c0 in (0..cols).step_by(BLOCK) {
                for r in r0..(r0 + BLOCK).min(rows) {
                    for c in c0..(c0 + BLOCK).min(cols) {
                        data[c * rows + r] = self.data[r * cols + c];
                    }
                }
            }
        }
        Self {
            batch: self.batch,
            features: self.features,
            layout: target,
            data,
        }
    }

    pub fn cast<U: Scalar>(&self) -> BatchMatrix<U> {
        BatchMatrix {
            batch: self.batch,
            features: self.features,
            layout: self.layout,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Logical rows as nested vectors (sample-major), mostly for tests.
    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.batch)
            .map(|n| (0..self.features).map(|f| self.get(n, f)).collect())
            .collect()
    }
}

/// Outcome of an elementwise tolerance comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxReport {
    pub equal: bool,
    pub max_abs_error: f64,
    /// Largest `|x − y| / (abs_tol + rel_tol·max(|x|,|y|))` over all entries.
    pub max_scaled_error: f64,
    /// Logical `(n, f)` of the entry attaining `max_scaled_error`.
    pub worst: Option<(usize, usize)>,
}

/// Compares two batches of the same logical shape, in FP64, layouts may differ.
///
/// Entry `(n, f)` passes iff `|x − y| ≤ abs_tol + rel_tol·max(|x|, |y|)`.
pub fn approx_equal<T: Scalar, U: Scalar>(
    x: &BatchMatrix<T>,
    y: &BatchMatrix<U>,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<ApproxReport> {
    if x.batch() != y.batch() || x.features() != y.features() {
        return Err(KsError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            x.batch(),
            x.features(),
            y.batch(),
            y.features()
        )));
    }
    let mut report = ApproxReport {
        equal: true,
        max_abs_error: 0.0,
        max_scaled_error: 0.0,
        worst: None,
    };
    for n in 0..x.batch() {
        for f in 0..x.features() {
            let (xv, yv) = (x.get(n, f).as_f64(), y.get(n, f).as_f64());
            let err = (xv - yv).abs();
            let bound = abs_tol + rel_tol * xv.abs().max(yv.abs());
            // NaN never passes.
            let pass = err <= bound;
            let scaled = if err.is_nan() {
                f64::INFINITY
            } else if bound > 0.0 {
                err / bound
            } else if err == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            report.equal &= pass;
            if report.worst.is_none() || scaled > report.max_scaled_error {
                report.max_scaled_error = scaled;
                report.worst = Some((n, f));
            }
            report.max_abs_error = report.max_abs_error.max(err);
        }
    }
    Ok(report)
}
