//! Multiplication backends computing `Y = X·Kᵀ`.
//!
//! Every backend accepts both layouts and returns its output in the layout of
//! the input. [`PreparedFactor`] converts a factor once into what its backend
//! reads, so repeated calls do no setup work.

mod fused;
mod generic;
mod permuted;
mod plan;
mod probe;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::batch::BatchMatrix;
use crate::error::{KsError, Result};
use crate::factor::{CsrMatrix, DenseMatrix, KsFactor, TileStore};
use crate::pattern::KsPattern;
use crate::scalar::Scalar;

pub use permuted::{mul_permuted, PermutedFactor, PermutedScratch, PermutedSteps};
pub use plan::{autotune, PresetTable, TilePlan, PRESETS_ENV};
pub use probe::{measure_permutation_share, PermutationShare};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// FP64 dense product, used as the oracle.
    Reference,
    /// Loop nest over the canonical 4D values.
    Contraction,
    /// Permute, batched GEMM, permute back.
    Permuted,
    /// Output-stationary tiled kernel.
    Fused,
    Csr,
    #[serde(rename = "dense")]
    DenseBaseline,
}

impl Backend {
    pub const ALL: [Backend; 6] = [
        Backend::Reference,
        Backend::Contraction,
        Backend::Permuted,
        Backend::Fused,
        Backend::Csr,
        Backend::DenseBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Reference => "reference",
            Backend::Contraction => "contraction",
            Backend::Permuted => "permuted",
            Backend::Fused => "fused",
            Backend::Csr => "csr",
            Backend::DenseBaseline => "dense",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = KsError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "reference" | "ref" => Backend::Reference,
            "contraction" | "einsum" => Backend::Contraction,
            "permuted" | "bmm" => Backend::Permuted,
            "fused" | "kernel" => Backend::Fused,
            "csr" | "sparse" => Backend::Csr,
            "dense" | "densebaseline" | "dense-baseline" => Backend::DenseBaseline,
            other => return Err(KsError::Parse(format!("unknown backend `{other}`"))),
        })
    }
}

pub(crate) fn check_input<T: Scalar>(x: &BatchMatrix<T>, p: KsPattern) -> Result<()> {
    if x.features() != p.in_dim() {
        return Err(KsError::ShapeMismatch(format!(
            "input has {} features, pattern {p} expects {}",
            x.features(),
            p.in_dim()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
enum Repr<T> {
    Reference(DenseMatrix<f64>),
    Contraction(KsFactor<T>),
    Permuted(PermutedFactor<T>),
    Fused(TileStore<T>, TilePlan),
    Csr(CsrMatrix<T>),
    Dense(DenseMatrix<T>),
}

/// Reusable buffers for backends that need intermediates.
#[derive(Clone, Debug)]
pub struct Scratch<T> {
    permuted: PermutedScratch<T>,
}

impl<T: Scalar> Default for Scratch<T> {
    fn default() -> Self {
        Self {
            permuted: PermutedScratch::default(),
        }
    }
}

/// A factor converted for one backend.
#[derive(Clone, Debug)]
pub struct PreparedFactor<T> {
    pattern: KsPattern,
    backend: Backend,
    repr: Repr<T>,
}

impl<T: Scalar> PreparedFactor<T> {
    /// Uses the preset tile plan for the fused backend.
    pub fn new(k: &KsFactor<T>, backend: Backend) -> Result<Self> {
        Self::with_plan(k, backend, TilePlan::for_pattern(k.pattern()))
    }

    pub fn with_plan(k: &KsFactor<T>, backend: Backend, plan: TilePlan) -> Result<Self> {
        let p = k.pattern();
        let repr = match backend {
            Backend::Reference => {
                p.matrix_size()?;
                Repr::Reference(k.cast::<f64>().to_dense())
            }
            Backend::Contraction => Repr::Contraction(k.clone()),
            Backend::Permuted => Repr::Permuted(PermutedFactor::new(k.to_bmm())),
            Backend::Fused => Repr::Fused(k.to_tiles(), plan),
            Backend::Csr => Repr::Csr(k.to_csr()),
            Backend::DenseBaseline => {
                p.matrix_size()?;
                Repr::Dense(k.to_dense())
            }
        };
        Ok(Self {
            pattern: p,
            backend,
            repr,
        })
    }

    pub fn pattern(&self) -> KsPattern {
        self.pattern
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn in_dim(&self) -> usize {
        self.pattern.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.pattern.out_dim()
    }

    /// Writes `x·Kᵀ` into `out`, re-dimensioning it to `batch × out_dim` in
    /// the layout of `x`.
    pub fn apply_into(
        &self,
        x: &BatchMatrix<T>,
        out: &mut BatchMatrix<T>,
        scratch: &mut Scratch<T>,
    ) -> Result<()> {
        check_input(x, self.pattern)?;
        match &self.repr {
            Repr::Reference(w) => generic::reference_into(x, w, out),
            Repr::Contraction(k) => generic::contraction_into(x, k, out),
            Repr::Permuted(f) => f.apply_into(x, PermutedSteps::ALL, &mut scratch.permuted, out)?,
            Repr::Fused(tiles, plan) => fused::fused_into(x, tiles, plan, out),
            Repr::Csr(k) => generic::csr_into(x, k, out),
            Repr::Dense(w) => generic::dense_into(x, w, out),
        }
        Ok(())
    }

    pub fn apply(&self, x: &BatchMatrix<T>) -> Result<BatchMatrix<T>> {
        let mut out = BatchMatrix::zeros(0, 0, x.layout());
        self.apply_into(x, &mut out, &mut Scratch::default())?;
        Ok(out)
    }

    /// The permuted backend with a subset of its steps; errors for other
    /// backends.
    pub fn apply_permuted_steps(
        &self,
        x: &BatchMatrix<T>,
        steps: PermutedSteps,
        out: &mut BatchMatrix<T>,
        scratch: &mut Scratch<T>,
    ) -> Result<()> {
        match &self.repr {
            Repr::Permuted(f) => f.apply_into(x, steps, &mut scratch.permuted, out),
            _ => Err(KsError::InvalidArgument(format!(
                "step selection needs the permuted backend, not {}",
                self.backend
            ))),
        }
    }
}

/// Shorthand for a prepared one-off multiply.
pub fn multiply<T: Scalar>(
    x: &BatchMatrix<T>,
    k: &KsFactor<T>,
    backend: Backend,
) -> Result<BatchMatrix<T>> {
    PreparedFactor::new(k, backend)?.apply(x)
}

pub fn mul_reference<T: Scalar>(x: &BatchMatrix<T>, k: &KsFactor<T>) -> Result<BatchMatrix<T>> {
    check_input(x, k.pattern())?;
    k.pattern().matrix_size()?;
    let mut out = BatchMatrix::zeros(0, 0, x.layout());
    generic::reference_into(x, &k.cast::<f64>().to_dense(), &mut out);
    Ok(out)
}

pub fn mul_contraction<T: Scalar>(x: &BatchMatrix<T>, k: &KsFactor<T>) -> Result<BatchMatrix<T>> {
    check_input(x, k.pattern())?;
    let mut out = BatchMatrix::zeros(0, 0, x.layout());
    generic::contraction_into(x, k, &mut out);
    Ok(out)
}

pub fn mul_fused<T: Scalar>(
    x: &BatchMatrix<T>,
    tiles: &TileStore<T>,
    p: KsPattern,
    plan: &TilePlan,
) -> Result<BatchMatrix<T>> {
    if tiles.pattern() != p {
        return Err(KsError::ShapeMismatch(format!(
            "tile store built for {} used with pattern {p}",
            tiles.pattern()
        )));
    }
    check_input(x, p)?;
    let mut out = BatchMatrix::zeros(0, 0, x.layout());
    fused::fused_into(x, tiles, plan, &mut out);
    Ok(out)
}

pub fn mul_csr<T: Scalar>(x: &BatchMatrix<T>, k: &CsrMatrix<T>) -> Result<BatchMatrix<T>> {
    if x.features() != k.cols() {
        return Err(KsError::ShapeMismatch(format!(
            "input has {} features, matrix has {} columns",
            x.features(),
            k.cols()
        )));
    }
    let mut out = BatchMatrix::zeros(0, 0, x.layout());
    generic::csr_into(x, k, &mut out);
    Ok(out)
}

pub fn mul_dense_baseline<T: Scalar>(
    x: &BatchMatrix<T>,
    w: &DenseMatrix<T>,
) -> Result<BatchMatrix<T>> {
    if x.features() != w.cols() {
        return Err(KsError::ShapeMismatch(format!(
            "input has {} features, matrix has {} columns",
            x.features(),
            w.cols()
        )));
    }
    let mut out = BatchMatrix::zeros(0, 0, x.layout());
    generic::dense_into(x, w, &mut out);
    Ok(out)
}

/// Runs `f` on a dedicated pool of `threads` workers; `0` means the global
/// pool.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| KsError::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
