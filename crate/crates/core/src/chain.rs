//! Products of KS factors applied one factor at a time.
//!
//! A chain `K₁ ⋯ K_L` is stored outermost first and applied innermost first:
//! `Y = X·K_Lᵀ ⋯ K₁ᵀ (+ bias)`.

use rayon::prelude::*;

use crate::batch::{BatchMatrix, Layout};
use crate::error::{KsError, Result};
use crate::factor::{DenseMatrix, KsFactor};
use crate::multiply::{Backend, PreparedFactor, Scratch};
use crate::pattern::KsPattern;
use crate::scalar::Scalar;

/// Intermediate activations and backend scratch, reused across calls.
#[derive(Clone, Debug)]
pub struct ChainBuffers<T> {
    front: BatchMatrix<T>,
    back: BatchMatrix<T>,
    scratch: Scratch<T>,
}

impl<T: Scalar> Default for ChainBuffers<T> {
    fn default() -> Self {
        Self {
            front: BatchMatrix::zeros(0, 0, Layout::BatchSizeFirst),
            back: BatchMatrix::zeros(0, 0, Layout::BatchSizeFirst),
            scratch: Scratch::default(),
        }
    }
}

/// Arithmetic cost of one chain application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainCost {
    /// Multiply-accumulates over all factors, `B·Σ nnz(K_ℓ)`.
    pub macs: u64,
    /// `2·macs`, one multiply and one add each.
    pub flops: u64,
    /// Multiply-accumulates of one dense `out_dim × in_dim` product.
    pub dense_macs: u64,
}

#[derive(Clone, Debug)]
pub struct KsChain<T> {
    factors: Vec<KsFactor<T>>,
    prepared: Vec<PreparedFactor<T>>,
    bias: Option<Vec<T>>,
    backend: Backend,
    layout: Layout,
}

impl<T: Scalar> KsChain<T> {
    /// `factors[0]` is the outermost factor `K₁`.
    pub fn new(factors: Vec<KsFactor<T>>, backend: Backend, layout: Layout) -> Result<Self> {
        if factors.is_empty() {
            return Err(KsError::InvalidArgument(
                "a chain needs at least one factor".into(),
            ));
        }
        for (hop, pair) in factors.windows(2).enumerate() {
            let (outer, inner) = (pair[0].pattern(), pair[1].pattern());
            if outer.in_dim() != inner.out_dim() {
                return Err(KsError::NotChainable {
                    hop,
                    next: hop + 1,
                    in_dim: outer.in_dim(),
                    out_dim: inner.out_dim(),
                });
            }
        }
        let prepared = factors
            .iter()
            .map(|k| PreparedFactor::new(k, backend))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            factors,
            prepared,
            bias: None,
            backend,
            layout,
        })
    }

    /// Adds a bias of length `out_dim`, applied after the last hop.
    pub fn with_bias(mut self, bias: Vec<T>) -> Result<Self> {
        if bias.len() != self.out_dim() {
            return Err(KsError::ShapeMismatch(format!(
                "bias of length {} for output dimension {}",
                bias.len(),
                self.out_dim()
            )));
        }
        self.bias = Some(bias);
        Ok(self)
    }

    /// Same factors and bias on another backend.
    pub fn with_backend(&self, backend: Backend) -> Result<Self> {
        let chain = Self::new(self.factors.clone(), backend, self.layout)?;
        match &self.bias {
            Some(b) => chain.with_bias(b.clone()),
            None => Ok(chain),
        }
    }

    pub fn factors(&self) -> &[KsFactor<T>] {
        &self.factors
    }

    pub fn patterns(&self) -> Vec<KsPattern> {
        self.factors.iter().map(KsFactor::pattern).collect()
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.factors[self.factors.len() - 1].pattern().in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.factors[0].pattern().out_dim()
    }

    /// Applies the chain; the result is in the chain's layout, and an input
    /// in the other layout is converted first.
    pub fn apply(&self, x: &BatchMatrix<T>) -> Result<BatchMatrix<T>> {
        let mut out = BatchMatrix::zeros(0, 0, self.layout);
        self.apply_into(x, &mut out, &mut ChainBuffers::default())?;
        Ok(out)
    }

    pub fn apply_into(
        &self,
        x: &BatchMatrix<T>,
        out: &mut BatchMatrix<T>,
        buffers: &mut ChainBuffers<T>,
    ) -> Result<()> {
        if x.features() != self.in_dim() {
            return Err(KsError::ShapeMismatch(format!(
                "input has {} features, chain expects {}",
                x.features(),
                self.in_dim()
            )));
        }
        let converted;
        let x = if x.layout() == self.layout {
            x
        } else {
            converted = x.convert_layout(self.layout);
            &converted
        };
        let ChainBuffers {
            front,
            back,
            scratch,
        } = buffers;
        let last = self.prepared.len() - 1;
        if last == 0 {
            self.prepared[0].apply_into(x, out, scratch)?;
        } else {
            self.prepared[last].apply_into(x, front, scratch)?;
            for hop in (1..last).rev() {
                self.prepared[hop].apply_into(front, back, scratch)?;
                std::mem::swap(front, back);
            }
            self.prepared[0].apply_into(front, out, scratch)?;
        }
        if let Some(bias) = &self.bias {
            add_bias(out, bias);
        }
        Ok(())
    }

    /// `K₁ ⋯ K_L` in FP64.
    pub fn dense_product(&self) -> Result<DenseMatrix<f64>> {
        let mut acc = self.factors[0].cast::<f64>().to_dense();
        for k in &self.factors[1..] {
            acc = acc.matmul(&k.cast::<f64>().to_dense())?;
        }
        Ok(acc)
    }

    pub fn cost(&self, batch: usize) -> ChainCost {
        let b = batch as u64;
        let macs = self
            .factors
            .iter()
            .map(|k| k.pattern().nnz() as u64 * b)
            .sum::<u64>();
        ChainCost {
            macs,
            flops: 2 * macs,
            dense_macs: self.out_dim() as u64 * self.in_dim() as u64 * b,
        }
    }
}

fn add_bias<T: Scalar>(out: &mut BatchMatrix<T>, bias: &[T]) {
    let (batch, features) = (out.batch(), out.features());
    if batch == 0 || features == 0 {
        return;
    }
    match out.layout() {
        Layout::BatchSizeFirst => out.data_mut().par_chunks_mut(features).for_each(|row| {
            for (y, &b) in row.iter_mut().zip(bias) {
                *y += b;
            }
        }),
        Layout::BatchSizeLast => out
            .data_mut()
            .par_chunks_mut(batch)
            .zip(bias.par_iter())
            .for_each(|(row, &b)| row.iter_mut().for_each(|y| *y += b)),
    }
}

/// The `L` square dyadic patterns `(2^{ℓ−1}, 2, 2, 2^{L−ℓ})`, `ℓ = 1..L`,
/// outermost first. All have dimension `2^L`.
pub fn dyadic_patterns(levels: usize) -> Result<Vec<KsPattern>> {
    if levels == 0 {
        return Err(KsError::InvalidArgument("need at least one level".into()));
    }
    let pow = |e: usize| {
        1usize
            .checked_shl(e as u32)
            .filter(|_| e < usize::BITS as usize - 1)
            .ok_or_else(|| KsError::SizeOverflow(format!("2^{e} for {levels} levels")))
    };
    pow(levels + 1)?;
    (1..=levels)
        .map(|l| KsPattern::new(pow(l - 1)?, 2, 2, pow(levels - l)?))
        .collect()
}

/// Walsh–Hadamard transform of size `2^L` as a chain whose every 2×2
/// butterfly is `[[1, 1], [1, −1]]`.
pub fn hadamard_chain<T: Scalar>(
    levels: usize,
    backend: Backend,
    layout: Layout,
) -> Result<KsChain<T>> {
    let factors = dyadic_patterns(levels)?
        .into_iter()
        .map(|p| {
            KsFactor::from_fn(p, |_, k, l, _| {
                if k == 1 && l == 1 {
                    -T::one()
                } else {
                    T::one()
                }
            })
        })
        .collect();
    KsChain::new(factors, backend, layout)
}
