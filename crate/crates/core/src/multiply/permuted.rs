//! Permute, batched GEMM, permute back.
//!
//! The input columns are gathered by `Q`, each of the `a·d` column blocks is
//! multiplied by the transpose of its dense `b × c` block of `K̃`, and the
//! output columns are scattered back by `P`. Identity permutations are
//! skipped, which is what the permutation-cost probe relies on.

use rayon::prelude::*;

use crate::batch::{BatchMatrix, Layout};
use crate::error::{KsError, Result};
use crate::factor::BmmTensor;
use crate::pattern::KsPattern;
use crate::scalar::Scalar;
use crate::shuffle::{baseline_permutations, gather_columns_into};

/// Which of the two permutation steps to execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PermutedSteps {
    pub permute_input: bool,
    pub permute_output: bool,
}

impl PermutedSteps {
    pub const ALL: Self = Self {
        permute_input: true,
        permute_output: true,
    };
    pub const GEMM_ONLY: Self = Self {
        permute_input: false,
        permute_output: false,
    };
}

impl Default for PermutedSteps {
    fn default() -> Self {
        Self::ALL
    }
}

/// Intermediate buffers, reused across calls.
#[derive(Clone, Debug)]
pub struct PermutedScratch<T> {
    input: BatchMatrix<T>,
    output: BatchMatrix<T>,
}

impl<T: Scalar> Default for PermutedScratch<T> {
    fn default() -> Self {
        Self {
            input: BatchMatrix::zeros(0, 0, Layout::BatchSizeFirst),
            output: BatchMatrix::zeros(0, 0, Layout::BatchSizeFirst),
        }
    }
}

/// `K̃` blocks plus the gather maps of both permutation steps.
#[derive(Clone, Debug)]
pub struct PermutedFactor<T> {
    bmm: BmmTensor<T>,
    /// `Q`; `None` when it is the identity.
    input_map: Option<Vec<usize>>,
    /// `P⁻¹`, so that the scatter by `P` becomes a gather; `None` for identity.
    output_map: Option<Vec<usize>>,
}

impl<T: Scalar> PermutedFactor<T> {
    pub fn new(bmm: BmmTensor<T>) -> Self {
        let p = bmm.pattern();
        let (rows, cols) = baseline_permutations(p.a(), p.b(), p.c(), p.d());
        Self {
            bmm,
            input_map: (!cols.is_identity()).then(|| cols.as_slice().to_vec()),
            output_map: (!rows.is_identity()).then(|| rows.inverse().as_slice().to_vec()),
        }
    }

    pub fn pattern(&self) -> KsPattern {
        self.bmm.pattern()
    }

    pub fn bmm(&self) -> &BmmTensor<T> {
        &self.bmm
    }

    /// Runs the selected steps; shapes are checked.
    pub fn apply_into(
        &self,
        x: &BatchMatrix<T>,
        steps: PermutedSteps,
        scratch: &mut PermutedScratch<T>,
        out: &mut BatchMatrix<T>,
    ) -> Result<()> {
        super::check_input(x, self.pattern())?;
        let p = self.pattern();
        let (batch, layout) = (x.batch(), x.layout());

        let PermutedScratch { input, output } = scratch;
        let src = match (&self.input_map, steps.permute_input) {
            (Some(map), true) => {
                input.reshape_for_overwrite(batch, p.in_dim(), layout);
                gather_columns_into(x, map, input);
                &*input
            }
            _ => x,
        };
        match (&self.output_map, steps.permute_output) {
            (Some(map), true) => {
                output.reshape_for_overwrite(batch, p.out_dim(), layout);
                block_gemms(src, &self.bmm, output);
                out.reshape_for_overwrite(batch, p.out_dim(), layout);
                gather_columns_into(output, map, out);
            }
            _ => {
                out.reshape_for_overwrite(batch, p.out_dim(), layout);
                block_gemms(src, &self.bmm, out);
            }
        }
        Ok(())
    }
}

/// `dst[:, t·b..(t+1)·b] = src[:, t·c..(t+1)·c] · K̃_tᵀ` for every block `t`.
/// `dst` must already have its final shape.
fn block_gemms<T: Scalar>(src: &BatchMatrix<T>, bmm: &BmmTensor<T>, dst: &mut BatchMatrix<T>) {
    let p = bmm.pattern();
    let (b, c) = (p.b(), p.c());
    let (batch, in_dim, out_dim) = (src.batch(), p.in_dim(), p.out_dim());
    if batch == 0 {
        return;
    }
    let xs = src.data();
    match src.layout() {
        Layout::BatchSizeLast => {
            // Block t owns the contiguous feature rows t·b..(t+1)·b.
            dst.data_mut()
                .par_chunks_mut(b * batch)
                .enumerate()
                .for_each(|(t, ys)| {
                    let k = bmm.block(t);
                    let x = &xs[t * c * batch..(t + 1) * c * batch];
                    // (b × c) · (c × batch), all row-major
                    unsafe {
                        T::gemm_raw(
                            b,
                            c,
                            batch,
                            k.as_ptr(),
                            c as isize,
                            1,
                            x.as_ptr(),
                            batch as isize,
                            1,
                            T::zero(),
                            ys.as_mut_ptr(),
                            batch as isize,
                            1,
                        )
                    }
                });
        }
        Layout::BatchSizeFirst => {
            let chunk = batch.div_ceil(rayon::current_num_threads());
            dst.data_mut()
                .par_chunks_mut(chunk * out_dim)
                .zip(xs.par_chunks(chunk * in_dim))
                .for_each(|(ys, x)| {
                    let rows = ys.len() / out_dim;
                    for t in 0..p.num_tiles() {
                        let k = bmm.block(t);
                        // (rows × c) · (c × b) with K̃_tᵀ read column-major
                        unsafe {
                            T::gemm_raw(
                                rows,
                                c,
                                b,
                                x[t * c..].as_ptr(),
                                in_dim as isize,
                                1,
                                k.as_ptr(),
                                1,
                                c as isize,
                                T::zero(),
                                ys[t * b..].as_mut_ptr(),
                                out_dim as isize,
                                1,
                            )
                        }
                    }
                });
        }
    }
}

/// One-shot form: builds the gather maps on every call.
pub fn mul_permuted<T: Scalar>(
    x: &BatchMatrix<T>,
    bmm: &BmmTensor<T>,
    p: KsPattern,
) -> Result<BatchMatrix<T>> {
    if bmm.pattern() != p {
        return Err(KsError::ShapeMismatch(format!(
            "block tensor built for {} used with pattern {p}",
            bmm.pattern()
        )));
    }
    let factor = PermutedFactor::new(bmm.clone());
    let mut out = BatchMatrix::zeros(0, 0, x.layout());
    factor.apply_into(
        x,
        PermutedSteps::ALL,
        &mut PermutedScratch::default(),
        &mut out,
    )?;
    Ok(out)
}
