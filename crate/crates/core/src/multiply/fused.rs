//! Output-stationary tiled kernel.
//!
//! Tile `(i, j)` reads the `c` input features `i·c·d + j + l·d` and writes the
//! `b` output features `i·b·d + j + k·d` in place; no permuted copy of either
//! operand is ever formed. Tiles own disjoint output features, which makes the
//! result independent of scheduling.
//!
//! For each chunk of `tile_n` samples, the tile's inputs are staged into a
//! small `c × tile_n` buffer (a plain row copy in BSL, a strided gather in
//! BSF) and a single compute core produces the `b × tile_n` outputs, which
//! are then stored back at stride `d`. Every output element is accumulated in
//! one register starting from zero, adding `w·x` for ascending `l`, so outputs
//! agree bitwise across layouts, plans and thread counts. On x86-64 with AVX2
//! and FMA the multiply-add is fused (one rounding); the choice is made once
//! per process, so the guarantee holds on any given machine.

use rayon::prelude::*;

use super::plan::TilePlan;
use crate::batch::{BatchMatrix, Layout};
use crate::factor::TileStore;
use crate::scalar::Scalar;

/// Multiply-accumulate step `acc + w·x`.
trait Madd {
    fn madd<T: Scalar>(acc: T, w: T, x: T) -> T;
}

struct Split;
struct Fma;

impl Madd for Split {
    #[inline(always)]
    fn madd<T: Scalar>(acc: T, w: T, x: T) -> T {
        acc + w * x
    }
}

impl Madd for Fma {
    #[inline(always)]
    fn madd<T: Scalar>(acc: T, w: T, x: T) -> T {
        w.mul_add(x, acc)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Isa {
    Plain,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

fn isa() -> Isa {
    #[cfg(target_arch = "x86_64")]
    {
        use std::sync::OnceLock;
        static ISA: OnceLock<Isa> = OnceLock::new();
        *ISA.get_or_init(|| {
            let fma = std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma");
            if fma && std::is_x86_feature_detected!("avx512f") {
                Isa::Avx512
            } else if fma {
                Isa::Avx2
            } else {
                Isa::Plain
            }
        })
    }
    #[cfg(not(target_arch = "x86_64"))]
    Isa::Plain
}

/// Register block rows; remainders use 4, 2, then 1.
const ROWS: usize = 6;
/// Lanes per register block row; remainders use 8, 4, then 1. The wider
/// AVX-512 row only pays off (and only vectorizes reliably) when lanes run
/// along output features.
const WIDE: usize = 16;
#[cfg(target_arch = "x86_64")]
const WIDE_AVX512: usize = 32;

/// Writes `x·Kᵀ` into `out`, which is re-dimensioned as needed. Shapes must
/// already be checked.
pub(crate) fn fused_into<T: Scalar>(
    x: &BatchMatrix<T>,
    tiles: &TileStore<T>,
    plan: &TilePlan,
    out: &mut BatchMatrix<T>,
) {
    let p = tiles.pattern();
    out.reshape_for_overwrite(x.batch(), p.out_dim(), x.layout());
    if x.batch() == 0 {
        return;
    }
    match x.layout() {
        Layout::BatchSizeLast => fused_bsl(x, tiles, plan, out),
        Layout::BatchSizeFirst => fused_bsf(x, tiles, plan, out),
    }
}

/// Per-task buffers.
struct Work<T> {
    staged: Vec<T>,
    acc: Vec<T>,
}

impl<T: Scalar> Work<T> {
    fn new(c: usize, plan: &TilePlan) -> Self {
        Self {
            staged: vec![T::zero(); c * plan.tile_n()],
            acc: vec![T::zero(); plan.tile_b() * plan.tile_n()],
        }
    }
}

fn fused_bsl<T: Scalar>(
    x: &BatchMatrix<T>,
    tiles: &TileStore<T>,
    plan: &TilePlan,
    out: &mut BatchMatrix<T>,
) {
    let p = tiles.pattern();
    let batch = x.batch();
    let xd = x.data();

    // Output feature rows are contiguous runs of `batch` samples; hand each
    // tile the rows it owns, in ascending k.
    let mut owned: Vec<Vec<&mut [T]>> = (0..p.num_tiles())
        .map(|_| Vec::with_capacity(p.b()))
        .collect();
    for (r, row) in out.data_mut().chunks_mut(batch).enumerate() {
        owned[p.tile_of_row(r)].push(row);
    }

    let isa = isa();
    owned.into_par_iter().enumerate().for_each(|(t, mut rows)| {
        let (_, _, c, d) = p.tuple();
        let first = (t / d) * c * d + t % d;
        let mut work = Work::new(c, plan);
        let tn = plan.tile_n();
        for n0 in (0..batch).step_by(tn) {
            let nl = tn.min(batch - n0);
            // Input rows sit `d·batch` apart, often a power of two that maps
            // them all to the same cache sets; the copy avoids that.
            for l in 0..c {
                let src = (first + l * d) * batch + n0;
                work.staged[l * tn..l * tn + nl].copy_from_slice(&xd[src..src + nl]);
            }
            let store = |k: usize, _: usize, vals: &[T]| rows[k][n0..n0 + nl].copy_from_slice(vals);
            run_core(
                isa,
                Orient::FeaturesBySamples,
                tiles.tile(t),
                p.b(),
                c,
                plan,
                nl,
                &mut work,
                store,
            );
        }
    });
}

fn fused_bsf<T: Scalar>(
    x: &BatchMatrix<T>,
    tiles: &TileStore<T>,
    plan: &TilePlan,
    out: &mut BatchMatrix<T>,
) {
    let p = tiles.pattern();
    let (_, b, c, d) = p.tuple();
    let (in_dim, out_dim) = (p.in_dim(), p.out_dim());
    let xd = x.data();
    let tn = plan.tile_n();
    let isa = isa();

    // Sample chunks own whole output rows, so they are disjoint as well.
    out.data_mut()
        .par_chunks_mut(tn * out_dim)
        .enumerate()
        .for_each(|(chunk, ys)| {
            let n0 = chunk * tn;
            let nl = ys.len() / out_dim;
            let mut work = Work::new(c, plan);
            for t in 0..p.num_tiles() {
                let (i, j) = (t / d, t % d);
                let first_input = i * c * d + j;
                let first_output = i * b * d + j;
                for nn in 0..nl {
                    let xs = &xd[(n0 + nn) * in_dim + first_input..];
                    for l in 0..c {
                        work.staged[l * tn + nn] = xs[l * d];
                    }
                }
                let store = |nn: usize, k0: usize, vals: &[T]| {
                    let row = &mut ys[nn * out_dim + first_output + k0 * d..];
                    for (kk, &v) in vals.iter().enumerate() {
                        row[kk * d] = v;
                    }
                };
                run_core(
                    isa,
                    Orient::SamplesByFeatures,
                    tiles.tile(t),
                    b,
                    c,
                    plan,
                    nl,
                    &mut work,
                    store,
                );
            }
        });
}

/// Accumulator orientation of the compute core. Vector lanes run along the
/// second axis: samples when inputs are staged sample-contiguous, output
/// features (contiguous in the tile weights) otherwise.
#[derive(Clone, Copy)]
enum Orient {
    FeaturesBySamples,
    SamplesByFeatures,
}

#[allow(clippy::too_many_arguments)]
fn run_core<T: Scalar>(
    isa: Isa,
    orient: Orient,
    w: &[T],
    b: usize,
    c: usize,
    plan: &TilePlan,
    nl: usize,
    work: &mut Work<T>,
    store: impl FnMut(usize, usize, &[T]),
) {
    match isa {
        Isa::Plain => tile_core::<T, Split, WIDE, WIDE>(orient, w, b, c, plan, nl, work, store),
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { tile_core_avx2(orient, w, b, c, plan, nl, work, store) },
        #[cfg(target_arch = "x86_64")]
        Isa::Avx512 => unsafe { tile_core_avx512(orient, w, b, c, plan, nl, work, store) },
    }
}

#[cfg(target_arch = "x86_64")]
#[allow(clippy::too_many_arguments)]
#[target_feature(enable = "avx2,fma")]
unsafe fn tile_core_avx2<T: Scalar>(
    orient: Orient,
    w: &[T],
    b: usize,
    c: usize,
    plan: &TilePlan,
    nl: usize,
    work: &mut Work<T>,
    store: impl FnMut(usize, usize, &[T]),
) {
    tile_core::<T, Fma, WIDE, WIDE>(orient, w, b, c, plan, nl, work, store)
}

#[cfg(target_arch = "x86_64")]
#[allow(clippy::too_many_arguments)]
#[target_feature(enable = "avx512f,avx2,fma")]
unsafe fn tile_core_avx512<T: Scalar>(
    orient: Orient,
    w: &[T],
    b: usize,
    c: usize,
    plan: &TilePlan,
    nl: usize,
    work: &mut Work<T>,
    store: impl FnMut(usize, usize, &[T]),
) {
    tile_core::<T, Fma, WIDE, WIDE_AVX512>(orient, w, b, c, plan, nl, work, store)
}

/// One operand of the core: element `(l, m)` sits at `data[l·stride + off + m]`.
#[derive(Clone, Copy)]
struct Operand<'a, T> {
    data: &'a [T],
    stride: usize,
    off: usize,
}

/// All `b` outputs of one tile for the `nl` staged samples.
///
/// `FeaturesBySamples` calls `store(k, 0, vals)` with output feature `k` for
/// every sample; `SamplesByFeatures` calls `store(n, k0, vals)` with the
/// features `k0..` of sample `n`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn tile_core<T: Scalar, A: Madd, const W_SAMPLES: usize, const W_FEATURES: usize>(
    orient: Orient,
    w: &[T],
    b: usize,
    c: usize,
    plan: &TilePlan,
    nl: usize,
    work: &mut Work<T>,
    mut store: impl FnMut(usize, usize, &[T]),
) {
    let (tb, tc, tn) = (plan.tile_b(), plan.tile_c(), plan.tile_n());
    let Work { staged, acc } = work;
    let xs = Operand {
        data: &staged[..],
        stride: tn,
        off: 0,
    };
    for k0 in (0..b).step_by(tb) {
        let kl = tb.min(b - k0);
        let ws = Operand {
            data: w,
            stride: b,
            off: k0,
        };
        acc.fill(T::zero());
        for l0 in (0..c).step_by(tc) {
            let l1 = (l0 + tc).min(c);
            match orient {
                Orient::FeaturesBySamples => {
                    block::<T, A, W_SAMPLES>(acc, tn, kl, nl, ws, xs, l0, l1)
                }
                Orient::SamplesByFeatures => {
                    block::<T, A, W_FEATURES>(acc, tb, nl, kl, xs, ws, l0, l1)
                }
            }
        }
        match orient {
            Orient::FeaturesBySamples => {
                for kk in 0..kl {
                    store(k0 + kk, 0, &acc[kk * tn..kk * tn + nl]);
                }
            }
            Orient::SamplesByFeatures => {
                for nn in 0..nl {
                    store(nn, k0, &acc[nn * tb..nn * tb + kl]);
                }
            }
        }
    }
}

/// `acc[r][e] += Σ_{l0≤l<l1} bcast(l, r) · lanes(l, e)` over `rows × cols`;
/// `acc` has row stride `stride`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn block<T: Scalar, A: Madd, const W: usize>(
    acc: &mut [T],
    stride: usize,
    rows: usize,
    cols: usize,
    bcast: Operand<'_, T>,
    lanes: Operand<'_, T>,
    l0: usize,
    l1: usize,
) {
    let mut r = 0;
    while r + ROWS <= rows {
        row_block::<T, A, ROWS, W>(acc, stride, r, cols, bcast, lanes, l0, l1);
        r += ROWS;
    }
    if r + 4 <= rows {
        row_block::<T, A, 4, W>(acc, stride, r, cols, bcast, lanes, l0, l1);
        r += 4;
    }
    if r + 2 <= rows {
        row_block::<T, A, 2, W>(acc, stride, r, cols, bcast, lanes, l0, l1);
        r += 2;
    }
    if r < rows {
        row_block::<T, A, 1, W>(acc, stride, r, cols, bcast, lanes, l0, l1);
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn row_block<T: Scalar, A: Madd, const R: usize, const W: usize>(
    acc: &mut [T],
    stride: usize,
    r: usize,
    cols: usize,
    bcast: Operand<'_, T>,
    lanes: Operand<'_, T>,
    l0: usize,
    l1: usize,
) {
    let mut e = 0;
    while e + W <= cols {
        micro::<T, A, R, W>(acc, stride, r, e, bcast, lanes, l0, l1);
        e += W;
    }
    while e + 8 <= cols {
        micro::<T, A, R, 8>(acc, stride, r, e, bcast, lanes, l0, l1);
        e += 8;
    }
    if e + 4 <= cols {
        micro::<T, A, R, 4>(acc, stride, r, e, bcast, lanes, l0, l1);
        e += 4;
    }
    while e < cols {
        micro::<T, A, R, 1>(acc, stride, r, e, bcast, lanes, l0, l1);
        e += 1;
    }
}

/// The `R × W` block at `(r, e)` of `acc`, held in registers.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn micro<T: Scalar, A: Madd, const R: usize, const W: usize>(
    acc: &mut [T],
    stride: usize,
    r: usize,
    e: usize,
    bcast: Operand<'_, T>,
    lanes: Operand<'_, T>,
    l0: usize,
    l1: usize,
) {
    let mut reg = [[T::zero(); W]; R];
    // Element loops rather than `copy_from_slice`: the latter carries a
    // non-inlined precondition check in builds with debug assertions.
    for (q, row) in reg.iter_mut().enumerate() {
        for (v, &a) in row.iter_mut().zip(&acc[(r + q) * stride + e..][..W]) {
            *v = a;
        }
    }
    for l in l0..l1 {
        let ls = &lanes.data[l * lanes.stride + lanes.off + e..][..W];
        let bs = &bcast.data[l * bcast.stride + bcast.off + r..][..R];
        for (row, &s) in reg.iter_mut().zip(bs) {
            for (v, &xe) in row.iter_mut().zip(ls) {
                *v = A::madd(*v, s, xe);
            }
        }
    }
    for (q, row) in reg.iter().enumerate() {
        for (a, &v) in acc[(r + q) * stride + e..][..W].iter_mut().zip(row) {
            *a = v;
        }
    }
}
