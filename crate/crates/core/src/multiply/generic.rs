//! Backends that do not use the tiled structure: the FP64 oracle, the 4D loop
//! nest, CSR and dense GEMM.

use rayon::prelude::*;

use crate::batch::{BatchMatrix, Layout};
use crate::factor::{CsrMatrix, DenseMatrix, KsFactor};
use crate::scalar::Scalar;

/// Element strides of the logical `batch × features` matrix.
fn strides(layout: Layout, batch: usize, features: usize) -> (isize, isize) {
    match layout {
        Layout::BatchSizeFirst => (features as isize, 1),
        Layout::BatchSizeLast => (1, batch as isize),
    }
}

/// `out = x · wᵀ` with `w` row-major `M × N`.
fn dense_gemm<T: Scalar>(x: &BatchMatrix<T>, w: &DenseMatrix<T>, out: &mut BatchMatrix<T>) {
    let (batch, layout) = (x.batch(), x.layout());
    let (m, n) = (w.rows(), w.cols());
    out.reshape_for_overwrite(batch, m, layout);
    if batch == 0 || m == 0 {
        return;
    }
    if n == 0 {
        out.data_mut().fill(T::zero());
        return;
    }
    let (rsx, csx) = strides(layout, batch, n);
    let (rsy, csy) = strides(layout, batch, m);
    unsafe {
        T::gemm_raw(
            batch,
            n,
            m,
            x.data().as_ptr(),
            rsx,
            csx,
            w.data().as_ptr(),
            1,
            n as isize,
            T::zero(),
            out.data_mut().as_mut_ptr(),
            rsy,
            csy,
        );
    }
}

/// FP64 product against the dense factor, rounded to `T` at the end.
pub(crate) fn reference_into<T: Scalar>(
    x: &BatchMatrix<T>,
    w: &DenseMatrix<f64>,
    out: &mut BatchMatrix<T>,
) {
    let x64: BatchMatrix<f64> = x.cast();
    let mut y64 = BatchMatrix::zeros(0, 0, x.layout());
    dense_gemm(&x64, w, &mut y64);
    out.reshape_for_overwrite(x.batch(), w.rows(), x.layout());
    for (o, v) in out.data_mut().iter_mut().zip(y64.data()) {
        *o = T::from_f64(*v);
    }
}

pub(crate) fn dense_into<T: Scalar>(
    x: &BatchMatrix<T>,
    w: &DenseMatrix<T>,
    out: &mut BatchMatrix<T>,
) {
    dense_gemm(x, w, out);
}

/// `Y[n, (i,k,j)] = Σ_l X[n, (i,l,j)] · K[i,k,l,j]` straight from canonical
/// values.
pub(crate) fn contraction_into<T: Scalar>(
    x: &BatchMatrix<T>,
    k: &KsFactor<T>,
    out: &mut BatchMatrix<T>,
) {
    let p = k.pattern();
    let (_, b, c, d) = p.tuple();
    let (batch, layout) = (x.batch(), x.layout());
    let (in_dim, out_dim) = (p.in_dim(), p.out_dim());
    out.reshape_for_overwrite(batch, out_dim, layout);
    if batch == 0 {
        return;
    }
    let xd = x.data();
    let v = k.values();
    match layout {
        Layout::BatchSizeLast => {
            // Group g = i·b + k owns output rows g·d..(g+1)·d.
            out.data_mut()
                .par_chunks_mut(d * batch)
                .enumerate()
                .for_each(|(g, ys)| {
                    let i = g / b;
                    ys.fill(T::zero());
                    for l in 0..c {
                        for j in 0..d {
                            let w = v[(g * c + l) * d + j];
                            let xs = &xd[(i * c * d + l * d + j) * batch..][..batch];
                            for (y, &xv) in ys[j * batch..(j + 1) * batch].iter_mut().zip(xs) {
                                *y += w * xv;
                            }
                        }
                    }
                });
        }
        Layout::BatchSizeFirst => {
            out.data_mut()
                .par_chunks_mut(out_dim)
                .zip(xd.par_chunks(in_dim))
                .for_each(|(ys, xs)| {
                    ys.fill(T::zero());
                    for g in 0..p.a() * b {
                        let i = g / b;
                        let y = &mut ys[g * d..(g + 1) * d];
                        for l in 0..c {
                            let w = &v[(g * c + l) * d..][..d];
                            let xl = &xs[i * c * d + l * d..][..d];
                            for ((yv, &wv), &xv) in y.iter_mut().zip(w).zip(xl) {
                                *yv += wv * xv;
                            }
                        }
                    }
                });
        }
    }
}

pub(crate) fn csr_into<T: Scalar>(x: &BatchMatrix<T>, k: &CsrMatrix<T>, out: &mut BatchMatrix<T>) {
    let (batch, layout) = (x.batch(), x.layout());
    let (in_dim, out_dim) = (k.cols(), k.rows());
    out.reshape_for_overwrite(batch, out_dim, layout);
    if batch == 0 {
        return;
    }
    let xd = x.data();
    match layout {
        Layout::BatchSizeLast => {
            out.data_mut()
                .par_chunks_mut(batch)
                .enumerate()
                .for_each(|(r, ys)| {
                    ys.fill(T::zero());
                    let (cols, vals) = k.row(r);
                    for (&s, &w) in cols.iter().zip(vals) {
                        for (y, &xv) in ys.iter_mut().zip(&xd[s * batch..(s + 1) * batch]) {
                            *y += w * xv;
                        }
                    }
                });
        }
        Layout::BatchSizeFirst => {
            out.data_mut()
                .par_chunks_mut(out_dim)
                .zip(xd.par_chunks(in_dim))
                .for_each(|(ys, xs)| {
                    for (r, y) in ys.iter_mut().enumerate() {
                        let (cols, vals) = k.row(r);
                        *y = cols
                            .iter()
                            .zip(vals)
                            .fold(T::zero(), |acc, (&s, &w)| acc + w * xs[s]);
                    }
                });
        }
    }
}
