//! Python module `ksmm`.
//!
//! Batches cross the boundary as lists of rows (one row per sample). Factors
//! keep FP64 values on the Python side and are cast when a multiply runs in
//! FP32.

use ksmm_bench::grid::{generate_grid, grid_stats, GridSpec};
use ksmm_core::{
    Backend, BatchMatrix, KsChain, KsError, KsFactor, KsPattern, Layout, PreparedFactor, Scalar,
    ScalarKind,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = KsError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

#[pyclass(
    name = "Pattern",
    frozen,
    eq,
    hash,
    skip_from_py_object,
    module = "ksmm"
)]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PyPattern {
    inner: KsPattern,
}

#[pymethods]
impl PyPattern {
    #[new]
    fn new(a: usize, b: usize, c: usize, d: usize) -> PyResult<Self> {
        Ok(Self {
            inner: KsPattern::new(a, b, c, d).map_err(err)?,
        })
    }

    /// Parses `"a,b,c,d"`.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse(text)?,
        })
    }

    #[getter]
    fn tuple(&self) -> (usize, usize, usize, usize) {
        self.inner.tuple()
    }

    #[getter]
    fn out_dim(&self) -> usize {
        self.inner.out_dim()
    }

    #[getter]
    fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    #[getter]
    fn density(&self) -> f64 {
        self.inner.density()
    }

    #[getter]
    fn sparsity(&self) -> f64 {
        self.inner.sparsity()
    }

    /// `(b + c) / (b·c)`.
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    /// `d·h`.
    #[getter]
    fn energy_proxy(&self) -> f64 {
        self.inner.energy_proxy()
    }

    /// Row and column index lists of tile `(i, j)`.
    fn tile(&self, i: usize, j: usize) -> PyResult<(Vec<usize>, Vec<usize>)> {
        let t = self.inner.tile_index_sets(i, j).map_err(err)?;
        Ok((t.row, t.col))
    }

    fn support(&self) -> PyResult<Vec<Vec<u8>>> {
        Ok(self.inner.support_mask().map_err(err)?.to_rows())
    }

    fn __repr__(&self) -> String {
        let (a, b, c, d) = self.inner.tuple();
        format!("Pattern({a}, {b}, {c}, {d})")
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

#[pyclass(name = "Factor", from_py_object, module = "ksmm")]
#[derive(Clone)]
pub struct PyFactor {
    inner: KsFactor<f64>,
}

#[pymethods]
impl PyFactor {
    /// Canonical values in `(i, k, l, j)` order, `j` fastest.
    #[new]
    fn new(pattern: &PyPattern, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: KsFactor::new(pattern.inner, values).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (pattern, seed=0))]
    fn random(pattern: &PyPattern, seed: u64) -> Self {
        Self {
            inner: KsFactor::random(pattern.inner, seed),
        }
    }

    /// Reads the on-support entries of a dense `M × N` matrix.
    #[staticmethod]
    fn from_dense(pattern: &PyPattern, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let dense = ksmm_core::DenseMatrix::from_rows(&rows).map_err(err)?;
        Ok(Self {
            inner: KsFactor::from_dense(pattern.inner, &dense).map_err(err)?,
        })
    }

    #[getter]
    fn pattern(&self) -> PyPattern {
        PyPattern {
            inner: self.inner.pattern(),
        }
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        self.inner.to_dense().to_rows()
    }

    fn __repr__(&self) -> String {
        format!("Factor({})", self.inner.pattern())
    }
}

fn rows_to_batch<T: Scalar>(
    rows: &[Vec<f64>],
    features: usize,
    layout: Layout,
) -> PyResult<BatchMatrix<T>> {
    if let Some((n, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != features) {
        return Err(err(format!(
            "row {n} has {} entries, expected {features}",
            r.len()
        )));
    }
    Ok(BatchMatrix::from_fn(
        rows.len(),
        features,
        layout,
        |n, f| T::from_f64(rows[n][f]),
    ))
}

fn batch_to_rows<T: Scalar>(y: &BatchMatrix<T>) -> Vec<Vec<f64>> {
    y.to_rows()
        .into_iter()
        .map(|r| r.into_iter().map(Scalar::as_f64).collect())
        .collect()
}

fn run<T: Scalar>(
    x: &[Vec<f64>],
    k: &KsFactor<f64>,
    backend: Backend,
    layout: Layout,
) -> PyResult<Vec<Vec<f64>>> {
    let k: KsFactor<T> = k.cast();
    let xb = rows_to_batch::<T>(x, k.pattern().in_dim(), layout)?;
    let y = PreparedFactor::new(&k, backend)
        .and_then(|p| p.apply(&xb))
        .map_err(err)?;
    Ok(batch_to_rows(&y))
}

/// `Y = X·Kᵀ` for a batch given as rows.
#[pyfunction]
#[pyo3(signature = (x, factor, backend="fused", layout="bsf", dtype="fp32"))]
fn multiply(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    factor: &PyFactor,
    backend: &str,
    layout: &str,
    dtype: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let (backend, layout, dtype) = (
        parse::<Backend>(backend)?,
        parse::<Layout>(layout)?,
        parse::<ScalarKind>(dtype)?,
    );
    let k = &factor.inner;
    py.detach(|| match dtype {
        ScalarKind::Fp32 => run::<f32>(&x, k, backend, layout),
        ScalarKind::Fp64 => run::<f64>(&x, k, backend, layout),
    })
}

#[pyclass(name = "Chain", module = "ksmm")]
pub struct PyChain {
    inner: KsChain<f64>,
}

#[pymethods]
impl PyChain {
    /// Factors outermost first; the product is `K₁·K₂⋯K_L`.
    #[new]
    #[pyo3(signature = (factors, backend="fused"))]
    fn new(factors: Vec<PyFactor>, backend: &str) -> PyResult<Self> {
        let factors = factors.into_iter().map(|f| f.inner).collect();
        Ok(Self {
            inner: KsChain::new(factors, parse(backend)?, Layout::BatchSizeFirst).map_err(err)?,
        })
    }

    /// The Walsh–Hadamard transform of size `2^levels` as a chain.
    #[staticmethod]
    #[pyo3(signature = (levels, backend="fused"))]
    fn hadamard(levels: usize, backend: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ksmm_core::hadamard_chain(levels, parse(backend)?, Layout::BatchSizeFirst)
                .map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn patterns(&self) -> Vec<PyPattern> {
        self.inner
            .patterns()
            .into_iter()
            .map(|inner| PyPattern { inner })
            .collect()
    }

    fn apply(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let xb = rows_to_batch::<f64>(&x, self.inner.in_dim(), Layout::BatchSizeFirst)?;
        Ok(batch_to_rows(&self.inner.apply(&xb).map_err(err)?))
    }

    fn dense_product(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.dense_product().map_err(err)?.to_rows())
    }
}

#[pyclass(name = "Traffic", frozen, get_all, module = "ksmm")]
pub struct PyTraffic {
    baseline_io: u64,
    fused_io: u64,
    useful_macs: u64,
    weight_io: u64,
    wasted_ratio: f64,
}

/// Element traffic of one multiply at batch size `batch`.
#[pyfunction]
fn traffic(pattern: &PyPattern, batch: usize) -> PyResult<PyTraffic> {
    let t = ksmm_core::traffic(pattern.inner, batch).map_err(err)?;
    Ok(PyTraffic {
        baseline_io: t.baseline_io,
        fused_io: t.fused_io,
        useful_macs: t.useful_macs,
        weight_io: t.weight_io,
        wasted_ratio: t.wasted_ratio,
    })
}

/// Patterns of the benchmark grid; `desk=True` selects the reduced grid.
#[pyfunction]
#[pyo3(signature = (desk=false))]
fn grid(desk: bool) -> Vec<PyPattern> {
    let spec = if desk {
        GridSpec::desk()
    } else {
        GridSpec::full()
    };
    generate_grid(&spec)
        .into_iter()
        .map(|inner| PyPattern { inner })
        .collect()
}

/// `(count, median sparsity, 25th percentile sparsity)` over non-dense grid
/// patterns.
#[pyfunction]
#[pyo3(signature = (desk=false))]
fn grid_summary(desk: bool) -> PyResult<(usize, f64, f64)> {
    let spec = if desk {
        GridSpec::desk()
    } else {
        GridSpec::full()
    };
    let s = grid_stats(&generate_grid(&spec)).ok_or_else(|| err("empty grid"))?;
    Ok((s.count, s.median_sparsity, s.q25_sparsity))
}

#[pyfunction]
fn perfect_shuffle(p: usize, q: usize) -> Vec<usize> {
    ksmm_core::perfect_shuffle(p, q).as_slice().to_vec()
}

#[pyfunction]
fn backends() -> Vec<&'static str> {
    Backend::ALL.iter().map(|b| b.name()).collect()
}

#[pymodule]
fn ksmm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPattern>()?;
    m.add_class::<PyFactor>()?;
    m.add_class::<PyChain>()?;
    m.add_class::<PyTraffic>()?;
    m.add_function(wrap_pyfunction!(multiply, m)?)?;
    m.add_function(wrap_pyfunction!(traffic, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    m.add_function(wrap_pyfunction!(grid_summary, m)?)?;
    m.add_function(wrap_pyfunction!(perfect_shuffle, m)?)?;
    m.add_function(wrap_pyfunction!(backends, m)?)?;
    Ok(())
}
