//! Timing every requested backend on every pattern.

use ksmm_core::{
    measure, with_threads, Backend, BatchMatrix, KsFactor, KsPattern, Layout, PreparedFactor,
    Scalar, ScalarKind, Scratch, TimerConfig,
};

use crate::error::{BenchError, Result};
use crate::record::BenchRecord;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub backends: Vec<Backend>,
    pub layouts: Vec<Layout>,
    pub scalar: ScalarKind,
    pub batch: usize,
    pub timer: TimerConfig,
    /// Worker threads for the kernels; 0 uses the global pool.
    pub threads: usize,
    pub seed: u64,
    /// Patterns whose estimated footprint exceeds this are skipped.
    pub memory_limit_bytes: Option<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            backends: vec![
                Backend::Contraction,
                Backend::Permuted,
                Backend::Fused,
                Backend::Csr,
                Backend::DenseBaseline,
            ],
            layouts: Layout::ALL.to_vec(),
            scalar: ScalarKind::Fp32,
            batch: 1024,
            timer: TimerConfig::default(),
            threads: 0,
            seed: 0,
            memory_limit_bytes: Some(8 << 30),
        }
    }
}

/// Rough peak footprint of one (pattern, backend) run in bytes.
pub fn estimated_bytes(p: KsPattern, backend: Backend, batch: usize, scalar: ScalarKind) -> u64 {
    let w = scalar.width_bytes() as u64;
    let (m, n, nnz, b) = (
        p.out_dim() as u64,
        p.in_dim() as u64,
        p.nnz() as u64,
        batch as u64,
    );
    let activations = b.saturating_mul(m + n).saturating_mul(w);
    let weights = match backend {
        Backend::Reference => {
            m.saturating_mul(n).saturating_mul(8) + b.saturating_mul(m + n).saturating_mul(8)
        }
        Backend::DenseBaseline => m.saturating_mul(n).saturating_mul(w),
        Backend::Csr => nnz.saturating_mul(w + 8) + (m + 1) * 8,
        Backend::Permuted => nnz * w + b.saturating_mul(m + n).saturating_mul(w),
        Backend::Contraction | Backend::Fused => nnz * w,
    };
    // The random factor is generated before conversion.
    activations.saturating_add(weights).saturating_add(nnz * w)
}

fn resolved_threads(threads: usize) -> usize {
    if threads > 0 {
        threads
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

fn time_one<T: Scalar>(
    p: KsPattern,
    backend: Backend,
    layout: Layout,
    cfg: &BenchConfig,
) -> Result<BenchRecord> {
    let k = KsFactor::<T>::random(p, cfg.seed);
    let prepared = PreparedFactor::new(&k, backend)?;
    drop(k);
    let x = BatchMatrix::<T>::random_normal(cfg.batch, p.in_dim(), layout, cfg.seed ^ 0x5eed);
    let mut out = BatchMatrix::zeros(cfg.batch, p.out_dim(), layout);
    let mut scratch = Scratch::default();
    let timing = with_threads(cfg.threads, || {
        measure(&cfg.timer, || {
            prepared.apply_into(&x, &mut out, &mut scratch)
        })
    })??;
    Ok(BenchRecord {
        pattern: p,
        backend,
        layout,
        scalar: cfg.scalar,
        batch: cfg.batch,
        median_ns: timing.median_ns,
        iqr_ns: timing.iqr_ns,
        runs_per_measurement: cfg.timer.runs_per_measurement,
        measurements: cfg.timer.measurements,
        h: p.h(),
        d_h: p.energy_proxy(),
        density: p.density(),
        matrix_size: p.out_dim() as u64 * p.in_dim() as u64,
        threads: resolved_threads(cfg.threads),
        seed: cfg.seed,
    })
}

/// Times each (pattern, backend, layout) once and hands every record to
/// `sink` as soon as it exists.
///
/// Failures of a single combination are logged and skipped. Errors from
/// `sink` abort the run.
pub fn run_bench(
    patterns: &[KsPattern],
    cfg: &BenchConfig,
    mut sink: impl FnMut(&BenchRecord) -> Result<()>,
) -> Result<Vec<BenchRecord>> {
    cfg.timer.validate()?;
    if cfg.batch == 0 {
        return Err(BenchError::Usage("batch must be at least 1".into()));
    }
    let mut records = Vec::new();
    for (n, &p) in patterns.iter().enumerate() {
        log::info!("[{}/{}] pattern {p}", n + 1, patterns.len());
        for &backend in &cfg.backends {
            let need = estimated_bytes(p, backend, cfg.batch, cfg.scalar);
            if cfg.memory_limit_bytes.is_some_and(|cap| need > cap) {
                log::warn!("skipping {p} on {backend}: needs about {need} bytes");
                continue;
            }
            for &layout in &cfg.layouts {
                let result = match cfg.scalar {
                    ScalarKind::Fp32 => time_one::<f32>(p, backend, layout, cfg),
                    ScalarKind::Fp64 => time_one::<f64>(p, backend, layout, cfg),
                };
                match result {
                    Ok(record) => {
                        sink(&record)?;
                        records.push(record);
                    }
                    Err(e) => log::error!("{p} {backend} {layout}: {e}"),
                }
            }
        }
    }
    Ok(records)
}
