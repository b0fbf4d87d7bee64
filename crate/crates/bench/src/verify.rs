//! Backend equivalence against the FP64 reference over pattern corpora.

use ksmm_core::{
    approx_equal, default_tolerances, Backend, BatchMatrix, KsFactor, KsPattern, Layout,
    PreparedFactor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const BATCHES: [usize; 4] = [1, 7, 64, 257];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corpus {
    Small,
    Random,
}

impl std::str::FromStr for Corpus {
    type Err = crate::error::BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Corpus::Small),
            "random" => Ok(Corpus::Random),
            other => Err(crate::error::BenchError::Usage(format!(
                "unknown corpus {other:?}"
            ))),
        }
    }
}

/// One (pattern, seed) case; every batch size and layout is checked for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Case {
    pub pattern: KsPattern,
    pub seed: u64,
}

/// Every pattern with entries in `1..=3`, plus a few with remainders against
/// the default tile plan.
pub fn small_corpus(seed: u64) -> Vec<Case> {
    let mut patterns = Vec::new();
    for a in 1..=3 {
        for b in 1..=3 {
            for c in 1..=3 {
                for d in 1..=3 {
                    patterns.push((a, b, c, d));
                }
            }
        }
    }
    patterns.extend([(1, 9, 17, 3), (2, 33, 7, 5), (1, 64, 64, 4), (3, 12, 48, 2)]);
    patterns
        .into_iter()
        .enumerate()
        .map(|(n, (a, b, c, d))| Case {
            pattern: KsPattern::new(a, b, c, d).expect("positive entries"),
            seed: seed.wrapping_add(n as u64),
        })
        .collect()
}

/// Random patterns with `M, N ≤ max_dim`. Entries are drawn log-uniformly so
/// that small and large shapes both appear.
pub fn random_corpus(seed: u64, count: usize, max_dim: usize) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_uniform = |hi: usize| -> usize {
        let v = rng
            .random_range(0.0..((hi as f64) + 1.0).ln())
            .exp()
            .floor() as usize;
        v.clamp(1, hi)
    };
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (a, b, c, d) = (
            log_uniform(16),
            log_uniform(256),
            log_uniform(256),
            log_uniform(64),
        );
        if a * b * d <= max_dim && a * c * d <= max_dim {
            let pattern = KsPattern::new(a, b, c, d).expect("positive entries");
            out.push(Case {
                pattern,
                seed: seed ^ (out.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub pattern: KsPattern,
    pub seed: u64,
    pub backend: Backend,
    pub layout: Layout,
    pub batch: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub cases: usize,
    pub comparisons: usize,
    /// Largest `error / bound` seen; below one means every check passed.
    pub worst_scaled_error: f64,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares every non-reference backend with the reference for each case,
/// batch size and layout, in FP32 at the default tolerances.
pub fn verify_cases(cases: &[Case], batches: &[usize]) -> Result<VerifyReport> {
    let backends: Vec<Backend> = Backend::ALL
        .into_iter()
        .filter(|&b| b != Backend::Reference)
        .collect();
    let mut report = VerifyReport::default();
    for case in cases {
        let p = case.pattern;
        let k = KsFactor::<f32>::random(p, case.seed);
        let reference = PreparedFactor::new(&k, Backend::Reference)?;
        let prepared = backends
            .iter()
            .map(|&b| PreparedFactor::new(&k, b))
            .collect::<ksmm_core::Result<Vec<_>>>()?;
        let (rel, abs) = default_tolerances(p.c());
        for &batch in batches {
            for layout in Layout::ALL {
                let x = BatchMatrix::<f32>::random_normal(
                    batch,
                    p.in_dim(),
                    layout,
                    case.seed ^ batch as u64,
                );
                let expected = reference.apply(&x)?;
                for (pf, &backend) in prepared.iter().zip(&backends) {
                    let y = pf.apply(&x)?;
                    let cmp = approx_equal(&y, &expected, rel, abs)?;
                    report.comparisons += 1;
                    report.worst_scaled_error = report.worst_scaled_error.max(cmp.max_scaled_error);
                    if !cmp.equal {
                        report.mismatches.push(Mismatch {
                            pattern: p,
                            seed: case.seed,
                            backend,
                            layout,
                            batch,
                            detail: format!("{cmp:?}"),
                        });
                    }
                }
            }
        }
        report.cases += 1;
    }
    Ok(report)
}
