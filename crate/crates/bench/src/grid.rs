//! The benchmarked pattern grid and its sparsity statistics.

use std::collections::HashSet;

use ksmm_core::stats::quantile;
use ksmm_core::KsPattern;
use serde::{Deserialize, Serialize};

/// Inputs of the two-loop pattern generator.
///
/// Loop one fixes `a = 1` and ranges over `b_list × c_list × d_list1`. Loop
/// two ranges over `a_list × b_list × c_list × d_list2` with `a ≠ 1` and skips
/// `exclusion_pairs`. Both loops keep only `b == c`, `b == 4c` or `c == 4b`,
/// and only patterns whose input, output and support sizes at `batch_size` stay
/// within `size_limit`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a_list: Vec<u64>,
    pub b_list: Vec<u64>,
    pub c_list: Vec<u64>,
    pub d_list1: Vec<u64>,
    pub d_list2: Vec<u64>,
    pub batch_size: u64,
    pub size_limit: u64,
    pub exclusion_pairs: Vec<(u64, u64)>,
}

const WIDTHS: [u64; 10] = [48, 64, 96, 128, 192, 256, 384, 512, 768, 1024];

impl Default for GridSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl GridSpec {
    /// The grid of the published benchmark.
    pub fn full() -> Self {
        Self {
            a_list: vec![1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128],
            b_list: WIDTHS.to_vec(),
            c_list: WIDTHS.to_vec(),
            d_list1: vec![1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128],
            d_list2: vec![4, 16, 64],
            batch_size: 25_088,
            size_limit: 2_147_483_647,
            exclusion_pairs: vec![
                (1024, 256),
                (256, 1024),
                (128, 512),
                (512, 128),
                (64, 256),
                (256, 64),
            ],
        }
    }

    /// A grid small enough to time on a workstation at batch 1024.
    pub fn desk() -> Self {
        Self {
            a_list: vec![1, 4],
            b_list: vec![48, 64, 128],
            c_list: vec![48, 64, 128],
            d_list1: vec![1, 4, 16],
            d_list2: vec![1, 4, 16],
            batch_size: 1024,
            size_limit: 2_147_483_647,
            exclusion_pairs: Vec::new(),
        }
    }

    fn fits(&self, a: u64, b: u64, c: u64, d: u64) -> bool {
        let within = |factors: &[u64]| {
            factors
                .iter()
                .try_fold(1u64, |acc, &f| acc.checked_mul(f))
                .is_some_and(|v| v <= self.size_limit)
        };
        within(&[self.batch_size, a, c, d])
            && within(&[self.batch_size, a, b, d])
            && within(&[a, b, c, d])
    }
}

fn shape_ok(b: u64, c: u64) -> bool {
    b == c || b == 4 * c || c == 4 * b
}

/// Generated patterns in generator order, first occurrence kept.
pub fn generate_grid(spec: &GridSpec) -> Vec<KsPattern> {
    let mut raw = Vec::new();
    for &b in &spec.b_list {
        for &c in &spec.c_list {
            for &d in &spec.d_list1 {
                if shape_ok(b, c) && spec.fits(1, b, c, d) {
                    raw.push((1, b, c, d));
                }
            }
        }
    }
    for &a in &spec.a_list {
        for &b in &spec.b_list {
            for &c in &spec.c_list {
                for &d in &spec.d_list2 {
                    if a != 1
                        && !spec.exclusion_pairs.contains(&(b, c))
                        && shape_ok(b, c)
                        && spec.fits(a, b, c, d)
                    {
                        raw.push((a, b, c, d));
                    }
                }
            }
        }
    }
    let mut seen = HashSet::new();
    raw.into_iter()
        .filter(|t| seen.insert(*t))
        .filter_map(|(a, b, c, d)| {
            let dim = |v: u64| usize::try_from(v).ok();
            KsPattern::new(dim(a)?, dim(b)?, dim(c)?, dim(d)?).ok()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub count: usize,
    pub dense_count: usize,
    /// Over patterns with density below one.
    pub median_sparsity: f64,
    /// 25th percentile over patterns with density below one.
    pub q25_sparsity: f64,
    pub median_sparsity_all: f64,
    pub q25_sparsity_all: f64,
}

pub fn grid_stats(patterns: &[KsPattern]) -> Option<GridStats> {
    let all: Vec<f64> = patterns.iter().map(|p| p.sparsity()).collect();
    let sparse: Vec<f64> = patterns
        .iter()
        .filter(|p| !p.is_dense())
        .map(|p| p.sparsity())
        .collect();
    Some(GridStats {
        count: patterns.len(),
        dense_count: patterns.len() - sparse.len(),
        median_sparsity: quantile(&sparse, 0.5)?,
        q25_sparsity: quantile(&sparse, 0.25)?,
        median_sparsity_all: quantile(&all, 0.5)?,
        q25_sparsity_all: quantile(&all, 0.25)?,
    })
}
