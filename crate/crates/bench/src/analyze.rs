//! Speedups of one backend over a baseline set, and the statistics built on
//! them.

use std::collections::{BTreeMap, BTreeSet};

use ksmm_core::stats::{median, pearson, quantile, quantile_sorted};
use ksmm_core::{Backend, KsPattern, Layout, ScalarKind};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::record::BenchRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub candidate: Backend,
    pub baselines: Vec<Backend>,
    pub sparsity_bins: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            candidate: Backend::Fused,
            baselines: vec![Backend::Permuted, Backend::Contraction, Backend::Csr],
            sparsity_bins: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSpeedup {
    pub pattern: KsPattern,
    pub candidate_ns: f64,
    pub best_baseline: Backend,
    pub best_baseline_ns: f64,
    /// `best_baseline_ns / candidate_ns`.
    pub speedup: f64,
    pub tie: bool,
}

/// How often `backend` beats the fastest of `against`, over patterns where
/// both sides were timed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub backend: Backend,
    pub against: Vec<Backend>,
    pub patterns: usize,
    pub wins: usize,
    pub ties: usize,
    pub win_rate: Option<f64>,
    /// Median of `min(time of against) / time of backend` over all compared
    /// patterns.
    pub median_speedup: Option<f64>,
}

/// `ln(speedup) = intercept + density_coef·ln(density) + h_coef·ln(h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub intercept: f64,
    pub density_coef: f64,
    pub h_coef: f64,
    pub samples: usize,
    /// Absent when the response is constant.
    pub r2: Option<f64>,
    /// Absent when there are too few samples for the adjustment.
    pub adjusted_r2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityBin {
    pub lower: f64,
    pub upper: f64,
    pub patterns: usize,
    pub win_rate: Option<f64>,
    pub median_speedup: Option<f64>,
    pub correlation: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoxKey {
    #[serde(rename = "h")]
    H,
    #[serde(rename = "d_h")]
    DH,
}

/// Distribution of speedups among patterns sharing one key value. Whiskers are
/// the 5th and 95th percentiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGroup {
    pub key: BoxKey,
    pub value: f64,
    pub count: usize,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Statistics for one (layout, scalar, batch) slice of the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub layout: Layout,
    pub scalar: ScalarKind,
    pub batch: usize,
    pub speedups: Vec<PatternSpeedup>,
    pub comparisons: Vec<WinRate>,
    pub regression: Option<Regression>,
    pub regression_error: Option<String>,
    pub correlation: Option<f64>,
    pub bins: Vec<SparsityBin>,
    pub boxplots: Vec<BoxGroup>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub options: AnalysisOptions,
    pub sections: Vec<Section>,
}

type SliceKey = (u8, u8, usize);
type Times = BTreeMap<KsPattern, BTreeMap<Backend, f64>>;

pub fn analyze(records: &[BenchRecord], options: &AnalysisOptions) -> Result<AnalysisReport> {
    let backends: BTreeSet<Backend> = records.iter().map(|r| r.backend).collect();
    if backends.len() < 2 {
        return Err(BenchError::TooFewBackends(backends.len()));
    }
    let mut slices: BTreeMap<SliceKey, (Layout, ScalarKind, Times)> = BTreeMap::new();
    for r in records {
        let key = (r.layout.code(), r.scalar.code(), r.batch);
        let times = &mut slices
            .entry(key)
            .or_insert_with(|| (r.layout, r.scalar, Times::new()))
            .2;
        // Repeated measurements of the same combination keep the fastest.
        let t = times
            .entry(r.pattern)
            .or_default()
            .entry(r.backend)
            .or_insert(f64::INFINITY);
        *t = t.min(r.median_ns);
    }
    let sections = slices
        .into_iter()
        .map(|((_, _, batch), (layout, scalar, times))| {
            section(layout, scalar, batch, &times, options)
        })
        .collect();
    Ok(AnalysisReport {
        options: options.clone(),
        sections,
    })
}

fn speedups(times: &Times, candidate: Backend, against: &[Backend]) -> Vec<PatternSpeedup> {
    times
        .iter()
        .filter_map(|(&pattern, by_backend)| {
            let candidate_ns = *by_backend.get(&candidate)?;
            let (best_baseline, best_baseline_ns) = against
                .iter()
                .filter(|&&b| b != candidate)
                .filter_map(|b| by_backend.get(b).map(|&t| (*b, t)))
                .min_by(|x, y| x.1.total_cmp(&y.1))?;
            Some(PatternSpeedup {
                pattern,
                candidate_ns,
                best_baseline,
                best_baseline_ns,
                speedup: best_baseline_ns / candidate_ns,
                tie: best_baseline_ns == candidate_ns,
            })
        })
        .collect()
}

fn win_rate(backend: Backend, against: Vec<Backend>, s: &[PatternSpeedup]) -> WinRate {
    let wins = s
        .iter()
        .filter(|p| p.candidate_ns < p.best_baseline_ns)
        .count();
    let ratios: Vec<f64> = s.iter().map(|p| p.speedup).collect();
    WinRate {
        backend,
        against,
        patterns: s.len(),
        wins,
        ties: s.iter().filter(|p| p.tie).count(),
        win_rate: (!s.is_empty()).then(|| wins as f64 / s.len() as f64),
        median_speedup: median(&ratios),
    }
}

fn section(
    layout: Layout,
    scalar: ScalarKind,
    batch: usize,
    times: &Times,
    options: &AnalysisOptions,
) -> Section {
    let main = speedups(times, options.candidate, &options.baselines);
    let mut comparisons = vec![win_rate(
        options.candidate,
        options.baselines.clone(),
        &main,
    )];
    let present: BTreeSet<Backend> = times.values().flat_map(|m| m.keys().copied()).collect();
    for &backend in &present {
        let others: Vec<Backend> = present.iter().copied().filter(|&b| b != backend).collect();
        comparisons.push(win_rate(
            backend,
            others.clone(),
            &speedups(times, backend, &others),
        ));
    }

    let sparse: Vec<&PatternSpeedup> = main.iter().filter(|s| !s.pattern.is_dense()).collect();
    let rows: Vec<[f64; 3]> = sparse
        .iter()
        .map(|s| [s.pattern.density().ln(), s.pattern.h().ln(), s.speedup.ln()])
        .collect();
    let (regression, regression_error) = match fit_log_speedup(&rows) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let log_h: Vec<f64> = main.iter().map(|s| s.pattern.h().ln()).collect();
    let log_s: Vec<f64> = main.iter().map(|s| s.speedup.ln()).collect();

    Section {
        layout,
        scalar,
        batch,
        comparisons,
        regression,
        regression_error,
        correlation: pearson(&log_h, &log_s),
        bins: sparsity_bins(&sparse, options.sparsity_bins),
        boxplots: [BoxKey::H, BoxKey::DH]
            .iter()
            .flat_map(|&k| box_groups(&main, k))
            .collect(),
        speedups: main,
    }
}

/// Ordinary least squares of `ln(speedup)` on `ln(density)` and `ln(h)`.
/// Each row is `[ln density, ln h, ln speedup]`.
pub fn fit_log_speedup(rows: &[[f64; 3]]) -> Result<Regression> {
    const PREDICTORS: usize = 2;
    let n = rows.len();
    if n < PREDICTORS + 1 {
        return Err(BenchError::SingularFit(format!(
            "{n} samples for {} coefficients",
            PREDICTORS + 1
        )));
    }
    let x = DMatrix::from_fn(n, 3, |r, c| if c == 0 { 1.0 } else { rows[r][c - 1] });
    let y = DVector::from_fn(n, |r, _| rows[r][2]);
    let svd = x.clone().svd(true, true);
    let (max_sv, min_sv) = (svd.singular_values.max(), svd.singular_values.min());
    if !(min_sv > max_sv * 1e-10) {
        return Err(BenchError::SingularFit(format!(
            "condition {max_sv:e}/{min_sv:e}; predictors are collinear or constant"
        )));
    }
    let beta = svd
        .solve(&y, 0.0)
        .map_err(|e| BenchError::SingularFit(e.to_string()))?;
    let residual = &x * &beta - &y;
    let sse = residual.norm_squared();
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = (sst > 0.0).then(|| 1.0 - sse / sst);
    let dof = n as f64 - PREDICTORS as f64 - 1.0;
    let adjusted_r2 = r2
        .filter(|_| dof > 0.0)
        .map(|r2| 1.0 - (1.0 - r2) * (n as f64 - 1.0) / dof);
    Ok(Regression {
        intercept: beta[0],
        density_coef: beta[1],
        h_coef: beta[2],
        samples: n,
        r2,
        adjusted_r2,
    })
}

/// Equal-count bins on the log-sparsity scale. Bin edges are quantiles of
/// `ln(sparsity)`; ties stay in one bin, so counts may differ slightly.
fn sparsity_bins(s: &[&PatternSpeedup], bins: usize) -> Vec<SparsityBin> {
    let logs: Vec<f64> = s.iter().map(|p| p.pattern.sparsity().ln()).collect();
    if bins == 0 || logs.is_empty() {
        return Vec::new();
    }
    let edges: Vec<f64> = (0..=bins)
        .map(|i| quantile(&logs, i as f64 / bins as f64).expect("non-empty"))
        .collect();
    let mut members: Vec<Vec<&PatternSpeedup>> = vec![Vec::new(); bins];
    for (p, &v) in s.iter().zip(&logs) {
        let i = edges[1..bins].iter().take_while(|&&e| v >= e).count();
        members[i].push(p);
    }
    members
        .into_iter()
        .enumerate()
        .map(|(i, group)| {
            let wins = group
                .iter()
                .filter(|p| p.candidate_ns < p.best_baseline_ns)
                .count();
            let ratios: Vec<f64> = group.iter().map(|p| p.speedup).collect();
            let lh: Vec<f64> = group.iter().map(|p| p.pattern.h().ln()).collect();
            let ls: Vec<f64> = ratios.iter().map(|v| v.ln()).collect();
            SparsityBin {
                lower: edges[i].exp(),
                upper: edges[i + 1].exp(),
                patterns: group.len(),
                win_rate: (!group.is_empty()).then(|| wins as f64 / group.len() as f64),
                median_speedup: median(&ratios),
                correlation: pearson(&lh, &ls),
            }
        })
        .collect()
}

fn box_groups(s: &[PatternSpeedup], key: BoxKey) -> Vec<BoxGroup> {
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for p in s {
        let v = match key {
            BoxKey::H => p.pattern.h(),
            BoxKey::DH => p.pattern.energy_proxy(),
        };
        // Positive floats order like their bit patterns.
        groups.entry(v.to_bits()).or_default().push(p.speedup);
    }
    groups
        .into_iter()
        .map(|(bits, mut v)| {
            v.sort_by(f64::total_cmp);
            let q = |p| quantile_sorted(&v, p).expect("non-empty group");
            BoxGroup {
                key,
                value: f64::from_bits(bits),
                count: v.len(),
                q05: q(0.05),
                q25: q(0.25),
                median: q(0.5),
                q75: q(0.75),
                q95: q(0.95),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(p: KsPattern, backend: Backend, median_ns: f64) -> BenchRecord {
        BenchRecord {
            pattern: p,
            backend,
            layout: Layout::BatchSizeLast,
            scalar: ScalarKind::Fp32,
            batch: 16,
            median_ns,
            iqr_ns: 0.0,
            runs_per_measurement: 10,
            measurements: 10,
            h: p.h(),
            d_h: p.energy_proxy(),
            density: p.density(),
            matrix_size: (p.out_dim() * p.in_dim()) as u64,
            threads: 1,
            seed: 0,
        }
    }

    fn synthetic() -> Vec<BenchRecord> {
        let mut out = Vec::new();
        for a in [1, 2, 4] {
            for (b, c) in [(48, 48), (64, 16), (16, 64), (128, 128), (96, 24)] {
                for d in [1, 3, 8] {
                    let p = KsPattern::new(a, b, c, d).unwrap();
                    let speedup = (1.69 - 0.031 * p.density().ln() + 0.325 * p.h().ln()).exp();
                    out.push(record(p, Backend::Fused, 1000.0));
                    out.push(record(p, Backend::Permuted, 1000.0 * speedup));
                    out.push(record(p, Backend::Csr, 1000.0 * speedup * 2.0));
                }
            }
        }
        out
    }

    #[test]
    fn recovers_noiseless_coefficients() {
        let report = analyze(&synthetic(), &AnalysisOptions::default()).unwrap();
        let reg = report.sections[0].regression.as_ref().unwrap();
        assert!((reg.intercept - 1.69).abs() < 1e-9, "{reg:?}");
        assert!((reg.density_coef + 0.031).abs() < 1e-9, "{reg:?}");
        assert!((reg.h_coef - 0.325).abs() < 1e-9, "{reg:?}");
        assert!((reg.r2.unwrap() - 1.0).abs() < 1e-12);
        assert!((reg.adjusted_r2.unwrap() - 1.0).abs() < 1e-12);
        // Dense patterns (a = d = 1) are excluded.
        assert_eq!(reg.samples, 3 * 5 * 3 - 5);
    }

    #[test]
    fn normal_equations_hold() {
        let rows: Vec<[f64; 3]> = (1..40)
            .map(|i| {
                let (u, v) = ((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos());
                [u, v, 0.5 + 2.0 * u - v + 0.01 * (i as f64 * 1.3).sin()]
            })
            .collect();
        let reg = fit_log_speedup(&rows).unwrap();
        let beta = [reg.intercept, reg.density_coef, reg.h_coef];
        let mut grad = [0.0; 3];
        let mut scale = [0.0; 3];
        for r in &rows {
            let x = [1.0, r[0], r[1]];
            let res = beta[0] + beta[1] * r[0] + beta[2] * r[1] - r[2];
            for k in 0..3 {
                grad[k] += x[k] * res;
                scale[k] += (x[k] * r[2]).abs();
            }
        }
        for k in 0..3 {
            assert!(grad[k].abs() <= 1e-10 * scale[k], "{grad:?}");
        }
    }

    #[test]
    fn ties_give_zero_win_rate_and_unit_speedup() {
        let p = KsPattern::new(2, 4, 4, 2).unwrap();
        let q = KsPattern::new(1, 8, 8, 4).unwrap();
        let records = vec![
            record(p, Backend::Fused, 50.0),
            record(p, Backend::Permuted, 50.0),
            record(q, Backend::Fused, 70.0),
            record(q, Backend::Permuted, 70.0),
        ];
        let report = analyze(&records, &AnalysisOptions::default()).unwrap();
        let main = &report.sections[0].comparisons[0];
        assert_eq!(main.win_rate, Some(0.0));
        assert_eq!(main.median_speedup, Some(1.0));
        assert_eq!(main.ties, 2);
        assert!(report.sections[0].speedups.iter().all(|s| s.tie));
    }

    #[test]
    fn single_pattern_has_no_correlation() {
        let p = KsPattern::new(2, 4, 4, 2).unwrap();
        let records = vec![
            record(p, Backend::Fused, 10.0),
            record(p, Backend::Csr, 30.0),
        ];
        let report = analyze(&records, &AnalysisOptions::default()).unwrap();
        let s = &report.sections[0];
        assert_eq!(s.correlation, None);
        assert!(s.regression.is_none() && s.regression_error.is_some());
        assert!(s.bins.iter().all(|b| b.correlation.is_none()));
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("NaN"));
    }

    #[test]
    fn needs_two_backends() {
        let p = KsPattern::new(2, 4, 4, 2).unwrap();
        assert!(matches!(
            analyze(
                &[record(p, Backend::Fused, 1.0)],
                &AnalysisOptions::default()
            ),
            Err(BenchError::TooFewBackends(1))
        ));
    }

    #[test]
    fn collinear_predictors_are_singular() {
        let rows: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 2.0 * i as f64, 1.0]).collect();
        assert!(matches!(
            fit_log_speedup(&rows),
            Err(BenchError::SingularFit(_))
        ));
    }

    #[test]
    fn bins_and_boxplots_cover_every_pattern() {
        let report = analyze(&synthetic(), &AnalysisOptions::default()).unwrap();
        let s = &report.sections[0];
        assert_eq!(s.bins.len(), 6);
        let sparse = s.speedups.iter().filter(|p| !p.pattern.is_dense()).count();
        assert_eq!(s.bins.iter().map(|b| b.patterns).sum::<usize>(), sparse);
        for key in [BoxKey::H, BoxKey::DH] {
            let total: usize = s
                .boxplots
                .iter()
                .filter(|g| g.key == key)
                .map(|g| g.count)
                .sum();
            assert_eq!(total, s.speedups.len());
        }
        let h_groups = s.boxplots.iter().filter(|g| g.key == BoxKey::H).count();
        assert_eq!(h_groups, 4);
        // Fused beats every baseline in the synthetic data.
        assert_eq!(s.comparisons[0].win_rate, Some(1.0));
    }

    #[test]
    fn slices_by_layout() {
        let mut records = synthetic();
        let extra: Vec<_> = records
            .iter()
            .map(|r| BenchRecord {
                layout: Layout::BatchSizeFirst,
                ..r.clone()
            })
            .collect();
        records.extend(extra);
        let report = analyze(&records, &AnalysisOptions::default()).unwrap();
        assert_eq!(report.sections.len(), 2);
        assert_eq!(report.sections[0].layout, Layout::BatchSizeFirst);
    }
}
