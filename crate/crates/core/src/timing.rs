//! Wall-clock measurement with warmups, repeated runs and medians.
//!
//! One run is one call of the timed closure. One measurement is the wall time
//! of `runs_per_measurement` consecutive runs divided by that count. The
//! reported figure is the median over `measurements`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{KsError, Result};
use crate::stats::quantile_sorted;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimerConfig {
    pub warmup: usize,
    pub measurements: usize,
    pub runs_per_measurement: usize,
}

impl Default for TimerConfig {
    fn default() -> Self {
        Self {
            warmup: 3,
            measurements: 10,
            runs_per_measurement: 10,
        }
    }
}

impl TimerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.measurements == 0 || self.runs_per_measurement == 0 {
            return Err(KsError::InvalidArgument(
                "timer needs at least one measurement of one run".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_ns: f64,
    pub iqr_ns: f64,
    pub min_ns: f64,
    pub max_ns: f64,
    /// Per-measurement averages, in the order taken.
    pub samples_ns: Vec<f64>,
}

impl Timing {
    pub fn from_samples(samples_ns: Vec<f64>) -> Result<Self> {
        let mut sorted = samples_ns.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p| {
            quantile_sorted(&sorted, p).ok_or_else(|| KsError::InvalidArgument("no samples".into()))
        };
        Ok(Self {
            median_ns: q(0.5)?,
            iqr_ns: q(0.75)? - q(0.25)?,
            min_ns: sorted[0],
            max_ns: sorted[sorted.len() - 1],
            samples_ns,
        })
    }
}

/// Times `run` under `cfg`. Any error from `run` aborts the measurement.
pub fn measure<F>(cfg: &TimerConfig, mut run: F) -> Result<Timing>
where
    F: FnMut() -> Result<()>,
{
    cfg.validate()?;
    for _ in 0..cfg.warmup {
        run()?;
    }
    let mut samples = Vec::with_capacity(cfg.measurements);
    for _ in 0..cfg.measurements {
        let start = Instant::now();
        for _ in 0..cfg.runs_per_measurement {
            run()?;
        }
        let elapsed = start.elapsed().as_nanos() as f64;
        // a zero reading would break ratios downstream
        samples.push((elapsed / cfg.runs_per_measurement as f64).max(1.0));
    }
    Timing::from_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_runs() {
        let cfg = TimerConfig {
            warmup: 2,
            measurements: 4,
            runs_per_measurement: 3,
        };
        let mut calls = 0;
        let t = measure(&cfg, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 2 + 4 * 3);
        assert_eq!(t.samples_ns.len(), 4);
        assert!(t.median_ns > 0.0 && t.iqr_ns >= 0.0);
    }

    #[test]
    fn rejects_empty_config_and_propagates_errors() {
        let cfg = TimerConfig {
            warmup: 0,
            measurements: 0,
            runs_per_measurement: 1,
        };
        assert!(measure(&cfg, || Ok(())).is_err());
        let err = measure(&TimerConfig::default(), || {
            Err(KsError::Format("boom".into()))
        });
        assert!(err.is_err());
    }

    #[test]
    fn summary_from_samples() {
        let t = Timing::from_samples(vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(t.median_ns, 2.5);
        assert_eq!(t.iqr_ns, 1.5);
        assert_eq!((t.min_ns, t.max_ns), (1.0, 4.0));
    }
}
