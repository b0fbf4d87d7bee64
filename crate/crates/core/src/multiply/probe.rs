//! Share of the permuted backend's time spent in its two permutations.
//!
//! The full backend runs on `(a, b, c, d)`. The same GEMMs with identity
//! permutations are obtained from the pattern `(a·d, b, c, 1)`, whose blocks
//! have the same shapes and count. The share is `(Δt − Δt̃) / Δt`.

use serde::{Deserialize, Serialize};

use super::{Backend, PreparedFactor, Scratch};
use crate::batch::{BatchMatrix, Layout};
use crate::error::Result;
use crate::factor::KsFactor;
use crate::pattern::KsPattern;
use crate::timing::{measure, TimerConfig, Timing};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationShare {
    pub full: Timing,
    pub pre_permuted: Timing,
    /// Clamped to `[0, 1]`.
    pub share: f64,
}

/// Times both variants in FP32 on random data in the given layout.
///
/// Measurements of the two variants alternate, and they share one output
/// buffer and one scratch, so drift and buffer placement hit both alike.
/// The flattened factor holds exactly the blocks of the full one.
pub fn measure_permutation_share(
    p: KsPattern,
    batch: usize,
    layout: Layout,
    timer: &TimerConfig,
) -> Result<PermutationShare> {
    timer.validate()?;
    let flat = KsPattern::new(p.a() * p.d(), p.b(), p.c(), 1)?;
    let k = KsFactor::<f32>::random(p, 0);
    let k_flat = KsFactor::new(flat, k.to_bmm().data().to_vec())?;
    let full = PreparedFactor::new(&k, Backend::Permuted)?;
    let pre = PreparedFactor::new(&k_flat, Backend::Permuted)?;
    let x = BatchMatrix::<f32>::random_normal(batch, p.in_dim(), layout, 1);
    let mut out = BatchMatrix::zeros(batch, p.out_dim(), layout);
    let mut scratch = Scratch::default();
    let one = TimerConfig {
        warmup: 0,
        measurements: 1,
        runs_per_measurement: timer.runs_per_measurement,
    };
    for _ in 0..timer.warmup {
        full.apply_into(&x, &mut out, &mut scratch)?;
        pre.apply_into(&x, &mut out, &mut scratch)?;
    }
    let variants = [&full, &pre];
    let mut samples = [Vec::new(), Vec::new()];
    for m in 0..timer.measurements {
        let order = if m % 2 == 0 { [0, 1] } else { [1, 0] };
        for v in order {
            let t = measure(&one, || variants[v].apply_into(&x, &mut out, &mut scratch))?;
            samples[v].push(t.median_ns);
        }
    }
    let [a, b] = samples;
    let full = Timing::from_samples(a)?;
    let pre_permuted = Timing::from_samples(b)?;
    let share = ((full.median_ns - pre_permuted.median_ns) / full.median_ns).clamp(0.0, 1.0);
    Ok(PermutationShare {
        full,
        pre_permuted,
        share,
    })
}
