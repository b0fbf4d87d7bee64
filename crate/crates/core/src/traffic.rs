//! Global-memory traffic of one multiply, counted in elements.

use serde::{Deserialize, Serialize};

use crate::error::{KsError, Result};
use crate::pattern::KsPattern;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub pattern: KsPattern,
    pub batch: u64,
    /// Permute-GEMM-permute: input read twice and written once, output
    /// written twice and read once, `3·B·(N + M)`.
    pub baseline_io: u64,
    /// Each input and output entry moved exactly once, `B·(N + M)`.
    pub fused_io: u64,
    pub useful_macs: u64,
    /// `2·fused_io / useful_macs = 2·(b + c)/(b·c)`, independent of `B`, `a`, `d`.
    pub wasted_ratio: f64,
    /// Factor entries read per pass, excluded from the ratios above.
    pub weight_io: u64,
}

impl TrafficReport {
    /// Bytes for a given element width; the ratios do not depend on it.
    pub fn bytes(&self, width: usize) -> (u64, u64, u64) {
        let w = width as u64;
        (self.baseline_io * w, self.fused_io * w, self.weight_io * w)
    }
}

pub fn traffic(p: KsPattern, batch: usize) -> Result<TrafficReport> {
    if batch == 0 {
        return Err(KsError::InvalidArgument("batch must be at least 1".into()));
    }
    let overflow = || KsError::SizeOverflow(format!("traffic of {p} at batch {batch}"));
    let b64 = batch as u64;
    let dims = (p.in_dim() as u64)
        .checked_add(p.out_dim() as u64)
        .ok_or_else(overflow)?;
    let fused_io = b64.checked_mul(dims).ok_or_else(overflow)?;
    let baseline_io = fused_io.checked_mul(3).ok_or_else(overflow)?;
    let nnz = p.nnz() as u64;
    let useful_macs = b64.checked_mul(nnz).ok_or_else(overflow)?;
    let (bb, cc) = (p.b() as f64, p.c() as f64);
    Ok(TrafficReport {
        pattern: p,
        batch: b64,
        baseline_io,
        fused_io,
        useful_macs,
        wasted_ratio: 2.0 * (bb + cc) / (bb * cc),
        weight_io: nnz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: usize, b: usize, c: usize, d: usize) -> KsPattern {
        KsPattern::new(a, b, c, d).unwrap()
    }

    #[test]
    fn worked_examples() {
        let r = traffic(p(1, 4, 4, 1), 2).unwrap();
        assert_eq!((r.baseline_io, r.fused_io, r.useful_macs), (48, 16, 32));
        assert_eq!(r.wasted_ratio, 1.0);

        let r = traffic(p(1, 2, 2, 1), 1).unwrap();
        assert_eq!((r.useful_macs, r.fused_io), (4, 4));
        assert_eq!(r.wasted_ratio, 2.0);
        assert_eq!(r.weight_io, 4);
    }

    #[test]
    fn ratio_ignores_batch_a_and_d() {
        let base = traffic(p(1, 6, 10, 1), 1).unwrap().wasted_ratio;
        for (a, d, batch) in [(3, 1, 7), (1, 5, 100), (4, 4, 1)] {
            assert_eq!(traffic(p(a, 6, 10, d), batch).unwrap().wasted_ratio, base);
        }
        let r = traffic(p(2, 6, 10, 3), 9).unwrap();
        assert!((2.0 * r.fused_io as f64 / r.useful_macs as f64 - r.wasted_ratio).abs() < 1e-12);
        assert!((r.wasted_ratio - 2.0 * p(1, 6, 10, 1).h()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(traffic(p(1, 2, 2, 1), 0).is_err());
        assert!(traffic(p(1 << 20, 1, 1, 1 << 20), usize::MAX / 2).is_err());
    }

    #[test]
    fn bytes_scale_counts() {
        let r = traffic(p(1, 4, 4, 1), 2).unwrap();
        assert_eq!(r.bytes(4), (192, 64, 64));
    }
}
