//! Blocking parameters of the fused kernel and the preset file that stores
//! tuned values per pattern.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::batch::{BatchMatrix, Layout};
use crate::error::{KsError, Result};
use crate::factor::KsFactor;
use crate::pattern::KsPattern;
use crate::timing::{measure, TimerConfig, Timing};

/// Environment variable naming the preset file.
pub const PRESETS_ENV: &str = "KSMM_PRESETS";

/// Fused-kernel blocking: `tile_b` output features per accumulator block,
/// `tile_c` reduction steps per chunk, `tile_n` samples per batch chunk.
/// None of them has to divide the corresponding dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TilePlan {
    tile_b: usize,
    tile_c: usize,
    tile_n: usize,
}

impl Default for TilePlan {
    fn default() -> Self {
        Self {
            tile_b: 32,
            tile_c: 64,
            tile_n: 64,
        }
    }
}

impl TilePlan {
    pub fn new(tile_b: usize, tile_c: usize, tile_n: usize) -> Result<Self> {
        if tile_b == 0 || tile_c == 0 || tile_n == 0 {
            return Err(KsError::InvalidArgument(format!(
                "tile sizes must be positive, got ({tile_b}, {tile_c}, {tile_n})"
            )));
        }
        Ok(Self {
            tile_b,
            tile_c,
            tile_n,
        })
    }

    pub fn tile_b(&self) -> usize {
        self.tile_b
    }

    pub fn tile_c(&self) -> usize {
        self.tile_c
    }

    pub fn tile_n(&self) -> usize {
        self.tile_n
    }

    /// Preset for `p` from the file named by `KSMM_PRESETS`, else the default.
    /// The file is read once per process.
    pub fn for_pattern(p: KsPattern) -> Self {
        static TABLE: OnceLock<PresetTable> = OnceLock::new();
        TABLE
            .get_or_init(|| match PresetTable::from_env() {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("ignoring tile presets: {e}");
                    PresetTable::default()
                }
            })
            .get(p)
            .unwrap_or_default()
    }

    /// The autotuning search space `{8, 16, 32, 64}³`.
    pub fn candidates() -> Vec<TilePlan> {
        let sizes = [8, 16, 32, 64];
        let mut out = Vec::with_capacity(64);
        for &tile_b in &sizes {
            for &tile_c in &sizes {
                for &tile_n in &sizes {
                    out.push(TilePlan {
                        tile_b,
                        tile_c,
                        tile_n,
                    });
                }
            }
        }
        out
    }
}

impl fmt::Display for TilePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.tile_b, self.tile_c, self.tile_n)
    }
}

/// Pattern to plan map, one `a,b,c,d tile_b tile_c tile_n` line per entry.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PresetTable {
    plans: BTreeMap<KsPattern, TilePlan>,
}

impl PresetTable {
    pub fn get(&self, p: KsPattern) -> Option<TilePlan> {
        self.plans.get(&p).copied()
    }

    pub fn insert(&mut self, p: KsPattern, plan: TilePlan) {
        self.plans.insert(p, plan);
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    /// Table from `KSMM_PRESETS`, empty when the variable is unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(PRESETS_ENV) {
            Some(path) => Self::load(Path::new(&path)),
            None => Ok(Self::default()),
        }
    }
}

impl FromStr for PresetTable {
    type Err = KsError;

    fn from_str(s: &str) -> Result<Self> {
        let mut table = Self::default();
        for (no, line) in s.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| KsError::Parse(format!("preset line {}: {what}", no + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(bad("expected `a,b,c,d tile_b tile_c tile_n`"));
            }
            let pattern: KsPattern = fields[0].parse()?;
            let mut sizes = [0usize; 3];
            for (slot, text) in sizes.iter_mut().zip(&fields[1..]) {
                *slot = text
                    .parse()
                    .map_err(|_| bad("tile sizes must be integers"))?;
            }
            table.insert(pattern, TilePlan::new(sizes[0], sizes[1], sizes[2])?);
        }
        Ok(table)
    }
}

impl fmt::Display for PresetTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, plan) in &self.plans {
            writeln!(f, "{p} {plan}")?;
        }
        Ok(())
    }
}

/// Times the fused kernel on `p` for every candidate plan and returns the
/// fastest with its timing.
pub fn autotune(
    p: KsPattern,
    batch: usize,
    layout: Layout,
    candidates: &[TilePlan],
    timer: &TimerConfig,
) -> Result<(TilePlan, Timing)> {
    let k = KsFactor::<f32>::random(p, 0);
    let tiles = k.to_tiles();
    let x = BatchMatrix::<f32>::random_normal(batch, p.in_dim(), layout, 1);
    let mut out = BatchMatrix::zeros(batch, p.out_dim(), layout);
    let mut best: Option<(TilePlan, Timing)> = None;
    for &plan in candidates {
        let t = measure(timer, || {
            super::fused::fused_into(&x, &tiles, &plan, &mut out);
            Ok(())
        })?;
        log::debug!("autotune {p} plan {plan}: {:.0} ns", t.median_ns);
        if best.as_ref().is_none_or(|(_, b)| t.median_ns < b.median_ns) {
            best = Some((plan, t));
        }
    }
    best.ok_or_else(|| KsError::InvalidArgument("no candidate plans".into()))
}
