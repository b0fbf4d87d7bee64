//! Text and file forms of an [`AnalysisReport`].

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::analyze::{AnalysisReport, BoxKey};
use crate::error::Result;

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn num(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn names(list: &[ksmm_core::Backend]) -> String {
    list.iter().map(|b| b.name()).collect::<Vec<_>>().join(",")
}

/// Human-readable tables, one block per section.
pub fn render_summary(report: &AnalysisReport) -> String {
    let mut s = String::new();
    for sec in &report.sections {
        let _ = writeln!(
            s,
            "== layout {} scalar {} batch {} ==",
            sec.layout, sec.scalar, sec.batch
        );
        let _ = writeln!(
            s,
            "{:<48} {:>9} {:>9} {:>6} {:>5}",
            "comparison", "win rate", "median x", "count", "ties"
        );
        for c in &sec.comparisons {
            let label = format!("{} < min{{{}}}", c.backend, names(&c.against));
            let _ = writeln!(
                s,
                "{:<48} {:>9} {:>9} {:>6} {:>5}",
                label,
                pct(c.win_rate),
                num(c.median_speedup, 2),
                c.patterns,
                c.ties
            );
        }
        match (&sec.regression, &sec.regression_error) {
            (Some(r), _) => {
                let _ = writeln!(
                    s,
                    "log(speedup) = {:.4} {:+.4}·log(density) {:+.4}·log(h)   R² {}  adj R² {}  n {}",
                    r.intercept,
                    r.density_coef,
                    r.h_coef,
                    num(r.r2, 4),
                    num(r.adjusted_r2, 4),
                    r.samples
                );
            }
            (None, Some(e)) => {
                let _ = writeln!(s, "regression unavailable: {e}");
            }
            (None, None) => {}
        }
        let _ = writeln!(s, "corr(log speedup, log h) = {}", num(sec.correlation, 3));
        if !sec.bins.is_empty() {
            let _ = writeln!(
                s,
                "{:<20} {:>9} {:>9} {:>6} {:>6}",
                "sparsity bin", "win rate", "median x", "count", "corr"
            );
            for b in sec.bins.iter().rev() {
                let _ = writeln!(
                    s,
                    "{:<20} {:>9} {:>9} {:>6} {:>6}",
                    format!("{:.2}-{:.2}%", 100.0 * b.lower, 100.0 * b.upper),
                    pct(b.win_rate),
                    num(b.median_speedup, 2),
                    b.patterns,
                    num(b.correlation, 2)
                );
            }
        }
        s.push('\n');
    }
    s
}

/// Plot-ready quartiles, one row per (section, key, value).
pub fn write_boxplots_csv<W: Write>(out: W, report: &AnalysisReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "layout", "scalar", "batch", "key", "value", "count", "q05", "q25", "median", "q75", "q95",
    ])?;
    for sec in &report.sections {
        for g in &sec.boxplots {
            let key = match g.key {
                BoxKey::H => "h",
                BoxKey::DH => "d_h",
            };
            w.write_record([
                sec.layout.to_string(),
                sec.scalar.to_string(),
                sec.batch.to_string(),
                key.to_string(),
                g.value.to_string(),
                g.count.to_string(),
                g.q05.to_string(),
                g.q25.to_string(),
                g.median.to_string(),
                g.q75.to_string(),
                g.q95.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the report as JSON to `path` and the boxplot table next to it.
pub fn write_report(path: &Path, report: &AnalysisReport) -> Result<()> {
    serde_json::to_writer_pretty(std::fs::File::create(path)?, report)?;
    write_boxplots_csv(
        std::fs::File::create(path.with_extension("boxplots.csv"))?,
        report,
    )
}
