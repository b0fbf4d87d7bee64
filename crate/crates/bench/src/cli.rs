//! The `ksmm` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksmm_core::{traffic, Backend, KsPattern, Layout, ScalarKind, TimerConfig};

use crate::analyze::{analyze, AnalysisOptions};
use crate::error::{BenchError, Result};
use crate::grid::{generate_grid, grid_stats, GridSpec};
use crate::record::{read_records, write_csv, write_records, CsvAppender, Format};
use crate::report::{render_summary, write_report};
use crate::runner::{run_bench, BenchConfig};
use crate::verify::{random_corpus, small_corpus, verify_cases, Corpus, BATCHES};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ksmm",
    version,
    about = "Kronecker-sparse matrix multiplication benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the benchmarked patterns, one `a,b,c,d` per line.
    Grid(GridArgs),
    /// Time backends on a set of patterns.
    Bench(BenchArgs),
    /// Speedups, win rates, regression and correlations from bench records.
    Analyze(AnalyzeArgs),
    /// Element traffic of the permuted and fused dataflows.
    Traffic(TrafficArgs),
    /// Check every backend against the FP64 reference.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// The full published grid (default).
    #[arg(long, conflicts_with = "desk")]
    pub full: bool,
    /// The reduced workstation grid.
    #[arg(long)]
    pub desk: bool,
    /// Print sparsity statistics instead of the patterns.
    #[arg(long)]
    pub stats: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// `desk`, `full` (or `grid`, same as `desk`), or a file of `a,b,c,d` lines.
    #[arg(long, default_value = "desk")]
    pub patterns: String,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "contraction,permuted,fused,csr,dense"
    )]
    pub backends: Vec<Backend>,
    #[arg(long, value_delimiter = ',', default_value = "bsf,bsl")]
    pub layouts: Vec<Layout>,
    #[arg(long, default_value = "fp32")]
    pub scalar: ScalarKind,
    #[arg(long, default_value_t = 1024)]
    pub batch: usize,
    /// Kernel threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10)]
    pub measurements: usize,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Skip combinations whose estimated footprint exceeds this many GiB.
    #[arg(long, default_value_t = 8.0)]
    pub memory_limit_gib: f64,
    /// Output path; CSV goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to the output file extension, else CSV.
    #[arg(long)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "permuted,contraction,csr"
    )]
    pub baselines: Vec<Backend>,
    #[arg(long, default_value = "fused")]
    pub candidate: Backend,
    /// JSON report path; a `.boxplots.csv` file is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrafficArgs {
    #[arg(long)]
    pub pattern: KsPattern,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Element width used for the byte figures.
    #[arg(long, default_value = "fp32")]
    pub scalar: ScalarKind,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "small")]
    pub corpus: Corpus,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of cases for the random corpus.
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        // A closed stdout (`ksmm grid | head`) is not an error.
        Err(BenchError::Io(e) | BenchError::Core(ksmm_core::KsError::Io(e)))
            if e.kind() == std::io::ErrorKind::BrokenPipe =>
        {
            ExitCode::from(EXIT_OK)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                BenchError::Usage(_)
                | BenchError::Core(
                    ksmm_core::KsError::Parse(_) | ksmm_core::KsError::InvalidArgument(_),
                ) => EXIT_USAGE,
                _ => EXIT_FAILED,
            })
        }
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Grid(a) => grid(a),
        Command::Bench(a) => bench(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Traffic(a) => traffic_cmd(a),
        Command::Verify(a) => verify(a),
    }
}

/// Reads `a,b,c,d` lines; blank lines and `#` comments are ignored.
pub fn parse_pattern_list(text: &str) -> Result<Vec<KsPattern>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.replace(' ', "")
                .parse::<KsPattern>()
                .map_err(BenchError::from)
        })
        .collect()
}

fn load_patterns(source: &str) -> Result<Vec<KsPattern>> {
    match source {
        "desk" | "grid" => Ok(generate_grid(&GridSpec::desk())),
        "full" => Ok(generate_grid(&GridSpec::full())),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BenchError::Usage(format!("cannot read pattern file {path}: {e}")))?;
            parse_pattern_list(&text)
        }
    }
}

fn grid(a: GridArgs) -> Result<u8> {
    let spec = if a.desk {
        GridSpec::desk()
    } else {
        GridSpec::full()
    };
    let patterns = generate_grid(&spec);
    let mut out = std::io::stdout().lock();
    if a.stats {
        let stats = grid_stats(&patterns)
            .ok_or_else(|| BenchError::Usage("grid has no sparse patterns".into()))?;
        writeln!(out, "patterns            {}", stats.count)?;
        writeln!(out, "fully dense         {}", stats.dense_count)?;
        writeln!(
            out,
            "median sparsity     {:.3}% (non-dense)",
            100.0 * stats.median_sparsity
        )?;
        writeln!(
            out,
            "25th pct sparsity   {:.3}% (non-dense)",
            100.0 * stats.q25_sparsity
        )?;
        writeln!(
            out,
            "median sparsity     {:.3}% (all)",
            100.0 * stats.median_sparsity_all
        )?;
        writeln!(
            out,
            "25th pct sparsity   {:.3}% (all)",
            100.0 * stats.q25_sparsity_all
        )?;
    } else {
        for p in patterns {
            writeln!(out, "{p}")?;
        }
    }
    Ok(EXIT_OK)
}

fn bench(a: BenchArgs) -> Result<u8> {
    let patterns = load_patterns(&a.patterns)?;
    let cfg = BenchConfig {
        backends: a.backends,
        layouts: a.layouts,
        scalar: a.scalar,
        batch: a.batch,
        timer: TimerConfig {
            warmup: a.warmup,
            measurements: a.measurements,
            runs_per_measurement: a.runs,
        },
        threads: a.threads,
        seed: a.seed,
        memory_limit_bytes: Some((a.memory_limit_gib * (1u64 << 30) as f64) as u64),
    };
    if cfg.timer.validate().is_err() || cfg.batch == 0 {
        return Err(BenchError::Usage(
            "batch, measurements and runs must be at least 1".into(),
        ));
    }
    match &a.out {
        None => {
            let records = run_bench(&patterns, &cfg, |_| Ok(()))?;
            write_csv(std::io::stdout().lock(), &records)?;
        }
        Some(path) => match a.format.unwrap_or_else(|| Format::from_path(path)) {
            Format::Csv => {
                let mut sink = CsvAppender::open(path)?;
                run_bench(&patterns, &cfg, |r| sink.append(r))?;
            }
            Format::Json => {
                let records = run_bench(&patterns, &cfg, |_| Ok(()))?;
                write_records(path, &records, Format::Json)?;
            }
        },
    }
    Ok(EXIT_OK)
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<u8> {
    let records = read_records(&a.input)?;
    let options = AnalysisOptions {
        candidate: a.candidate,
        baselines: a.baselines,
        ..AnalysisOptions::default()
    };
    let report = analyze(&records, &options)?;
    print!("{}", render_summary(&report));
    if let Some(path) = &a.out {
        write_report(path, &report)?;
    }
    Ok(EXIT_OK)
}

fn traffic_cmd(a: TrafficArgs) -> Result<u8> {
    let t = traffic(a.pattern, a.batch)?;
    let (base, fused, weights) = t.bytes(a.scalar.width_bytes());
    let mut out = std::io::stdout().lock();
    writeln!(out, "pattern        {}", t.pattern)?;
    writeln!(out, "batch          {}", t.batch)?;
    writeln!(out, "useful MACs    {}", t.useful_macs)?;
    writeln!(
        out,
        "baseline I/O   {} elements ({base} bytes {})",
        t.baseline_io, a.scalar
    )?;
    writeln!(
        out,
        "fused I/O      {} elements ({fused} bytes {})",
        t.fused_io, a.scalar
    )?;
    writeln!(
        out,
        "weight reads   {} elements ({weights} bytes {})",
        t.weight_io, a.scalar
    )?;
    writeln!(out, "wasted ratio   {}", t.wasted_ratio)?;
    writeln!(out, "d·h            {}", t.pattern.energy_proxy())?;
    Ok(EXIT_OK)
}

fn verify(a: VerifyArgs) -> Result<u8> {
    let cases = match a.corpus {
        Corpus::Small => small_corpus(a.seed),
        Corpus::Random => random_corpus(a.seed, a.cases, 4096),
    };
    let report = verify_cases(&cases, &BATCHES)?;
    println!(
        "{} cases, {} comparisons, worst error/bound {:.3}",
        report.cases, report.comparisons, report.worst_scaled_error
    );
    for m in &report.mismatches {
        println!(
            "MISMATCH {} {} {} B={} seed={}: {}",
            m.pattern, m.backend, m.layout, m.batch, m.seed, m.detail
        );
    }
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

/// Writes `patterns` in the format [`parse_pattern_list`] reads.
pub fn write_pattern_list(path: &Path, patterns: &[KsPattern]) -> Result<()> {
    let text: String = patterns.iter().map(|p| format!("{p}\n")).collect();
    Ok(std::fs::write(path, text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(args: &[&str]) -> ExitCode {
        main_with_args(std::iter::once("ksmm").chain(args.iter().copied()))
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            code(&["traffic", "--pattern", "2,3,2,3", "--batch", "4"]),
            ExitCode::from(EXIT_OK)
        );
        assert_eq!(
            code(&["traffic", "--pattern", "2,3,2"]),
            ExitCode::from(EXIT_USAGE)
        );
        assert_eq!(code(&["nonsense"]), ExitCode::from(EXIT_USAGE));
        assert_eq!(
            code(&["bench", "--patterns", "/no/such/file"]),
            ExitCode::from(EXIT_USAGE)
        );
        assert_eq!(code(&["bench", "--batch", "0"]), ExitCode::from(EXIT_USAGE));
        assert_eq!(
            code(&["traffic", "--pattern", "1,1,1,1", "--batch", "0"]),
            ExitCode::from(EXIT_USAGE)
        );
        assert_eq!(
            code(&["analyze", "--in", "/no/such/records.csv"]),
            ExitCode::from(EXIT_FAILED)
        );
        assert_eq!(
            code(&["grid", "--desk", "--stats"]),
            ExitCode::from(EXIT_OK)
        );
    }

    #[test]
    fn pattern_files() {
        let text = "# header\n2,3,2,3\n\n 1, 4, 4, 1  # trailing\n";
        let got = parse_pattern_list(text).unwrap();
        assert_eq!(
            got,
            vec![
                KsPattern::new(2, 3, 2, 3).unwrap(),
                KsPattern::new(1, 4, 4, 1).unwrap()
            ]
        );
        assert!(parse_pattern_list("1,2,3").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        write_pattern_list(&path, &got).unwrap();
        assert_eq!(load_patterns(path.to_str().unwrap()).unwrap(), got);
    }

    #[test]
    fn bench_then_analyze() {
        let dir = tempfile::tempdir().unwrap();
        let patterns = dir.path().join("p.txt");
        std::fs::write(&patterns, "2,4,4,2\n1,8,8,4\n1,4,16,2\n4,4,4,1\n").unwrap();
        let records = dir.path().join("r.csv");
        let report = dir.path().join("a.json");
        let bench = [
            "bench",
            "--patterns",
            patterns.to_str().unwrap(),
            "--backends",
            "fused,permuted,csr",
            "--layouts",
            "bsl",
            "--batch",
            "8",
            "--threads",
            "1",
            "--warmup",
            "0",
            "--measurements",
            "3",
            "--runs",
            "1",
            "--out",
            records.to_str().unwrap(),
        ];
        assert_eq!(code(&bench), ExitCode::from(EXIT_OK));
        assert_eq!(read_records(&records).unwrap().len(), 12);
        let analyze = [
            "analyze",
            "--in",
            records.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ];
        assert_eq!(code(&analyze), ExitCode::from(EXIT_OK));
        assert!(report.exists());
        assert!(dir.path().join("a.boxplots.csv").exists());
    }
}
