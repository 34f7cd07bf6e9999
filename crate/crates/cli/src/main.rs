//! `streamctx`: run, sweep, report and validate streaming-context evaluations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use streamctx::bench::{self, BenchFormat, DistanceDist, SyntheticParams};
use streamctx::policy::{PolicyConfig, PolicyKind};
use streamctx::profiler::{self, AccountingModel};
use streamctx::runner::{self, MockSection, RunConfig};
use streamctx::Error;

#[derive(Parser)]
#[command(name = "streamctx", version, about = "Causal streaming video QA evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration end to end.
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Recent-window size.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run once per recent-window size and tabulate.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        /// Comma-separated window sizes; defaults to the config's sweep list.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Compare results files.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Results file to compute perception/memory deltas against.
        #[arg(long, env = "STREAMCTX_REFERENCE")]
        reference: Option<PathBuf>,
        /// Write report.md, report.csv and deltas.csv here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a benchmark file and list every problem found.
    Validate {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Native)]
        format: FormatArg,
        /// Also check the file against the format's published size.
        #[arg(long)]
        check_counts: bool,
    },
    /// Write a synthetic benchmark with known grounding.
    GenSynthetic {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n_questions: usize,
        /// Fixed evidence-to-query distance in seconds.
        #[arg(long, conflicts_with_all = ["distance_lo", "distance_hi"])]
        distance: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        distance_lo: f64,
        #[arg(long, default_value_t = 100.0)]
        distance_hi: f64,
        #[arg(long, default_value_t = 180.0)]
        stream_len: f64,
        #[arg(long, default_value_t = 0.005)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accounted retained bytes against stream length.
    Curve {
        #[arg(long, value_enum, default_value_t = PolicyArg::Recency)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        chunk_len: usize,
        #[arg(long, value_delimiter = ',', default_value = "16,64,256")]
        lengths: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, env = "STREAMCTX_CONFIG")]
    config: PathBuf,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Retrieved chunks for visual_rag.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Recency,
    VisualRag,
    KeepAll,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Recency => PolicyKind::Recency,
            PolicyArg::VisualRag => PolicyKind::VisualRag,
            PolicyArg::KeepAll => PolicyKind::KeepAll,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Native,
    Ovo,
    Streamingbench,
}

impl From<FormatArg> for BenchFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Native => BenchFormat::Native,
            FormatArg::Ovo => BenchFormat::Ovo,
            FormatArg::Streamingbench => BenchFormat::StreamingBench,
        }
    }
}

/// File values, then `STREAMCTX_*` variables, then flags.
fn resolve_config(args: &RunArgs, n: Option<usize>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    cfg.apply_env(std::env::vars())?;
    if let Some(p) = args.policy {
        cfg.policy.kind = p.into();
    }
    if let Some(n) = n {
        cfg.policy.n_recent = n;
    }
    if let Some(k) = args.k {
        cfg.policy.k_retrieved = k;
    }
    match args.backend {
        Some(BackendArg::Mock) => {
            cfg.backend.http = None;
            cfg.backend.mock.get_or_insert_with(MockSection::default);
        }
        Some(BackendArg::Http) => {
            cfg.backend.mock = None;
            cfg.backend.http.get_or_insert_with(Default::default);
        }
        None => {}
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    if let Some(id) = &args.run_id {
        cfg.run_id = id.clone();
    }
    if let Some(c) = args.concurrency {
        cfg.concurrency = c;
    }
    Ok(cfg)
}

fn fmt(x: Option<f64>, dp: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.dp$}"))
}

fn print_findings(findings: &[streamctx::error::Finding]) {
    for f in findings {
        eprintln!("  {f}");
    }
}

fn write_or_print(out: Option<&Path>, files: &[(&str, &str)]) -> anyhow::Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (name, body) in files {
                if !body.is_empty() {
                    fs::write(dir.join(name), body)?;
                }
            }
            println!("wrote {}", dir.display());
        }
        None => print!("{}", files[0].1),
    }
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { common, n } => {
            let cfg = resolve_config(&common, n)?;
            let out = runner::run(&cfg)?;
            let r = &out.results;
            println!(
                "{}: {} questions, {} failed; rt {} bwd {} overall {} er {}{}",
                r.run_id,
                r.n_questions,
                r.n_failed,
                fmt(r.rt_avg, 1),
                fmt(r.bwd_avg, 1),
                fmt(r.overall_avg, 2),
                fmt(r.er, 1),
                match (r.delta_p, r.delta_m) {
                    (Some(p), Some(m)) => format!("; delta_p {p:+.1} delta_m {m:+.1}"),
                    _ => String::new(),
                }
            );
            println!("wrote {}", out.dir.display());
        }
        Command::Sweep { common, n } => {
            let cfg = resolve_config(&common, None)?;
            let ns = if n.is_empty() { cfg.sweep.clone().unwrap_or_default() } else { n };
            if ns.is_empty() {
                bail!("no window sizes: pass --n or set `sweep` in the config");
            }
            let out = runner::sweep(&cfg, &ns)?;
            print!("{}", out.markdown);
        }
        Command::Report { results, reference, out } => {
            let r = runner::report(&results, reference.as_deref())?;
            write_or_print(
                out.as_deref(),
                &[("report.md", &r.markdown), ("report.csv", &r.csv), ("deltas.csv", &r.deltas_csv)],
            )?;
        }
        Command::Validate {
            benchmark,
            format,
            check_counts,
        } => {
            let format: BenchFormat = format.into();
            let loaded = bench::load_benchmark(&benchmark, format)?;
            if check_counts {
                match format {
                    BenchFormat::Ovo => loaded.check_counts(bench::OVO_TOTAL_QUESTIONS, bench::OVO_TOTAL_TASKS)?,
                    BenchFormat::StreamingBench => loaded
                        .check_counts(bench::STREAMINGBENCH_TOTAL_QUESTIONS, bench::STREAMINGBENCH_TOTAL_TASKS)?,
                    BenchFormat::Native => {}
                }
            }
            let report = bench::validate(&loaded.set);
            println!(
                "{}: {} questions, {} skipped as out of scope, {} findings",
                loaded.set.name,
                loaded.set.questions.len(),
                loaded.skipped.len(),
                report.findings.len()
            );
            if !report.is_clean() {
                return Err(Error::Validation(report.findings).into());
            }
        }
        Command::GenSynthetic {
            seed,
            n_questions,
            distance,
            distance_lo,
            distance_hi,
            stream_len,
            beta,
            out,
        } => {
            let params = SyntheticParams {
                n_questions,
                distance: match distance {
                    Some(d) => DistanceDist::Fixed { d },
                    None => DistanceDist::Uniform {
                        lo: distance_lo,
                        hi: distance_hi,
                    },
                },
                stream_len_s: stream_len,
                beta,
                ..SyntheticParams::default()
            };
            bench::gen_synthetic(seed, &params)?.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Curve {
            policy,
            n,
            k,
            chunk_len,
            lengths,
            out,
        } => {
            let cfg = PolicyConfig {
                kind: policy.into(),
                n_recent: n,
                k_retrieved: k,
                chunk_len,
                ..PolicyConfig::default()
            };
            let samples = profiler::memory_curve(&cfg, &lengths, &AccountingModel::default())?;
            let report = profiler::efficiency_report(&samples)?;
            match out {
                Some(dir) => {
                    report.write_to_dir(&dir)?;
                    println!("wrote {}", dir.display());
                }
                None => print!("{}", report.csv),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Validation(findings)) => {
                    print_findings(findings);
                    ExitCode::from(3)
                }
                Some(Error::InvalidConfig(_) | Error::InvalidInput(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
