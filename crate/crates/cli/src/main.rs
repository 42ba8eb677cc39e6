use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pper_core::config::Overrides;
use pper_core::equality::EeqMode;
use pper_core::he::Backend;
use pper_core::protocol::Variant;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "pper", version, about = "Privacy-preserving entity resolution over a simulated homomorphic backend")]
struct Cli {
    /// TOML config file; defaults are used when absent.
    #[arg(long, global = true, env = "PPER_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate two synthetic raw datasets and their truth file.
    Gen {
        /// Output directory [paths.raw_dir].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Normalize raw datasets and derive the SSN-based truth.
    Prep {
        /// Directory holding d1_raw.csv, d2_raw.csv and optionally truth.csv [paths.raw_dir].
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Output directory [paths.data_dir].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one pipeline variant; writes matches.csv, candidates.csv and stats.json.
    Run {
        #[arg(long)]
        d1: Option<PathBuf>,
        #[arg(long)]
        d2: Option<PathBuf>,
        /// Output directory [paths.out_dir].
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Score a matches file against the truth; writes roc.csv and blocking.json.
    Eval {
        #[arg(long)]
        matches: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Candidate pairs of the run; defaults to candidates.csv next to the
        /// matches file, falling back to the matched pairs.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Datasets used only for their record counts.
        #[arg(long)]
        d1: Option<PathBuf>,
        #[arg(long)]
        d2: Option<PathBuf>,
        #[arg(long, requires = "n2")]
        n1: Option<u64>,
        #[arg(long, requires = "n1")]
        n2: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the benchmark grid; writes bench.csv.
    Bench {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
}

/// Flags mirroring `[pipeline]`, `[he]` and the root `seed`.
#[derive(Args, Debug, Default)]
struct Flags {
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    eeq_mode: Option<EeqMode>,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    parallel: Option<bool>,
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    seed: Option<u64>,
    /// Append cleartext names and DOBs to matches.csv.
    #[arg(long)]
    unsafe_debug_fields: bool,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            variant: self.variant,
            eeq_mode: self.eeq_mode,
            chunk_size: self.chunk_size,
            threshold: self.threshold,
            workers: self.workers,
            parallel: self.parallel,
            backend: self.backend,
            seed: self.seed,
            unsafe_debug_fields: self.unsafe_debug_fields.then_some(true),
        }
    }
}

/// `kind` of the innermost engine error, if any.
fn error_kind(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<pper_core::Error>())
        .map_or("runtime", pper_core::Error::kind)
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    one_line(&out)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let head: Vec<&str> = msg.lines().take_while(|l| !l.starts_with("Usage:")).collect();
            eprintln!("error kind=usage: {}", one_line(head.join(" ").trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match commands::dispatch(cli.config.as_deref(), cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={}: {}", error_kind(&e), describe(&e));
            ExitCode::FAILURE
        }
    }
}
