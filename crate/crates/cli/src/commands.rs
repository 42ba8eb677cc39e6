use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde_json::json;

use pper_core::bench::{bench_suite, write_bench_csv};
use pper_core::config::AppConfig;
use pper_core::dataio::{
    derive_ground_truth, generate, preprocess, read_raw, read_records, read_truth, write_raw, write_records,
    write_truth, GroundTruth, Record,
};
use pper_core::matcher::{read_matches_csv, write_matches_csv, MatchResult};
use pper_core::metrics::{blocking_metrics, er_metrics, write_roc_csv};
use pper_core::protocol::run_pipeline;

use crate::{Command, Flags};

fn load(config: Option<&Path>, flags: Option<&Flags>) -> Result<AppConfig> {
    let mut cfg = AppConfig::load(config)?;
    if let Some(f) = flags {
        cfg.apply(&f.overrides());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn require(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!(pper_core::Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("missing file {}", path.display()),
        )));
    }
    Ok(())
}

fn records(path: &Path) -> Result<Vec<Record>> {
    require(path)?;
    read_records(path).with_context(|| format!("reading {}", path.display()))
}

pub fn dispatch(config: Option<&Path>, cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { out, seed } => {
            let flags = Flags { seed, ..Flags::default() };
            let cfg = load(config, Some(&flags))?;
            cmd_gen(&cfg, &out.unwrap_or_else(|| cfg.paths.raw_dir.clone()))
        }
        Command::Prep { input, out } => {
            let cfg = load(config, None)?;
            let input = input.unwrap_or_else(|| cfg.paths.raw_dir.clone());
            let out = out.unwrap_or_else(|| cfg.paths.data_dir.clone());
            cmd_prep(&input, &out)
        }
        Command::Run { d1, d2, out, flags } => {
            let cfg = load(config, Some(&flags))?;
            let d1 = d1.unwrap_or_else(|| cfg.paths.d1());
            let d2 = d2.unwrap_or_else(|| cfg.paths.d2());
            let out = out.unwrap_or_else(|| cfg.paths.out_dir.clone());
            cmd_run(&cfg, &d1, &d2, &out)
        }
        Command::Eval {
            matches,
            truth,
            candidates,
            d1,
            d2,
            n1,
            n2,
            out,
        } => {
            let cfg = load(config, None)?;
            let out = out.unwrap_or_else(|| cfg.paths.out_dir.clone());
            let matches = matches.unwrap_or_else(|| cfg.paths.out_dir.join("matches.csv"));
            let truth = truth.unwrap_or_else(|| cfg.paths.truth());
            let total = match (n1, n2) {
                (Some(a), Some(b)) => a * b,
                _ => {
                    let a = records(&d1.unwrap_or_else(|| cfg.paths.d1()))?.len() as u64;
                    let b = records(&d2.unwrap_or_else(|| cfg.paths.d2()))?.len() as u64;
                    a * b
                }
            };
            cmd_eval(&matches, &truth, candidates.as_deref(), total, &out)
        }
        Command::Bench { out, flags } => {
            let cfg = load(config, Some(&flags))?;
            cmd_bench(&cfg, &out.unwrap_or_else(|| cfg.paths.out_dir.clone()))
        }
    }
}

pub fn cmd_gen(cfg: &AppConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let (d1, d2, truth) = generate(&cfg.gen)?;
    write_raw(&out.join("d1_raw.csv"), &d1)?;
    write_raw(&out.join("d2_raw.csv"), &d2)?;
    write_truth(&out.join("truth.csv"), &truth)?;
    info!("generated {} + {} records, {} true pairs", d1.len(), d2.len(), truth.len());
    Ok(())
}

pub fn cmd_prep(input: &Path, out: &Path) -> Result<()> {
    let (p1, p2) = (input.join("d1_raw.csv"), input.join("d2_raw.csv"));
    require(&p1)?;
    require(&p2)?;
    let d1 = preprocess(&read_raw(&p1).with_context(|| format!("reading {}", p1.display()))?);
    let d2 = preprocess(&read_raw(&p2).with_context(|| format!("reading {}", p2.display()))?);
    let gen_truth = input.join("truth.csv");
    let gen_truth = if gen_truth.is_file() { Some(read_truth(&gen_truth)?) } else { None };
    let truth = derive_ground_truth(&d1, &d2, gen_truth.as_ref());
    ensure_dir(out)?;
    write_records(&out.join("d1.csv"), &d1)?;
    write_records(&out.join("d2.csv"), &d2)?;
    write_truth(&out.join("truth.csv"), &truth)?;
    Ok(())
}

fn debug_columns(d1: &[Record], d2: &[Record]) -> impl Fn(&MatchResult) -> Vec<String> {
    let index = |d: &[Record]| -> HashMap<u64, Record> { d.iter().map(|r| (r.local_id, r.clone())).collect() };
    let (a, b) = (index(d1), index(d2));
    move |m: &MatchResult| {
        let mut v = Vec::with_capacity(6);
        for r in [a.get(&m.id1), b.get(&m.id2)] {
            let f = |x: Option<&Option<String>>| x.and_then(Option::clone).unwrap_or_default();
            v.push(f(r.map(|r| &r.first_name)));
            v.push(f(r.map(|r| &r.last_name)));
            v.push(f(r.map(|r| &r.dob)));
        }
        v
    }
}

pub fn cmd_run(cfg: &AppConfig, d1: &Path, d2: &Path, out: &Path) -> Result<()> {
    let (r1, r2) = (records(d1)?, records(d2)?);
    ensure_dir(out)?;
    let output = run_pipeline(&cfg.pipeline_config(), &r1, &r2)?;
    let matches_path = out.join("matches.csv");
    if cfg.pipeline.unsafe_debug_fields {
        warn!("--unsafe-debug-fields: matches.csv contains cleartext identifiers");
        let cols = ["first_name_1", "last_name_1", "dob_1", "first_name_2", "last_name_2", "dob_2"];
        let f = debug_columns(&r1, &r2);
        write_matches_csv(&matches_path, &output.matches, Some((&cols, &f)))?;
    } else {
        write_matches_csv(&matches_path, &output.matches, None)?;
    }
    let cand_path = out.join("candidates.csv");
    match &output.candidates {
        Some(c) => write_truth(&cand_path, &GroundTruth { pairs: c.clone() })?,
        None => {
            if cand_path.exists() {
                std::fs::remove_file(&cand_path)?;
            }
        }
    }
    let edges: Vec<_> = output
        .transport
        .edges()
        .into_iter()
        .map(|((from, to), e)| json!({"from": from.to_string(), "to": to.to_string(), "messages": e.messages, "bytes": e.bytes, "rounds": e.rounds}))
        .collect();
    let stats = json!({
        "config": cfg,
        "stats": output.stats,
        "edges": edges,
    });
    std::fs::write(out.join("stats.json"), serde_json::to_string_pretty(&stats)?)?;
    info!(
        "{}: {} matches in {:.3}s",
        output.stats.variant.as_str(),
        output.stats.matches,
        output.stats.total_seconds
    );
    Ok(())
}

pub fn cmd_eval(matches: &Path, truth: &Path, candidates: Option<&Path>, total_pairs: u64, out: &Path) -> Result<()> {
    require(matches)?;
    require(truth)?;
    let m = read_matches_csv(matches).with_context(|| format!("reading {}", matches.display()))?;
    let t = read_truth(truth).with_context(|| format!("reading {}", truth.display()))?;
    let default_cands: PathBuf = matches.with_file_name("candidates.csv");
    let cand_path = match candidates {
        Some(p) => {
            require(p)?;
            Some(p.to_path_buf())
        }
        None => default_cands.is_file().then_some(default_cands),
    };
    let (cands, source) = match &cand_path {
        Some(p) => (read_truth(p)?.pairs, p.display().to_string()),
        None => (m.iter().map(|r| (r.id1, r.id2)).collect(), "matches".to_string()),
    };
    ensure_dir(out)?;
    let roc = er_metrics(&m, &t, total_pairs);
    write_roc_csv(&out.join("roc.csv"), &roc)?;
    let report = blocking_metrics(&t, &cands, total_pairs);
    let doc = json!({ "blocking": report, "candidates_from": source });
    std::fs::write(out.join("blocking.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn cmd_bench(cfg: &AppConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let rows = bench_suite(cfg, |cell, s| {
        info!(
            "{} {} chunk={} parallel={}: {:.3}s",
            cell.variant.as_str(),
            cell.eeq_mode.as_str(),
            cell.chunk_size,
            cell.parallel,
            s.total_seconds
        );
    })?;
    write_bench_csv(&out.join("bench.csv"), cfg, &rows)?;
    Ok(())
}
