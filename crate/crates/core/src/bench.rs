//! Benchmark grid over variants, equality modes, chunk sizes and parallelism.

use std::io::Write;
use std::path::Path;

use crate::config::AppConfig;
use crate::dataio::{generate, preprocess, GenConfig, Record};
use crate::equality::EeqMode;
use crate::error::Result;
use crate::he::HeParams;
use crate::protocol::{run_pipeline, PipelineConfig, RunStats, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchCell {
    pub variant: Variant,
    pub eeq_mode: EeqMode,
    pub chunk_size: usize,
    pub parallel: bool,
}

/// Cells of the grid, in run order, without duplicates:
/// every variant at the base chunk size (interactive), the optimized variant
/// across chunk sizes and equality modes, and parallel on/off for each mode.
pub fn bench_cells(cfg: &AppConfig) -> Vec<BenchCell> {
    let b = &cfg.bench;
    let par_default = b.parallel.iter().any(|&p| p);
    let mut cells = Vec::new();
    let mut push = |c: BenchCell| {
        let c = BenchCell {
            parallel: c.parallel && c.variant.allows_parallel(),
            ..c
        };
        if !cells.contains(&c) {
            cells.push(c);
        }
    };
    for &variant in &b.variants {
        push(BenchCell {
            variant,
            eeq_mode: EeqMode::Interactive,
            chunk_size: b.base_chunk_size,
            parallel: par_default,
        });
    }
    for &eeq_mode in &b.eeq_modes {
        for &chunk_size in &b.chunk_sizes {
            push(BenchCell {
                variant: Variant::Optimized,
                eeq_mode,
                chunk_size,
                parallel: par_default,
            });
        }
        for &parallel in &b.parallel {
            push(BenchCell {
                variant: Variant::Optimized,
                eeq_mode,
                chunk_size: b.base_chunk_size,
                parallel,
            });
        }
    }
    cells
}

/// The instance every cell runs on.
pub fn bench_instance(cfg: &AppConfig) -> Result<(Vec<Record>, Vec<Record>)> {
    let gen = GenConfig {
        n1: cfg.bench.n1,
        n2: cfg.bench.n2,
        overlap: cfg.bench.overlap,
        ..cfg.gen.clone()
    };
    let (r1, r2, _) = generate(&gen)?;
    Ok((preprocess(&r1), preprocess(&r2)))
}

/// Pipeline settings for one cell. HE parameters follow the cell's mode
/// unless it matches the configured mode.
pub fn cell_config(cfg: &AppConfig, cell: &BenchCell) -> PipelineConfig {
    let mut p = cfg.pipeline_config();
    if cell.eeq_mode != cfg.pipeline.eeq_mode {
        let mut he = match cell.eeq_mode {
            EeqMode::Interactive => HeParams::default(),
            EeqMode::NonInteractive => HeParams::bootstrapped(),
        };
        he.backend = cfg.he.backend;
        he.noise_sigma = cfg.he.noise_sigma;
        p.he = he;
        p.token_domain = None;
    }
    p.variant = cell.variant;
    p.eeq_mode = cell.eeq_mode;
    p.chunk_size = cell.chunk_size;
    p.parallel = cell.parallel;
    p
}

/// Run every cell sequentially; `progress` sees each finished cell.
pub fn bench_suite(cfg: &AppConfig, mut progress: impl FnMut(&BenchCell, &RunStats)) -> Result<Vec<RunStats>> {
    cfg.validate()?;
    let (d1, d2) = bench_instance(cfg)?;
    let mut rows = Vec::new();
    for cell in bench_cells(cfg) {
        let out = run_pipeline(&cell_config(cfg, &cell), &d1, &d2)?;
        progress(&cell, &out.stats);
        rows.push(out.stats);
    }
    Ok(rows)
}

pub const BENCH_COLUMNS: &[&str] = &[
    "n1",
    "n2",
    "variant",
    "eeq_mode",
    "chunk_size",
    "parallel",
    "workers",
    "total_seconds",
    "per_chunk_pair_seconds",
    "normalized_per_pair_seconds",
    "peak_memory_bytes",
    "chunk_storage_bytes_avg",
    "key_bytes",
    "messages",
    "rounds",
    "bytes",
    "chunk_pairs",
    "potential_pairs",
    "candidate_pairs",
    "matches",
    "matrix_updates",
    "vr_invocations",
    "inverse_rounds",
    "inverses",
    "responder_rounds_p1",
    "responder_rounds_p2",
    "mask_refills",
    "rounding_failures",
    "evaluator_ciphertexts",
];

fn bench_row(n1: usize, n2: usize, workers: usize, s: &RunStats) -> Vec<String> {
    vec![
        n1.to_string(),
        n2.to_string(),
        s.variant.as_str().to_string(),
        s.eeq_mode.as_str().to_string(),
        s.chunk_size.to_string(),
        s.parallel.to_string(),
        workers.to_string(),
        s.total_seconds.to_string(),
        s.per_chunk_pair_seconds.to_string(),
        s.normalized_per_pair_seconds.to_string(),
        s.peak_memory_bytes.to_string(),
        s.chunk_storage_bytes_avg.to_string(),
        s.key_bytes.to_string(),
        s.messages.to_string(),
        s.rounds.to_string(),
        s.bytes.to_string(),
        s.chunk_pairs.to_string(),
        s.potential_pairs.to_string(),
        s.candidate_pairs.to_string(),
        s.matches.to_string(),
        s.matrix_updates.to_string(),
        s.vr_invocations.to_string(),
        s.inverse_rounds.to_string(),
        s.inverses.to_string(),
        s.responder_rounds[0].to_string(),
        s.responder_rounds[1].to_string(),
        s.mask_refills.to_string(),
        s.rounding_failures.to_string(),
        s.evaluator_ciphertexts.to_string(),
    ]
}

pub fn write_bench_csv(path: &Path, cfg: &AppConfig, rows: &[RunStats]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", BENCH_COLUMNS.join(","))?;
    for s in rows {
        let workers = match (s.parallel, cfg.pipeline.workers) {
            (false, _) => 1,
            (true, 0) => std::thread::available_parallelism().map_or(1, |n| n.get()),
            (true, w) => w,
        };
        writeln!(w, "{}", bench_row(cfg.bench.n1, cfg.bench.n2, workers, s).join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_covers_each_axis() {
        let cells = bench_cells(&AppConfig::default());
        for c in [25, 50, 100] {
            assert!(cells.iter().any(|x| x.chunk_size == c && x.variant == Variant::Optimized));
        }
        for p in [false, true] {
            assert!(cells.iter().any(|x| x.parallel == p && x.variant == Variant::Optimized));
        }
        for m in [EeqMode::Interactive, EeqMode::NonInteractive] {
            assert!(cells.iter().any(|x| x.eeq_mode == m));
        }
        for v in [Variant::NaiveHe, Variant::AmppereBase] {
            let c = cells.iter().find(|x| x.variant == v).unwrap();
            assert!(!c.parallel);
        }
        let mut dedup = cells.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), cells.len());
    }

    #[test]
    fn cell_config_switches_he_with_mode() {
        let cfg = AppConfig::default();
        let cell = BenchCell {
            variant: Variant::Optimized,
            eeq_mode: EeqMode::NonInteractive,
            chunk_size: 25,
            parallel: false,
        };
        let p = cell_config(&cfg, &cell);
        assert!(p.he.bootstrapping_enabled);
        p.validate().unwrap();
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let mut cfg = AppConfig::default();
        cfg.bench.n1 = 12;
        cfg.bench.n2 = 20;
        cfg.bench.overlap = 4;
        cfg.bench.variants = vec![Variant::Cleartext, Variant::Optimized];
        cfg.bench.eeq_modes = vec![EeqMode::Interactive];
        cfg.bench.chunk_sizes = vec![5, 10];
        cfg.bench.base_chunk_size = 10;
        let rows = bench_suite(&cfg, |_, _| {}).unwrap();
        assert_eq!(rows.len(), bench_cells(&cfg).len());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        write_bench_csv(&path, &cfg, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), rows.len() + 1);
        for l in &lines {
            assert_eq!(l.split(',').count(), BENCH_COLUMNS.len());
        }
    }
}
