//! Blocking quality and matching accuracy metrics.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dataio::GroundTruth;
use crate::error::Result;
use crate::matcher::MatchResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockingReport {
    /// `None` when the truth set is empty.
    pub pc: Option<f64>,
    pub rr: f64,
    pub f: Option<f64>,
    pub total_pairs: u64,
    pub candidate_pairs: u64,
    pub true_pairs: u64,
}

/// Harmonic mean of pairs completeness and reduction ratio.
pub fn f_measure(pc: f64, rr: f64) -> f64 {
    if pc + rr == 0.0 {
        0.0
    } else {
        2.0 * pc * rr / (pc + rr)
    }
}

pub fn blocking_metrics(truth: &GroundTruth, candidates: &BTreeSet<(u64, u64)>, total_pairs: u64) -> BlockingReport {
    let pc = (!truth.is_empty()).then(|| {
        truth.pairs.iter().filter(|p| candidates.contains(p)).count() as f64 / truth.len() as f64
    });
    let rr = if total_pairs == 0 {
        0.0
    } else {
        1.0 - candidates.len() as f64 / total_pairs as f64
    };
    BlockingReport {
        pc,
        rr,
        f: pc.map(|pc| f_measure(pc, rr)),
        total_pairs,
        candidate_pairs: candidates.len() as u64,
        true_pairs: truth.len() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub recall: f64,
    /// 1.0 when nothing is predicted.
    pub precision: f64,
    pub fpr: f64,
}

/// The nine thresholds 0.1, 0.2, ..., 0.9.
pub fn roc_thresholds() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

pub fn er_metrics(matches: &[MatchResult], truth: &GroundTruth, total_pairs: u64) -> Vec<RocPoint> {
    let negatives = total_pairs.saturating_sub(truth.len() as u64);
    roc_thresholds()
        .into_iter()
        .map(|t| {
            let mut tp = 0u64;
            let mut fp = 0u64;
            for m in matches.iter().filter(|m| m.score / 100.0 > t) {
                if truth.contains(&(m.id1, m.id2)) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            RocPoint {
                threshold: t,
                recall: if truth.is_empty() { 0.0 } else { tp as f64 / truth.len() as f64 },
                precision: if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 },
                fpr: if negatives == 0 { 0.0 } else { fp as f64 / negatives as f64 },
            }
        })
        .collect()
}

pub fn write_roc_csv(path: &Path, points: &[RocPoint]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "threshold,recall,precision,fpr")?;
    for p in points {
        writeln!(w, "{:.1},{:.6},{:.6},{:.9}", p.threshold, p.recall, p.precision, p.fpr)?;
    }
    w.flush()?;
    Ok(())
}
