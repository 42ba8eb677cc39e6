//! Dataset generation, normalization, deduplication, tokenization and
//! ground truth.

mod generate;
mod names;
mod normalize;
mod tokenize;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use generate::{generate, GenConfig, MissingRates};
pub use names::{FIRST_NAMES, LAST_NAMES};
pub use normalize::{days_in_month, normalize_dob, normalize_name, normalize_ssn, parse_dob};
pub use tokenize::{atoms, collision_stats, tokenize, CollisionStats, Side, TokenScheme, TokenVec, MAX_TOKEN_DOMAIN, PAD_CODE_A};

use crate::error::Result;

/// A record as it arrives from a source system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub local_id: u64,
    pub ssn: Option<String>,
    pub dob: Option<String>,
    pub first_name: Option<String>,
    pub last_name: Option<String>,
    pub mrn: Option<String>,
}

/// A normalized record. Same CSV schema as [`RawRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub local_id: u64,
    /// `XXX-XX-XXXX`.
    pub ssn: Option<String>,
    /// `MM/DD/YYYY`.
    pub dob: Option<String>,
    pub first_name: Option<String>,
    pub last_name: Option<String>,
    pub mrn: Option<String>,
}

impl Record {
    fn identity_key(&self) -> (&Option<String>, &Option<String>, &Option<String>, &Option<String>, &Option<String>) {
        (&self.ssn, &self.dob, &self.first_name, &self.last_name, &self.mrn)
    }

    /// Birth year, if the DOB is present.
    pub fn birth_year(&self) -> Option<&str> {
        self.dob.as_deref().map(|d| &d[6..10])
    }
}

/// True matching pairs `(local_id in D1, local_id in D2)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub pairs: BTreeSet<(u64, u64)>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, pair: &(u64, u64)) -> bool {
        self.pairs.contains(pair)
    }
}

fn normalize(r: &RawRecord) -> Record {
    let clean = |v: &Option<String>| v.as_deref().map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
    Record {
        local_id: r.local_id,
        ssn: r.ssn.as_deref().and_then(normalize_ssn),
        dob: r.dob.as_deref().and_then(normalize_dob),
        first_name: r.first_name.as_deref().and_then(normalize_name),
        last_name: r.last_name.as_deref().and_then(normalize_name),
        mrn: clean(&r.mrn),
    }
}

/// Normalize every field, null out invalid SSNs and dates, and collapse
/// records whose normalized identifiers are all equal (first one wins).
pub fn preprocess(raw: &[RawRecord]) -> Vec<Record> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let n = normalize(r);
        let key = {
            let k = n.identity_key();
            (k.0.clone(), k.1.clone(), k.2.clone(), k.3.clone(), k.4.clone())
        };
        if seen.insert(key) {
            out.push(n);
        }
    }
    out
}

/// Re-run preprocessing on already normalized records.
pub fn preprocess_records(records: &[Record]) -> Vec<Record> {
    let raw: Vec<RawRecord> = records
        .iter()
        .map(|r| RawRecord {
            local_id: r.local_id,
            ssn: r.ssn.clone(),
            dob: r.dob.clone(),
            first_name: r.first_name.clone(),
            last_name: r.last_name.clone(),
            mrn: r.mrn.clone(),
        })
        .collect();
    preprocess(&raw)
}

/// Pairs with equal normalized SSNs, united with the generator's identity
/// pairs when available (those also cover true pairs with a missing SSN).
/// Pairs referring to records that did not survive preprocessing are dropped.
pub fn derive_ground_truth(d1: &[Record], d2: &[Record], generator: Option<&GroundTruth>) -> GroundTruth {
    let mut by_ssn: HashMap<&str, Vec<u64>> = HashMap::new();
    for r in d2 {
        if let Some(s) = &r.ssn {
            by_ssn.entry(s.as_str()).or_default().push(r.local_id);
        }
    }
    let mut pairs = BTreeSet::new();
    for r in d1 {
        if let Some(ids) = r.ssn.as_deref().and_then(|s| by_ssn.get(s)) {
            pairs.extend(ids.iter().map(|j| (r.local_id, *j)));
        }
    }
    if let Some(g) = generator {
        let ids1: HashSet<u64> = d1.iter().map(|r| r.local_id).collect();
        let ids2: HashSet<u64> = d2.iter().map(|r| r.local_id).collect();
        pairs.extend(g.pairs.iter().filter(|(a, b)| ids1.contains(a) && ids2.contains(b)));
    }
    GroundTruth { pairs }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// CSV header shared by raw and normalized datasets.
pub const DATASET_HEADER: &str = "local_id,ssn,dob,first_name,last_name,mrn";

pub fn write_raw(path: &Path, rows: &[RawRecord]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_raw(path: &Path) -> Result<Vec<RawRecord>> {
    read_rows(path)
}

pub fn write_records(path: &Path, rows: &[Record]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    read_rows(path)
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    id1: u64,
    id2: u64,
}

pub fn write_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let rows: Vec<TruthRow> = truth.pairs.iter().map(|&(id1, id2)| TruthRow { id1, id2 }).collect();
    if rows.is_empty() {
        std::fs::write(path, "id1,id2\n")?;
        return Ok(());
    }
    write_rows(path, &rows)
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let rows: Vec<TruthRow> = read_rows(path)?;
    Ok(GroundTruth {
        pairs: rows.into_iter().map(|r| (r.id1, r.id2)).collect(),
    })
}
