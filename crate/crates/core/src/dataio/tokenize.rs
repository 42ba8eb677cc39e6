//! Token sets: field-tagged atoms hashed into a bounded code domain.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Record;
use crate::error::{Error, Result};

/// Largest supported token domain.
pub const MAX_TOKEN_DOMAIN: u32 = 1 << 21;
/// Side-A padding code; side B pads with twice this value.
pub const PAD_CODE_A: u32 = 1 << 22;

/// Which dataset a token vector comes from. Each side pads with its own
/// reserved code, so padding never matches across sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::A => 0,
            Side::B => 1,
        }
    }
}

/// Hashing parameters shared by both owners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenScheme {
    /// Real codes live in `[0, domain)`.
    pub domain: u32,
    /// Vector length `L` (the batch size).
    pub length: usize,
    /// Owner-shared hashing salt; never given to the evaluator.
    pub salt: u64,
}

impl TokenScheme {
    pub fn new(domain: u32, length: usize, salt: u64) -> Result<Self> {
        if domain == 0 || domain > MAX_TOKEN_DOMAIN {
            return Err(Error::Config(format!(
                "token domain {domain} must lie in 1..={MAX_TOKEN_DOMAIN}"
            )));
        }
        if length == 0 {
            return Err(Error::Config("token vector length must be positive".into()));
        }
        Ok(Self {
            domain,
            length,
            salt,
        })
    }

    /// Reserved padding code of `side`, far outside the hash range so that
    /// offset-based equality never confuses padding with a real token.
    pub fn pad(&self, side: Side) -> u32 {
        PAD_CODE_A << side.index()
    }

    pub fn code(&self, atom: &str) -> u32 {
        let mut h = Sha256::new();
        h.update(self.salt.to_le_bytes());
        h.update(atom.as_bytes());
        let d = h.finalize();
        let v = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        (v % u64::from(self.domain)) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVec {
    pub side: Side,
    /// Sorted distinct real codes.
    pub codes: Vec<u32>,
    /// Codes dropped because the record had more than `L` distinct tokens.
    pub truncated: usize,
    pad: u32,
    length: usize,
}

impl TokenVec {
    pub fn cardinality(&self) -> usize {
        self.codes.len()
    }

    pub fn pad(&self) -> u32 {
        self.pad
    }

    /// Codes padded to `L` with the side sentinel.
    pub fn slots(&self) -> Vec<u32> {
        let mut s = self.codes.clone();
        s.resize(self.length, self.pad);
        s
    }
}

fn bigrams(tag: &str, name: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = std::iter::once('^').chain(name.chars()).collect();
    for w in chars.windows(2) {
        out.push(format!("{tag}2:{}{}", w[0], w[1]));
    }
}

/// Field-tagged atoms of a record: the DOB, both full names, and the
/// bigrams of `^name` for both names.
pub fn atoms(r: &Record) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(d) = &r.dob {
        out.push(format!("dob:{d}"));
    }
    if let Some(f) = &r.first_name {
        out.push(format!("fn:{f}"));
        bigrams("fn", f, &mut out);
    }
    if let Some(l) = &r.last_name {
        out.push(format!("ln:{l}"));
        bigrams("ln", l, &mut out);
    }
    out
}

pub fn tokenize(r: &Record, side: Side, scheme: &TokenScheme) -> TokenVec {
    let codes: BTreeSet<u32> = atoms(r).iter().map(|a| scheme.code(a)).collect();
    let mut codes: Vec<u32> = codes.into_iter().collect();
    let truncated = codes.len().saturating_sub(scheme.length);
    if truncated > 0 {
        log::warn!(
            "record {} has {} distinct tokens, truncating to {}",
            r.local_id,
            codes.len(),
            scheme.length
        );
        codes.truncate(scheme.length);
    }
    TokenVec {
        side,
        codes,
        truncated,
        pad: scheme.pad(side),
        length: scheme.length,
    }
}

/// Hash-collision measurements over a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionStats {
    /// Distinct atoms across all records.
    pub distinct_atoms: usize,
    /// Distinct atoms that share a code with another distinct atom.
    pub colliding_atoms: usize,
    /// Fraction of per-record atoms lost because two atoms of the same
    /// record hash to one code.
    pub in_record_rate: f64,
    /// Expected fraction of cross-record token comparisons that match only
    /// through a collision (`colliding pairs / compared pairs`), measured on
    /// consecutive record pairs.
    pub cross_record_rate: f64,
}

pub fn collision_stats<'a>(records: impl IntoIterator<Item = &'a Record>, scheme: &TokenScheme) -> CollisionStats {
    let mut by_code: HashMap<u32, BTreeSet<String>> = HashMap::new();
    let mut atoms_total = 0usize;
    let mut atoms_lost = 0usize;
    let mut cross_false = 0usize;
    let mut cross_total = 0usize;
    let mut prev: Option<Vec<(String, u32)>> = None;
    for r in records {
        let mut a = atoms(r);
        a.sort();
        a.dedup();
        let coded: Vec<(String, u32)> = a.iter().map(|s| (s.clone(), scheme.code(s))).collect();
        let distinct: BTreeSet<u32> = coded.iter().map(|(_, c)| *c).collect();
        atoms_total += coded.len();
        atoms_lost += coded.len() - distinct.len();
        if let Some(p) = &prev {
            for (sa, ca) in &coded {
                for (sb, cb) in p {
                    cross_total += 1;
                    if ca == cb && sa != sb {
                        cross_false += 1;
                    }
                }
            }
        }
        for (s, c) in &coded {
            by_code.entry(*c).or_default().insert(s.clone());
        }
        prev = Some(coded);
    }
    let distinct_atoms = by_code.values().map(BTreeSet::len).sum();
    let colliding_atoms = by_code.values().filter(|s| s.len() > 1).map(BTreeSet::len).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    CollisionStats {
        distinct_atoms,
        colliding_atoms,
        in_record_rate: ratio(atoms_lost, atoms_total),
        cross_record_rate: ratio(cross_false, cross_total),
    }
}
