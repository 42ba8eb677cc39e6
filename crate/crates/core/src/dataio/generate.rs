//! Seeded synthetic patient datasets with a configurable corruption model.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, weighted::WeightedAliasIndex};
use serde::{Deserialize, Serialize};

use super::names::{FIRST_NAMES, LAST_NAMES};
use super::normalize::days_in_month;
use super::{GroundTruth, RawRecord};
use crate::error::{Error, Result};
use crate::seed::RootSeed;

/// Per-field probability that a value is missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissingRates {
    pub ssn: f64,
    pub dob: f64,
    pub first_name: f64,
    pub last_name: f64,
}

impl Default for MissingRates {
    fn default() -> Self {
        Self {
            ssn: 0.0,
            dob: 0.0,
            first_name: 0.0,
            last_name: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n1: usize,
    pub n2: usize,
    /// Number of entities present in both datasets.
    pub overlap: usize,
    pub missing_d1: MissingRates,
    pub missing_d2: MissingRates,
    /// Per-name probability of one substitution, transposition or deletion.
    pub typo_rate: f64,
    /// Probability that a DOB or SSN is written in a non-canonical format.
    pub dob_variant_rate: f64,
    /// Fraction of records re-emitted as exact duplicates.
    pub duplicate_rate: f64,
    /// Probability that an SSN is replaced by a never-issued number.
    pub invalid_ssn_rate: f64,
    /// Zipf exponent of the name frequency law.
    pub name_zipf: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n1: 500,
            n2: 2000,
            overlap: 200,
            missing_d1: MissingRates {
                ssn: 0.198,
                dob: 0.0,
                first_name: 0.0,
                last_name: 0.0001,
            },
            missing_d2: MissingRates {
                ssn: 0.047,
                dob: 0.0005,
                first_name: 0.0001,
                last_name: 0.0001,
            },
            typo_rate: 0.05,
            dob_variant_rate: 0.3,
            duplicate_rate: 0.01,
            invalid_ssn_rate: 0.005,
            name_zipf: 0.6,
            seed: 42,
        }
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.overlap > self.n1.min(self.n2) {
            return Err(Error::Config(format!(
                "overlap {} exceeds min(n1, n2) = {}",
                self.overlap,
                self.n1.min(self.n2)
            )));
        }
        for (side, m) in [("d1", &self.missing_d1), ("d2", &self.missing_d2)] {
            check_rate(&format!("missing_{side}.ssn"), m.ssn)?;
            check_rate(&format!("missing_{side}.dob"), m.dob)?;
            check_rate(&format!("missing_{side}.first_name"), m.first_name)?;
            check_rate(&format!("missing_{side}.last_name"), m.last_name)?;
        }
        check_rate("typo_rate", self.typo_rate)?;
        check_rate("dob_variant_rate", self.dob_variant_rate)?;
        check_rate("duplicate_rate", self.duplicate_rate)?;
        check_rate("invalid_ssn_rate", self.invalid_ssn_rate)?;
        if !self.name_zipf.is_finite() || self.name_zipf < 0.0 {
            return Err(Error::Config("name_zipf must be >= 0".into()));
        }
        Ok(())
    }

    /// All rates zeroed: every shared entity appears identically on both sides.
    pub fn clean(n1: usize, n2: usize, overlap: usize, seed: u64) -> Self {
        Self {
            n1,
            n2,
            overlap,
            missing_d1: MissingRates::default(),
            missing_d2: MissingRates::default(),
            typo_rate: 0.0,
            dob_variant_rate: 0.0,
            duplicate_rate: 0.0,
            invalid_ssn_rate: 0.0,
            seed,
            ..Self::default()
        }
    }
}

struct Entity {
    first: &'static str,
    last: &'static str,
    dob: (u32, u32, u32),
    ssn: u32,
}

fn zipf(n: usize, s: f64) -> WeightedAliasIndex<f64> {
    let w: Vec<f64> = (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(s)).collect();
    WeightedAliasIndex::new(w).expect("positive weights")
}

fn random_ssn<R: Rng>(rng: &mut R) -> u32 {
    loop {
        let area = rng.random_range(1..900u32);
        if area == 666 {
            continue;
        }
        let group = rng.random_range(1..100u32);
        let serial = rng.random_range(1..10_000u32);
        return area * 1_000_000 + group * 10_000 + serial;
    }
}

fn invalid_ssn<R: Rng>(rng: &mut R) -> String {
    match rng.random_range(0..4) {
        0 => format!("000-{:02}-{:04}", rng.random_range(1..100), rng.random_range(1..10_000)),
        1 => format!("666-{:02}-{:04}", rng.random_range(1..100), rng.random_range(1..10_000)),
        2 => format!("{}-00-{:04}", rng.random_range(100..666), rng.random_range(1..10_000)),
        _ => format!("{}-{:02}-0000", rng.random_range(100..666), rng.random_range(1..100)),
    }
}

fn format_ssn<R: Rng>(ssn: u32, variant: bool, rng: &mut R) -> String {
    let (a, g, s) = (ssn / 1_000_000, (ssn / 10_000) % 100, ssn % 10_000);
    if variant && rng.random_bool(0.5) {
        format!("{a:03}{g:02}{s:04}")
    } else {
        format!("{a:03}-{g:02}-{s:04}")
    }
}

fn format_dob<R: Rng>((y, m, d): (u32, u32, u32), variant: bool, rng: &mut R) -> String {
    if !variant {
        return format!("{m:02}/{d:02}/{y}");
    }
    match rng.random_range(0..3) {
        0 => format!("{m}/{d}/{y}"),
        1 => format!("{y}-{m:02}-{d:02}"),
        _ => format!("{m:02}-{d:02}-{y}"),
    }
}

/// Apply one substitution, transposition or deletion.
pub(crate) fn typo<R: Rng>(name: &str, rng: &mut R) -> String {
    let mut c: Vec<char> = name.chars().collect();
    if c.len() < 2 {
        return name.to_string();
    }
    let i = rng.random_range(0..c.len());
    match rng.random_range(0..3) {
        0 => {
            let orig = c[i];
            loop {
                let r = char::from(b'a' + rng.random_range(0..26u8));
                if r != orig {
                    c[i] = r;
                    break;
                }
            }
        }
        1 if i + 1 < c.len() && c[i] != c[i + 1] => c.swap(i, i + 1),
        1 if i > 0 && c[i] != c[i - 1] => c.swap(i - 1, i),
        _ => {
            c.remove(i);
        }
    }
    c.into_iter().collect()
}

fn styled<R: Rng>(name: &str, variant: bool, rng: &mut R) -> String {
    if variant && rng.random_bool(0.5) {
        format!(" {} ", name.to_uppercase())
    } else {
        let mut cs = name.chars();
        match cs.next() {
            Some(f) => f.to_uppercase().chain(cs).collect(),
            None => String::new(),
        }
    }
}

struct Emitter<'a> {
    rates: &'a MissingRates,
    cfg: &'a GenConfig,
    prefix: char,
}

impl Emitter<'_> {
    fn emit<R: Rng>(&self, e: &Entity, local_id: u64, rng: &mut R) -> RawRecord {
        let cfg = self.cfg;
        let variant = |rng: &mut R| rng.random_bool(cfg.dob_variant_rate);
        let name = |n: &str, rng: &mut R| {
            let n = if rng.random_bool(cfg.typo_rate) {
                typo(n, rng)
            } else {
                n.to_string()
            };
            let v = variant(rng);
            styled(&n, v, rng)
        };
        let ssn = if rng.random_bool(self.rates.ssn) {
            None
        } else if rng.random_bool(cfg.invalid_ssn_rate) {
            Some(invalid_ssn(rng))
        } else {
            let v = variant(rng);
            Some(format_ssn(e.ssn, v, rng))
        };
        let dob = if rng.random_bool(self.rates.dob) {
            None
        } else {
            let v = variant(rng);
            Some(format_dob(e.dob, v, rng))
        };
        let first_name = if rng.random_bool(self.rates.first_name) {
            None
        } else {
            Some(name(e.first, rng))
        };
        let last_name = if rng.random_bool(self.rates.last_name) {
            None
        } else {
            Some(name(e.last, rng))
        };
        RawRecord {
            local_id,
            ssn,
            dob,
            first_name,
            last_name,
            mrn: Some(format!("{}{:08}", self.prefix, local_id)),
        }
    }
}

/// Re-emit `rate · n` randomly chosen records with fresh local ids and
/// re-drawn surface formats, appended at the end.
fn add_duplicates<R: Rng>(records: &mut Vec<RawRecord>, rate: f64, rng: &mut R) {
    let n = records.len();
    let dups = (n as f64 * rate).round() as usize;
    for k in 0..dups {
        let src = records[rng.random_range(0..n)].clone();
        let mut dup = src.clone();
        dup.local_id = (n + k) as u64;
        if let Some(d) = src.dob.as_deref().and_then(super::normalize::parse_dob) {
            let v = rng.random_bool(0.5);
            dup.dob = Some(format_dob(d, v, rng));
        }
        records.push(dup);
    }
}

/// Generate two datasets sharing `overlap` entities, plus the identity truth.
pub fn generate(cfg: &GenConfig) -> Result<(Vec<RawRecord>, Vec<RawRecord>, GroundTruth)> {
    cfg.validate()?;
    let root = RootSeed(cfg.seed);
    let mut rng = root.stream("gen", &[0]);
    let first_w = zipf(FIRST_NAMES.len(), cfg.name_zipf);
    let last_w = zipf(LAST_NAMES.len(), cfg.name_zipf);

    let total = cfg.n1 + cfg.n2 - cfg.overlap;
    let mut used_ssn = HashSet::with_capacity(total);
    let entities: Vec<Entity> = (0..total)
        .map(|_| {
            let year = rng.random_range(1920..=2005u32);
            let month = rng.random_range(1..=12u32);
            let day = rng.random_range(1..=days_in_month(year, month));
            let ssn = loop {
                let s = random_ssn(&mut rng);
                if used_ssn.insert(s) {
                    break s;
                }
            };
            Entity {
                first: FIRST_NAMES[first_w.sample(&mut rng)],
                last: LAST_NAMES[last_w.sample(&mut rng)],
                dob: (year, month, day),
                ssn,
            }
        })
        .collect();

    // Entities [0, overlap) are shared; the rest split between the datasets.
    let mut ids1: Vec<usize> = (0..cfg.n1).collect();
    let mut ids2: Vec<usize> = (0..cfg.overlap).chain(cfg.n1..total).collect();
    ids1.shuffle(&mut rng);
    ids2.shuffle(&mut rng);

    let e1 = Emitter {
        rates: &cfg.missing_d1,
        cfg,
        prefix: 'A',
    };
    let e2 = Emitter {
        rates: &cfg.missing_d2,
        cfg,
        prefix: 'B',
    };
    let mut rng1 = root.stream("gen", &[1]);
    let mut rng2 = root.stream("gen", &[2]);
    let mut d1: Vec<RawRecord> = ids1
        .iter()
        .enumerate()
        .map(|(i, &e)| e1.emit(&entities[e], i as u64, &mut rng1))
        .collect();
    let mut d2: Vec<RawRecord> = ids2
        .iter()
        .enumerate()
        .map(|(i, &e)| e2.emit(&entities[e], i as u64, &mut rng2))
        .collect();

    let mut pos2 = vec![usize::MAX; cfg.overlap];
    for (i, &e) in ids2.iter().enumerate() {
        if e < cfg.overlap {
            pos2[e] = i;
        }
    }
    let truth = GroundTruth {
        pairs: ids1
            .iter()
            .enumerate()
            .filter(|(_, &e)| e < cfg.overlap)
            .map(|(i, &e)| (i as u64, pos2[e] as u64))
            .collect(),
    };

    add_duplicates(&mut d1, cfg.duplicate_rate, &mut root.stream("gen", &[3]));
    add_duplicates(&mut d2, cfg.duplicate_rate, &mut root.stream("gen", &[4]));
    Ok((d1, d2, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn typo_changes_name_by_one_edit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = typo("johnson", &mut rng);
            assert_ne!(t, "johnson");
            assert!(t.len() == 7 || t.len() == 6);
        }
        assert_eq!(typo("a", &mut rng), "a");
    }

    #[test]
    fn overlap_is_bounded() {
        let cfg = GenConfig {
            n1: 5,
            n2: 10,
            overlap: 6,
            ..GenConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }
}
