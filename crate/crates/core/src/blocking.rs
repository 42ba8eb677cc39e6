//! Blocking keys, chunking strategies and cleartext candidate sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::Record;
use crate::error::{Error, Result};

/// Salted hash of a key string. Only codes ever leave an owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockingKey(pub u64);

/// American Soundex code (letter plus three digits), `None` when the name
/// has no ASCII letters.
pub fn soundex(name: &str) -> Option<String> {
    fn digit(c: char) -> u8 {
        match c {
            'b' | 'f' | 'p' | 'v' => b'1',
            'c' | 'g' | 'j' | 'k' | 'q' | 's' | 'x' | 'z' => b'2',
            'd' | 't' => b'3',
            'l' => b'4',
            'm' | 'n' => b'5',
            'r' => b'6',
            'h' | 'w' => b'h',
            _ => b'0',
        }
    }
    let letters: Vec<char> = name
        .chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let first = *letters.first()?;
    let mut out = vec![first.to_ascii_uppercase() as u8];
    let mut last = digit(first);
    for &c in &letters[1..] {
        let d = digit(c);
        if d == b'h' {
            continue;
        }
        if d != b'0' && d != last {
            out.push(d);
            if out.len() == 4 {
                break;
            }
        }
        last = d;
    }
    out.resize(4, b'0');
    Some(String::from_utf8(out).expect("ascii"))
}

/// Key strings of a record: exact DOB, soundex of each name joined with the
/// birth year. Missing fields contribute nothing.
pub fn key_strings(r: &Record) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(d) = &r.dob {
        out.push(format!("dob:{d}"));
    }
    if let Some(year) = r.birth_year() {
        if let Some(s) = r.last_name.as_deref().and_then(soundex) {
            out.push(format!("ln:{s}|{year}"));
        }
        if let Some(s) = r.first_name.as_deref().and_then(soundex) {
            out.push(format!("fn:{s}|{year}"));
        }
    }
    out
}

pub fn key_code(s: &str, salt: u64) -> BlockingKey {
    let mut h = Sha256::new();
    h.update(b"block");
    h.update(salt.to_le_bytes());
    h.update(s.as_bytes());
    let d = h.finalize();
    BlockingKey(u64::from_le_bytes(d[..8].try_into().expect("8 bytes")))
}

pub fn blocking_keys(r: &Record, salt: u64) -> BTreeSet<BlockingKey> {
    key_strings(r).iter().map(|s| key_code(s, salt)).collect()
}

/// Record-order partition of `n` records into chunks of `chunk_size`.
pub fn chunk_records(n: usize, chunk_size: usize, batch_size: usize) -> Result<Vec<Range<usize>>> {
    if chunk_size == 0 || chunk_size > batch_size {
        return Err(Error::Config(format!(
            "chunk_size {chunk_size} must lie in 1..={batch_size}"
        )));
    }
    Ok((0..n).step_by(chunk_size).map(|s| s..(s + chunk_size).min(n)).collect())
}

/// In-chunk ids per key, built from one chunk's records only.
pub fn chunk_key_index(keys: &[BTreeSet<BlockingKey>], range: Range<usize>) -> BTreeMap<BlockingKey, Vec<usize>> {
    let mut index: BTreeMap<BlockingKey, Vec<usize>> = BTreeMap::new();
    for (local, global) in range.enumerate() {
        for k in &keys[global] {
            index.entry(*k).or_default().push(local);
        }
    }
    index
}

/// Keys present in both indexes, ascending.
pub fn shared_keys<V, W>(a: &BTreeMap<BlockingKey, V>, b: &BTreeMap<BlockingKey, W>) -> Vec<BlockingKey> {
    a.keys().filter(|k| b.contains_key(k)).copied().collect()
}

/// Exact candidate set `T'` (record index pairs sharing at least one key)
/// and `|T|`.
pub fn cleartext_candidates(keys1: &[BTreeSet<BlockingKey>], keys2: &[BTreeSet<BlockingKey>]) -> (BTreeSet<(usize, usize)>, u64) {
    let mut inverted: HashMap<BlockingKey, Vec<usize>> = HashMap::new();
    for (j, ks) in keys2.iter().enumerate() {
        for k in ks {
            inverted.entry(*k).or_default().push(j);
        }
    }
    let mut t = BTreeSet::new();
    for (i, ks) in keys1.iter().enumerate() {
        for k in ks {
            if let Some(js) = inverted.get(k) {
                t.extend(js.iter().map(|j| (i, *j)));
            }
        }
    }
    (t, keys1.len() as u64 * keys2.len() as u64)
}

/// Blocking-based chunking: global `T'` first, then fixed-size pair lists.
pub fn chunk_by_blocks(
    keys1: &[BTreeSet<BlockingKey>],
    keys2: &[BTreeSet<BlockingKey>],
    chunk_size: usize,
) -> Result<Vec<Vec<(usize, usize)>>> {
    if chunk_size == 0 {
        return Err(Error::Config("chunk_size must be positive".into()));
    }
    let (t, _) = cleartext_candidates(keys1, keys2);
    let pairs: Vec<(usize, usize)> = t.into_iter().collect();
    Ok(pairs.chunks(chunk_size).map(<[_]>::to_vec).collect())
}

/// Number of matrix updates a chunk pair costs: `Σ_k |rows(k)|·|cols(k)|`.
pub fn update_count(a: &BTreeMap<BlockingKey, Vec<usize>>, b: &BTreeMap<BlockingKey, Vec<usize>>) -> usize {
    shared_keys(a, b).iter().map(|k| a[k].len() * b[k].len()).sum()
}

/// Cleartext per-chunk-pair candidates in in-chunk coordinates.
pub fn chunk_pair_candidates(a: &BTreeMap<BlockingKey, Vec<usize>>, b: &BTreeMap<BlockingKey, Vec<usize>>) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for k in shared_keys(a, b) {
        for &i in &a[&k] {
            for &j in &b[&k] {
                out.insert((i, j));
            }
        }
    }
    out
}

/// JSON manifest of one encrypted chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkManifest {
    pub side: crate::dataio::Side,
    pub chunk_index: usize,
    pub records: usize,
    pub key_codes: Vec<u64>,
    pub ciphertexts: usize,
    pub bytes: u64,
}

/// Block-size imbalance across a dataset's keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockStats {
    pub blocks: usize,
    pub max_block: usize,
    pub mean_block: f64,
}

pub fn block_stats(keys: &[BTreeSet<BlockingKey>]) -> BlockStats {
    let mut sizes: HashMap<BlockingKey, usize> = HashMap::new();
    for ks in keys {
        for k in ks {
            *sizes.entry(*k).or_default() += 1;
        }
    }
    let blocks = sizes.len();
    let total: usize = sizes.values().sum();
    BlockStats {
        blocks,
        max_block: sizes.values().copied().max().unwrap_or(0),
        mean_block: if blocks == 0 { 0.0 } else { total as f64 / blocks as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(f: Option<&str>, l: Option<&str>, d: Option<&str>) -> Record {
        Record {
            local_id: 0,
            ssn: None,
            dob: d.map(str::to_string),
            first_name: f.map(str::to_string),
            last_name: l.map(str::to_string),
            mrn: None,
        }
    }

    #[test]
    fn soundex_reference_codes() {
        for (n, c) in [
            ("robert", "R163"),
            ("rupert", "R163"),
            ("rubin", "R150"),
            ("ashcraft", "A261"),
            ("ashcroft", "A261"),
            ("tymczak", "T522"),
            ("pfister", "P236"),
            ("honeyman", "H555"),
            ("lee", "L000"),
        ] {
            assert_eq!(soundex(n).as_deref(), Some(c), "{n}");
        }
        assert_eq!(soundex("123"), None);
    }

    #[test]
    fn key_examples() {
        let a = rec(Some("maria"), Some("garcia"), Some("03/04/1971"));
        assert_eq!(blocking_keys(&a, 1), blocking_keys(&a.clone(), 1));
        let typo = rec(Some("maria"), Some("garcai"), Some("03/04/1971"));
        let shared: Vec<_> = blocking_keys(&a, 1).intersection(&blocking_keys(&typo, 1)).copied().collect();
        assert!(shared.contains(&key_code("dob:03/04/1971", 1)));
        assert!(blocking_keys(&rec(None, None, None), 1).is_empty());
        assert_eq!(blocking_keys(&a, 1).len(), 3);
    }

    #[test]
    fn chunking_examples() {
        let c = chunk_records(100, 50, 128).unwrap();
        assert_eq!(c, vec![0..50, 50..100]);
        let c = chunk_records(101, 50, 128).unwrap();
        assert_eq!(c.iter().map(|r| r.len()).collect::<Vec<_>>(), vec![50, 50, 1]);
        assert!(matches!(chunk_records(10, 129, 128), Err(Error::Config(_))));
        assert!(chunk_records(0, 5, 128).unwrap().is_empty());
    }

    #[test]
    fn candidates_and_blocks() {
        let k = |v: &[u64]| v.iter().map(|x| BlockingKey(*x)).collect::<BTreeSet<_>>();
        let keys1 = vec![k(&[1, 2]), k(&[3]), k(&[])];
        let keys2 = vec![k(&[2, 1]), k(&[4]), k(&[3, 1])];
        let (t, total) = cleartext_candidates(&keys1, &keys2);
        assert_eq!(total, 9);
        assert_eq!(t.into_iter().collect::<Vec<_>>(), vec![(0, 0), (0, 2), (1, 2)]);
        let disjoint = vec![k(&[9])];
        assert!(chunk_by_blocks(&keys1, &disjoint, 2).unwrap().is_empty());
        let blocks = chunk_by_blocks(&keys1, &keys2, 2).unwrap();
        assert_eq!(blocks, vec![vec![(0, 0), (0, 2)], vec![(1, 2)]]);
    }

    fn key_sets(n: usize) -> impl Strategy<Value = Vec<BTreeSet<BlockingKey>>> {
        prop::collection::vec(prop::collection::btree_set((0u64..12).prop_map(BlockingKey), 0..3), n)
    }

    proptest! {
        #[test]
        fn record_chunking_equals_block_chunking(
            keys1 in (1usize..40).prop_flat_map(key_sets),
            keys2 in (1usize..40).prop_flat_map(key_sets),
            chunk in 1usize..20,
        ) {
            let mut via_records = BTreeSet::new();
            let mut updates = 0;
            for ra in chunk_records(keys1.len(), chunk, 128).unwrap() {
                let ia = chunk_key_index(&keys1, ra.clone());
                for rb in chunk_records(keys2.len(), chunk, 128).unwrap() {
                    let ib = chunk_key_index(&keys2, rb.clone());
                    updates += update_count(&ia, &ib);
                    for (i, j) in chunk_pair_candidates(&ia, &ib) {
                        via_records.insert((ra.start + i, rb.start + j));
                    }
                }
            }
            let via_blocks: BTreeSet<_> = chunk_by_blocks(&keys1, &keys2, chunk).unwrap().into_iter().flatten().collect();
            prop_assert_eq!(&via_records, &via_blocks);
            prop_assert!(updates >= via_records.len());
            let (t, total) = cleartext_candidates(&keys1, &keys2);
            prop_assert_eq!(t, via_blocks);
            prop_assert!(via_records.len() as u64 <= total);
        }
    }
}
