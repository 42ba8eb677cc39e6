//! Vector-rotation overlap, scoring, thresholding and the cleartext
//! reference matcher.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocking::cleartext_candidates;
use crate::equality::Equality;
use crate::error::{Error, Result};
use crate::he::{CipherVec, PublicKey};
use crate::prepared::Prepared;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub id1: u64,
    pub id2: u64,
    /// Jaccard percent in [0, 100].
    pub score: f64,
    pub overlap: u32,
}

/// Jaccard percent of two token sets given their overlap and sizes.
pub fn score(overlap: u32, card_a: u32, card_b: u32) -> Result<f64> {
    if overlap > card_a.min(card_b) {
        return Err(Error::Consistency(format!(
            "overlap {overlap} exceeds min cardinality of ({card_a}, {card_b})"
        )));
    }
    let union = card_a + card_b - overlap;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * f64::from(overlap) / f64::from(union))
}

/// Keep results with `score / 100 > t`.
pub fn filter_matches(results: Vec<MatchResult>, t: f64) -> Vec<MatchResult> {
    results.into_iter().filter(|m| m.score / 100.0 > t).collect()
}

/// Sort by `(id1, id2)`.
pub fn sort_matches(results: &mut [MatchResult]) {
    results.sort_by_key(|m| (m.id1, m.id2));
}

/// Size of the intersection of two sorted, distinct code lists.
pub fn sorted_overlap(a: &[u32], b: &[u32]) -> u32 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Plaintext reference: Jaccard over the cleartext candidate pairs,
/// filtered by `threshold`, sorted.
pub fn cleartext_er(a: &Prepared, b: &Prepared, threshold: f64) -> Result<Vec<MatchResult>> {
    let (t, _) = cleartext_candidates(&a.keys, &b.keys);
    let mut out = Vec::with_capacity(t.len());
    for (i, j) in t {
        let (ta, tb) = (&a.tokens[i], &b.tokens[j]);
        let overlap = sorted_overlap(&ta.codes, &tb.codes);
        out.push(MatchResult {
            id1: a.local_id(i),
            id2: b.local_id(j),
            score: score(overlap, ta.cardinality() as u32, tb.cardinality() as u32)?,
            overlap,
        });
    }
    let mut out = filter_matches(out, threshold);
    sort_matches(&mut out);
    Ok(out)
}

/// Vector-rotation overlap of two SIMD token vectors: the sum over all
/// `B` cyclic rotations `k` of `eeq(a, rot(b, k))`, reduced into every
/// slot. With distinct tokens and distinct side pads this is `|A ∩ B|`.
pub fn vr_overlap(pk: &PublicKey, a: &CipherVec, b: &CipherVec, eq: &mut Equality<'_, '_>) -> Result<CipherVec> {
    let exec = eq.exec();
    let rots = exec.try_map_range(pk.batch_size(), |k| pk.rotate(b, k as i64))?;
    let terms = eq.eval_with(pk, rots.len(), |_| a, |k| &rots[k]).map_err(|e| e.at("vr_overlap"))?;
    drop(rots);
    pk.total_sum(&pk.add_many(&terms)?)
}

/// Element-wise overlap: one equality per (token of A, token of B) pair,
/// each ciphertext carrying a single broadcast token.
pub fn vr_overlap_elementwise(
    pk: &PublicKey,
    a: &[CipherVec],
    b: &[CipherVec],
    eq: &mut Equality<'_, '_>,
) -> Result<CipherVec> {
    if b.is_empty() {
        return Err(Error::Shape { expected: 1, got: 0 });
    }
    let nb = b.len();
    let terms = eq
        .eval_with(pk, a.len() * nb, |k| &a[k / nb], |k| &b[k % nb])
        .map_err(|e| e.at("vr_overlap"))?;
    pk.add_many(&terms)
}

/// Decimal places of scores in the matches CSV.
pub const SCORE_DECIMALS: usize = 6;

/// Optional cleartext columns appended in debug mode.
pub type DebugFields = dyn Fn(&MatchResult) -> Vec<String>;

/// Write `id1,id2,score` sorted ascending. `debug` appends extra
/// identifying columns and must only be used on data the caller may see.
pub fn write_matches_csv(path: &Path, results: &[MatchResult], debug: Option<(&[&str], &DebugFields)>) -> Result<()> {
    let mut sorted: Vec<&MatchResult> = results.iter().collect();
    sorted.sort_by_key(|m| (m.id1, m.id2));
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "id1,id2,score")?;
    if let Some((cols, _)) = debug {
        for c in cols {
            write!(w, ",{c}")?;
        }
    }
    writeln!(w)?;
    for m in sorted {
        write!(w, "{},{},{:.*}", m.id1, m.id2, SCORE_DECIMALS, m.score)?;
        if let Some((_, f)) = debug {
            for v in f(m) {
                write!(w, ",{}", v.replace([',', '\n'], " "))?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct MatchRow {
    id1: u64,
    id2: u64,
    score: f64,
}

pub fn read_matches_csv(path: &Path) -> Result<Vec<MatchResult>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<MatchRow>() {
        let row = row?;
        if !(0.0..=100.0).contains(&row.score) {
            return Err(Error::Range(format!("score {} outside [0, 100]", row.score)));
        }
        out.push(MatchResult {
            id1: row.id1,
            id2: row.id2,
            score: row.score,
            overlap: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn score_examples() {
        assert_eq!(score(3, 3, 3).unwrap(), 100.0);
        assert_eq!(score(2, 3, 3).unwrap(), 50.0);
        assert_eq!(score(0, 5, 7).unwrap(), 0.0);
        assert_eq!(score(0, 0, 0).unwrap(), 0.0);
        assert!(matches!(score(4, 3, 9), Err(Error::Consistency(_))));
    }

    #[test]
    fn filter_examples() {
        let m = |s| MatchResult { id1: 0, id2: 0, score: s, overlap: 0 };
        let kept = filter_matches(vec![m(40.0), m(60.0)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 60.0);
        let kept = filter_matches(vec![m(0.0), m(0.1), m(100.0)], 0.0);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn csv_is_sorted_and_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![
            MatchResult { id1: 2, id2: 1, score: 50.0, overlap: 2 },
            MatchResult { id1: 1, id2: 9, score: 100.0 / 3.0, overlap: 1 },
        ];
        write_matches_csv(&p, &rows, None).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "id1,id2,score\n1,9,33.333333\n2,1,50.000000\n");
        assert_eq!(read_matches_csv(&p).unwrap().len(), 2);
    }

    mod vr {
        use super::*;
        use crate::approx::CompParams;
        use crate::dataio::{Side, TokenScheme};
        use crate::equality::{EeqMode, Encoding};
        use crate::he::HeParams;
        use crate::par::Exec;
        use crate::testkit::Fixture;

        fn slots(enc: &Encoding, codes: &[u32], side: Side) -> Vec<f64> {
            let mut v: Vec<f64> = codes.iter().map(|&c| enc.token(c, None)).collect();
            v.resize(enc.batch_size, enc.token(enc.scheme.pad(side), Some(side)));
            v
        }

        fn overlap(fx: &mut Fixture, mode: EeqMode, a: &[u32], b: &[u32], elementwise: bool) -> f64 {
            let enc = Encoding {
                mode,
                batch_size: 128,
                scheme: TokenScheme::new(mode.token_domain(), 128, 1).unwrap(),
            };
            let (sa, sb) = (slots(&enc, a, Side::A), slots(&enc, b, Side::B));
            let (ca, cb) = if elementwise {
                let ca: Vec<CipherVec> = sa.iter().map(|v| fx.broadcast(*v)).collect();
                let cb: Vec<CipherVec> = sb.iter().map(|v| fx.broadcast(*v)).collect();
                (ca, cb)
            } else {
                (vec![fx.values(&sa)], vec![fx.values(&sb)])
            };
            let mut session = fx.session(5, 128 * 128);
            let mut eq = match mode {
                EeqMode::Interactive => Equality::Interactive { session: &mut session, xi: 1e-9 },
                EeqMode::NonInteractive => Equality::NonInteractive { params: CompParams::default(), exec: Exec::new(false) },
            };
            let pk = fx.pk();
            let c = if elementwise {
                vr_overlap_elementwise(pk, &ca, &cb, &mut eq).unwrap()
            } else {
                vr_overlap(pk, &ca[0], &cb[0], &mut eq).unwrap()
            };
            drop(eq);
            let v = fx.decrypt(&c);
            for x in &v {
                assert!((x - v[0]).abs() < 1e-6, "overlap not broadcast");
            }
            v[0]
        }

        #[test]
        fn examples() {
            let mut fx = Fixture::exact();
            let m = EeqMode::Interactive;
            assert!((overlap(&mut fx, m, &[1, 2, 3], &[2, 3, 4], false) - 2.0).abs() < 1e-3);
            assert!((overlap(&mut fx, m, &[5, 9, 40, 41], &[5, 9, 40, 41], false) - 4.0).abs() < 1e-3);
            assert!(overlap(&mut fx, m, &[1, 2], &[3, 4], false).abs() < 1e-3);
            assert!(overlap(&mut fx, m, &[], &[], false).abs() < 1e-3);
        }

        #[test]
        fn elementwise_agrees() {
            let mut fx = Fixture::exact();
            let e = EeqMode::Interactive;
            assert!((overlap(&mut fx, e, &[1, 2, 3], &[2, 3, 4], true) - 2.0).abs() < 1e-3);
            assert!(overlap(&mut fx, e, &[], &[], true).abs() < 1e-3);
        }

        #[test]
        fn non_interactive_examples() {
            let mut fx = Fixture::new(HeParams::bootstrapped());
            let m = EeqMode::NonInteractive;
            assert!((overlap(&mut fx, m, &[1, 2, 3], &[2, 3, 4], false) - 2.0).abs() < 0.4);
            assert!((overlap(&mut fx, m, &[1000, 1001, 1023], &[1000, 1001, 1023], false) - 3.0).abs() < 0.4);
            assert!(overlap(&mut fx, m, &[], &[], false).abs() < 0.4);
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn matches_cleartext_intersection(
                a in prop::collection::btree_set(0u32..1 << 16, 0..=32),
                b in prop::collection::btree_set(0u32..1 << 16, 0..=32),
                shared in prop::collection::btree_set(0u32..1 << 16, 0..8),
            ) {
                let a: BTreeSet<u32> = a.union(&shared).copied().collect();
                let b: BTreeSet<u32> = b.union(&shared).copied().collect();
                let want = a.intersection(&b).count() as f64;
                let va: Vec<u32> = a.into_iter().collect();
                let vb: Vec<u32> = b.into_iter().collect();
                let mut fx = Fixture::exact();
                let got = overlap(&mut fx, EeqMode::Interactive, &va, &vb, false);
                prop_assert!((got - want).abs() < 1e-3, "got {} want {}", got, want);
            }
        }
    }

    proptest! {
        #[test]
        fn sorted_overlap_is_set_intersection(a in prop::collection::btree_set(0u32..64, 0..20), b in prop::collection::btree_set(0u32..64, 0..20)) {
            let va: Vec<u32> = a.iter().copied().collect();
            let vb: Vec<u32> = b.iter().copied().collect();
            prop_assert_eq!(sorted_overlap(&va, &vb) as usize, a.intersection(&b).count());
        }

        #[test]
        fn adding_a_shared_token_never_lowers_the_score(a in prop::collection::btree_set(0u32..64, 1..20), b in prop::collection::btree_set(0u32..64, 1..20), extra in 64u32..100) {
            let o = a.intersection(&b).count() as u32;
            let before = score(o, a.len() as u32, b.len() as u32).unwrap();
            let mut a2: BTreeSet<u32> = a.clone();
            let mut b2: BTreeSet<u32> = b.clone();
            a2.insert(extra);
            b2.insert(extra);
            let after = score(o + 1, a2.len() as u32, b2.len() as u32).unwrap();
            prop_assert!(after >= before);
        }
    }
}
