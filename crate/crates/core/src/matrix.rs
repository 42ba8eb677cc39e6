//! Oblivious candidate matrices for one chunk pair.
//!
//! Row `i` of the matrix is an encrypted 0/1 vector over the side-B
//! in-chunk ids. Every update touches all cells, so the evaluator never
//! learns which cell a shared blocking key marked.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::approx::MIN_LEVELS_AT_BOUNDARY;
use crate::equality::{EeqMode, Equality};
use crate::error::{Error, Result};
use crate::he::{CipherVec, PlainVec, PublicKey};

/// Offset of the final candidate normalization `acc / (acc + XI_NORM)`.
pub const XI_NORM: f64 = 1e-3;

/// Default decision tolerance on decrypted, obfuscated cells.
pub const DEFAULT_TOL: f64 = 0.25;

/// Range of the obfuscation scale factors.
pub const OBFUSCATION_RANGE: (f64, f64) = (0.5, 2.0);

/// How matrix cells and token vectors map to ciphertexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One ciphertext per matrix row / token vector.
    #[default]
    Simd,
    /// One ciphertext per matrix cell / token (value broadcast to every slot).
    ElementWise,
}

impl Layout {
    pub(crate) fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Layout::Simd),
            1 => Ok(Layout::ElementWise),
            _ => Err(Error::Wire(format!("unknown layout tag {t}"))),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Layout::Simd => 0,
            Layout::ElementWise => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    /// Interactive mode sums indicators; cells hold small non-negative
    /// counts until `finalize` normalizes them.
    Counting,
    /// Cells are in {0, 1}.
    Boolean,
    Obfuscated,
}

#[derive(Debug, Clone)]
pub struct CandidateMatrix {
    rows: usize,
    cols: usize,
    layout: Layout,
    state: State,
    /// Row-major: `rows` ciphertexts (SIMD) or `rows·cols` (element-wise).
    cts: Vec<CipherVec>,
}

impl CandidateMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn ciphertexts(&self) -> &[CipherVec] {
        &self.cts
    }

    pub fn into_ciphertexts(self) -> Vec<CipherVec> {
        self.cts
    }

    pub fn is_obfuscated(&self) -> bool {
        self.state == State::Obfuscated
    }
}

/// `m` rows of encrypted zeros over `n` columns.
pub fn init_matrix<R: RngCore + ?Sized>(
    pk: &PublicKey,
    m: usize,
    n: usize,
    layout: Layout,
    mode: EeqMode,
    rng: &mut R,
) -> Result<CandidateMatrix> {
    let b = pk.batch_size();
    if n > b || m > b {
        return Err(Error::Config(format!(
            "matrix {m}x{n} exceeds batch size {b}"
        )));
    }
    let count = match layout {
        Layout::Simd => m,
        Layout::ElementWise => m * n,
    };
    let zero = PlainVec::zeros(b);
    let cts = (0..count).map(|_| pk.encrypt(&zero, rng)).collect::<Result<_>>()?;
    Ok(CandidateMatrix {
        rows: m,
        cols: n,
        layout,
        state: match mode {
            EeqMode::Interactive => State::Counting,
            EeqMode::NonInteractive => State::Boolean,
        },
        cts,
    })
}

/// Slot `j` holds `i·B + j` (+ `offset`): the combined cell index of row `i`.
fn cell_index_plain(i: usize, b: usize, offset: f64) -> PlainVec {
    let v = (0..b).map(|j| (i * b + j) as f64 + offset).collect();
    PlainVec::exact(v, b).expect("batch-sized")
}

fn or(pk: &PublicKey, a: &CipherVec, b: &CipherVec) -> Result<CipherVec> {
    let a = pk.ensure_levels(a.clone(), MIN_LEVELS_AT_BOUNDARY)?;
    let b = pk.ensure_levels(b.clone(), MIN_LEVELS_AT_BOUNDARY)?;
    pk.sub(&pk.add(&a, &b)?, &pk.mul(&a, &b)?)
}

/// Mark cell `(row, col)` of `mat`, where `row` and `col` are encrypted
/// in-chunk ids (broadcast). `all_ids` encrypts the id encoding of every
/// slot and is only read in non-interactive mode.
///
/// Interactive mode tests every cell against the combined index
/// `row·B + col` in one batched round trip and adds the indicator.
/// Non-interactive mode builds a row mask and a column mask with the
/// polynomial equality and ORs their outer product in.
pub fn oblivious_update(
    pk: &PublicKey,
    mat: &mut CandidateMatrix,
    row: &CipherVec,
    col: &CipherVec,
    all_ids: &CipherVec,
    eq: &mut Equality<'_, '_>,
) -> Result<()> {
    if mat.state == State::Obfuscated {
        return Err(Error::Protocol("update after obfuscation".into()));
    }
    let b = pk.batch_size();
    let exec = eq.exec();
    match eq {
        Equality::Interactive { session, xi } => {
            let xi = *xi;
            let target = pk.add(&pk.mul_int(row, b as i64)?, col)?;
            let xs: Vec<CipherVec> = match mat.layout {
                Layout::Simd => exec.try_map_range(mat.rows, |i| pk.plain_sub(&cell_index_plain(i, b, xi), &target))?,
                Layout::ElementWise => {
                    let n = mat.cols;
                    exec.try_map_range(mat.rows * n, |k| {
                        let (i, j) = (k / n, k % n);
                        pk.const_sub((i * b + j) as f64 + xi, &target)
                    })?
                }
            };
            let ind = session.inverse_batch(&xs, xi).map_err(|e| e.at("oblivious_update"))?;
            let cts = std::mem::take(&mut mat.cts);
            let pairs: Vec<(CipherVec, CipherVec)> = cts.into_iter().zip(ind).collect();
            mat.cts = exec.try_map(&pairs, |(a, d)| pk.add(a, d))?;
        }
        Equality::NonInteractive { .. } => {
            let masks = eq
                .eval(pk, &[all_ids.clone(), all_ids.clone()], &[row.clone(), col.clone()])
                .map_err(|e| e.at("oblivious_update"))?;
            let row_mask = pk.ensure_levels(masks[0].clone(), 2)?;
            let col_mask = pk.ensure_levels(masks[1].clone(), 2)?;
            let select = |mask: &CipherVec, i: usize| pk.ensure_levels(pk.broadcast_slot(mask, i)?, 1);
            let cts = std::mem::take(&mut mat.cts);
            mat.cts = match mat.layout {
                Layout::Simd => {
                    let cm = pk.ensure_levels(col_mask, 1)?;
                    exec.try_map_range(mat.rows, |i| or(pk, &cts[i], &pk.mul(&select(&row_mask, i)?, &cm)?))?
                }
                Layout::ElementWise => {
                    let n = mat.cols;
                    let rsel = exec.try_map_range(mat.rows, |i| select(&row_mask, i))?;
                    let csel = exec.try_map_range(n, |j| select(&col_mask, j))?;
                    exec.try_map_range(mat.rows * n, |k| or(pk, &cts[k], &pk.mul(&rsel[k / n], &csel[k % n])?))?
                }
            };
        }
    }
    Ok(())
}

/// Mark cell `(i, col)` where the row index `i` is known to the evaluator
/// (rows revealed by the owners). Only row `i` is touched.
pub fn known_row_update(
    pk: &PublicKey,
    mat: &mut CandidateMatrix,
    i: usize,
    col: &CipherVec,
    all_ids: &CipherVec,
    eq: &mut Equality<'_, '_>,
) -> Result<()> {
    if mat.state == State::Obfuscated {
        return Err(Error::Protocol("update after obfuscation".into()));
    }
    if i >= mat.rows {
        return Err(Error::Range(format!("row {i} outside matrix of {} rows", mat.rows)));
    }
    let b = pk.batch_size();
    let n = mat.cols;
    let exec = eq.exec();
    match eq {
        Equality::Interactive { session, xi } => {
            let xi = *xi;
            let xs: Vec<CipherVec> = match mat.layout {
                Layout::Simd => vec![pk.plain_sub(&cell_index_plain(0, b, xi), col)?],
                Layout::ElementWise => exec.try_map_range(n, |j| pk.const_sub(j as f64 + xi, col))?,
            };
            let ind = session.inverse_batch(&xs, xi).map_err(|e| e.at("oblivious_update"))?;
            let first = match mat.layout {
                Layout::Simd => i,
                Layout::ElementWise => i * n,
            };
            for (k, d) in ind.iter().enumerate() {
                mat.cts[first + k] = pk.add(&mat.cts[first + k], d)?;
            }
        }
        Equality::NonInteractive { .. } => {
            let mask = eq
                .eval(pk, std::slice::from_ref(all_ids), std::slice::from_ref(col))
                .map_err(|e| e.at("oblivious_update"))?
                .remove(0);
            match mat.layout {
                Layout::Simd => mat.cts[i] = or(pk, &mat.cts[i], &mask)?,
                Layout::ElementWise => {
                    let mask = pk.ensure_levels(mask, 2)?;
                    let cells = exec.try_map_range(n, |j| or(pk, &mat.cts[i * n + j], &pk.broadcast_slot(&mask, j)?))?;
                    for (j, c) in cells.into_iter().enumerate() {
                        mat.cts[i * n + j] = c;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Bring every cell into {0, 1}. Interactive matrices hold indicator
/// counts and are normalized with one more round trip; non-interactive
/// matrices are already boolean.
pub fn finalize(pk: &PublicKey, mat: &mut CandidateMatrix, eq: &mut Equality<'_, '_>) -> Result<()> {
    if mat.state != State::Counting {
        return Ok(());
    }
    let Equality::Interactive { session, .. } = eq else {
        return Err(Error::Protocol("counting matrix needs an interactive session".into()));
    };
    let exec = session.exec();
    let shifted = exec.try_map(&mat.cts, |c| pk.add_const(c, XI_NORM))?;
    let inv = session.inverse_batch(&shifted, XI_NORM).map_err(|e| e.at("finalize"))?;
    mat.cts = exec.try_map(&inv, |c| pk.const_sub(1.0, c))?;
    mat.state = State::Boolean;
    Ok(())
}

/// Scale every cell by a fresh uniform factor in [0.5, 2].
pub fn obfuscate<R: RngCore + ?Sized>(pk: &PublicKey, mat: &mut CandidateMatrix, rng: &mut R) -> Result<()> {
    if mat.state == State::Counting {
        return Err(Error::Protocol("obfuscate before finalize".into()));
    }
    let b = pk.batch_size();
    let (lo, hi) = OBFUSCATION_RANGE;
    for c in &mut mat.cts {
        let factors: Vec<f64> = (0..b).map(|_| rng.random_range(lo..=hi)).collect();
        let src = pk.ensure_levels(c.clone(), 1)?;
        *c = pk.mul_plain(&src, &PlainVec::exact(factors, b)?).map_err(|e| e.at("obfuscate"))?;
    }
    mat.state = State::Obfuscated;
    Ok(())
}

/// Rebuild `rows` plaintext rows of `cols` cells from decrypted matrix
/// ciphertexts.
pub fn assemble_rows(layout: Layout, rows: usize, cols: usize, decrypted: Vec<PlainVec>) -> Result<Vec<Vec<f64>>> {
    match layout {
        Layout::Simd => {
            if decrypted.len() != rows {
                return Err(Error::Shape { expected: rows, got: decrypted.len() });
            }
            Ok(decrypted.into_iter().map(|p| p.values()[..cols].to_vec()).collect())
        }
        Layout::ElementWise => {
            if decrypted.len() != rows * cols {
                return Err(Error::Shape { expected: rows * cols, got: decrypted.len() });
            }
            let cells: Vec<f64> = decrypted.iter().map(|p| p.values()[0]).collect();
            Ok(cells.chunks(cols.max(1)).take(rows).map(<[f64]>::to_vec).collect())
        }
    }
}

/// All `(i, j)` with `|rows[i][j]| > tol`, in row-major order.
pub fn extract_candidates(rows: &[Vec<f64>], tol: f64) -> Vec<(usize, usize)> {
    rows.iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.iter()
                .enumerate()
                .filter(move |(_, v)| v.abs() > tol)
                .map(move |(j, _)| (i, j))
        })
        .collect()
}
