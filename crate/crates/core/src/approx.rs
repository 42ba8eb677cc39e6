//! Polynomial-only numerical operators: id rescaling, Goldschmidt inverse,
//! iterated comparison and non-interactive equality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::he::{CipherVec, PublicKey};

/// Levels that must remain at every loop boundary; below this the
/// ciphertexts are bootstrapped (when the key allows it).
pub const MIN_LEVELS_AT_BOUNDARY: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompParams {
    /// Amplification exponent.
    pub m: u32,
    /// Inverse iterations inside the initial normalization.
    pub d_prime: u32,
    /// Inverse iterations per amplification round.
    pub d: u32,
    /// Amplification rounds.
    pub t: u32,
}

impl Default for CompParams {
    fn default() -> Self {
        Self {
            m: 4,
            d_prime: 5,
            d: 5,
            t: 6,
        }
    }
}

impl CompParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d_prime == 0 || self.d == 0 || self.t == 0 {
            return Err(Error::Config(format!(
                "approx parameters must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `1/2 + i/batch_size`, the id encoding fed to `comp`.
pub fn rescale_id(i: usize, batch_size: usize) -> Result<f64> {
    if i >= batch_size {
        return Err(Error::Range(format!(
            "id {i} outside [0, {batch_size})"
        )));
    }
    Ok(0.5 + i as f64 / batch_size as f64)
}

fn ceil_log2(m: u32) -> u32 {
    if m <= 1 {
        0
    } else {
        32 - (m - 1).leading_zeros()
    }
}

/// Multiplicative chain depth of [`comp`] for `p`.
pub fn comp_depth(p: &CompParams) -> u32 {
    let normalize = p.d_prime + 3;
    let round = ceil_log2(p.m) + p.d + 2;
    normalize + p.t * round + 1
}

/// Multiplicative chain depth of [`eeq_ni`]: comp plus the final product.
pub fn min_depth_estimate(p: &CompParams) -> u32 {
    comp_depth(p) + 2
}

fn refresh(pk: &PublicKey, c: CipherVec) -> Result<CipherVec> {
    pk.ensure_levels(c, MIN_LEVELS_AT_BOUNDARY)
}

/// Goldschmidt approximation of `1/x` for slots in (0, 2).
///
/// Output chain depth is `chain(x) + d + 1`.
pub fn inv_goldschmidt(pk: &PublicKey, x: &CipherVec, d: u32) -> Result<CipherVec> {
    let site = |e: Error| e.at("inv_goldschmidt");
    let mut a = pk.const_sub(2.0, x)?;
    let mut b = pk.const_sub(1.0, x)?;
    for _ in 0..d {
        a = refresh(pk, a).map_err(site)?;
        b = refresh(pk, b).map_err(site)?;
        b = pk.square(&b).map_err(site)?;
        let one_plus_b = pk.add_const(&b, 1.0)?;
        a = pk.mul(&a, &one_plus_b).map_err(site)?;
    }
    Ok(a)
}

/// `x^m` with `ceil(log2 m)` depth: binary powers multiplied in from the
/// lowest set bit.
fn power(pk: &PublicKey, x: &CipherVec, m: u32) -> Result<CipherVec> {
    let mut acc: Option<CipherVec> = None;
    let mut base = x.clone();
    let mut e = m;
    loop {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => {
                    let a = refresh(pk, a)?;
                    base = refresh(pk, base)?;
                    pk.mul(&a, &base)?
                }
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base = refresh(pk, base)?;
        base = pk.square(&base)?;
    }
    acc.ok_or_else(|| Error::Config("power exponent must be positive".into()))
}

/// Slot-wise comparison: ≈1 where a > b, 0.5 where a = b, ≈0 where a < b.
///
/// Both inputs are normalized by their sum, `x = a/(a+b)`, `y = b/(a+b)`,
/// and each round maps `(x, y)` to `(x^m, y^m) / (x^m + y^m)`. The result is
/// `(1 + x - y) / 2`, so `comp(a, b) + comp(b, a) = 1` and `comp(a, a) = 1/2`
/// hold exactly whatever the approximation error of the inverse.
pub fn comp(pk: &PublicKey, a: &CipherVec, b: &CipherVec, p: &CompParams) -> Result<CipherVec> {
    comp_inner(pk, a, b, p).map_err(|e| e.at("comp"))
}

fn comp_inner(pk: &PublicKey, a: &CipherVec, b: &CipherVec, p: &CompParams) -> Result<CipherVec> {
    let a = refresh(pk, a.clone())?;
    let b = refresh(pk, b.clone())?;
    let half_sum = pk.mul_const(&pk.add(&a, &b)?, 0.5)?;
    let h = refresh(pk, inv_goldschmidt(pk, &half_sum, p.d_prime)?)?;
    let half_a = pk.mul_const(&a, 0.5)?;
    let half_b = pk.mul_const(&b, 0.5)?;
    let mut x = pk.mul(&half_a, &h)?;
    let mut y = pk.mul(&half_b, &h)?;
    for _ in 0..p.t {
        x = refresh(pk, x)?;
        y = refresh(pk, y)?;
        let xm = refresh(pk, power(pk, &x, p.m)?)?;
        let ym = refresh(pk, power(pk, &y, p.m)?)?;
        let inv = refresh(pk, inv_goldschmidt(pk, &pk.add(&xm, &ym)?, p.d)?)?;
        x = pk.mul(&xm, &inv)?;
        y = pk.mul(&ym, &inv)?;
    }
    let x = refresh(pk, x)?;
    let y = refresh(pk, y)?;
    let diff = pk.add_const(&pk.sub(&x, &y)?, 1.0)?;
    pk.mul_const(&diff, 0.5)
}

/// Non-interactive equality `4 · c · (1 - c)` with `c = comp(a, b)`.
pub fn eeq_ni(pk: &PublicKey, a: &CipherVec, b: &CipherVec, p: &CompParams) -> Result<CipherVec> {
    let c = comp(pk, a, b, p)?;
    let inner = || -> Result<CipherVec> {
        let c = refresh(pk, c)?;
        let one_minus = pk.const_sub(1.0, &c)?;
        let four_c = pk.mul_const(&c, 4.0)?;
        pk.mul(&four_c, &one_minus)
    };
    inner().map_err(|e| e.at("eeq_ni"))
}
