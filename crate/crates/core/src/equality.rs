//! Encrypted equality: slot encodings and the two equality operators.

use serde::{Deserialize, Serialize};

use crate::approx::{eeq_ni, rescale_id, CompParams};
use crate::dataio::{Side, TokenScheme, TokenVec};
use crate::error::{Error, Result};
use crate::he::{CipherVec, PublicKey};
use crate::par::Exec;
use crate::protocol::InteractiveSession;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EeqMode {
    /// Masked-inverse round trip to a data owner.
    #[default]
    Interactive,
    /// Polynomial comparison, no owner involvement.
    NonInteractive,
}

impl EeqMode {
    /// Token domain the mode can resolve.
    pub fn token_domain(self) -> u32 {
        match self {
            EeqMode::Interactive => 1 << 16,
            EeqMode::NonInteractive => 1 << 10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EeqMode::Interactive => "interactive",
            EeqMode::NonInteractive => "non_interactive",
        }
    }
}

impl std::str::FromStr for EeqMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interactive" => Ok(EeqMode::Interactive),
            "non_interactive" | "non-interactive" => Ok(EeqMode::NonInteractive),
            other => Err(Error::Config(format!("unknown eeq mode `{other}`"))),
        }
    }
}

/// Slot range of non-interactive token encodings.
pub const NI_TOKEN_RANGE: (f64, f64) = (0.1, 1.9);
/// Code offsets of the side pads above the token domain.
pub const NI_PAD_OFFSET: [u32; 2] = [8, 16];

/// How tokens and in-chunk ids become slot values for a given mode.
///
/// Interactive mode keeps integers (equality is `ξ/(a-b+ξ)`, so any gap of
/// at least 1 is far from equal). Non-interactive mode needs slots in
/// (0, 2): ids use `rescale_id`, and token codes are spaced geometrically
/// over [`NI_TOKEN_RANGE`]. The comparison only sees the ratio `a/b`, so a
/// constant ratio between neighbouring codes gives every code the same
/// separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encoding {
    pub mode: EeqMode,
    pub batch_size: usize,
    pub scheme: TokenScheme,
}

impl Encoding {
    pub fn token(&self, code: u32, side_pad: Option<Side>) -> f64 {
        match self.mode {
            EeqMode::Interactive => f64::from(code),
            EeqMode::NonInteractive => {
                let (lo, hi) = NI_TOKEN_RANGE;
                let top = f64::from(self.scheme.domain + NI_PAD_OFFSET[1]);
                let pos = match side_pad {
                    Some(side) => self.scheme.domain + NI_PAD_OFFSET[side.index()],
                    None => code,
                };
                lo * ((hi / lo).ln() * f64::from(pos) / top).exp()
            }
        }
    }

    pub fn token_slots(&self, tv: &TokenVec) -> Vec<f64> {
        tv.slots()
            .into_iter()
            .map(|c| {
                let pad = (c == tv.pad()).then_some(tv.side);
                self.token(c, pad)
            })
            .collect()
    }

    pub fn id(&self, i: usize) -> Result<f64> {
        match self.mode {
            EeqMode::Interactive => {
                if i >= self.batch_size {
                    return Err(Error::Range(format!("id {i} outside [0, {})", self.batch_size)));
                }
                Ok(i as f64)
            }
            EeqMode::NonInteractive => rescale_id(i, self.batch_size),
        }
    }

    /// Slot `j` holds the encoding of id `j`.
    pub fn all_ids(&self) -> Vec<f64> {
        (0..self.batch_size).map(|j| self.id(j).expect("j < batch")).collect()
    }
}

/// Interactive equality `ξ / (a - b + ξ)` for `n` pairs given by index,
/// in one owner round trip. Algebraically this is `(a-b)·(-1/(a-b+ξ)) + 1`;
/// the owner returns `ξ/(r·x)` rather than `1/(r·x)`, which saves the final
/// constant multiplication and keeps the result at depth 1.
fn eeq_interactive_with<'c>(
    pk: &PublicKey,
    session: &mut InteractiveSession<'_>,
    n: usize,
    a: impl Fn(usize) -> &'c CipherVec + Sync + Send,
    b: impl Fn(usize) -> &'c CipherVec + Sync + Send,
    xi: f64,
) -> Result<Vec<CipherVec>> {
    let x = session
        .exec()
        .try_map_range(n, |k| pk.add_const(&pk.sub(a(k), b(k))?, xi))?;
    session.inverse_batch(&x, xi)
}

pub fn eeq_interactive(
    pk: &PublicKey,
    session: &mut InteractiveSession<'_>,
    a: &[CipherVec],
    b: &[CipherVec],
    xi: f64,
) -> Result<Vec<CipherVec>> {
    if a.len() != b.len() {
        return Err(Error::Shape { expected: a.len(), got: b.len() });
    }
    eeq_interactive_with(pk, session, a.len(), |k| &a[k], |k| &b[k], xi)
}

/// The equality operator used by matrix updates and vector rotation.
pub enum Equality<'s, 'a> {
    Interactive { session: &'s mut InteractiveSession<'a>, xi: f64 },
    NonInteractive { params: CompParams, exec: Exec },
}

impl Equality<'_, '_> {
    pub fn mode(&self) -> EeqMode {
        match self {
            Equality::Interactive { .. } => EeqMode::Interactive,
            Equality::NonInteractive { .. } => EeqMode::NonInteractive,
        }
    }

    pub fn exec(&self) -> Exec {
        match self {
            Equality::Interactive { session, .. } => session.exec(),
            Equality::NonInteractive { exec, .. } => *exec,
        }
    }

    /// Slot-wise equality of `(a(k), b(k))` for `k < n`.
    pub fn eval_with<'c>(
        &mut self,
        pk: &PublicKey,
        n: usize,
        a: impl Fn(usize) -> &'c CipherVec + Sync + Send,
        b: impl Fn(usize) -> &'c CipherVec + Sync + Send,
    ) -> Result<Vec<CipherVec>> {
        match self {
            Equality::Interactive { session, xi } => eeq_interactive_with(pk, session, n, a, b, *xi),
            Equality::NonInteractive { params, exec } => exec.try_map_range(n, |k| eeq_ni(pk, a(k), b(k), params)),
        }
    }

    /// Slot-wise equality of each `(a[k], b[k])`.
    pub fn eval(&mut self, pk: &PublicKey, a: &[CipherVec], b: &[CipherVec]) -> Result<Vec<CipherVec>> {
        if a.len() != b.len() {
            return Err(Error::Shape { expected: a.len(), got: b.len() });
        }
        self.eval_with(pk, a.len(), |k| &a[k], |k| &b[k])
    }
}
