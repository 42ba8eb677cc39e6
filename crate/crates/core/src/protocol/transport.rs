//! Counted in-memory transport between the three parties.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::Serialize;

use crate::he::PartyId;

/// A message as it crosses a party boundary. Payloads are opaque blobs
/// (ciphertexts, keys, chunks) or the explicitly revealed candidate
/// positions.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    PublicKey(Vec<u8>),
    Chunk(Vec<u8>),
    Ciphertexts(Vec<Vec<u8>>),
    MaskPool(Vec<Vec<u8>>),
    /// Candidate cells `(row, col)` of one chunk pair.
    Positions(Vec<(u32, u32)>),
}

impl Message {
    fn tag(&self) -> u8 {
        match self {
            Message::PublicKey(_) => 1,
            Message::Chunk(_) => 2,
            Message::Ciphertexts(_) => 3,
            Message::MaskPool(_) => 4,
            Message::Positions(_) => 5,
        }
    }

    /// Wire encoding: tag byte, then length-prefixed parts.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.tag()];
        let blob = |b: &[u8], out: &mut Vec<u8>| {
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(b);
        };
        match self {
            Message::PublicKey(b) | Message::Chunk(b) => blob(b, &mut out),
            Message::Ciphertexts(v) | Message::MaskPool(v) => {
                out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                for b in v {
                    blob(b, &mut out);
                }
            }
            Message::Positions(p) => {
                out.extend_from_slice(&(p.len() as u32).to_le_bytes());
                for (r, c) in p {
                    out.extend_from_slice(&r.to_le_bytes());
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        1 + match self {
            Message::PublicKey(b) | Message::Chunk(b) => 4 + b.len(),
            Message::Ciphertexts(v) | Message::MaskPool(v) => 4 + v.iter().map(|b| 4 + b.len()).sum::<usize>(),
            Message::Positions(p) => 4 + 8 * p.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EdgeCounters {
    pub messages: u64,
    pub bytes: u64,
    pub rounds: u64,
}

impl EdgeCounters {
    fn add(&mut self, o: &EdgeCounters) {
        self.messages += o.messages;
        self.bytes += o.bytes;
        self.rounds += o.rounds;
    }
}

/// Observer of every message delivered to the evaluator: sender and wire
/// bytes. Used to audit what P3 gets to see.
pub type Tap = Box<dyn Fn(PartyId, &[u8]) + Send + Sync>;

/// Per-edge message, byte and round counters, with an optional tap on
/// messages delivered to the evaluator.
#[derive(Default)]
pub struct Transport {
    edges: Mutex<BTreeMap<(PartyId, PartyId), EdgeCounters>>,
    tap: Option<Tap>,
}

impl std::fmt::Debug for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transport")
            .field("edges", &self.edges)
            .field("tapped", &self.tap.is_some())
            .finish()
    }
}

impl Transport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tap(tap: Tap) -> Self {
        Self {
            edges: Mutex::default(),
            tap: Some(tap),
        }
    }

    /// Deliver `msg`, returning its wire bytes as seen by the receiver.
    pub fn send(&self, from: PartyId, to: PartyId, msg: Message) -> Message {
        let len = msg.encoded_len() as u64;
        {
            let mut edges = self.edges.lock().expect("transport lock");
            let e = edges.entry((from, to)).or_default();
            e.messages += 1;
            e.bytes += len;
        }
        if to == PartyId::P3 {
            if let Some(tap) = &self.tap {
                tap(from, &msg.encode());
            }
        }
        msg
    }

    /// Count one request/response round trip on the edge `a -> b`.
    pub fn round(&self, a: PartyId, b: PartyId) {
        self.edges.lock().expect("transport lock").entry((a, b)).or_default().rounds += 1;
    }

    pub fn edge(&self, from: PartyId, to: PartyId) -> EdgeCounters {
        self.edges.lock().expect("transport lock").get(&(from, to)).copied().unwrap_or_default()
    }

    pub fn edges(&self) -> BTreeMap<(PartyId, PartyId), EdgeCounters> {
        self.edges.lock().expect("transport lock").clone()
    }

    pub fn totals(&self) -> EdgeCounters {
        let mut t = EdgeCounters::default();
        for e in self.edges.lock().expect("transport lock").values() {
            t.add(e);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_taps() {
        let seen = std::sync::Arc::new(Mutex::new(Vec::new()));
        let sink = seen.clone();
        let t = Transport::with_tap(Box::new(move |from, bytes| sink.lock().unwrap().push((from, bytes.to_vec()))));
        let m = Message::Ciphertexts(vec![vec![1, 2, 3], vec![4]]);
        assert_eq!(m.encode().len(), m.encoded_len());
        t.send(PartyId::P1, PartyId::P3, m.clone());
        t.send(PartyId::P3, PartyId::P1, Message::Positions(vec![(1, 2)]));
        t.round(PartyId::P3, PartyId::P1);
        assert_eq!(t.edge(PartyId::P1, PartyId::P3).messages, 1);
        assert_eq!(t.edge(PartyId::P1, PartyId::P3).bytes, m.encoded_len() as u64);
        assert_eq!(t.edge(PartyId::P3, PartyId::P1).rounds, 1);
        assert_eq!(t.totals().messages, 2);
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0], (PartyId::P1, m.encode()));
    }
}
