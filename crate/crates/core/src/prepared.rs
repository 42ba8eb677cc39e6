//! Owner-side view of a preprocessed dataset: tokens and blocking keys.

use std::collections::BTreeSet;

use crate::blocking::{blocking_keys, BlockingKey};
use crate::dataio::{tokenize, Record, Side, TokenScheme, TokenVec};

#[derive(Debug, Clone)]
pub struct Prepared {
    pub side: Side,
    pub records: Vec<Record>,
    pub tokens: Vec<TokenVec>,
    pub keys: Vec<BTreeSet<BlockingKey>>,
}

impl Prepared {
    pub fn new(records: Vec<Record>, side: Side, scheme: &TokenScheme, key_salt: u64) -> Self {
        let tokens = records.iter().map(|r| tokenize(r, side, scheme)).collect();
        let keys = records.iter().map(|r| blocking_keys(r, key_salt)).collect();
        Self {
            side,
            records,
            tokens,
            keys,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn local_id(&self, index: usize) -> u64 {
        self.records[index].local_id
    }

    pub fn truncated_tokens(&self) -> usize {
        self.tokens.iter().map(|t| t.truncated).sum()
    }
}
