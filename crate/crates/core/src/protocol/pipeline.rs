//! End-to-end runs of the four pipeline variants.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::approx::{min_depth_estimate, CompParams};
use crate::blocking::{chunk_records, shared_keys};
use crate::dataio::{Record, Side, TokenScheme};
use crate::equality::{EeqMode, Encoding, Equality};
use crate::error::{Error, Result};
use crate::he::{keygen, Backend, CipherVec, HeParams, PartyId, PlainVec, PublicKey};
use crate::matcher::{
    cleartext_er, filter_matches, score, sort_matches, vr_overlap, vr_overlap_elementwise, MatchResult,
};
use crate::matrix::{
    assemble_rows, extract_candidates, finalize, init_matrix, known_row_update, obfuscate, oblivious_update,
    Layout, DEFAULT_TOL,
};
use crate::par::{with_workers, Exec};
use crate::prepared::Prepared;
use crate::seed::{mix64, RootSeed};

use super::chunk::EncryptedChunk;
use super::owners::Owners;
use super::session::InteractiveSession;
use super::transport::{EdgeCounters, Message, Transport};

/// Equality offset of the interactive test on the exact backend.
pub const DEFAULT_XI_EXACT: f64 = 1e-9;
/// Equality offset on the leveled backend; must dominate slot noise.
pub const DEFAULT_XI_LEVELED: f64 = 1e-4;

/// Largest overlap rounding residue accepted before a value is counted as
/// a rounding failure.
pub const ROUNDING_LIMIT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plaintext blocking and Jaccard; the reference output.
    Cleartext,
    /// Vector rotation over every record pair, no blocking.
    NaiveHe,
    /// Record-based chunking with one ciphertext per value, sequential.
    AmppereBase,
    /// Record-based chunking with SIMD packing and data parallelism.
    #[default]
    Optimized,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Cleartext,
        Variant::NaiveHe,
        Variant::AmppereBase,
        Variant::Optimized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cleartext => "cleartext",
            Variant::NaiveHe => "naive_he",
            Variant::AmppereBase => "amppere_base",
            Variant::Optimized => "optimized",
        }
    }

    pub fn layout(self) -> Layout {
        match self {
            Variant::AmppereBase => Layout::ElementWise,
            _ => Layout::Simd,
        }
    }

    /// Whether the variant may use the worker pool.
    pub fn allows_parallel(self) -> bool {
        self == Variant::Optimized
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s || v.as_str().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub eeq_mode: EeqMode,
    pub chunk_size: usize,
    /// Matches need `score / 100 > threshold`.
    pub threshold: f64,
    pub he: HeParams,
    pub approx: CompParams,
    pub parallel: bool,
    /// Worker threads when parallel (0 = one per core).
    pub workers: usize,
    pub seed: u64,
    /// Keep matrix row ids hidden from the evaluator. When false the owners
    /// reveal the row id of each key entry, which leaks which records share
    /// a block but makes every update touch a single row.
    pub oblivious_rows: bool,
    /// Token hash domain; must equal the mode's domain when set.
    pub token_domain: Option<u32>,
    /// Interactive equality offset; backend default when unset.
    pub xi: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Optimized,
            eeq_mode: EeqMode::Interactive,
            chunk_size: 100,
            threshold: 0.0,
            he: HeParams::default(),
            approx: CompParams::default(),
            parallel: true,
            workers: 0,
            seed: 42,
            oblivious_rows: true,
            token_domain: None,
            xi: None,
        }
    }
}

impl PipelineConfig {
    /// Default parameters for `mode`: depth 2 interactive, depth 12 with
    /// bootstrapping otherwise.
    pub fn for_mode(mode: EeqMode) -> Self {
        let he = match mode {
            EeqMode::Interactive => HeParams::default(),
            EeqMode::NonInteractive => HeParams::bootstrapped(),
        };
        Self {
            eeq_mode: mode,
            he,
            ..Self::default()
        }
    }

    pub fn token_domain(&self) -> u32 {
        self.token_domain.unwrap_or(self.eeq_mode.token_domain())
    }

    pub fn xi(&self) -> f64 {
        self.xi.unwrap_or(match self.he.backend {
            Backend::Exact => DEFAULT_XI_EXACT,
            Backend::Leveled => DEFAULT_XI_LEVELED,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.he.validate()?;
        self.approx.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.chunk_size == 0 || self.chunk_size > self.he.batch_size {
            return Err(Error::Config(format!(
                "chunk_size {} must lie in 1..={} (batch_size)",
                self.chunk_size, self.he.batch_size
            )));
        }
        let mode_domain = self.eeq_mode.token_domain();
        if let Some(d) = self.token_domain {
            if d != mode_domain {
                return Err(Error::Config(format!(
                    "token_domain {d} does not match {} mode (expects {mode_domain})",
                    self.eeq_mode.as_str()
                )));
            }
        }
        if let Some(x) = self.xi {
            if !(x.is_finite() && x > 0.0 && x < 0.5) {
                return Err(Error::Config(format!("xi {x} must lie in (0, 0.5)")));
            }
        }
        if self.variant == Variant::Cleartext {
            return Ok(());
        }
        match self.eeq_mode {
            EeqMode::NonInteractive => {
                if !self.he.bootstrapping_enabled || self.he.multiplicative_depth < 12 {
                    return Err(Error::Config(format!(
                        "non_interactive equality needs bootstrapping and depth >= 12 \
                         (chain depth {}), got depth {} with bootstrapping {}",
                        min_depth_estimate(&self.approx),
                        self.he.multiplicative_depth,
                        if self.he.bootstrapping_enabled { "on" } else { "off" }
                    )));
                }
            }
            EeqMode::Interactive => {
                if self.he.multiplicative_depth < 2 {
                    return Err(Error::Config(format!(
                        "interactive pipeline needs depth >= 2, got {}",
                        self.he.multiplicative_depth
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub variant: Variant,
    pub eeq_mode: EeqMode,
    pub chunk_size: usize,
    pub parallel: bool,
    pub total_seconds: f64,
    /// Mean wall time of one chunk pair (the whole run for the unchunked
    /// variants).
    pub per_chunk_pair_seconds: f64,
    /// Summed chunk-pair time divided by the number of potential record
    /// pairs those chunk pairs cover.
    pub normalized_per_pair_seconds: f64,
    /// High-water mark of the evaluator's live modeled ciphertext bytes.
    pub peak_memory_bytes: u64,
    /// Mean modeled ciphertext bytes of one stored chunk.
    pub chunk_storage_bytes_avg: f64,
    pub key_bytes: u64,
    pub messages: u64,
    pub rounds: u64,
    pub bytes: u64,
    pub chunk_pairs: u64,
    pub potential_pairs: u64,
    pub candidate_pairs: u64,
    pub matches: u64,
    pub matrix_updates: u64,
    pub vr_invocations: u64,
    pub inverse_rounds: u64,
    pub inverses: u64,
    /// Interactive round trips answered by P1 and by P2.
    pub responder_rounds: [u64; 2],
    pub mask_refills: u64,
    pub rounding_failures: u64,
    pub evaluator_ciphertexts: u64,
}

pub struct RunOutput {
    pub matches: Vec<MatchResult>,
    pub stats: RunStats,
    /// Candidate pairs `(id1, id2)` the run resolved; `None` when every
    /// pair is compared.
    pub candidates: Option<BTreeSet<(u64, u64)>>,
    pub transport: Transport,
}

impl RunOutput {
    pub fn edge(&self, from: PartyId, to: PartyId) -> EdgeCounters {
        self.transport.edge(from, to)
    }
}

/// Salted token scheme and blocking salt shared by the owners.
pub fn owner_scheme(cfg: &PipelineConfig) -> Result<(TokenScheme, u64)> {
    let root = RootSeed(cfg.seed);
    let scheme = TokenScheme::new(cfg.token_domain(), cfg.he.batch_size, root.u64("token_salt", &[]))?;
    Ok((scheme, root.u64("key_salt", &[])))
}

/// Tokenize and key both datasets under the owners' shared scheme.
pub fn prepare(cfg: &PipelineConfig, d1: &[Record], d2: &[Record]) -> Result<(Prepared, Prepared)> {
    let (scheme, salt) = owner_scheme(cfg)?;
    Ok((
        Prepared::new(d1.to_vec(), Side::A, &scheme, salt),
        Prepared::new(d2.to_vec(), Side::B, &scheme, salt),
    ))
}

/// Run `cfg.variant` on two preprocessed datasets.
pub fn run_pipeline(cfg: &PipelineConfig, d1: &[Record], d2: &[Record]) -> Result<RunOutput> {
    cfg.validate()?;
    let (a, b) = prepare(cfg, d1, d2)?;
    run_prepared(cfg, &a, &b)
}

pub fn run_prepared(cfg: &PipelineConfig, a: &Prepared, b: &Prepared) -> Result<RunOutput> {
    run_with_transport(cfg, a, b, Transport::new())
}

/// Like [`run_prepared`] over a caller-supplied transport (for example one
/// with a tap installed).
pub fn run_with_transport(cfg: &PipelineConfig, a: &Prepared, b: &Prepared, transport: Transport) -> Result<RunOutput> {
    cfg.validate()?;
    let exec = Exec::new(cfg.parallel && cfg.variant.allows_parallel());
    if exec.is_parallel() {
        with_workers(cfg.workers, || run_inner(cfg, a, b, exec, transport))?
    } else {
        run_inner(cfg, a, b, exec, transport)
    }
}

fn empty_stats(cfg: &PipelineConfig, exec: Exec) -> RunStats {
    RunStats {
        variant: cfg.variant,
        eeq_mode: cfg.eeq_mode,
        chunk_size: cfg.chunk_size,
        parallel: exec.is_parallel(),
        total_seconds: 0.0,
        per_chunk_pair_seconds: 0.0,
        normalized_per_pair_seconds: 0.0,
        peak_memory_bytes: 0,
        chunk_storage_bytes_avg: 0.0,
        key_bytes: 0,
        messages: 0,
        rounds: 0,
        bytes: 0,
        chunk_pairs: 0,
        potential_pairs: 0,
        candidate_pairs: 0,
        matches: 0,
        matrix_updates: 0,
        vr_invocations: 0,
        inverse_rounds: 0,
        inverses: 0,
        responder_rounds: [0; 2],
        mask_refills: 0,
        rounding_failures: 0,
        evaluator_ciphertexts: 0,
    }
}

fn run_inner(cfg: &PipelineConfig, a: &Prepared, b: &Prepared, exec: Exec, transport: Transport) -> Result<RunOutput> {
    let start = Instant::now();
    let mut stats = empty_stats(cfg, exec);
    let potential = a.len() as u64 * b.len() as u64;
    if cfg.variant == Variant::Cleartext {
        let matches = cleartext_er(a, b, cfg.threshold)?;
        let elapsed = start.elapsed().as_secs_f64();
        let (t, _) = crate::blocking::cleartext_candidates(&a.keys, &b.keys);
        stats.total_seconds = elapsed;
        stats.per_chunk_pair_seconds = elapsed;
        stats.normalized_per_pair_seconds = per_pair(elapsed, potential);
        stats.chunk_pairs = 1;
        stats.potential_pairs = potential;
        stats.candidate_pairs = t.len() as u64;
        stats.matches = matches.len() as u64;
        let candidates = t.into_iter().map(|(i, j)| (a.local_id(i), b.local_id(j))).collect();
        return Ok(RunOutput {
            matches,
            stats,
            candidates: Some(candidates),
            transport,
        });
    }

    let root = RootSeed(cfg.seed);
    let keys = keygen(&cfg.he, &[PartyId::P1, PartyId::P2], &mut root.stream("keys", &[]))?;
    let owners = Owners::new(&keys, root);
    let pk_blob = match transport.send(PartyId::P1, PartyId::P3, Message::PublicKey(keys.public().to_blob())) {
        Message::PublicKey(b) => b,
        _ => unreachable!("transport returns the message it was given"),
    };
    let pk3 = PublicKey::from_blob(&pk_blob)?;
    pk3.memory().reset_peak();
    let enc = Encoding {
        mode: cfg.eeq_mode,
        batch_size: cfg.he.batch_size,
        scheme: owner_scheme(cfg)?.0,
    };
    let ctx = Evaluator {
        cfg,
        pk: &pk3,
        owners: &owners,
        transport: &transport,
        exec,
        root,
        enc,
    };

    let pending = match cfg.variant {
        Variant::NaiveHe => ctx.naive(a, b, &mut stats)?,
        _ => ctx.chunked(a, b, &mut stats)?,
    };
    let (matches, rounding_failures) = ctx.final_reveal(a, b, &pending)?;
    let matches = filter_matches(matches, cfg.threshold);

    stats.total_seconds = start.elapsed().as_secs_f64();
    stats.rounding_failures = rounding_failures;
    stats.matches = matches.len() as u64;
    stats.candidate_pairs = pending.len() as u64;
    stats.peak_memory_bytes = pk3.memory().peak_bytes();
    stats.evaluator_ciphertexts = pk3.memory().ciphertexts_created();
    stats.key_bytes = cfg.he.modeled_key_bytes();
    let totals = transport.totals();
    stats.messages = totals.messages;
    stats.rounds = totals.rounds;
    stats.bytes = totals.bytes;
    let candidates = match cfg.variant {
        Variant::NaiveHe => None,
        _ => Some(pending.iter().map(|p| (a.local_id(p.a), b.local_id(p.b))).collect()),
    };
    let mut matches = matches;
    sort_matches(&mut matches);
    Ok(RunOutput {
        matches,
        stats,
        candidates,
        transport,
    })
}

fn per_pair(seconds: f64, pairs: u64) -> f64 {
    if pairs == 0 {
        0.0
    } else {
        seconds / pairs as f64
    }
}

/// A resolved candidate waiting for the final collective decryption.
struct Pending {
    a: usize,
    b: usize,
    overlap: Vec<u8>,
    card_a: Vec<u8>,
    card_b: Vec<u8>,
}

#[derive(Default)]
struct PairOutcome {
    pending: Vec<Pending>,
    seconds: f64,
    updates: u64,
    inverse_rounds: u64,
    inverses: u64,
    responders: [u64; 2],
    refills: u64,
}

impl PairOutcome {
    fn absorb(&mut self, s: &InteractiveSession<'_>) {
        self.inverse_rounds += s.calls();
        self.inverses += s.inverses();
        let r = s.responders();
        self.responders[0] += r[0];
        self.responders[1] += r[1];
        self.refills += s.mask_refills();
    }
}

/// The evaluator's view of a run.
struct Evaluator<'a> {
    cfg: &'a PipelineConfig,
    pk: &'a PublicKey,
    owners: &'a Owners,
    transport: &'a Transport,
    exec: Exec,
    root: RootSeed,
    enc: Encoding,
}

const SESSION_MATRIX: u64 = 0;
const SESSION_VR: u64 = 1;
const SESSION_NAIVE: u64 = 2;

impl Evaluator<'_> {
    fn session_id(&self, kind: u64, index: u64) -> u64 {
        mix64(self.root.0 ^ mix64(index.wrapping_mul(4) + kind))
    }

    fn expand<'s, 'o>(&self, session: Option<&'s mut InteractiveSession<'o>>) -> Equality<'s, 'o> {
        match session {
            Some(session) => Equality::Interactive {
                session,
                xi: self.cfg.xi(),
            },
            None => Equality::NonInteractive {
                params: self.cfg.approx,
                exec: self.exec,
            },
        }
    }

    fn new_session(&self, kind: u64, index: u64, expected: usize) -> Option<InteractiveSession<'_>> {
        (self.cfg.eeq_mode == EeqMode::Interactive).then(|| {
            InteractiveSession::new(
                self.pk,
                self.owners,
                self.transport,
                self.exec,
                self.session_id(kind, index),
                expected,
            )
        })
    }

    /// Owners encrypt their chunks and upload them; returns the stored blobs.
    fn upload(&self, data: &Prepared, owner: PartyId, with_keys: bool, chunk_size: usize) -> Result<(Vec<Vec<u8>>, Vec<usize>, u64)> {
        let layout = self.cfg.variant.layout();
        let ranges = chunk_records(data.len(), chunk_size, self.pk.batch_size())?;
        let opk = self.owners.public();
        let mut blobs = Vec::with_capacity(ranges.len());
        let mut starts = Vec::with_capacity(ranges.len());
        let mut bytes = 0;
        for (ci, r) in ranges.into_iter().enumerate() {
            starts.push(r.start);
            let seed = self.root.u64("chunks", &[data.side.index() as u64, ci as u64]);
            let mut chunk = EncryptedChunk::encrypt(opk, data, r, ci, layout, &self.enc, seed, &self.exec)?;
            if !with_keys {
                chunk.keys.clear();
            }
            bytes += chunk.modeled_bytes();
            let blob = chunk.to_blob(opk);
            drop(chunk);
            match self.transport.send(owner, PartyId::P3, Message::Chunk(blob)) {
                Message::Chunk(b) => blobs.push(b),
                _ => unreachable!("transport returns the message it was given"),
            }
        }
        Ok((blobs, starts, bytes))
    }

    fn chunked(&self, a: &Prepared, b: &Prepared, stats: &mut RunStats) -> Result<Vec<Pending>> {
        let (blobs_a, starts_a, bytes_a) = self.upload(a, PartyId::P1, true, self.cfg.chunk_size)?;
        let (blobs_b, starts_b, bytes_b) = self.upload(b, PartyId::P2, true, self.cfg.chunk_size)?;
        let n_chunks = blobs_a.len() + blobs_b.len();
        stats.chunk_storage_bytes_avg = if n_chunks == 0 {
            0.0
        } else {
            (bytes_a + bytes_b) as f64 / n_chunks as f64
        };
        let pairs: Vec<(usize, usize)> = (0..blobs_a.len())
            .flat_map(|i| (0..blobs_b.len()).map(move |j| (i, j)))
            .collect();
        let outcomes = self.exec.try_map_range(pairs.len(), |p| {
            let (i, j) = pairs[p];
            self.chunk_pair(p as u64, &blobs_a[i], &blobs_b[j], starts_a[i], starts_b[j])
        })?;
        let mut pending = Vec::new();
        let mut pair_seconds = 0.0;
        for o in outcomes {
            pair_seconds += o.seconds;
            stats.matrix_updates += o.updates;
            stats.inverse_rounds += o.inverse_rounds;
            stats.inverses += o.inverses;
            stats.responder_rounds[0] += o.responders[0];
            stats.responder_rounds[1] += o.responders[1];
            stats.mask_refills += o.refills;
            stats.vr_invocations += o.pending.len() as u64;
            pending.extend(o.pending);
        }
        let potential = a.len() as u64 * b.len() as u64;
        stats.chunk_pairs = pairs.len() as u64;
        stats.potential_pairs = potential;
        stats.per_chunk_pair_seconds = if pairs.is_empty() { 0.0 } else { pair_seconds / pairs.len() as f64 };
        stats.normalized_per_pair_seconds = per_pair(pair_seconds, potential);
        Ok(pending)
    }

    /// Build, obfuscate and reveal the candidate matrix of one chunk pair,
    /// then run vector rotation on its candidates.
    fn chunk_pair(&self, p: u64, blob_a: &[u8], blob_b: &[u8], start_a: usize, start_b: usize) -> Result<PairOutcome> {
        let t0 = Instant::now();
        let pk = self.pk;
        let ca = EncryptedChunk::from_blob(pk, blob_a)?;
        let cb = EncryptedChunk::from_blob(pk, blob_b)?;
        let (m, n) = (ca.len(), cb.len());
        let layout = self.cfg.variant.layout();
        let mut out = PairOutcome::default();

        let shared = shared_keys(&ca.keys, &cb.keys);
        let updates: Vec<(&CipherVec, &CipherVec)> = shared
            .iter()
            .flat_map(|k| {
                let rows = &ca.keys[k];
                let cols = &cb.keys[k];
                rows.iter().flat_map(move |r| cols.iter().map(move |c| (r, c)))
            })
            .collect();
        out.updates = updates.len() as u64;
        let per_update = match (layout, self.cfg.oblivious_rows) {
            (Layout::Simd, true) => m,
            (Layout::Simd, false) => 1,
            (Layout::ElementWise, true) => m * n,
            (Layout::ElementWise, false) => n,
        };
        let cells = match layout {
            Layout::Simd => m,
            Layout::ElementWise => m * n,
        };
        let mut session = self.new_session(SESSION_MATRIX, p, updates.len() * per_update + cells);
        let mut rng = self.root.stream("matrix", &[p]);
        let all_ids = pk.encrypt(&PlainVec::exact(self.enc.all_ids(), pk.batch_size())?, &mut rng)?;
        let mut mat = init_matrix(pk, m, n, layout, self.cfg.eeq_mode, &mut rng)?;
        {
            let row_ids = if self.cfg.oblivious_rows {
                None
            } else {
                Some(self.reveal_rows(p, &updates)?)
            };
            let mut eq = self.expand(session.as_mut());
            for (u, (row, col)) in updates.iter().enumerate() {
                match &row_ids {
                    None => oblivious_update(pk, &mut mat, row, col, &all_ids, &mut eq)?,
                    Some(ids) => known_row_update(pk, &mut mat, ids[u], col, &all_ids, &mut eq)?,
                }
            }
            finalize(pk, &mut mat, &mut eq)?;
        }
        drop(all_ids);
        if let Some(s) = &session {
            out.absorb(s);
        }
        drop(session);
        obfuscate(pk, &mut mat, &mut self.root.stream("obfuscation", &[p]))?;
        let positions = self.reveal_positions(p, mat.layout(), m, n, mat.into_ciphertexts())?;

        let vr_cost = match layout {
            Layout::Simd => pk.batch_size(),
            Layout::ElementWise => pk.batch_size() * pk.batch_size(),
        };
        let mut session = self.new_session(SESSION_VR, p, positions.len() * vr_cost);
        {
            let mut eq = self.expand(session.as_mut());
            for &(i, j) in &positions {
                let (ra, rb) = (&ca.records[i], &cb.records[j]);
                let overlap = match layout {
                    Layout::Simd => vr_overlap(pk, &ra.tokens[0], &rb.tokens[0], &mut eq)?,
                    Layout::ElementWise => vr_overlap_elementwise(pk, &ra.tokens, &rb.tokens, &mut eq)?,
                };
                out.pending.push(Pending {
                    a: start_a + i,
                    b: start_b + j,
                    overlap: pk.serialize(&overlap),
                    card_a: pk.serialize(&ra.card),
                    card_b: pk.serialize(&rb.card),
                });
            }
        }
        if let Some(s) = &session {
            out.absorb(s);
        }
        out.seconds = t0.elapsed().as_secs_f64();
        Ok(out)
    }

    fn responder(&self, p: u64) -> PartyId {
        if p % 2 == 0 {
            PartyId::P1
        } else {
            PartyId::P2
        }
    }

    /// Owners decrypt the row id of every update (only when row obliviousness
    /// is switched off).
    fn reveal_rows(&self, p: u64, updates: &[(&CipherVec, &CipherVec)]) -> Result<Vec<usize>> {
        let owner = self.responder(p);
        let blobs: Vec<Vec<u8>> = updates.iter().map(|(r, _)| self.pk.serialize(r)).collect();
        self.transport.round(PartyId::P3, owner);
        let Message::Ciphertexts(blobs) = self.transport.send(PartyId::P3, owner, Message::Ciphertexts(blobs)) else {
            unreachable!("transport returns the message it was given")
        };
        let mut ids = Vec::with_capacity(blobs.len());
        for b in &blobs {
            let v = self.owners.decrypt_blob(b)?.values()[0];
            ids.push(v.round() as u32);
        }
        let reply = Message::Positions(ids.iter().enumerate().map(|(u, r)| (u as u32, *r)).collect());
        let Message::Positions(pos) = self.transport.send(owner, PartyId::P3, reply) else {
            unreachable!("transport returns the message it was given")
        };
        Ok(pos.into_iter().map(|(_, r)| r as usize).collect())
    }

    /// Send the obfuscated matrix to an owner, who decrypts it and returns
    /// the candidate cells.
    fn reveal_positions(&self, p: u64, layout: Layout, m: usize, n: usize, cts: Vec<CipherVec>) -> Result<Vec<(usize, usize)>> {
        let owner = self.responder(p);
        let blobs: Vec<Vec<u8>> = cts.iter().map(|c| self.pk.serialize(c)).collect();
        drop(cts);
        self.transport.round(PartyId::P3, owner);
        let Message::Ciphertexts(blobs) = self.transport.send(PartyId::P3, owner, Message::Ciphertexts(blobs)) else {
            unreachable!("transport returns the message it was given")
        };
        let plain = blobs.iter().map(|b| self.owners.decrypt_blob(b)).collect::<Result<Vec<_>>>()?;
        let rows = assemble_rows(layout, m, n, plain)?;
        let cells: Vec<(u32, u32)> = extract_candidates(&rows, DEFAULT_TOL)
            .into_iter()
            .map(|(i, j)| (i as u32, j as u32))
            .collect();
        let Message::Positions(cells) = self.transport.send(owner, PartyId::P3, Message::Positions(cells)) else {
            unreachable!("transport returns the message it was given")
        };
        Ok(cells.into_iter().map(|(i, j)| (i as usize, j as usize)).collect())
    }

    /// Vector rotation over every record pair.
    fn naive(&self, a: &Prepared, b: &Prepared, stats: &mut RunStats) -> Result<Vec<Pending>> {
        let b_size = self.pk.batch_size();
        let t0 = Instant::now();
        let (blobs_a, starts_a, bytes_a) = self.upload(a, PartyId::P1, false, b_size)?;
        let (blobs_b, starts_b, bytes_b) = self.upload(b, PartyId::P2, false, b_size)?;
        let n_chunks = blobs_a.len() + blobs_b.len();
        stats.chunk_storage_bytes_avg = if n_chunks == 0 {
            0.0
        } else {
            (bytes_a + bytes_b) as f64 / n_chunks as f64
        };
        let mut pending = Vec::new();
        let mut index = 0u64;
        for (ia, blob_a) in blobs_a.iter().enumerate() {
            let ca = EncryptedChunk::from_blob(self.pk, blob_a)?;
            for (ib, blob_b) in blobs_b.iter().enumerate() {
                let cb = EncryptedChunk::from_blob(self.pk, blob_b)?;
                for (i, ra) in ca.records.iter().enumerate() {
                    for (j, rb) in cb.records.iter().enumerate() {
                        let mut session = self.new_session(SESSION_NAIVE, index, b_size);
                        index += 1;
                        let overlap = {
                            let mut eq = self.expand(session.as_mut());
                            vr_overlap(self.pk, &ra.tokens[0], &rb.tokens[0], &mut eq)?
                        };
                        if let Some(s) = &session {
                            stats.inverse_rounds += s.calls();
                            stats.inverses += s.inverses();
                            let r = s.responders();
                            stats.responder_rounds[0] += r[0];
                            stats.responder_rounds[1] += r[1];
                            stats.mask_refills += s.mask_refills();
                        }
                        pending.push(Pending {
                            a: starts_a[ia] + i,
                            b: starts_b[ib] + j,
                            overlap: self.pk.serialize(&overlap),
                            card_a: self.pk.serialize(&ra.card),
                            card_b: self.pk.serialize(&rb.card),
                        });
                    }
                }
            }
        }
        let secs = t0.elapsed().as_secs_f64();
        stats.vr_invocations = pending.len() as u64;
        stats.chunk_pairs = 1;
        stats.potential_pairs = a.len() as u64 * b.len() as u64;
        stats.per_chunk_pair_seconds = secs;
        stats.normalized_per_pair_seconds = per_pair(secs, stats.potential_pairs);
        Ok(pending)
    }

    /// One collective decryption of every overlap and cardinality; scores
    /// are computed by the owners in cleartext.
    fn final_reveal(&self, a: &Prepared, b: &Prepared, pending: &[Pending]) -> Result<(Vec<MatchResult>, u64)> {
        let mut blobs = Vec::with_capacity(3 * pending.len());
        for p in pending {
            blobs.push(p.overlap.clone());
            blobs.push(p.card_a.clone());
            blobs.push(p.card_b.clone());
        }
        self.transport.round(PartyId::P3, PartyId::P1);
        let Message::Ciphertexts(blobs) = self.transport.send(PartyId::P3, PartyId::P1, Message::Ciphertexts(blobs)) else {
            unreachable!("transport returns the message it was given")
        };
        let values = self.exec.try_map(&blobs, |bl| Ok(self.owners.decrypt_blob(bl)?.values()[0]))?;
        let mut failures = 0;
        let mut round = |v: f64| {
            let r = v.round();
            if (v - r).abs() > ROUNDING_LIMIT || r < 0.0 {
                failures += 1;
            }
            r.max(0.0) as u32
        };
        let mut out = Vec::with_capacity(pending.len());
        for (p, v) in pending.iter().zip(values.chunks(3)) {
            let (overlap, ca, cb) = (round(v[0]), round(v[1]), round(v[2]));
            out.push(MatchResult {
                id1: a.local_id(p.a),
                id2: b.local_id(p.b),
                score: score(overlap, ca, cb)?,
                overlap,
            });
        }
        Ok((out, failures))
    }
}

/// Vector rotation on every encrypted record pair, no blocking. Returns
/// the matches and the run statistics.
pub fn naive_full_psi(cfg: &PipelineConfig, d1: &[Record], d2: &[Record]) -> Result<RunOutput> {
    let cfg = PipelineConfig {
        variant: Variant::NaiveHe,
        ..cfg.clone()
    };
    run_pipeline(&cfg, d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate, preprocess, GenConfig};

    fn instance(n1: usize, n2: usize, overlap: usize, seed: u64) -> (Vec<Record>, Vec<Record>) {
        let gen = GenConfig {
            n1,
            n2,
            overlap,
            seed,
            ..GenConfig::default()
        };
        let (r1, r2, _) = generate(&gen).unwrap();
        (preprocess(&r1), preprocess(&r2))
    }

    fn with(variant: Variant, mode: EeqMode, chunk: usize) -> PipelineConfig {
        PipelineConfig {
            variant,
            chunk_size: chunk,
            ..PipelineConfig::for_mode(mode)
        }
    }

    #[test]
    fn validate_rejects_contradictions() {
        let bad = [
            PipelineConfig { threshold: 1.5, ..PipelineConfig::default() },
            PipelineConfig { chunk_size: 129, ..PipelineConfig::default() },
            PipelineConfig { chunk_size: 0, ..PipelineConfig::default() },
            PipelineConfig { eeq_mode: EeqMode::NonInteractive, ..PipelineConfig::default() },
            PipelineConfig { token_domain: Some(1 << 10), ..PipelineConfig::default() },
            PipelineConfig { xi: Some(0.0), ..PipelineConfig::default() },
            PipelineConfig {
                he: HeParams { multiplicative_depth: 1, ..HeParams::default() },
                ..PipelineConfig::default()
            },
        ];
        for cfg in bad {
            assert_eq!(cfg.validate().unwrap_err().kind(), "config", "{cfg:?}");
        }
        PipelineConfig::default().validate().unwrap();
        PipelineConfig::for_mode(EeqMode::NonInteractive).validate().unwrap();
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("amppere-base".parse::<Variant>().unwrap(), Variant::AmppereBase);
        assert!("fast".parse::<Variant>().is_err());
    }

    #[test]
    fn encrypted_variants_reproduce_cleartext() {
        let (d1, d2) = instance(30, 45, 12, 5);
        let clear = run_pipeline(&with(Variant::Cleartext, EeqMode::Interactive, 10), &d1, &d2).unwrap();
        assert!(!clear.matches.is_empty());
        for (variant, chunk) in [(Variant::Optimized, 10), (Variant::Optimized, 16), (Variant::AmppereBase, 10)] {
            let out = run_pipeline(&with(variant, EeqMode::Interactive, chunk), &d1, &d2).unwrap();
            assert_eq!(out.matches, clear.matches, "{variant:?} chunk {chunk}");
            assert_eq!(out.candidates, clear.candidates);
            assert_eq!(out.stats.rounding_failures, 0);
        }
    }

    #[test]
    fn revealed_rows_give_the_same_result() {
        let (d1, d2) = instance(20, 30, 8, 6);
        let clear = run_pipeline(&with(Variant::Cleartext, EeqMode::Interactive, 10), &d1, &d2).unwrap();
        let cfg = PipelineConfig { oblivious_rows: false, ..with(Variant::Optimized, EeqMode::Interactive, 10) };
        let out = run_pipeline(&cfg, &d1, &d2).unwrap();
        assert_eq!(out.matches, clear.matches);
    }

    #[test]
    fn non_interactive_rounds_are_constant() {
        let (d1, d2) = instance(16, 24, 6, 7);
        let clear = run_pipeline(&with(Variant::Cleartext, EeqMode::NonInteractive, 8), &d1, &d2).unwrap();
        let out = run_pipeline(&with(Variant::Optimized, EeqMode::NonInteractive, 8), &d1, &d2).unwrap();
        assert_eq!(out.matches, clear.matches);
        assert_eq!(out.stats.inverse_rounds, 0);
        assert_eq!(out.stats.rounds, out.stats.chunk_pairs + 1);
    }

    #[test]
    fn naive_matches_cleartext_on_a_toy() {
        let (d1, d2) = {
            let gen = GenConfig::clean(10, 10, 10, 3);
            let (r1, r2, _) = generate(&gen).unwrap();
            (preprocess(&r1), preprocess(&r2))
        };
        let cfg = PipelineConfig { threshold: 0.5, ..with(Variant::Cleartext, EeqMode::Interactive, 10) };
        let clear = run_pipeline(&cfg, &d1, &d2).unwrap();
        let naive = naive_full_psi(&cfg, &d1, &d2).unwrap();
        assert_eq!(naive.stats.vr_invocations, 100);

        // Full quadratic cleartext Jaccard, no blocking.
        let (a, b) = prepare(&cfg, &d1, &d2).unwrap();
        let mut oracle = Vec::new();
        for i in 0..a.len() {
            for j in 0..b.len() {
                let (ta, tb) = (&a.tokens[i], &b.tokens[j]);
                let o = crate::matcher::sorted_overlap(&ta.codes, &tb.codes);
                let s = crate::matcher::score(o, ta.cardinality() as u32, tb.cardinality() as u32).unwrap();
                if s / 100.0 > 0.5 {
                    oracle.push((a.local_id(i), b.local_id(j), o));
                }
            }
        }
        let got: Vec<_> = naive.matches.iter().map(|m| (m.id1, m.id2, m.overlap)).collect();
        assert_eq!(got, oracle);
        for m in &clear.matches {
            assert!(naive.matches.contains(m));
        }
        let empty = naive_full_psi(&cfg, &[], &d2).unwrap();
        assert!(empty.matches.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let (d1, d2) = instance(20, 30, 8, 8);
        let cfg = with(Variant::Optimized, EeqMode::Interactive, 10);
        let a = run_pipeline(&cfg, &d1, &d2).unwrap();
        let b = run_pipeline(&cfg, &d1, &d2).unwrap();
        assert_eq!(a.matches, b.matches);
        assert_eq!(a.transport.totals(), b.transport.totals());
        assert_eq!(a.stats.inverses, b.stats.inverses);
    }
}
