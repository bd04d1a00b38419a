//! Append-only, SHA-256 hash-chained evidence log.
//!
//! Each [`ChainEntry`] commits to its position, its predecessor's digest and
//! the full [`LifecycleEvent`]. Entries are persisted as one canonical JSON
//! object per line; verification of a persisted file also requires every line
//! to be byte-identical to the canonical re-encoding of what it parses to, so
//! any edit to the file is detected even when it still parses.

use std::collections::HashSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::event::{EventKind, LifecycleEvent, Payload};
use crate::model::{ActorId, IntentId, Tick};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn of(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Lowercase hex only: an uppercase digit is a different serialization.
    pub fn from_hex(s: &str) -> Option<Digest> {
        if s.len() != 64 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return None;
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| de::Error::custom("digest must be 64 lowercase hex digits"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainEntry {
    pub index: u64,
    pub prev_digest: Digest,
    pub event: LifecycleEvent,
    pub digest: Digest,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    index: u64,
    prev_digest: &'a Digest,
    event: &'a LifecycleEvent,
}

/// Canonical bytes the entry digest is computed over.
pub fn canonical_digest_input(index: u64, prev_digest: &Digest, event: &LifecycleEvent) -> Vec<u8> {
    serde_json::to_vec(&DigestInput { index, prev_digest, event }).expect("event serialization is infallible")
}

pub fn compute_digest(index: u64, prev_digest: &Digest, event: &LifecycleEvent) -> Digest {
    Digest::of(&canonical_digest_input(index, prev_digest, event))
}

impl ChainEntry {
    pub fn recompute_digest(&self) -> Digest {
        compute_digest(self.index, &self.prev_digest, &self.event)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("entry serialization is infallible")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("logical time regression: tick {got} after tick {last}")]
    TimeRegression { last: Tick, got: Tick },
    #[error("event references unknown intent `{0}`")]
    DanglingIntent(IntentId),
    #[error("intent `{0}` was already proposed")]
    DuplicateIntent(IntentId),
    #[error("duplicate event id `{0}`")]
    DuplicateEvent(String),
    #[error("range {from}..{to} out of bounds for log of length {len}")]
    OutOfBounds { from: usize, to: usize, len: usize },
    #[error("intent `{0}` does not appear in the log")]
    UnknownIntent(IntentId),
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureKind {
    DigestMismatch,
    LinkMismatch,
    TimeRegression,
    /// A persisted line that does not decode, or is not in canonical form.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum VerificationReport {
    Ok { entries: usize },
    Broken { index: usize, kind: FailureKind },
}

impl VerificationReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, VerificationReport::Ok { .. })
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerificationReport::Ok { entries } => write!(f, "OK ({entries} entries)"),
            VerificationReport::Broken { index, kind } => write!(f, "BROKEN at index {index}: {kind:?}"),
        }
    }
}

/// Incremental chain checker; entries must be fed in order.
#[derive(Default)]
struct Verifier {
    next: u64,
    prev: Digest,
    last_tick: Option<Tick>,
}

impl Verifier {
    fn check(&mut self, entry: &ChainEntry) -> Option<FailureKind> {
        if entry.index != self.next || entry.prev_digest != self.prev {
            return Some(FailureKind::LinkMismatch);
        }
        if entry.recompute_digest() != entry.digest {
            return Some(FailureKind::DigestMismatch);
        }
        if matches!(self.last_tick, Some(t) if entry.event.logical_time < t) {
            return Some(FailureKind::TimeRegression);
        }
        self.next += 1;
        self.prev = entry.digest;
        self.last_tick = Some(entry.event.logical_time);
        None
    }
}

/// Checks positions, digests, links and tick monotonicity; reports the first
/// broken entry.
pub fn verify_chain(entries: &[ChainEntry]) -> VerificationReport {
    let mut v = Verifier::default();
    for (i, entry) in entries.iter().enumerate() {
        if let Some(kind) = v.check(entry) {
            return VerificationReport::Broken { index: i, kind };
        }
    }
    VerificationReport::Ok { entries: entries.len() }
}

fn parse_line(line: &str) -> Option<ChainEntry> {
    let entry: ChainEntry = serde_json::from_str(line).ok()?;
    (entry.to_line() == line).then_some(entry)
}

/// Verifies a persisted log given as raw bytes. A line that does not parse
/// or is not in canonical form is reported as `Malformed`.
pub fn verify_bytes(bytes: &[u8]) -> VerificationReport {
    let mut v = Verifier::default();
    let mut count = 0;
    for (i, raw) in split_lines(bytes).enumerate() {
        let Some(entry) = std::str::from_utf8(raw).ok().and_then(parse_line) else {
            return VerificationReport::Broken { index: i, kind: FailureKind::Malformed };
        };
        if let Some(kind) = v.check(&entry) {
            return VerificationReport::Broken { index: i, kind };
        }
        count += 1;
    }
    VerificationReport::Ok { entries: count }
}

fn split_lines(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let empty = body.is_empty();
    body.split(|b| *b == b'\n').filter(move |_| !empty)
}

/// Parses a persisted log without verifying digests.
pub fn parse_jsonl(text: &str) -> Result<Vec<ChainEntry>, ChainError> {
    split_lines(text.as_bytes())
        .enumerate()
        .map(|(i, raw)| {
            let line = std::str::from_utf8(raw).map_err(|e| ChainError::Parse { line: i, message: e.to_string() })?;
            serde_json::from_str(line).map_err(|e| ChainError::Parse { line: i, message: e.to_string() })
        })
        .collect()
}

/// In-memory evidence chain with a single writer.
#[derive(Debug, Clone, Default)]
pub struct EvidenceChain {
    entries: Vec<ChainEntry>,
    intents: HashSet<IntentId>,
    event_ids: HashSet<String>,
}

impl EvidenceChain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds the append-time indexes over existing entries. Does not check
    /// digests; run [`verify_chain`] first when the entries are untrusted.
    pub fn from_entries(entries: Vec<ChainEntry>) -> Self {
        let intents = entries
            .iter()
            .filter(|e| e.event.kind() == EventKind::IntentProposed)
            .map(|e| e.event.intent_id.clone())
            .collect();
        let event_ids = entries.iter().map(|e| e.event.event_id.clone()).collect();
        Self { entries, intents, event_ids }
    }

    pub fn load(path: &Path) -> Result<Self, ChainError> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_entries(parse_jsonl(&text)?))
    }

    pub fn entries(&self) -> &[ChainEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ChainEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_tick(&self) -> Option<Tick> {
        self.entries.last().map(|e| e.event.logical_time)
    }

    /// Digest of the newest entry; commits to the whole chain.
    pub fn head_digest(&self) -> Digest {
        self.entries.last().map(|e| e.digest).unwrap_or(Digest::ZERO)
    }

    pub fn contains_intent(&self, id: &IntentId) -> bool {
        self.intents.contains(id)
    }

    pub fn append(&mut self, event: LifecycleEvent) -> Result<&ChainEntry, ChainError> {
        if let Some(last) = self.last_tick() {
            if event.logical_time < last {
                return Err(ChainError::TimeRegression { last, got: event.logical_time });
            }
        }
        let is_proposal = event.kind() == EventKind::IntentProposed;
        if is_proposal && self.intents.contains(&event.intent_id) {
            return Err(ChainError::DuplicateIntent(event.intent_id));
        }
        if !is_proposal && !self.intents.contains(&event.intent_id) {
            return Err(ChainError::DanglingIntent(event.intent_id));
        }
        if self.event_ids.contains(&event.event_id) {
            return Err(ChainError::DuplicateEvent(event.event_id));
        }

        let index = self.entries.len() as u64;
        let prev_digest = self.head_digest();
        let digest = compute_digest(index, &prev_digest, &event);
        if is_proposal {
            self.intents.insert(event.intent_id.clone());
        }
        self.event_ids.insert(event.event_id.clone());
        self.entries.push(ChainEntry { index, prev_digest, event, digest });
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Appends with a positional event id.
    pub fn record(
        &mut self,
        intent_id: IntentId,
        actor_id: ActorId,
        logical_time: Tick,
        payload: Payload,
    ) -> Result<&ChainEntry, ChainError> {
        let event_id = format!("ev-{:08}", self.entries.len());
        self.append(LifecycleEvent { event_id, intent_id, logical_time, actor_id, payload })
    }

    pub fn verify(&self) -> VerificationReport {
        verify_chain(&self.entries)
    }

    pub fn lineage(&self, intent_id: &IntentId) -> Result<Vec<&ChainEntry>, ChainError> {
        lineage(&self.entries, intent_id)
    }

    pub fn read_range(&self, from: usize, to: usize) -> Result<&[ChainEntry], ChainError> {
        read_range(&self.entries, from, to)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ChainError> {
        let mut w = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            writeln!(w, "{}", e.to_line())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Appends entries `from..` to an existing file without rewriting its prefix.
    pub fn append_to_file(&self, path: &Path, from: usize) -> Result<(), ChainError> {
        let tail = self.read_range(from, self.len())?;
        let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
        for e in tail {
            writeln!(w, "{}", e.to_line())?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn lineage<'a>(entries: &'a [ChainEntry], intent_id: &IntentId) -> Result<Vec<&'a ChainEntry>, ChainError> {
    let found: Vec<_> = entries.iter().filter(|e| &e.event.intent_id == intent_id).collect();
    if found.is_empty() {
        return Err(ChainError::UnknownIntent(intent_id.clone()));
    }
    Ok(found)
}

pub fn read_range(entries: &[ChainEntry], from: usize, to: usize) -> Result<&[ChainEntry], ChainError> {
    if from > to || to > entries.len() {
        return Err(ChainError::OutOfBounds { from, to, len: entries.len() });
    }
    Ok(&entries[from..to])
}
