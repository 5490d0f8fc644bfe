//! Durable per-replica record of promises, votes and decisions, with local
//! recovery. The file is an append-only sequence of change records, each
//! length-prefixed and checksummed; a torn final record is detected and
//! discarded on recovery, any earlier corruption is unrecoverable.
//!
//! Durability contract: a delta is flushed before any protocol message that
//! depends on it is emitted (promise before Phase 1b, vote before Phase 2b).
//! The engine appends deltas while handling one event and flushes once at
//! the end of the turn, which is the group commit boundary.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::types::{Digest, InstanceId, ReplicaId, RoundId, RoundKind};

const MAGIC: &[u8; 8] = b"FPAXLDG\0";
const FORMAT_VERSION: u32 = 1;
/// Magic + version + reserved.
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a ledger file (bad magic or version)")]
    BadHeader,
    #[error("corrupt record at offset {offset} (not the final record)")]
    Corrupt { offset: u64 },
}

/// One durable state change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LedgerDelta {
    /// Promised `round` for all instances at or above `from`.
    Promise { round: RoundId, from: InstanceId },
    /// Voted for `digest` in `round` for `instance`. The payload is stored
    /// so a recovered acceptor can report full values in Phase 1b.
    Vote { instance: InstanceId, round: RoundId, digest: Digest, payload: Vec<u8> },
    /// Learned the decision for `instance`.
    Decision { instance: InstanceId, digest: Digest, payload: Vec<u8> },
}

const TAG_PROMISE: u8 = 1;
const TAG_VOTE: u8 = 2;
const TAG_DECISION: u8 = 3;

fn put_round(out: &mut Vec<u8>, r: RoundId) {
    out.extend_from_slice(&r.counter.to_le_bytes());
    out.extend_from_slice(&r.owner.0.to_le_bytes());
    out.push(r.kind.as_u8());
}

fn encode_delta(d: &LedgerDelta) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    match d {
        LedgerDelta::Promise { round, from } => {
            out.push(TAG_PROMISE);
            put_round(&mut out, *round);
            out.extend_from_slice(&from.0.to_le_bytes());
        }
        LedgerDelta::Vote { instance, round, digest, payload } => {
            out.push(TAG_VOTE);
            out.extend_from_slice(&instance.0.to_le_bytes());
            put_round(&mut out, *round);
            out.extend_from_slice(&digest.0);
            out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
            out.extend_from_slice(payload);
        }
        LedgerDelta::Decision { instance, digest, payload } => {
            out.push(TAG_DECISION);
            out.extend_from_slice(&instance.0.to_le_bytes());
            out.extend_from_slice(&digest.0);
            out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
            out.extend_from_slice(payload);
        }
    }
    out
}

fn decode_delta(buf: &[u8]) -> Option<LedgerDelta> {
    let tag = *buf.first()?;
    let rest = &buf[1..];
    let round_at = |b: &[u8]| -> Option<RoundId> {
        Some(RoundId {
            counter: u64::from_le_bytes(b.get(..8)?.try_into().ok()?),
            owner: ReplicaId(u16::from_le_bytes(b.get(8..10)?.try_into().ok()?)),
            kind: RoundKind::from_u8(*b.get(10)?)?,
        })
    };
    match tag {
        TAG_PROMISE => {
            let round = round_at(rest)?;
            let from = InstanceId(u64::from_le_bytes(rest.get(11..19)?.try_into().ok()?));
            (rest.len() == 19).then_some(LedgerDelta::Promise { round, from })
        }
        TAG_VOTE => {
            let instance = InstanceId(u64::from_le_bytes(rest.get(..8)?.try_into().ok()?));
            let round = round_at(rest.get(8..)?)?;
            let digest = Digest(rest.get(19..51)?.try_into().ok()?);
            let plen = u32::from_le_bytes(rest.get(51..55)?.try_into().ok()?) as usize;
            let payload = rest.get(55..55 + plen)?.to_vec();
            (rest.len() == 55 + plen).then_some(LedgerDelta::Vote { instance, round, digest, payload })
        }
        TAG_DECISION => {
            let instance = InstanceId(u64::from_le_bytes(rest.get(..8)?.try_into().ok()?));
            let digest = Digest(rest.get(8..40)?.try_into().ok()?);
            let plen = u32::from_le_bytes(rest.get(40..44)?.try_into().ok()?) as usize;
            let payload = rest.get(44..44 + plen)?.to_vec();
            (rest.len() == 44 + plen).then_some(LedgerDelta::Decision { instance, digest, payload })
        }
        _ => None,
    }
}

// CRC-32 (IEEE), table generated at compile time.
const CRC_TABLE: [u32; 256] = {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

pub fn crc32(data: &[u8]) -> u32 {
    let mut c = 0xFFFF_FFFFu32;
    for &b in data {
        c = CRC_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

/// Storage backend for the engine. `append` buffers; `flush` is the group
/// commit boundary after which everything appended is durable.
pub trait LedgerStore {
    fn append(&mut self, delta: LedgerDelta);
    fn flush(&mut self) -> Result<(), LedgerError>;
}

/// In-memory backend used by the simulator. Crash semantics are modeled by
/// taking the committed prefix at a flush boundary.
#[derive(Default, Debug)]
pub struct MemLedger {
    records: Vec<LedgerDelta>,
    committed: usize,
    boundaries: Vec<usize>,
}

impl MemLedger {
    pub fn committed(&self) -> &[LedgerDelta] {
        &self.records[..self.committed]
    }

    /// Committed record counts at each flush boundary, ending with the
    /// current committed length.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }
}

impl LedgerStore for MemLedger {
    fn append(&mut self, delta: LedgerDelta) {
        self.records.push(delta);
    }

    fn flush(&mut self) -> Result<(), LedgerError> {
        if self.records.len() != self.committed {
            self.committed = self.records.len();
            self.boundaries.push(self.committed);
        }
        Ok(())
    }
}

/// File-backed ledger: `HEADER` then `u32 len | body | u32 crc(body)` records.
pub struct FileLedger {
    file: File,
    buffer: Vec<u8>,
    offset: u64,
    sync: bool,
    boundaries: Vec<u64>,
}

impl FileLedger {
    /// Create a new ledger file or append to an existing one. When opening
    /// an existing file the caller should first run [`read_ledger_file`] and
    /// recover; `open` truncates a torn final record.
    pub fn open(path: &Path, sync: bool) -> Result<FileLedger, LedgerError> {
        let exists = path.exists();
        let mut file =
            OpenOptions::new().read(true).create(true).truncate(false).write(true).open(path)?;
        let offset = if exists {
            let scan = scan_file(&mut file)?;
            file.set_len(scan.valid_len)?;
            scan.valid_len
        } else {
            file.write_all(&file_header())?;
            HEADER_LEN as u64
        };
        use std::io::Seek;
        file.seek(std::io::SeekFrom::Start(offset))?;
        Ok(FileLedger { file, buffer: Vec::new(), offset, sync, boundaries: vec![offset] })
    }

    /// Byte offsets of every flush boundary, for crash-point enumeration.
    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }
}

impl LedgerStore for FileLedger {
    fn append(&mut self, delta: LedgerDelta) {
        let body = encode_delta(&delta);
        self.buffer.extend_from_slice(&(body.len() as u32).to_le_bytes());
        self.buffer.extend_from_slice(&crc32(&body).to_le_bytes());
        self.buffer.extend_from_slice(&body);
    }

    fn flush(&mut self) -> Result<(), LedgerError> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        self.file.write_all(&self.buffer)?;
        if self.sync {
            self.file.sync_data()?;
        }
        self.offset += self.buffer.len() as u64;
        self.buffer.clear();
        self.boundaries.push(self.offset);
        Ok(())
    }
}

fn file_header() -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..8].copy_from_slice(MAGIC);
    h[8..12].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h
}

struct FileScan {
    records: Vec<LedgerDelta>,
    /// Length of the intact prefix (everything after it is a torn tail).
    valid_len: u64,
}

fn scan_file(file: &mut File) -> Result<FileScan, LedgerError> {
    use std::io::Seek;
    file.seek(std::io::SeekFrom::Start(0))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    scan_bytes(&buf)
}

fn scan_bytes(buf: &[u8]) -> Result<FileScan, LedgerError> {
    if buf.len() < HEADER_LEN || &buf[..8] != MAGIC {
        return Err(LedgerError::BadHeader);
    }
    if u32::from_le_bytes(buf[8..12].try_into().unwrap()) != FORMAT_VERSION {
        return Err(LedgerError::BadHeader);
    }
    let mut records = Vec::new();
    let mut pos = HEADER_LEN;
    loop {
        if pos == buf.len() {
            break;
        }
        // A record shorter than its frame, or running past end of file, is a
        // torn tail: discard. A checksum or decode failure on a record fully
        // inside the file with data after it is real corruption.
        if pos + 8 > buf.len() {
            break;
        }
        let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(buf[pos + 4..pos + 8].try_into().unwrap());
        let body_start = pos + 8;
        if body_start + len > buf.len() {
            break;
        }
        let body = &buf[body_start..body_start + len];
        let is_final = body_start + len == buf.len();
        match (crc32(body) == crc).then(|| decode_delta(body)).flatten() {
            Some(delta) => {
                records.push(delta);
                pos = body_start + len;
            }
            None if is_final => break,
            None => return Err(LedgerError::Corrupt { offset: pos as u64 }),
        }
    }
    Ok(FileScan { records, valid_len: pos as u64 })
}

/// Read and validate a ledger file, discarding a torn final record.
pub fn read_ledger_file(path: &Path) -> Result<Vec<LedgerDelta>, LedgerError> {
    let mut file = File::open(path)?;
    Ok(scan_file(&mut file)?.records)
}

/// Acceptor and learner state reconstructed from a record sequence.
#[derive(Debug, Default)]
pub struct RecoveredState {
    /// Range promises `(round, from)` in append order.
    pub promises: Vec<(RoundId, InstanceId)>,
    /// Last vote per instance.
    pub votes: std::collections::BTreeMap<InstanceId, (RoundId, Digest, Vec<u8>)>,
    /// Decisions, complete with payloads.
    pub decided: std::collections::BTreeMap<InstanceId, (Digest, Vec<u8>)>,
}

impl RecoveredState {
    pub fn from_records(records: &[LedgerDelta]) -> RecoveredState {
        let mut s = RecoveredState::default();
        for r in records {
            match r {
                LedgerDelta::Promise { round, from } => s.promises.push((*round, *from)),
                LedgerDelta::Vote { instance, round, digest, payload } => {
                    let keep = s.votes.get(instance).is_none_or(|(r0, _, _)| r0 < round);
                    if keep {
                        s.votes.insert(*instance, (*round, *digest, payload.clone()));
                    }
                }
                LedgerDelta::Decision { instance, digest, payload } => {
                    s.decided.entry(*instance).or_insert_with(|| (*digest, payload.clone()));
                }
            }
        }
        s
    }

    /// Delivery watermark: end of the contiguous decided prefix.
    pub fn watermark(&self) -> InstanceId {
        let mut i = InstanceId::ZERO;
        while self.decided.contains_key(&i) {
            i = i.next();
        }
        i
    }

    /// Highest promised round, if any.
    pub fn max_promise(&self) -> Option<RoundId> {
        self.promises.iter().map(|(r, _)| *r).max()
    }
}
