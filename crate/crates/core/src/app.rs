//! The replicated hash table used as the benchmark application: a map from
//! integers to 5-character strings, changed only through deterministic put
//! commands delivered in consensus order. Reads are local and generate no
//! replication traffic.

use std::collections::HashMap;

use sha2::{Digest as _, Sha256};

use crate::types::Digest;

/// Length of every workload value string.
pub const VALUE_LEN: usize = 5;

/// Encoded size of one command on the wire.
pub const COMMAND_WIRE_LEN: usize = 1 + 8 + VALUE_LEN;

const OP_PUT: u8 = 1;

/// One application operation. The workload is write-only: a put of a
/// sequential integer key to a random 5-character string.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Command {
    pub key: u64,
    pub value: [u8; VALUE_LEN],
}

impl Command {
    pub fn put(key: u64, value: [u8; VALUE_LEN]) -> Command {
        Command { key, value }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(OP_PUT);
        out.extend_from_slice(&self.key.to_le_bytes());
        out.extend_from_slice(&self.value);
    }

    pub fn decode(buf: &[u8]) -> Option<(Command, &[u8])> {
        if buf.len() < COMMAND_WIRE_LEN || buf[0] != OP_PUT {
            return None;
        }
        let key = u64::from_le_bytes(buf[1..9].try_into().unwrap());
        let value = buf[9..9 + VALUE_LEN].try_into().unwrap();
        Some((Command { key, value }, &buf[COMMAND_WIRE_LEN..]))
    }
}

/// Replica-local table state. The digest is an order-sensitive fold over the
/// applied command sequence, so two replicas have equal digests iff they
/// applied the same commands in the same order.
#[derive(Clone, Debug)]
pub struct TableState {
    entries: HashMap<u64, [u8; VALUE_LEN]>,
    applied: u64,
    digest: Digest,
}

impl Default for TableState {
    fn default() -> Self {
        TableState {
            entries: HashMap::new(),
            applied: 0,
            digest: Digest([0; 32]),
        }
    }
}

impl TableState {
    pub fn apply(&mut self, c: &Command) {
        self.entries.insert(c.key, c.value);
        self.applied += 1;
        let mut h = Sha256::new();
        h.update(self.digest.0);
        h.update(c.key.to_le_bytes());
        h.update(c.value);
        self.digest = Digest(h.finalize().into());
    }

    /// Local, non-replicated read.
    pub fn read(&self, key: u64) -> Option<&[u8; VALUE_LEN]> {
        self.entries.get(&key)
    }

    pub fn applied_count(&self) -> u64 {
        self.applied
    }

    pub fn state_digest(&self) -> Digest {
        self.digest
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
