//! Small shared utilities.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

/// Hasher for maps keyed by sequential integers (tags, sub ids, page
/// numbers): the key is the hash. HashMap's power-of-two bucket masking
/// distributes consecutive keys perfectly, and the SipHash cost disappears
/// from the hot path.
#[derive(Default)]
pub struct SeqKeyHasher(u64);

impl Hasher for SeqKeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        // only fixed-width integer keys are expected
        let mut buf = [0u8; 8];
        let n = bytes.len().min(8);
        buf[..n].copy_from_slice(&bytes[..n]);
        self.0 ^= u64::from_le_bytes(buf);
    }

    fn write_u64(&mut self, n: u64) {
        self.0 = n;
    }

    fn write_u32(&mut self, n: u32) {
        self.0 = u64::from(n);
    }
}

pub type SeqHashMap<K, V> = HashMap<K, V, BuildHasherDefault<SeqKeyHasher>>;

pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
