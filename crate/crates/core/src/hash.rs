//! Stable 64-bit hashing. Every id the pipeline emits is derived from
//! xxHash64 with a pinned seed so outputs are byte-reproducible across
//! platforms and runs.

use xxhash_rust::xxh64::Xxh64;

pub const HASH_SEED: u64 = 0x5EED_5_11CE;

/// Hash a sequence of string parts. Parts are length-prefixed so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn stable_hash<I, S>(parts: I) -> u64
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut h = Xxh64::new(HASH_SEED);
    for part in parts {
        let bytes = part.as_ref();
        h.update(&(bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.digest()
}

pub fn hex_id(prefix: &str, hash: u64) -> String {
    format!("{prefix}{hash:016x}")
}

/// Derive a child seed from a parent seed and a stream label.
pub fn derive_seed(seed: u64, stream: &str, index: u64) -> u64 {
    stable_hash([
        &seed.to_le_bytes()[..],
        stream.as_bytes(),
        &index.to_le_bytes()[..],
    ])
}
