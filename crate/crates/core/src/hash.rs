//! Stable 64-bit hashing used for seeds. `std`'s hasher is not guaranteed
//! stable across releases, so reproducible runs go through FNV-1a.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Hash of several byte strings separated by a NUL so that
/// `("ab", "c")` and `("a", "bc")` differ.
pub fn fnv1a_parts(parts: &[&[u8]]) -> u64 {
    let mut h = OFFSET;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h = (h ^ 0).wrapping_mul(PRIME);
        }
        for &b in *part {
            h = (h ^ u64::from(b)).wrapping_mul(PRIME);
        }
    }
    h
}
