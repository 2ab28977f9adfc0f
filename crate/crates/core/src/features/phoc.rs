//! Pyramidal histogram of characters.
//!
//! Layout (604 bits): unigram levels 2, 3, 4 and 5 over the 36-symbol
//! alphabet `a-z0-9` (504 bits, level-major then region-major), followed by
//! level-2 occupancy of the 50 most frequent English bigrams (100 bits).
//!
//! Character `k` of an `n`-character word occupies `[k/n, (k+1)/n]`; a
//! bigram starting at `k` occupies `[k/n, (k+2)/n]`. A bit for region
//! `[r/L, (r+1)/L]` is set when the overlap is at least half of the
//! symbol's own span.

pub const UNIGRAM_LEVELS: [usize; 4] = [2, 3, 4, 5];
pub const BIGRAM_LEVELS: [usize; 1] = [2];
pub const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";
pub const BIGRAMS: [&str; 50] = [
    "th", "he", "in", "er", "an", "re", "es", "on", "st", "nt", "en", "at", "ed", "nd", "to", "or", "ea", "ti", "ar",
    "te", "ng", "al", "it", "as", "is", "ha", "et", "se", "ou", "of", "le", "sa", "ve", "ro", "ra", "ri", "hi", "ne",
    "me", "de", "co", "ta", "ec", "si", "ll", "so", "na", "li", "la", "el",
];
pub const PHOC_DIM: usize = 604;
const UNIGRAM_BITS: usize = 36 * (2 + 3 + 4 + 5);

fn char_index(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        '0'..='9' => Some(26 + c as usize - '0' as usize),
        _ => None,
    }
}

/// Lowercases and keeps only `a-z0-9`.
pub fn normalize_word(word: &str) -> Vec<char> {
    word.to_lowercase()
        .chars()
        .filter(|c| char_index(*c).is_some())
        .collect()
}

fn occupies(lo: f64, hi: f64, region: usize, level: usize) -> bool {
    let r_lo = region as f64 / level as f64;
    let r_hi = (region + 1) as f64 / level as f64;
    let overlap = hi.min(r_hi) - lo.max(r_lo);
    overlap > 0.0 && overlap / (hi - lo) >= 0.5
}

/// Unigram occupancy for a single pyramid level: `level * 36` bits.
pub fn phoc_level(word: &str, level: usize) -> Vec<u8> {
    let chars = normalize_word(word);
    let n = chars.len();
    let mut out = vec![0u8; level * 36];
    for (k, &c) in chars.iter().enumerate() {
        let idx = char_index(c).expect("normalized");
        let (lo, hi) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
        for region in 0..level {
            if occupies(lo, hi, region, level) {
                out[region * 36 + idx] = 1;
            }
        }
    }
    out
}

/// 604-d binary descriptor; an empty word (after stripping) maps to zeros.
pub fn phoc_encode(word: &str) -> Vec<f64> {
    let chars = normalize_word(word);
    let n = chars.len();
    let mut out = vec![0.0; PHOC_DIM];
    if n == 0 {
        return out;
    }
    let mut offset = 0;
    for level in UNIGRAM_LEVELS {
        for (i, bit) in phoc_level(word, level).into_iter().enumerate() {
            out[offset + i] = f64::from(bit);
        }
        offset += level * 36;
    }
    debug_assert_eq!(offset, UNIGRAM_BITS);
    for level in BIGRAM_LEVELS {
        for k in 0..n.saturating_sub(1) {
            let bigram: String = chars[k..k + 2].iter().collect();
            let Some(b) = BIGRAMS.iter().position(|x| *x == bigram) else {
                continue;
            };
            let (lo, hi) = (k as f64 / n as f64, (k + 2) as f64 / n as f64);
            for region in 0..level {
                if occupies(lo, hi, region, level) {
                    out[offset + region * BIGRAMS.len() + b] = 1.0;
                }
            }
        }
        offset += level * BIGRAMS.len();
    }
    debug_assert_eq!(offset, PHOC_DIM);
    out
}
