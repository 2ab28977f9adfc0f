//! Deterministic text embedders standing in for pretrained encoders.
//!
//! Each lowercased whitespace-separated word maps to a Gaussian vector drawn
//! from a generator seeded by `(namespace, word)`. A text embeds as the
//! normalized sum of its word vectors, so texts sharing words have
//! correlated embeddings while unrelated words are nearly orthogonal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::hash::fnv1a_parts;

/// Namespace for the 768-d contextual (question, context, knowledge) space.
pub const CONTEXTUAL: &str = "contextual";
/// Namespace for the subword OCR word vectors.
pub const SUBWORD: &str = "subword";
/// Namespace for stubbed region appearance features.
pub const REGION: &str = "region";

fn word_vector(word: &str, dim: usize, namespace: &str, acc: &mut [f64]) {
    let seed = fnv1a_parts(&[namespace.as_bytes(), word.as_bytes()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in acc.iter_mut().take(dim) {
        let x: f64 = StandardNormal.sample(&mut rng);
        *v += x;
    }
}

/// Unit-norm vector of length `dim` for `text`.
pub fn stub_text_embed(text: &str, dim: usize, namespace: &str) -> Vec<f64> {
    let lower = text.to_lowercase();
    let mut out = vec![0.0; dim];
    let mut any = false;
    for word in lower.split_whitespace() {
        word_vector(word, dim, namespace, &mut out);
        any = true;
    }
    if !any {
        word_vector("", dim, namespace, &mut out);
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    } else {
        out[0] = 1.0;
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
