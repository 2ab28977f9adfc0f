//! Share of questions whose answer can be assembled from OCR tokens,
//! vocabulary words, or both.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::metrics::normalize_answer;
use crate::features::types::QAInstance;
use crate::model::vocab::AnswerVocab;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub ocr_ub: f64,
    pub vocab_ub: f64,
    pub both_ub: f64,
}

/// Whether `words` splits into consecutive runs that each satisfy `unit`.
pub fn composable(words: &[&str], unit: impl Fn(&str) -> bool) -> bool {
    if words.is_empty() {
        return false;
    }
    let mut reach = vec![false; words.len() + 1];
    reach[0] = true;
    for i in 0..words.len() {
        if !reach[i] {
            continue;
        }
        for j in i + 1..=words.len() {
            if unit(&words[i..j].join(" ")) {
                reach[j] = true;
            }
        }
    }
    reach[words.len()]
}

/// A question counts towards a bound when any of its ground truths is composable.
pub fn upper_bounds(instances: &[QAInstance], vocab: &AnswerVocab) -> UpperBoundReport {
    if instances.is_empty() {
        return UpperBoundReport {
            ocr_ub: 0.0,
            vocab_ub: 0.0,
            both_ub: 0.0,
        };
    }
    let in_vocab = |w: &str| vocab.get(w).is_some_and(|i| !vocab.is_special(i));
    let mut hits = [0usize; 3];
    for inst in instances {
        let ocr: HashSet<&str> = inst.ocr.iter().map(|t| t.text.as_str()).collect();
        let answers: Vec<String> = inst.answers.iter().map(|a| normalize_answer(a)).collect();
        let check = |unit: &dyn Fn(&str) -> bool| {
            answers.iter().any(|a| {
                let words: Vec<&str> = a.split(' ').filter(|w| !w.is_empty()).collect();
                composable(&words, unit)
            })
        };
        let flags = [
            check(&|u| ocr.contains(u)),
            check(&|u| in_vocab(u)),
            check(&|u| ocr.contains(u) || in_vocab(u)),
        ];
        for (h, f) in hits.iter_mut().zip(flags) {
            *h += usize::from(f);
        }
    }
    let pct = |h: usize| 100.0 * h as f64 / instances.len() as f64;
    UpperBoundReport {
        ocr_ub: pct(hits[0]),
        vocab_ub: pct(hits[1]),
        both_ub: pct(hits[2]),
    }
}
