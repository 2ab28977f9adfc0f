//! Merges runs of adjacent OCR tokens that spell a multiword candidate name.

use std::ops::Range;

use super::filter::words;
use super::kb::CandidateSet;
use crate::error::Result;
use crate::features::types::{FeatureDims, OcrToken};

/// An OCR token after binding, with the original tokens it covers.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundToken {
    pub token: OcrToken,
    pub sources: Range<usize>,
    /// Original token whose candidate name produced the merge.
    pub trigger: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Span {
    start: usize,
    len: usize,
    trigger: usize,
}

fn spelled(ocr: &[OcrToken], start: usize, phrase: &[String]) -> bool {
    let end = start + phrase.len();
    end <= ocr.len()
        && (start..end).all(|i| words(&ocr[i].text) == [phrase[i - start].clone()])
        && (start + 1..end).all(|i| ocr[i].reading_order == ocr[i - 1].reading_order + 1)
}

/// `ocr` must be sorted by reading order and aligned with `cands`.
///
/// Overlapping proposals are resolved left to right, preferring the longer
/// phrase at the same start, so every original token ends up in exactly one
/// output token.
pub fn bind_multiword(ocr: &[OcrToken], cands: &[CandidateSet], dims: &FeatureDims) -> Result<Vec<BoundToken>> {
    let mut spans = Vec::new();
    for (t, set) in cands.iter().enumerate().take(ocr.len()) {
        let Some(own) = words(&ocr[t].text).pop() else { continue };
        for c in &set.candidates {
            let phrase = words(&c.name);
            if phrase.len() < 2 {
                continue;
            }
            for (p, w) in phrase.iter().enumerate() {
                if *w == own && t >= p && spelled(ocr, t - p, &phrase) {
                    spans.push(Span {
                        start: t - p,
                        len: phrase.len(),
                        trigger: t,
                    });
                }
            }
        }
    }
    spans.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then(b.len.cmp(&a.len))
            .then(a.trigger.cmp(&b.trigger))
    });

    let mut out = Vec::with_capacity(ocr.len());
    let mut next = 0;
    let mut spans = spans.into_iter().peekable();
    while next < ocr.len() {
        while spans.peek().is_some_and(|s| s.start < next) {
            spans.next();
        }
        match spans.peek() {
            Some(s) if s.start == next => {
                let s = spans.next().expect("peeked");
                out.push(merge(&ocr[s.start..s.start + s.len], s.start, s.trigger, dims)?);
                next = s.start + s.len;
            }
            _ => {
                out.push(BoundToken {
                    token: ocr[next].clone(),
                    sources: next..next + 1,
                    trigger: None,
                });
                next += 1;
            }
        }
    }
    Ok(out)
}

fn merge(run: &[OcrToken], start: usize, trigger: usize, dims: &FeatureDims) -> Result<BoundToken> {
    let text = run.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
    let bbox = run[1..].iter().fold(run[0].bbox, |b, t| b.union(&t.bbox));
    let mut fr = vec![0.0; run[0].fr_vec.len()];
    for t in run {
        fr.iter_mut()
            .zip(&t.fr_vec)
            .for_each(|(a, b)| *a += b / run.len() as f64);
    }
    Ok(BoundToken {
        token: OcrToken::new(&text, bbox, run[0].reading_order, Some(fr), dims)?,
        sources: start..start + run.len(),
        trigger: Some(trigger),
    })
}
