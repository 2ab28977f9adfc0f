//! Lookup, filter, bind, context and selection over one instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bind::{bind_multiword, BoundToken};
use super::context::{build_context, ContextBag};
use super::filter::filter_candidates;
use super::kb::{kb_lookup, CandidateSet, KbSnapshot};
use super::validity::{select_valid, validity_scores};
use crate::error::Result;
use crate::features::types::{FeatureDims, QAInstance};
use crate::hash::fnv1a_parts;
use crate::nn::ParamStore;

/// How one fact is picked from a token's candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Arg-max of the context validity scores.
    Contextual,
    /// Uniform draw fixed by `(seed, question id, token index)`.
    Random,
    /// Sum of all candidate embeddings.
    All,
}

/// Instance with bound OCR tokens and per-token filtered candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedKnowledge {
    pub instance: QAInstance,
    pub bound: Vec<BoundToken>,
    pub candidates: Vec<CandidateSet>,
    pub context: ContextBag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeFact {
    pub source_token_index: usize,
    /// `None` when no candidate survived filtering.
    pub embedding: Option<Vec<f64>>,
    pub selected: Option<usize>,
    pub scores: Vec<f64>,
}

impl KnowledgeFact {
    pub fn present(&self) -> bool {
        self.embedding.is_some()
    }
}

fn lookup_filtered(token: &str, kb: &KbSnapshot, dim: usize) -> Result<CandidateSet> {
    Ok(filter_candidates(token, &kb_lookup(token, kb, dim)?))
}

pub fn prepare_knowledge(instance: &QAInstance, kb: &KbSnapshot, dims: &FeatureDims) -> Result<PreparedKnowledge> {
    let mut ocr = instance.ocr.clone();
    ocr.sort_by_key(|t| t.reading_order);
    let per_token = ocr
        .iter()
        .map(|t| lookup_filtered(&t.text, kb, dims.contextual))
        .collect::<Result<Vec<_>>>()?;
    let bound = bind_multiword(&ocr, &per_token, dims)?;

    let candidates = bound
        .iter()
        .map(|b| match b.trigger {
            None => Ok(per_token[b.sources.start].clone()),
            Some(t) => {
                let phrase = &b.token.text;
                let direct = lookup_filtered(phrase, kb, dims.contextual)?;
                Ok(if direct.is_empty() {
                    filter_candidates(phrase, &per_token[t])
                } else {
                    direct
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut bound_instance = instance.clone();
    bound_instance.ocr = bound.iter().map(|b| b.token.clone()).collect();
    let context = build_context(&bound_instance, dims.contextual);
    Ok(PreparedKnowledge {
        instance: bound_instance,
        bound,
        candidates,
        context,
    })
}

/// Deterministic uniform index in `0..k`.
pub fn random_choice(seed: u64, question_id: &str, token: usize, k: usize) -> usize {
    let h = fnv1a_parts(&[&seed.to_le_bytes(), question_id.as_bytes(), &token.to_le_bytes()]);
    ChaCha8Rng::seed_from_u64(h).gen_range(0..k)
}

/// One fact per OCR token. `store` must hold validity parameters for the
/// contextual policy.
pub fn select_facts(
    prepared: &PreparedKnowledge,
    policy: SelectionPolicy,
    store: &ParamStore,
    seed: u64,
    dims: &FeatureDims,
) -> Result<Vec<KnowledgeFact>> {
    let ctx = prepared.context.sum(dims.contextual);
    prepared
        .candidates
        .iter()
        .enumerate()
        .map(|(n, set)| {
            let embs: Vec<Vec<f64>> = set.candidates.iter().map(|c| c.embedding.clone()).collect();
            if embs.is_empty() {
                return Ok(KnowledgeFact {
                    source_token_index: n,
                    embedding: None,
                    selected: None,
                    scores: vec![],
                });
            }
            let (selected, scores, embedding) = match policy {
                SelectionPolicy::Contextual => {
                    let scores = validity_scores(&embs, &ctx, store)?;
                    let d = select_valid(&scores).expect("nonempty");
                    (Some(d), scores, embs[d].clone())
                }
                SelectionPolicy::Random => {
                    let d = random_choice(seed, &prepared.instance.question_id, n, embs.len());
                    (Some(d), vec![], embs[d].clone())
                }
                SelectionPolicy::All => {
                    let mut sum = vec![0.0; dims.contextual];
                    for e in &embs {
                        sum.iter_mut().zip(e).for_each(|(a, b)| *a += b);
                    }
                    (None, vec![], sum)
                }
            };
            Ok(KnowledgeFact {
                source_token_index: n,
                embedding: Some(embedding),
                selected,
                scores,
            })
        })
        .collect()
}

/// One line of the fact table written by `kb-filter`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactRow {
    pub question_id: String,
    pub ocr_index: usize,
    pub token: String,
    pub bound_from: Vec<usize>,
    pub candidates: Vec<String>,
    pub scores: Vec<f64>,
    pub selected: Option<String>,
}

pub fn fact_rows(prepared: &PreparedKnowledge, facts: &[KnowledgeFact]) -> Vec<FactRow> {
    facts
        .iter()
        .map(|f| {
            let n = f.source_token_index;
            let set = &prepared.candidates[n];
            FactRow {
                question_id: prepared.instance.question_id.clone(),
                ocr_index: n,
                token: prepared.instance.ocr[n].text.clone(),
                bound_from: prepared.bound[n].sources.clone().collect(),
                candidates: set.candidates.iter().map(|c| c.name.clone()).collect(),
                scores: f.scores.clone(),
                selected: f.selected.map(|d| set.candidates[d].name.clone()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::types::{BBox, OcrToken, VisualObject};
    use crate::knowledge::kb::{KbEntry, KbRecord};
    use crate::knowledge::validity::init_validity_params;

    const DIMS: FeatureDims = FeatureDims {
        contextual: 32,
        subword: 4,
        region: 4,
    };

    fn kb() -> KbSnapshot {
        let e = |n: &str, d: &str| KbEntry {
            name: n.into(),
            description: d.into(),
            attribute: String::new(),
        };
        KbSnapshot::from_records([
            KbRecord {
                query: "york".into(),
                candidates: vec![e("New York", "city in the united states"), e("Yorkshire", "county")],
            },
            KbRecord {
                query: "new york".into(),
                candidates: vec![e("New York", "largest city")],
            },
            KbRecord {
                query: "commodore".into(),
                candidates: vec![
                    e("Commodore", "naval rank"),
                    e("Commodore International", "computer company"),
                    e("Kommodore", "misspelling"),
                ],
            },
        ])
    }

    fn instance() -> QAInstance {
        let b = |x: f64| BBox::new(x, 0.0, x + 5.0, 5.0, 100.0, 10.0).unwrap();
        QAInstance {
            question_id: "q1".into(),
            image_id: "i1".into(),
            question: vec!["what".into(), "brand".into()],
            objects: vec![VisualObject::new("computer", BBox::full(100.0, 10.0), None, &DIMS).unwrap()],
            ocr: ["commodore", "york", "new", "cafe"]
                .iter()
                .enumerate()
                .map(|(i, t)| OcrToken::new(t, b(10.0 * i as f64), [3, 2, 1, 0][i], None, &DIMS).unwrap())
                .collect(),
            answers: vec![],
        }
    }

    #[test]
    fn end_to_end() {
        let p = prepare_knowledge(&instance(), &kb(), &DIMS).unwrap();
        let texts: Vec<_> = p.instance.ocr.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["cafe", "new york", "commodore"]);
        assert_eq!(p.candidates[1].candidates[0].merged_text, "largest city");
        // "Kommodore" fails the containment rule
        assert_eq!(p.candidates[2].len(), 2);
        assert_eq!(p.context.entries[..3], ["cafe", "new york", "commodore"]);

        let mut s = ParamStore::new();
        init_validity_params(&mut s, 1, DIMS.contextual, 8);
        let facts = select_facts(&p, SelectionPolicy::Contextual, &s, 0, &DIMS).unwrap();
        assert_eq!(facts.len(), 3);
        assert!(!facts[0].present());
        assert!(facts.iter().filter(|f| f.present()).all(|f| f.selected.is_some()));

        let all = select_facts(&p, SelectionPolicy::All, &s, 0, &DIMS).unwrap();
        let two = &p.candidates[2].candidates;
        let sum: Vec<f64> = (0..32).map(|k| two[0].embedding[k] + two[1].embedding[k]).collect();
        assert_eq!(all[2].embedding.as_ref().unwrap(), &sum);

        let rows = fact_rows(&p, &facts);
        assert_eq!(rows[1].bound_from, [1, 2]);
    }

    #[test]
    fn random_policy_is_deterministic_and_covers() {
        let picks: Vec<usize> = (0..200).map(|t| random_choice(7, "q", t, 3)).collect();
        assert_eq!(picks, (0..200).map(|t| random_choice(7, "q", t, 3)).collect::<Vec<_>>());
        for k in 0..3 {
            assert!(picks.contains(&k));
        }
    }
}
