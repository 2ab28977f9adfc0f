//! Per-instance tensors and teacher-forcing targets, computed once before
//! training or decoding.

use std::collections::HashMap;

use super::variant::ModelConfig;
use super::vocab::AnswerVocab;
use crate::error::{Error, Result};
use crate::eval::normalize_answer;
use crate::features::embed::{stub_text_embed, CONTEXTUAL};
use crate::features::encode::{ObjectBatch, OcrBatch, PrevChoice};
use crate::features::types::QAInstance;
use crate::knowledge::{prepare_knowledge, KbSnapshot};
use crate::nn::Tensor;

/// Knowledge-side inputs aligned with the OCR tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeInputs {
    /// `[K, contextual]` candidate embeddings per token; `None` when no
    /// candidate survived filtering.
    pub candidates: Vec<Option<Tensor>>,
    /// `[1, contextual]` summed image context.
    pub context_sum: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInstance {
    pub question_id: String,
    /// `[L, contextual]`.
    pub question: Tensor,
    pub objects: ObjectBatch,
    pub ocr: OcrBatch,
    pub ocr_texts: Vec<String>,
    pub knowledge: Option<KnowledgeInputs>,
    pub answers: Vec<String>,
}

impl EncodedInstance {
    pub fn num_question(&self) -> usize {
        self.question.rows()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn num_ocr(&self) -> usize {
        self.ocr_texts.len()
    }
}

/// Runs the knowledge pipeline when the variant needs it (binding OCR
/// tokens as a side effect) and stacks every modality.
pub fn encode_instance(instance: &QAInstance, kb: Option<&KbSnapshot>, cfg: &ModelConfig) -> Result<EncodedInstance> {
    let dims = &cfg.dims;
    let (inst, knowledge) = if cfg.variant.uses_knowledge() {
        let kb = kb.ok_or_else(|| Error::Config(format!("variant {} needs a knowledge snapshot", cfg.variant)))?;
        let prepared = prepare_knowledge(instance, kb, dims)?;
        let candidates = prepared
            .candidates
            .iter()
            .map(|set| {
                if set.is_empty() {
                    return Ok(None);
                }
                let rows: Vec<Vec<f64>> = set.candidates.iter().map(|c| c.embedding.clone()).collect();
                Tensor::from_rows(&rows, dims.contextual).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        let context_sum = Tensor::matrix(1, dims.contextual, prepared.context.sum(dims.contextual))?;
        (
            prepared.instance,
            Some(KnowledgeInputs {
                candidates,
                context_sum,
            }),
        )
    } else {
        let mut inst = instance.clone();
        inst.ocr.sort_by_key(|t| t.reading_order);
        (inst, None)
    };
    let question: Vec<Vec<f64>> = inst
        .question
        .iter()
        .map(|w| stub_text_embed(w, dims.contextual, CONTEXTUAL))
        .collect();
    Ok(EncodedInstance {
        question_id: inst.question_id.clone(),
        question: Tensor::from_rows(&question, dims.contextual)?,
        objects: ObjectBatch::from_objects(&inst.objects, dims)?,
        ocr: OcrBatch::from_tokens(&inst.ocr, dims)?,
        ocr_texts: inst.ocr.iter().map(|t| t.text.clone()).collect(),
        knowledge,
        answers: inst.answers.clone(),
    })
}

/// Most frequent normalized answer; ties go to the earliest.
pub fn training_answer(answers: &[String]) -> Option<String> {
    let normalized: Vec<String> = answers.iter().map(|a| normalize_answer(a)).collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for a in &normalized {
        *counts.entry(a.as_str()).or_default() += 1;
    }
    normalized
        .iter()
        .max_by(|a, b| {
            counts[a.as_str()]
                .cmp(&counts[b.as_str()])
                .then(std::cmp::Ordering::Greater)
        })
        .cloned()
}

/// Splits `answer` into decoding units, greedily matching the longest run of
/// words equal to an OCR token text and falling back to single words.
pub fn answer_units(answer: &str, ocr_texts: &[String]) -> Vec<String> {
    let words: Vec<&str> = answer.split_whitespace().collect();
    let longest = ocr_texts.iter().map(|t| t.split(' ').count()).max().unwrap_or(1);
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let k = (2..=longest.min(words.len() - i))
            .rev()
            .find(|&k| {
                let phrase = words[i..i + k].join(" ");
                ocr_texts.iter().any(|t| *t == phrase)
            })
            .unwrap_or(1);
        out.push(words[i..i + k].join(" "));
        i += k;
    }
    out
}

/// Teacher-forcing inputs and multi-label targets over `[vocab | OCR]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTargets {
    /// Previous-prediction input for each step.
    pub prev: Vec<PrevChoice>,
    /// `[D, H + N]` positives.
    pub labels: Tensor,
    /// `[D, H + N]`, zero on steps whose unit is neither a vocabulary word nor an OCR token.
    pub weights: Tensor,
    pub masked_steps: usize,
}

impl StepTargets {
    pub fn steps(&self) -> usize {
        self.prev.len()
    }
}

pub fn build_targets(answer: &str, ocr_texts: &[String], vocab: &AnswerVocab, max_steps: usize) -> StepTargets {
    let mut units = answer_units(answer, ocr_texts);
    units.truncate(max_steps.saturating_sub(1).max(1));
    let ends = units.len() < max_steps;
    let steps = units.len() + usize::from(ends);
    let (h, n) = (vocab.len(), ocr_texts.len());
    let width = h + n;
    let mut labels = vec![0.0; steps * width];
    let mut weights = vec![1.0; steps * width];
    let mut prev = vec![PrevChoice::Begin];
    let mut masked_steps = 0;
    for (d, unit) in units.iter().enumerate() {
        let row = &mut labels[d * width..(d + 1) * width];
        let voc = vocab.get(unit).filter(|&i| !vocab.is_special(i));
        if let Some(i) = voc {
            row[i] = 1.0;
        }
        let ocr: Vec<usize> = (0..n).filter(|&k| ocr_texts[k] == *unit).collect();
        for &k in &ocr {
            row[h + k] = 1.0;
        }
        if voc.is_none() && ocr.is_empty() {
            log::debug!("answer unit {unit:?} is neither a vocabulary word nor an OCR token");
            weights[d * width..(d + 1) * width].iter_mut().for_each(|w| *w = 0.0);
            masked_steps += 1;
        }
        if d + 1 < steps {
            prev.push(match (ocr.first(), voc) {
                (Some(&k), _) => PrevChoice::Ocr(k),
                (None, Some(i)) => PrevChoice::Vocab(i),
                (None, None) => PrevChoice::Vocab(vocab.unk()),
            });
        }
    }
    if ends {
        labels[(steps - 1) * width + vocab.end()] = 1.0;
    }
    StepTargets {
        prev,
        labels: Tensor::matrix(steps, width, labels).expect("sized"),
        weights: Tensor::matrix(steps, width, weights).expect("sized"),
        masked_steps,
    }
}
