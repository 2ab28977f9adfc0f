//! Parameter layout, the five-block transformer pass, answer scoring and
//! greedy decoding.

use super::inputs::{EncodedInstance, KnowledgeInputs};
use super::mask::{build_attention_mask, AttentionMaskSpec, BlockSizes};
use super::variant::ModelConfig;
use super::vocab::AnswerVocab;
use crate::error::{Error, Result};
use crate::features::encode::{
    embed_previous_prediction, encode_knowledge, encode_objects, encode_ocr_tokens, encode_question,
    init_encoder_params, init_knowledge_encoder_params, PrevChoice,
};
use crate::knowledge::pipeline::random_choice;
use crate::knowledge::validity::{init_validity_params, validity_logits};
use crate::knowledge::SelectionPolicy;
use crate::nn::layers::{apply_linear, init_linear};
use crate::nn::{transformer_forward, Graph, Init, NodeId, ParamStore, Tensor, TransformerConfig};

pub const ENCODER_PREFIX: &str = "encoder";
pub const VOCAB_W: &str = "voc.w";
pub const VOCAB_B: &str = "voc.b";

/// Parameters that exist only in knowledge variants.
pub fn is_knowledge_param(name: &str) -> bool {
    name.starts_with("knowledge.") || name.starts_with("validity.")
}

pub fn transformer_config(cfg: &ModelConfig) -> Result<TransformerConfig> {
    TransformerConfig::new(cfg.n_layers, cfg.n_heads, cfg.d_model)
}

/// Fresh parameters for `cfg.variant` with an answer space of `vocab_size`
/// words. Every tensor depends only on `(cfg.seed, name)`, so shared
/// parameters agree across variants.
pub fn init_model_params(cfg: &ModelConfig, vocab_size: usize) -> Result<ParamStore> {
    cfg.validate()?;
    let (seed, d) = (cfg.seed, cfg.d_model);
    let mut store = ParamStore::new();
    init_encoder_params(&mut store, seed, &cfg.dims, d);
    if cfg.variant.uses_knowledge() {
        init_knowledge_params(&mut store, cfg);
    }
    transformer_config(cfg)?.init(&mut store, seed, ENCODER_PREFIX);
    store.init(seed, VOCAB_W, &[d, vocab_size], Init::FanIn(d));
    store.init(seed, VOCAB_B, &[vocab_size], Init::Zeros);
    init_linear(&mut store, seed, "ptr.q", d, d, true);
    init_linear(&mut store, seed, "ptr.k", d, d, true);
    store.init(seed, "ptr.bias", &[1], Init::Zeros);
    Ok(store)
}

pub fn init_knowledge_params(store: &mut ParamStore, cfg: &ModelConfig) {
    init_knowledge_encoder_params(store, cfg.seed, &cfg.dims, cfg.d_model);
    init_validity_params(store, cfg.seed, cfg.dims.contextual, cfg.validity_hidden);
}

/// Encoded context rows; empty blocks are `None`.
#[derive(Clone, Copy, Debug)]
pub struct InputRows {
    pub q: Option<NodeId>,
    pub obj: Option<NodeId>,
    pub ocr: Option<NodeId>,
    /// `[N, contextual]` selected facts before projection.
    pub facts: Option<NodeId>,
    pub knw: Option<NodeId>,
    pub l: usize,
    pub m: usize,
    pub n: usize,
}

fn nonempty(rows: usize) -> bool {
    rows > 0
}

/// Straight-through selection over one token's candidates: the forward
/// value is the arg-max row of `cands`, the backward pass sees the
/// softmax-weighted mixture of `logits` (`[1, K]`).
fn straight_through(g: &mut Graph, logits: NodeId, cands: &Tensor) -> Result<NodeId> {
    let c = g.constant(cands.clone());
    let p = g.softmax_rows(logits);
    let pv = g.value(p).data();
    let best = crate::knowledge::select_valid(pv).expect("nonempty candidates");
    let mut onehot = vec![0.0; pv.len()];
    onehot[best] = 1.0;
    let onehot = g.constant(Tensor::matrix(1, onehot.len(), onehot)?);
    let frozen = g.detach(p);
    let zero = g.sub(p, frozen)?;
    let w = g.add(onehot, zero)?;
    g.matmul(w, c)
}

/// Validity logits for every candidate of every token in one pass, so the
/// context projection is computed once per instance.
fn all_validity_logits(g: &mut Graph, store: &ParamStore, k: &KnowledgeInputs, dim: usize) -> Result<Option<NodeId>> {
    let mut stacked = Vec::new();
    for c in k.candidates.iter().flatten() {
        stacked.extend_from_slice(c.data());
    }
    if stacked.is_empty() {
        return Ok(None);
    }
    let rows = stacked.len() / dim;
    let c = g.constant(Tensor::matrix(rows, dim, stacked)?);
    let ctx = g.constant(k.context_sum.clone());
    validity_logits(g, store, c, ctx).map(Some)
}

/// Selected fact embeddings `[N, contextual]` following the variant's policy.
pub fn select_fact_rows(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    enc: &EncodedInstance,
) -> Result<Option<NodeId>> {
    let (Some(policy), Some(k)) = (cfg.variant.selection(), enc.knowledge.as_ref()) else {
        return Ok(None);
    };
    if enc.num_ocr() == 0 {
        return Ok(None);
    }
    if k.candidates.len() != enc.num_ocr() {
        return Err(Error::contract("knowledge inputs not aligned with OCR tokens"));
    }
    let dim = cfg.dims.contextual;
    let logits = match policy {
        SelectionPolicy::Contextual => all_validity_logits(g, store, k, dim)?,
        _ => None,
    };
    let mut offset = 0;
    let mut rows = Vec::with_capacity(k.candidates.len());
    for (n, cands) in k.candidates.iter().enumerate() {
        let row = match cands {
            None => {
                let null = g.param(store, "knowledge.null")?;
                g.reshape(null, vec![1, dim])?
            }
            Some(c) => match (policy, logits) {
                (SelectionPolicy::Contextual, Some(all)) => {
                    let own = g.slice_cols(all, offset, c.rows())?;
                    offset += c.rows();
                    straight_through(g, own, c)?
                }
                (SelectionPolicy::Random, _) => {
                    let pick = random_choice(cfg.seed, &enc.question_id, n, c.rows());
                    g.constant(Tensor::matrix(1, dim, c.row(pick).to_vec())?)
                }
                _ => {
                    let mut sum = vec![0.0; dim];
                    for r in 0..c.rows() {
                        sum.iter_mut().zip(c.row(r)).for_each(|(a, b)| *a += b);
                    }
                    g.constant(Tensor::matrix(1, dim, sum)?)
                }
            },
        };
        rows.push(row);
    }
    Ok(Some(g.concat_rows(&rows)?))
}

pub fn encode_rows(g: &mut Graph, store: &ParamStore, cfg: &ModelConfig, enc: &EncodedInstance) -> Result<InputRows> {
    let (l, m, n) = (enc.num_question(), enc.num_objects(), enc.num_ocr());
    let q = nonempty(l)
        .then(|| encode_question(g, store, &enc.question))
        .transpose()?;
    let obj = nonempty(m)
        .then(|| encode_objects(g, store, &enc.objects))
        .transpose()?;
    let ocr = nonempty(n).then(|| encode_ocr_tokens(g, store, &enc.ocr)).transpose()?;
    let facts = select_fact_rows(g, store, cfg, enc)?;
    let knw = facts.map(|f| encode_knowledge(g, store, f)).transpose()?;
    Ok(InputRows {
        q,
        obj,
        ocr,
        facts,
        knw,
        l,
        m,
        n,
    })
}

/// `[D, d_model]` decoder inputs for the given history (first entry is
/// replaced by the begin embedding).
pub fn prev_rows(g: &mut Graph, store: &ParamStore, rows: &InputRows, history: &[PrevChoice]) -> Result<NodeId> {
    if history.is_empty() {
        return Err(Error::contract("decoder needs at least one step"));
    }
    let w_voc = g.param(store, VOCAB_W)?;
    let parts = history
        .iter()
        .enumerate()
        .map(|(d, &c)| embed_previous_prediction(g, store, c, d, rows.ocr, w_voc))
        .collect::<Result<Vec<_>>>()?;
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        g.concat_rows(&parts)
    }
}

pub fn mask_for(cfg: &ModelConfig, rows: &InputRows, d: usize) -> Result<AttentionMaskSpec> {
    build_attention_mask(rows.l, rows.m, rows.n, d, cfg.variant.mask_mode(), cfg.open_knowledge)
}

/// Transformer outputs split back into their blocks.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub sizes: BlockSizes,
    pub z: NodeId,
    pub z_q: Option<NodeId>,
    pub z_obj: Option<NodeId>,
    pub z_ocr: Option<NodeId>,
    pub z_knw: Option<NodeId>,
    pub z_prv: NodeId,
}

pub fn run_transformer(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    rows: &InputRows,
    prv: NodeId,
    mask: &AttentionMaskSpec,
) -> Result<ForwardOutput> {
    let s = mask.sizes;
    let d = g.value(prv).rows();
    let knw_rows = rows.knw.map_or(0, |k| g.value(k).rows());
    if (s.q, s.obj, s.ocr, s.knw, s.prv) != (rows.l, rows.m, rows.n, knw_rows, d) {
        return Err(Error::contract(format!(
            "mask blocks {:?} do not match inputs ({}, {}, {}, {}, {})",
            s, rows.l, rows.m, rows.n, knw_rows, d
        )));
    }
    let parts: Vec<NodeId> = [rows.q, rows.obj, rows.ocr, rows.knw, Some(prv)]
        .into_iter()
        .flatten()
        .collect();
    let x = if parts.len() == 1 {
        parts[0]
    } else {
        g.concat_rows(&parts)?
    };
    let z = transformer_forward(g, store, ENCODER_PREFIX, x, &mask.matrix, &transformer_config(cfg)?)?;
    let mut block = |start: usize, len: usize| -> Result<Option<NodeId>> {
        if len == 0 {
            Ok(None)
        } else {
            g.slice_rows(z, start, len).map(Some)
        }
    };
    Ok(ForwardOutput {
        sizes: s,
        z,
        z_q: block(0, s.q)?,
        z_obj: block(s.obj_start(), s.obj)?,
        z_ocr: block(s.ocr_start(), s.ocr)?,
        z_knw: block(s.knw_start(), s.knw)?,
        z_prv: block(s.prv_start(), s.prv)?.expect("at least one decoder row"),
    })
}

/// Full forward pass for a decoder history.
pub fn forward(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    enc: &EncodedInstance,
    history: &[PrevChoice],
) -> Result<ForwardOutput> {
    let rows = encode_rows(g, store, cfg, enc)?;
    let prv = prev_rows(g, store, &rows, history)?;
    let mask = mask_for(cfg, &rows, history.len())?;
    run_transformer(g, store, cfg, &rows, prv, &mask)
}

/// `[D, N]` copy scores `(z_prv Wq + bq)(z_ocr Wk + bk)ᵀ / √d + b`.
pub fn pointer_scores(g: &mut Graph, store: &ParamStore, z_prv: NodeId, z_ocr: NodeId) -> Result<NodeId> {
    let d = g.value(z_prv).cols();
    let q = apply_linear(g, store, "ptr.q", z_prv)?;
    let k = apply_linear(g, store, "ptr.k", z_ocr)?;
    let kt = g.transpose(k);
    let s = g.matmul(q, kt)?;
    let s = g.scale(s, 1.0 / (d as f64).sqrt());
    let (rows, cols) = (g.value(s).rows(), g.value(s).cols());
    let bias = g.param(store, "ptr.bias")?;
    let bias = g.reshape(bias, vec![1, 1])?;
    let left = g.constant(Tensor::full(&[rows, 1], 1.0));
    let right = g.constant(Tensor::full(&[1, cols], 1.0));
    let b = g.matmul(left, bias)?;
    let b = g.matmul(b, right)?;
    g.add(s, b)
}

/// `[D, H + N]` scores: vocabulary logits followed by OCR copy scores.
pub fn decode_step(g: &mut Graph, store: &ParamStore, z_prv: NodeId, z_ocr: Option<NodeId>) -> Result<NodeId> {
    let w = g.param(store, VOCAB_W)?;
    let b = g.param(store, VOCAB_B)?;
    let voc = g.matmul(z_prv, w)?;
    let voc = g.add_row(voc, b)?;
    match z_ocr {
        Some(z_ocr) => {
            let ptr = pointer_scores(g, store, z_prv, z_ocr)?;
            g.concat_cols(&[voc, ptr])
        }
        None => Ok(voc),
    }
}

/// Lowest index among the maxima.
pub fn argmax(xs: &[f64]) -> usize {
    crate::knowledge::select_valid(xs).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderState {
    pub step: usize,
    pub history: Vec<PrevChoice>,
    pub finished: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub answer: String,
    pub choices: Vec<PrevChoice>,
    pub steps: usize,
}

/// Maps a flat score index to a choice; `None` for the end marker.
pub fn choice_of(index: usize, vocab: &AnswerVocab) -> Option<PrevChoice> {
    if index == vocab.end() {
        None
    } else if index < vocab.len() {
        Some(PrevChoice::Vocab(index))
    } else {
        Some(PrevChoice::Ocr(index - vocab.len()))
    }
}

/// Joins the emitted words; markers other than the end are dropped.
pub fn render_answer(choices: &[PrevChoice], vocab: &AnswerVocab, ocr_texts: &[String]) -> String {
    choices
        .iter()
        .filter_map(|c| match *c {
            PrevChoice::Vocab(i) if vocab.is_special(i) => None,
            PrevChoice::Vocab(i) => Some(vocab.word(i).to_string()),
            PrevChoice::Ocr(n) => Some(ocr_texts[n].clone()),
            PrevChoice::Begin => None,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Greedy decoding for up to `cfg.max_steps` steps. Context rows are
/// encoded once; the transformer reruns with one more decoder row per step.
pub fn generate_answer(
    store: &ParamStore,
    cfg: &ModelConfig,
    vocab: &AnswerVocab,
    enc: &EncodedInstance,
) -> Result<Prediction> {
    let mut g = Graph::new();
    let rows = encode_rows(&mut g, store, cfg, enc)?;
    let mut state = DecoderState {
        step: 0,
        history: vec![PrevChoice::Begin],
        finished: false,
    };
    let mut choices = Vec::new();
    while !state.finished && state.step < cfg.max_steps {
        let prv = prev_rows(&mut g, store, &rows, &state.history)?;
        let mask = mask_for(cfg, &rows, state.history.len())?;
        let out = run_transformer(&mut g, store, cfg, &rows, prv, &mask)?;
        let last = g.slice_rows(out.z_prv, state.step, 1)?;
        let scores = decode_step(&mut g, store, last, out.z_ocr)?;
        let best = argmax(g.value(scores).data());
        state.step += 1;
        match choice_of(best, vocab) {
            None => state.finished = true,
            Some(c) => {
                choices.push(c);
                state.history.push(c);
            }
        }
    }
    Ok(Prediction {
        answer: render_answer(&choices, vocab, &enc.ocr_texts),
        choices,
        steps: state.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::types::{BBox, OcrToken};
    use crate::model::fixtures::{tiny_config, tiny_data, DIMS};
    use crate::model::inputs::encode_instance;
    use crate::model::Variant;

    #[test]
    fn block_shapes() {
        let data = tiny_data(2);
        for variant in Variant::ALL {
            let cfg = tiny_config(variant);
            let store = init_model_params(&cfg, data.vocab.len()).unwrap();
            let enc = encode_instance(&data.train[0], Some(&data.kb), &cfg).unwrap();
            let mut g = Graph::new();
            let history = [PrevChoice::Begin, PrevChoice::Ocr(1), PrevChoice::Vocab(4)];
            let out = forward(&mut g, &store, &cfg, &enc, &history).unwrap();
            let (l, m, n) = (enc.num_question(), enc.num_objects(), enc.num_ocr());
            let knw = if variant.uses_knowledge() { n } else { 0 };
            assert_eq!(g.value(out.z).shape(), &[l + m + n + knw + 3, 16], "{variant}");
            assert_eq!(g.value(out.z_prv).shape(), &[3, 16]);
            assert_eq!(out.z_knw.is_some(), variant.uses_knowledge());
            let scores = decode_step(&mut g, &store, out.z_prv, out.z_ocr).unwrap();
            assert_eq!(g.value(scores).shape(), &[3, data.vocab.len() + n]);
        }
    }

    #[test]
    fn without_ocr_scores_only_vocabulary() {
        let data = tiny_data(1);
        let cfg = tiny_config(Variant::Ektvqa);
        let store = init_model_params(&cfg, data.vocab.len()).unwrap();
        let mut inst = data.train[0].clone();
        inst.ocr.clear();
        let enc = encode_instance(&inst, Some(&data.kb), &cfg).unwrap();
        let mut g = Graph::new();
        let out = forward(&mut g, &store, &cfg, &enc, &[PrevChoice::Begin]).unwrap();
        assert!(out.z_ocr.is_none() && out.z_knw.is_none());
        let scores = decode_step(&mut g, &store, out.z_prv, out.z_ocr).unwrap();
        assert_eq!(g.value(scores).shape(), &[1, data.vocab.len()]);
        let pred = generate_answer(&store, &cfg, &data.vocab, &enc).unwrap();
        assert!(pred.choices.iter().all(|c| !matches!(c, PrevChoice::Ocr(_))));
    }

    #[test]
    fn pointer_with_identity_projections() {
        let mut store = ParamStore::new();
        store.insert("ptr.q.w", Tensor::identity(2));
        store.insert("ptr.q.b", Tensor::zeros(&[2]));
        store.insert("ptr.k.w", Tensor::identity(2));
        store.insert("ptr.k.b", Tensor::zeros(&[2]));
        store.insert("ptr.bias", Tensor::vector(vec![0.5]));
        let mut g = Graph::new();
        let prv = g.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let ocr = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let s = pointer_scores(&mut g, &store, prv, ocr).unwrap();
        let v = g.value(s).data();
        assert!((v[0] - (0.5f64.sqrt() + 0.5)).abs() < 1e-12);
        assert!((v[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn choices_and_rendering() {
        let vocab = AnswerVocab::new(["yes", "no"]);
        assert_eq!(choice_of(vocab.end(), &vocab), None);
        assert_eq!(choice_of(3, &vocab), Some(PrevChoice::Vocab(3)));
        assert_eq!(choice_of(vocab.len() + 1, &vocab), Some(PrevChoice::Ocr(1)));
        let ocr = vec!["new".to_string(), "york".to_string()];
        let choices = [
            PrevChoice::Ocr(0),
            PrevChoice::Vocab(vocab.unk()),
            PrevChoice::Ocr(1),
            PrevChoice::Vocab(3),
        ];
        assert_eq!(render_answer(&choices, &vocab, &ocr), "new york yes");
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn decoding_stops_within_step_budget() {
        let data = tiny_data(3);
        for max_steps in [1, 3, 12] {
            let cfg = ModelConfig {
                max_steps,
                ..tiny_config(Variant::Ektvqa)
            };
            let store = init_model_params(&cfg, data.vocab.len()).unwrap();
            for inst in &data.train {
                let enc = encode_instance(inst, Some(&data.kb), &cfg).unwrap();
                let p = generate_answer(&store, &cfg, &data.vocab, &enc).unwrap();
                assert!(p.steps <= max_steps && p.choices.len() <= p.steps);
            }
        }
    }

    #[test]
    fn first_step_scores_follow_token_permutation() {
        let data = tiny_data(1);
        let cfg = tiny_config(Variant::Ektvqa);
        let store = init_model_params(&cfg, data.vocab.len()).unwrap();
        let inst = &data.train[0];
        let perm = [2usize, 0, 3, 1];
        let mut shuffled = inst.clone();
        shuffled.ocr = perm
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let t = &inst.ocr[p];
                OcrToken {
                    reading_order: k,
                    ..t.clone()
                }
            })
            .collect();
        let score = |inst| {
            let enc = encode_instance(inst, Some(&data.kb), &cfg).unwrap();
            let mut g = Graph::new();
            let out = forward(&mut g, &store, &cfg, &enc, &[PrevChoice::Begin]).unwrap();
            let s = decode_step(&mut g, &store, out.z_prv, out.z_ocr).unwrap();
            g.value(s).data().to_vec()
        };
        let (a, b) = (score(inst), score(&shuffled));
        let h = data.vocab.len();
        for i in 0..h {
            assert!((a[i] - b[i]).abs() < 1e-9);
        }
        for (k, &p) in perm.iter().enumerate() {
            assert!((b[h + k] - a[h + p]).abs() < 1e-9, "slot {k}");
        }
    }

    #[test]
    fn random_policy_is_fixed_per_question() {
        let data = tiny_data(2);
        let cfg = tiny_config(Variant::EktvqaRnd);
        let store = init_model_params(&cfg, data.vocab.len()).unwrap();
        let enc = encode_instance(&data.train[0], Some(&data.kb), &cfg).unwrap();
        let facts = |g: &mut Graph| {
            let f = select_fact_rows(g, &store, &cfg, &enc).unwrap().unwrap();
            g.value(f).data().to_vec()
        };
        assert_eq!(facts(&mut Graph::new()), facts(&mut Graph::new()));
    }

    #[test]
    fn token_without_candidates_uses_null_fact() {
        let data = tiny_data(1);
        let cfg = tiny_config(Variant::Ektvqa);
        let store = init_model_params(&cfg, data.vocab.len()).unwrap();
        let mut inst = data.train[0].clone();
        inst.ocr
            .push(OcrToken::new("zzzunknown", BBox::full(640.0, 480.0), 9, None, &DIMS).unwrap());
        let enc = encode_instance(&inst, Some(&data.kb), &cfg).unwrap();
        let mut g = Graph::new();
        let rows = encode_rows(&mut g, &store, &cfg, &enc).unwrap();
        let facts = g.value(rows.facts.unwrap());
        let last = facts.row(facts.rows() - 1);
        assert_eq!(last, store.require("knowledge.null").unwrap().data());
    }
}
