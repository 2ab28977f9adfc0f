//! Trainable input encoders producing `d_model`-wide rows for the transformer.
//!
//! * objects: `LN(W1·fr) + LN(W2·bbox)`
//! * OCR tokens: `LN(W3·ft + W4·fr + W5·ph) + LN(W6·bbox)`
//! * question words and knowledge facts: `LN(W·x)` from the contextual space
//! * previous predictions: OCR row, vocabulary column or begin vector, plus a
//!   learned step-position vector

use super::phoc::PHOC_DIM;
use super::types::{embed_bbox, FeatureDims, OcrToken, VisualObject};
use crate::error::{Error, Result};
use crate::nn::layers::{apply_layer_norm, init_layer_norm, init_linear};
use crate::nn::{Graph, Init, NodeId, ParamStore, Tensor};

/// Upper bound on decoding steps, and the size of the step-position table.
pub const MAX_DECODE_STEPS: usize = 12;

pub fn init_encoder_params(store: &mut ParamStore, seed: u64, dims: &FeatureDims, d_model: usize) {
    init_linear(store, seed, "obj.w1", dims.region, d_model, false);
    init_layer_norm(store, seed, "obj.ln1", d_model);
    init_linear(store, seed, "obj.w2", 4, d_model, false);
    init_layer_norm(store, seed, "obj.ln2", d_model);

    init_linear(store, seed, "ocr.w3", dims.subword, d_model, false);
    init_linear(store, seed, "ocr.w4", dims.region, d_model, false);
    init_linear(store, seed, "ocr.w5", PHOC_DIM, d_model, false);
    init_layer_norm(store, seed, "ocr.ln1", d_model);
    init_linear(store, seed, "ocr.w6", 4, d_model, false);
    init_layer_norm(store, seed, "ocr.ln2", d_model);

    init_linear(store, seed, "question.proj", dims.contextual, d_model, false);
    init_layer_norm(store, seed, "question.ln", d_model);

    store.init(seed, "prev.begin", &[d_model], Init::FanIn(d_model));
    store.init(seed, "prev.pos", &[MAX_DECODE_STEPS, d_model], Init::FanIn(d_model));
}

/// Knowledge-path projection and the shared null fact.
pub fn init_knowledge_encoder_params(store: &mut ParamStore, seed: u64, dims: &FeatureDims, d_model: usize) {
    init_linear(store, seed, "knowledge.proj", dims.contextual, d_model, false);
    init_layer_norm(store, seed, "knowledge.ln", d_model);
    store.init(seed, "knowledge.null", &[dims.contextual], Init::FanIn(dims.contextual));
}

fn project(g: &mut Graph, store: &ParamStore, name: &str, x: NodeId) -> Result<NodeId> {
    let w = g.param(store, &format!("{name}.w"))?;
    g.matmul(x, w)
}

/// Row-stacked object inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectBatch {
    pub fr: Tensor,
    pub bbox: Tensor,
}

impl ObjectBatch {
    pub fn from_objects(objects: &[VisualObject], dims: &FeatureDims) -> Result<Self> {
        let fr: Vec<Vec<f64>> = objects.iter().map(|o| o.fr_vec.clone()).collect();
        let bb: Vec<Vec<f64>> = objects.iter().map(|o| embed_bbox(&o.bbox).to_vec()).collect();
        Ok(Self {
            fr: Tensor::from_rows(&fr, dims.region)?,
            bbox: Tensor::from_rows(&bb, 4)?,
        })
    }

    pub fn len(&self) -> usize {
        self.fr.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-stacked OCR inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct OcrBatch {
    pub ft: Tensor,
    pub fr: Tensor,
    pub ph: Tensor,
    pub bbox: Tensor,
}

impl OcrBatch {
    pub fn from_tokens(tokens: &[OcrToken], dims: &FeatureDims) -> Result<Self> {
        let rows = |f: &dyn Fn(&OcrToken) -> Vec<f64>, w: usize| {
            Tensor::from_rows(&tokens.iter().map(f).collect::<Vec<_>>(), w)
        };
        Ok(Self {
            ft: rows(&|t| t.ft_vec.clone(), dims.subword)?,
            fr: rows(&|t| t.fr_vec.clone(), dims.region)?,
            ph: rows(&|t| t.ph_vec.clone(), PHOC_DIM)?,
            bbox: rows(&|t| embed_bbox(&t.bbox).to_vec(), 4)?,
        })
    }

    pub fn len(&self) -> usize {
        self.ft.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn encode_objects(g: &mut Graph, store: &ParamStore, batch: &ObjectBatch) -> Result<NodeId> {
    let fr = g.constant(batch.fr.clone());
    let bb = g.constant(batch.bbox.clone());
    let a = project(g, store, "obj.w1", fr)?;
    let a = apply_layer_norm(g, store, "obj.ln1", a)?;
    let b = project(g, store, "obj.w2", bb)?;
    let b = apply_layer_norm(g, store, "obj.ln2", b)?;
    g.add(a, b)
}

/// Single-object form of [`encode_objects`], returning a `[d_model]` vector.
pub fn encode_object(store: &ParamStore, obj: &VisualObject, dims: &FeatureDims) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let batch = ObjectBatch::from_objects(std::slice::from_ref(obj), dims)?;
    let y = encode_objects(&mut g, store, &batch)?;
    Ok(g.value(y).data().to_vec())
}

pub fn encode_ocr_tokens(g: &mut Graph, store: &ParamStore, batch: &OcrBatch) -> Result<NodeId> {
    let ft = g.constant(batch.ft.clone());
    let fr = g.constant(batch.fr.clone());
    let ph = g.constant(batch.ph.clone());
    let bb = g.constant(batch.bbox.clone());
    let a = project(g, store, "ocr.w3", ft)?;
    let b = project(g, store, "ocr.w4", fr)?;
    let c = project(g, store, "ocr.w5", ph)?;
    let content = g.add(a, b)?;
    let content = g.add(content, c)?;
    let content = apply_layer_norm(g, store, "ocr.ln1", content)?;
    let spatial = project(g, store, "ocr.w6", bb)?;
    let spatial = apply_layer_norm(g, store, "ocr.ln2", spatial)?;
    g.add(content, spatial)
}

pub fn encode_ocr(store: &ParamStore, tok: &OcrToken, dims: &FeatureDims) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let batch = OcrBatch::from_tokens(std::slice::from_ref(tok), dims)?;
    let y = encode_ocr_tokens(&mut g, store, &batch)?;
    Ok(g.value(y).data().to_vec())
}

/// `[L, contextual]` question word embeddings to `[L, d_model]`.
pub fn encode_question(g: &mut Graph, store: &ParamStore, words: &Tensor) -> Result<NodeId> {
    let x = g.constant(words.clone());
    let y = project(g, store, "question.proj", x)?;
    apply_layer_norm(g, store, "question.ln", y)
}

/// `[N, contextual]` fact embeddings (already a graph node, since selection
/// may be differentiable) to `[N, d_model]`.
pub fn encode_knowledge(g: &mut Graph, store: &ParamStore, facts: NodeId) -> Result<NodeId> {
    let y = project(g, store, "knowledge.proj", facts)?;
    apply_layer_norm(g, store, "knowledge.ln", y)
}

/// What the decoder emitted at the previous step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrevChoice {
    Begin,
    Ocr(usize),
    Vocab(usize),
}

/// Input row for decoding step `step`: `[1, d_model]`.
///
/// `ocr_rows` is the `[N, d_model]` encoded OCR block and `w_voc` the
/// `[d_model, H]` vocabulary projection.
pub fn embed_previous_prediction(
    g: &mut Graph,
    store: &ParamStore,
    choice: PrevChoice,
    step: usize,
    ocr_rows: Option<NodeId>,
    w_voc: NodeId,
) -> Result<NodeId> {
    if step >= MAX_DECODE_STEPS {
        return Err(Error::contract(format!("decoding step {step} out of range")));
    }
    let choice = if step == 0 { PrevChoice::Begin } else { choice };
    let base = match choice {
        PrevChoice::Begin => {
            let b = g.param(store, "prev.begin")?;
            let d = g.value(b).numel();
            g.reshape(b, vec![1, d])?
        }
        PrevChoice::Ocr(n) => {
            let rows = ocr_rows.ok_or_else(|| Error::contract("OCR choice without OCR tokens"))?;
            if n >= g.value(rows).rows() {
                return Err(Error::contract(format!("OCR index {n} out of range")));
            }
            g.slice_rows(rows, n, 1)?
        }
        PrevChoice::Vocab(i) => {
            if i >= g.value(w_voc).cols() {
                return Err(Error::contract(format!("vocabulary index {i} out of range")));
            }
            let col = g.slice_cols(w_voc, i, 1)?;
            g.transpose(col)
        }
    };
    let table = g.param(store, "prev.pos")?;
    let pos = g.slice_rows(table, step, 1)?;
    g.add(base, pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::types::BBox;
    use crate::nn::finite_diff_check_params;

    const DIMS: FeatureDims = FeatureDims {
        contextual: 6,
        subword: 5,
        region: 7,
    };

    fn store(d: usize) -> ParamStore {
        let mut s = ParamStore::new();
        init_encoder_params(&mut s, 11, &DIMS, d);
        init_knowledge_encoder_params(&mut s, 11, &DIMS, d);
        s
    }

    fn token(text: &str, x: f64) -> OcrToken {
        OcrToken::new(
            text,
            BBox::new(x, 5.0, x + 10.0, 15.0, 100.0, 50.0).unwrap(),
            0,
            None,
            &DIMS,
        )
        .unwrap()
    }

    #[test]
    fn object_shape_and_zero_input() {
        let s = store(8);
        let obj = VisualObject::new("cup", BBox::full(10.0, 10.0), None, &DIMS).unwrap();
        assert_eq!(encode_object(&s, &obj, &DIMS).unwrap().len(), 8);

        let mut zero = obj.clone();
        zero.fr_vec = vec![0.0; DIMS.region];
        // a zero box embedding needs x1=y1=x2=y2=0, which BBox forbids, so zero W2 instead
        let mut s0 = s.clone();
        s0.insert("obj.w2.w", Tensor::zeros(&[4, 8]));
        let y = encode_object(&s0, &zero, &DIMS).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ocr_phoc_is_live() {
        let s = store(8);
        let t = token("abc", 10.0);
        let base = encode_ocr(&s, &t, &DIMS).unwrap();
        let mut no_phoc = t.clone();
        no_phoc.ph_vec = vec![0.0; PHOC_DIM];
        let other = encode_ocr(&s, &no_phoc, &DIMS).unwrap();
        assert_eq!(base.len(), 8);
        assert!(base.iter().zip(&other).any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn bbox_only_moves_spatial_term() {
        let mut s = store(8);
        let a = token("abc", 10.0);
        let b = token("abc", 60.0);
        let ya = encode_ocr(&s, &a, &DIMS).unwrap();
        let yb = encode_ocr(&s, &b, &DIMS).unwrap();
        assert!(ya.iter().zip(&yb).any(|(x, y)| (x - y).abs() > 1e-9));
        // without the spatial projection both tokens coincide
        s.insert("ocr.w6.w", Tensor::zeros(&[4, 8]));
        assert_eq!(encode_ocr(&s, &a, &DIMS).unwrap(), encode_ocr(&s, &b, &DIMS).unwrap());
    }

    #[test]
    fn encoder_gradients() {
        let s = store(6);
        let objs = vec![
            VisualObject::new("cup", BBox::new(1.0, 1.0, 5.0, 6.0, 10.0, 10.0).unwrap(), None, &DIMS).unwrap(),
            VisualObject::new("bag", BBox::new(2.0, 0.0, 9.0, 3.0, 10.0, 10.0).unwrap(), None, &DIMS).unwrap(),
        ];
        let ob = ObjectBatch::from_objects(&objs, &DIMS).unwrap();
        let weights = Tensor::matrix(2, 6, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let f = |g: &mut Graph, s: &ParamStore| {
            let y = encode_objects(g, s, &ob)?;
            let w = g.constant(weights.clone());
            let p = g.mul(y, w)?;
            Ok(g.sum(p))
        };
        let c = finite_diff_check_params(f, &s, &["obj.w1.w", "obj.w2.w", "obj.ln1.gamma"], 1e-6, None, 1).unwrap();
        assert!(c.max_rel_err < 1e-4, "{c:?}");
    }

    #[test]
    fn previous_prediction_sources() {
        let s = store(4);
        let mut g = Graph::new();
        let ocr = g.leaf(Tensor::matrix(4, 4, (0..16).map(f64::from).collect()).unwrap(), false);
        let wvoc = g.leaf(
            Tensor::matrix(4, 3, (0..12).map(|i| i as f64 * 10.0).collect()).unwrap(),
            false,
        );
        let pos = s.get("prev.pos").unwrap();

        let y = embed_previous_prediction(&mut g, &s, PrevChoice::Ocr(3), 2, Some(ocr), wvoc).unwrap();
        let expect: Vec<f64> = (0..4).map(|c| (12 + c) as f64 + pos.at(2, c)).collect();
        assert_eq!(g.value(y).data(), expect.as_slice());

        let y = embed_previous_prediction(&mut g, &s, PrevChoice::Vocab(1), 1, Some(ocr), wvoc).unwrap();
        let expect: Vec<f64> = (0..4).map(|r| (r * 3 + 1) as f64 * 10.0 + pos.at(1, r)).collect();
        assert_eq!(g.value(y).data(), expect.as_slice());

        let y = embed_previous_prediction(&mut g, &s, PrevChoice::Vocab(1), 0, Some(ocr), wvoc).unwrap();
        let begin = s.get("prev.begin").unwrap();
        let expect: Vec<f64> = (0..4).map(|c| begin.data()[c] + pos.at(0, c)).collect();
        assert_eq!(g.value(y).data(), expect.as_slice());

        assert!(embed_previous_prediction(&mut g, &s, PrevChoice::Ocr(4), 1, Some(ocr), wvoc).is_err());
        assert!(embed_previous_prediction(&mut g, &s, PrevChoice::Vocab(3), 1, Some(ocr), wvoc).is_err());
        assert!(embed_previous_prediction(&mut g, &s, PrevChoice::Begin, 12, Some(ocr), wvoc).is_err());
    }
}
