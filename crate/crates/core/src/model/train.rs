//! Teacher-forced loss and one optimizer step over a batch.

use std::borrow::Borrow;
use std::collections::BTreeMap;

use super::forward::{decode_step, encode_rows, mask_for, prev_rows, run_transformer};
use super::inputs::{build_targets, training_answer, EncodedInstance, StepTargets};
use super::variant::ModelConfig;
use super::vocab::AnswerVocab;
use crate::error::{Error, Result};
use crate::nn::{adam_step, Graph, NodeId, OptimizerState, ParamStore, Tensor};

/// An encoded instance paired with its decoding targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub enc: EncodedInstance,
    pub targets: StepTargets,
}

impl TrainExample {
    pub fn new(enc: EncodedInstance, vocab: &AnswerVocab, max_steps: usize) -> Self {
        let answer = training_answer(&enc.answers).unwrap_or_default();
        let targets = build_targets(&answer, &enc.ocr_texts, vocab, max_steps);
        Self { enc, targets }
    }
}

/// `[D, H + N]` teacher-forced scores.
///
/// With a causal mask all steps share one pass. Otherwise step `d` is
/// scored by a pass that holds only the first `d + 1` decoder rows, exactly
/// as during greedy decoding.
pub fn teacher_forced_scores(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    ex: &TrainExample,
) -> Result<NodeId> {
    let rows = encode_rows(g, store, cfg, &ex.enc)?;
    let steps = ex.targets.steps();
    let full = mask_for(cfg, &rows, steps)?;
    if full.is_causal() {
        let prv = prev_rows(g, store, &rows, &ex.targets.prev)?;
        let out = run_transformer(g, store, cfg, &rows, prv, &full)?;
        return decode_step(g, store, out.z_prv, out.z_ocr);
    }
    let mut per_step = Vec::with_capacity(steps);
    for d in 0..steps {
        let prv = prev_rows(g, store, &rows, &ex.targets.prev[..=d])?;
        let mask = mask_for(cfg, &rows, d + 1)?;
        let out = run_transformer(g, store, cfg, &rows, prv, &mask)?;
        let last = g.slice_rows(out.z_prv, d, 1)?;
        per_step.push(decode_step(g, store, last, out.z_ocr)?);
    }
    if per_step.len() == 1 {
        Ok(per_step[0])
    } else {
        g.concat_rows(&per_step)
    }
}

/// Summed binary cross-entropy over unmasked steps.
pub fn instance_loss(g: &mut Graph, store: &ParamStore, cfg: &ModelConfig, ex: &TrainExample) -> Result<NodeId> {
    let scores = teacher_forced_scores(g, store, cfg, ex)?;
    g.bce_with_logits(scores, &ex.targets.labels, &ex.targets.weights)
}

/// Mean loss over `batch` and the matching mean gradients.
pub fn batch_gradients<B: Borrow<TrainExample>>(
    batch: &[B],
    store: &ParamStore,
    cfg: &ModelConfig,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
    for ex in batch {
        let mut g = Graph::new();
        let loss = instance_loss(&mut g, store, cfg, ex.borrow())?;
        total += g.value(loss).item();
        g.backward(loss)?;
        for (name, mut grad) in g.take_param_grads() {
            grad.data_mut().iter_mut().for_each(|v| *v *= scale);
            match grads.get_mut(&name) {
                Some(acc) => acc.add_assign(&grad),
                None => {
                    grads.insert(name, grad);
                }
            }
        }
    }
    Ok((total * scale, grads))
}

/// Computes the batch loss and applies one Adam update. A non-finite loss
/// leaves the parameters untouched and is reported as an error.
pub fn train_step<B: Borrow<TrainExample>>(
    batch: &[B],
    store: &mut ParamStore,
    opt: &mut OptimizerState,
    cfg: &ModelConfig,
) -> Result<f64> {
    let (loss, grads) = batch_gradients(batch, store, cfg)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            dump: "-".into(),
        });
    }
    adam_step(store, &grads, opt)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{tiny_config, tiny_data};
    use crate::model::inputs::encode_instance;
    use crate::model::{init_model_params, Variant};

    fn examples(n: usize, cfg: &ModelConfig) -> (Vec<TrainExample>, usize) {
        let data = tiny_data(n);
        let ex = data
            .train
            .iter()
            .map(|i| {
                TrainExample::new(
                    encode_instance(i, Some(&data.kb), cfg).unwrap(),
                    &data.vocab,
                    cfg.max_steps,
                )
            })
            .collect();
        (ex, data.vocab.len())
    }

    #[test]
    fn batch_gradient_is_mean_of_instance_gradients() {
        let cfg = tiny_config(Variant::Ektvqa);
        let (ex, h) = examples(3, &cfg);
        let store = init_model_params(&cfg, h).unwrap();
        let (loss, grads) = batch_gradients(&ex, &store, &cfg).unwrap();
        let mut mean_loss = 0.0;
        let mut singles = Vec::new();
        for e in &ex {
            let (l, g) = batch_gradients(std::slice::from_ref(e), &store, &cfg).unwrap();
            mean_loss += l / 3.0;
            singles.push(g);
        }
        assert!((loss - mean_loss).abs() < 1e-12);
        for (name, g) in &grads {
            for (i, v) in g.data().iter().enumerate() {
                let m: f64 = singles.iter().map(|s| s[name].data()[i]).sum::<f64>() / 3.0;
                assert!((v - m).abs() < 1e-12, "{name}[{i}]");
            }
        }
    }

    #[test]
    fn non_finite_loss_leaves_parameters_alone() {
        let cfg = tiny_config(Variant::Tvqa);
        let (ex, h) = examples(2, &cfg);
        let mut store = init_model_params(&cfg, h).unwrap();
        store.get_mut(crate::model::forward::VOCAB_B).unwrap().data_mut()[0] = f64::NAN;
        let before = store.clone();
        let mut opt = OptimizerState::new(1e-3);
        let err = train_step(&ex, &mut store, &mut opt, &cfg).unwrap_err();
        assert_eq!(err.code(), "E_NAN_LOSS");
        assert_eq!(opt.step(), 0);
        assert_eq!(store.names().collect::<Vec<_>>(), before.names().collect::<Vec<_>>());
    }

    #[test]
    fn small_set_is_fit() {
        let cfg = tiny_config(Variant::Ektvqa);
        let (ex, h) = examples(50, &cfg);
        let mut store = init_model_params(&cfg, h).unwrap();
        let mut opt = OptimizerState::new(3e-3);
        let mut epoch_loss = Vec::new();
        for _ in 0..200 {
            let mut total = 0.0;
            for b in ex.chunks(8) {
                total += train_step(b, &mut store, &mut opt, &cfg).unwrap();
            }
            epoch_loss.push(total / ex.len().div_ceil(8) as f64);
        }
        let (first, last) = (epoch_loss[0], *epoch_loss.last().unwrap());
        assert!(last <= 0.1 * first, "loss {first} -> {last}");
    }
}
