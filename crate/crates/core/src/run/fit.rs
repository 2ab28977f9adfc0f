//! In-memory training loop with plateau decay and best-checkpoint tracking.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{answer_accuracy, PredictionLine};
use crate::model::{
    generate_answer, init_model_params, train_step, AnswerVocab, EncodedInstance, ModelConfig, TrainExample,
};
use crate::nn::{OptimizerState, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 20,
            batch_size: 8,
            plateau_factor: 0.5,
            plateau_patience: 3,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Percent.
    pub val_accuracy: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Parameters of the best validation epoch.
    pub best: ParamStore,
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochLog>,
}

/// Greedy predictions in instance order.
pub fn predict(
    store: &ParamStore,
    cfg: &ModelConfig,
    vocab: &AnswerVocab,
    data: &[EncodedInstance],
) -> Result<Vec<PredictionLine>> {
    data.iter()
        .map(|enc| {
            Ok(PredictionLine {
                question_id: enc.question_id.clone(),
                answer: generate_answer(store, cfg, vocab, enc)?.answer,
            })
        })
        .collect()
}

/// Mean answer accuracy in percent; an empty set scores 0.
pub fn accuracy(store: &ParamStore, cfg: &ModelConfig, vocab: &AnswerVocab, data: &[EncodedInstance]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let preds = predict(store, cfg, vocab, data)?;
    let total: f64 = preds
        .iter()
        .zip(data)
        .map(|(p, e)| answer_accuracy(&p.answer, &e.answers))
        .sum();
    Ok(100.0 * total / data.len() as f64)
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order
}

#[derive(Serialize)]
struct NanDump<'a> {
    epoch: usize,
    batch: usize,
    lr: f64,
    question_ids: Vec<&'a str>,
    non_finite_params: Vec<&'a str>,
    max_abs_param: Vec<(&'a str, f64)>,
}

fn write_nan_dump(
    dir: Option<&Path>,
    epoch: usize,
    batch: usize,
    lr: f64,
    examples: &[&TrainExample],
    store: &ParamStore,
) -> String {
    let Some(dir) = dir else {
        return "-".into();
    };
    let dump = NanDump {
        epoch,
        batch,
        lr,
        question_ids: examples.iter().map(|e| e.enc.question_id.as_str()).collect(),
        non_finite_params: store.iter().filter(|(_, t)| !t.is_finite()).map(|(n, _)| n).collect(),
        max_abs_param: store
            .iter()
            .map(|(n, t)| (n, t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))))
            .collect(),
    };
    let path = dir.join(format!("nan_dump_e{epoch}_b{batch}.json"));
    let written = fs::create_dir_all(dir).is_ok()
        && serde_json::to_string_pretty(&dump).is_ok_and(|text| fs::write(&path, text).is_ok());
    if written {
        path.display().to_string()
    } else {
        "-".into()
    }
}

/// Trains from a fresh initialization. Batches follow a per-epoch shuffle
/// derived from the config seed; the learning rate is multiplied by
/// `plateau_factor` whenever validation accuracy has not improved for
/// `plateau_patience` epochs. `on_epoch` sees every log line as it is made.
pub fn fit(
    cfg: &ModelConfig,
    settings: &FitSettings,
    vocab: &AnswerVocab,
    train: &[TrainExample],
    val: &[EncodedInstance],
    dump_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitResult> {
    if settings.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut store = init_model_params(cfg, vocab.len())?;
    let mut opt = OptimizerState::new(settings.lr);
    let mut best = (store.clone(), 0, f64::NEG_INFINITY);
    let mut stale = 0;
    let mut history = Vec::with_capacity(settings.epochs);

    for epoch in 1..=settings.epochs {
        let order = epoch_order(cfg.seed, epoch, train.len());
        let mut total = 0.0;
        let mut batches = 0;
        for (b, idx) in order.chunks(settings.batch_size).enumerate() {
            let batch: Vec<&TrainExample> = idx.iter().map(|&i| &train[i]).collect();
            match train_step(&batch, &mut store, &mut opt, cfg) {
                Ok(loss) => total += loss,
                Err(Error::NonFiniteLoss { .. }) => {
                    let dump = write_nan_dump(dump_dir, epoch, b, opt.lr, &batch, &store);
                    return Err(Error::NonFiniteLoss { epoch, batch: b, dump });
                }
                Err(e) => return Err(e),
            }
            batches += 1;
        }
        let val_accuracy = accuracy(&store, cfg, vocab, val)?;
        let line = EpochLog {
            epoch,
            loss: if batches > 0 { total / batches as f64 } else { 0.0 },
            val_accuracy,
            lr: opt.lr,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} val {:.2}% lr {:.2e}",
            line.loss,
            line.val_accuracy,
            line.lr
        );
        on_epoch(&line);
        history.push(line);

        if val_accuracy > best.2 {
            best = (store.clone(), epoch, val_accuracy);
            stale = 0;
        } else {
            stale += 1;
            if stale >= settings.plateau_patience {
                opt.lr *= settings.plateau_factor;
                stale = 0;
            }
        }
    }
    Ok(FitResult {
        best: best.0,
        best_epoch: best.1,
        best_val: best.2.max(0.0),
        history,
    })
}
