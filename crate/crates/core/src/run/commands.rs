//! File-level drivers behind the command line subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::fit::{fit, predict, EpochLog, FitSettings};
use crate::data::{gen_synthetic, ingest_dataset, write_synthetic};
use crate::error::{Error, Result};
use crate::eval::{write_predictions, EvalReport};
use crate::features::featfile::{load_feature_file, ImageFeatures};
use crate::features::types::QAInstance;
use crate::knowledge::pipeline::fact_rows;
use crate::knowledge::{prepare_knowledge, select_facts, KbSnapshot};
use crate::model::{encode_instance, init_model_params, AnswerVocab, EncodedInstance, ModelConfig, TrainExample};
use crate::nn::{checkpoint, ParamStore};

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_features(cfg: &RunConfig) -> Result<Option<BTreeMap<String, ImageFeatures>>> {
    cfg.data
        .features
        .as_ref()
        .map(|p| load_feature_file(&cfg.resolve(p), &cfg.features))
        .transpose()
}

pub fn load_split(cfg: &RunConfig, path: &Path) -> Result<Vec<QAInstance>> {
    let features = load_features(cfg)?;
    ingest_dataset(&cfg.resolve(path), &cfg.ingest_options(), features.as_ref())
}

pub fn load_vocab(cfg: &RunConfig) -> Result<AnswerVocab> {
    AnswerVocab::load(&cfg.resolve(&cfg.data.vocab))
}

/// The snapshot for knowledge variants; `None` for the baseline.
pub fn load_kb(cfg: &RunConfig) -> Result<Option<KbSnapshot>> {
    if !cfg.variant.uses_knowledge() {
        return Ok(None);
    }
    let path = cfg
        .data
        .kb
        .as_ref()
        .ok_or_else(|| Error::Config(format!("variant {} needs data.kb", cfg.variant)))?;
    KbSnapshot::load(&cfg.resolve(path), cfg.data.kb_raw_cap).map(Some)
}

pub fn encode_all(
    instances: &[QAInstance],
    kb: Option<&KbSnapshot>,
    cfg: &ModelConfig,
) -> Result<Vec<EncodedInstance>> {
    instances.iter().map(|i| encode_instance(i, kb, cfg)).collect()
}

pub fn fit_settings(cfg: &RunConfig) -> FitSettings {
    let t = &cfg.train;
    FitSettings {
        lr: t.lr,
        epochs: t.epochs,
        batch_size: t.batch_size,
        plateau_factor: t.plateau_factor,
        plateau_patience: t.plateau_patience,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val: f64,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub history: Vec<EpochLog>,
}

/// Trains `cfg.variant`, appending one JSON line per epoch to
/// `<out_dir>/<variant>.train_log.jsonl` and saving the best validation
/// parameters to `<out_dir>/<variant>.ckpt`.
pub fn run_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let model = cfg.model_config();
    let vocab = load_vocab(cfg)?;
    let kb = load_kb(cfg)?;
    let train_set = load_split(cfg, &cfg.data.train)?;
    let val_set = load_split(cfg, &cfg.data.val)?;
    let train: Vec<TrainExample> = encode_all(&train_set, kb.as_ref(), &model)?
        .into_iter()
        .map(|enc| TrainExample::new(enc, &vocab, model.max_steps))
        .collect();
    let val = encode_all(&val_set, kb.as_ref(), &model)?;

    let out_dir = cfg.resolve(&cfg.data.out_dir);
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let log_path = cfg.out_path(&format!("{}.train_log.jsonl", cfg.variant));
    let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    let result = fit(
        &model,
        &fit_settings(cfg),
        &vocab,
        &train,
        &val,
        Some(&out_dir),
        |line| {
            let text = serde_json::to_string(line).expect("log line serializes");
            if let Err(e) = writeln!(log_file, "{text}") {
                log_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    let ckpt = cfg.checkpoint_path();
    checkpoint::save(&result.best, &ckpt)?;
    Ok(TrainSummary {
        best_epoch: result.best_epoch,
        best_val: result.best_val,
        checkpoint: ckpt,
        log: log_path,
        history: result.history,
    })
}

/// Loads a checkpoint and checks it against the layout `cfg` expects.
pub fn load_checked(path: &Path, cfg: &ModelConfig, vocab_size: usize) -> Result<ParamStore> {
    let store = checkpoint::load(path)?;
    let expected = init_model_params(cfg, vocab_size)?;
    let diff = expected.layout_diff(&store);
    if diff.is_empty() {
        Ok(store)
    } else {
        Err(Error::CheckpointMismatch(diff.join("\n")))
    }
}

/// Greedy decoding over `eval.dataset` (default `data.val`), writing
/// `<variant>.predictions.jsonl` and `<variant>.report.json`.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let model = cfg.model_config();
    let vocab = load_vocab(cfg)?;
    let kb = load_kb(cfg)?;
    let ckpt = cfg
        .eval
        .checkpoint
        .as_ref()
        .map(|p| cfg.resolve(p))
        .unwrap_or_else(|| cfg.checkpoint_path());
    let store = load_checked(&ckpt, &model, vocab.len())?;
    let dataset = cfg.eval.dataset.as_ref().unwrap_or(&cfg.data.val);
    let instances = load_split(cfg, dataset)?;
    let encoded = encode_all(&instances, kb.as_ref(), &model)?;
    let preds = predict(&store, &model, &vocab, &encoded)?;
    let report = EvalReport::compute(cfg.variant.name(), &instances, &preds, &vocab)?;

    let pred_path = cfg.out_path(&format!("{}.predictions.jsonl", cfg.variant));
    create_parent(&pred_path)?;
    write_predictions(&pred_path, &preds)?;
    write_text(
        &cfg.out_path(&format!("{}.report.json", cfg.variant)),
        &report.to_text(),
    )?;
    Ok(report)
}

/// Builds parameters for `target` from `source`: shared names are copied,
/// names the target lacks are dropped and names the source lacks keep the
/// target's seeded initialization. Fails when nothing is shared or a shared
/// name changes shape.
pub fn transfer_params(source: &ParamStore, target: &ModelConfig, vocab_size: usize) -> Result<ParamStore> {
    let mut out = init_model_params(target, vocab_size)?;
    let mut shared = 0;
    for (name, t) in source.iter() {
        let Some(slot) = out.get_mut(name) else {
            continue;
        };
        if slot.shape() != t.shape() {
            return Err(Error::CheckpointMismatch(format!(
                "~ {name} {:?} vs {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t.clone();
        shared += 1;
    }
    if shared == 0 {
        return Err(Error::Config("source and target share no parameters".into()));
    }
    Ok(out)
}

/// Converts `transfer.source` (default: the checkpoint of
/// `transfer.source_variant`) into a checkpoint for `variant`.
pub fn run_transfer(cfg: &RunConfig) -> Result<PathBuf> {
    let source_variant = cfg.transfer.source_variant;
    let source_path = match (&cfg.transfer.source, source_variant) {
        (Some(p), _) => cfg.resolve(p),
        (None, Some(v)) => cfg.out_path(&format!("{v}.ckpt")),
        (None, None) => {
            return Err(Error::Config(
                "transfer needs transfer.source or transfer.source_variant".into(),
            ))
        }
    };
    let vocab = load_vocab(cfg)?;
    let source = checkpoint::load(&source_path)?;
    let out = transfer_params(&source, &cfg.model_config(), vocab.len())?;
    let output = match &cfg.transfer.output {
        Some(p) => cfg.resolve(p),
        None => {
            let from = source_variant.map_or_else(|| "source".to_string(), |v| v.to_string());
            cfg.out_path(&format!("{}_from_{from}.ckpt", cfg.variant))
        }
    };
    checkpoint::save(&out, &output)?;
    Ok(output)
}

/// Runs lookup, filtering, binding and selection over `eval.dataset`
/// (default `data.val`) and writes the fact table. Contextual selection
/// uses `eval.checkpoint` when given, else seeded initial weights.
pub fn run_kb_filter(cfg: &RunConfig) -> Result<(PathBuf, usize)> {
    let model = cfg.model_config();
    let policy = model
        .variant
        .selection()
        .ok_or_else(|| Error::Config(format!("variant {} uses no knowledge", model.variant)))?;
    let kb = load_kb(cfg)?.expect("knowledge variant");
    let vocab = load_vocab(cfg)?;
    let store = match &cfg.eval.checkpoint {
        Some(p) => load_checked(&cfg.resolve(p), &model, vocab.len())?,
        None => init_model_params(&model, vocab.len())?,
    };
    let dataset = cfg.eval.dataset.as_ref().unwrap_or(&cfg.data.val);
    let instances = load_split(cfg, dataset)?;
    let path = cfg.out_path(&format!("{}.facts.jsonl", cfg.variant));
    create_parent(&path)?;
    let mut text = String::new();
    let mut rows = 0;
    for inst in &instances {
        let prepared = prepare_knowledge(inst, &kb, &cfg.features)?;
        let facts = select_facts(&prepared, policy, &store, cfg.seed, &cfg.features)?;
        for row in fact_rows(&prepared, &facts) {
            text.push_str(&serde_json::to_string(&row)?);
            text.push('\n');
            rows += 1;
        }
    }
    write_text(&path, &text)?;
    Ok((path, rows))
}

/// Writes the synthetic task (`train.jsonl`, `val.jsonl`, `kb.jsonl`,
/// `vocab.txt`) into the data root.
pub fn run_gen_synthetic(cfg: &RunConfig) -> Result<PathBuf> {
    let data = gen_synthetic(&cfg.synthetic, &cfg.features)?;
    let dir = cfg.data_root();
    write_synthetic(&dir, &data, &cfg.features)?;
    Ok(dir)
}

/// Tabulates every `*.report.json` in the output directory into
/// `summary.txt` and returns the table.
pub fn run_report(cfg: &RunConfig) -> Result<String> {
    let dir = cfg.resolve(&cfg.data.out_dir);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".report.json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no *.report.json files in {}", dir.display())));
    }
    let mut table = format!(
        "{:<14} {:>9} {:>9} {:>7} {:>8} {:>8} {:>8}\n",
        "variant", "questions", "accuracy", "anls", "ocr_ub", "vocab_ub", "both_ub"
    );
    for p in &paths {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let r = EvalReport::from_text(&text)?;
        let _ = writeln!(
            table,
            "{:<14} {:>9} {:>9.2} {:>7.4} {:>8.2} {:>8.2} {:>8.2}",
            r.variant, r.questions, r.accuracy, r.anls, r.ocr_ub, r.vocab_ub, r.both_ub
        );
    }
    write_text(&dir.join("summary.txt"), &table)?;
    Ok(table)
}
