//! Run configuration: one TOML file plus `--section.key value` overrides.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{IngestOptions, SyntheticSpec};
use crate::error::{Error, Result};
use crate::features::FeatureDims;
use crate::knowledge::kb::DEFAULT_RAW_CAP;
use crate::model::{ModelConfig, Variant};

/// Environment variable naming the directory relative data paths resolve
/// against when `data.root` is unset.
pub const DATA_ROOT_ENV: &str = "KVQA_DATA_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub validity_hidden: usize,
    pub max_steps: usize,
    pub open_knowledge: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            validity_hidden: m.validity_hidden,
            max_steps: m.max_steps,
            open_knowledge: m.open_knowledge,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Base directory for relative paths; falls back to `$KVQA_DATA_ROOT`.
    pub root: Option<PathBuf>,
    pub train: PathBuf,
    pub val: PathBuf,
    pub vocab: PathBuf,
    /// Knowledge-base snapshot; must be absent for the knowledge-free variant.
    pub kb: Option<PathBuf>,
    /// Optional per-image region feature file.
    pub features: Option<PathBuf>,
    /// Where checkpoints, logs, predictions and reports go.
    pub out_dir: PathBuf,
    pub l_max: usize,
    pub m_max: usize,
    pub n_max: usize,
    /// Required ground-truth count per question; 0 disables the check.
    pub answers_per_question: usize,
    pub kb_raw_cap: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        let o = IngestOptions::default();
        Self {
            root: None,
            train: "train.jsonl".into(),
            val: "val.jsonl".into(),
            vocab: "vocab.txt".into(),
            kb: None,
            features: None,
            out_dir: "runs".into(),
            l_max: o.l_max,
            m_max: o.m_max,
            n_max: o.n_max,
            answers_per_question: o.answers_per_question.unwrap_or(0),
            kb_raw_cap: DEFAULT_RAW_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
}

impl Default for TrainSection {
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

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Checkpoint to evaluate; defaults to the best checkpoint of `variant`.
    pub checkpoint: Option<PathBuf>,
    /// Dataset to evaluate; defaults to `data.val`.
    pub dataset: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub source: Option<PathBuf>,
    pub source_variant: Option<Variant>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: Variant,
    pub model: ModelSection,
    pub features: FeatureDims,
    pub data: DataSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub transfer: TransferSection,
    pub synthetic: SyntheticSpec,
}

impl RunConfig {
    /// Parses TOML text, applies `(dotted key, raw value)` overrides and
    /// validates the result.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut value: toml::Value = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let defaults = toml::Value::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        for (key, raw) in overrides {
            apply_override(&mut value, &defaults, key, raw)?;
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let cfg = cfg.normalized();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults when `None`).
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    // An empty string clears an optional path.
    fn normalized(mut self) -> Self {
        let clear = |p: &mut Option<PathBuf>| {
            if p.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                *p = None;
            }
        };
        clear(&mut self.data.root);
        clear(&mut self.data.kb);
        clear(&mut self.data.features);
        clear(&mut self.eval.checkpoint);
        clear(&mut self.eval.dataset);
        clear(&mut self.transfer.source);
        clear(&mut self.transfer.output);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.variant == Variant::Tvqa && self.data.kb.is_some() {
            return Err(Error::Config("variant TVQA uses no knowledge; remove data.kb".into()));
        }
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if !(t.plateau_factor > 0.0 && t.plateau_factor <= 1.0) {
            return Err(Error::Config("train.plateau_factor must lie in (0, 1]".into()));
        }
        self.synthetic.validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            variant: self.variant,
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            validity_hidden: m.validity_hidden,
            max_steps: m.max_steps,
            open_knowledge: m.open_knowledge,
            dims: self.features,
            seed: self.seed,
        }
    }

    pub fn ingest_options(&self) -> IngestOptions {
        let d = &self.data;
        IngestOptions {
            l_max: d.l_max,
            m_max: d.m_max,
            n_max: d.n_max,
            answers_per_question: (d.answers_per_question > 0).then_some(d.answers_per_question),
            dims: self.features,
        }
    }

    /// `data.root`, else `$KVQA_DATA_ROOT`, else the working directory.
    pub fn data_root(&self) -> PathBuf {
        self.data
            .root
            .clone()
            .or_else(|| env::var_os(DATA_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_root().join(p)
        }
    }

    pub fn out_path(&self, file: &str) -> PathBuf {
        self.resolve(&self.data.out_dir).join(file)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_path(&format!("{}.ckpt", self.variant))
    }
}

fn apply_override(root: &mut toml::Value, defaults: &toml::Value, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key {key:?}")));
    }
    let template = parts.iter().try_fold(defaults, |v, p| v.get(p));
    let value = typed_value(key, raw, template)?;
    let (last, parents) = parts.split_last().expect("nonempty");
    let mut cur = root;
    for p in parents {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a table")))?;
        cur = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    cur.as_table_mut()
        .ok_or_else(|| Error::Config(format!("{key}: parent is not a table")))?
        .insert(last.to_string(), value);
    Ok(())
}

/// Converts a raw flag value to the type the default config uses at that
/// key; keys without a default (unset optional paths) take strings.
fn typed_value(key: &str, raw: &str, template: Option<&toml::Value>) -> Result<toml::Value> {
    let bad = |ty: &str| Error::Config(format!("--{key}: expected {ty}, got {raw:?}"));
    Ok(match template {
        Some(toml::Value::Integer(_)) => toml::Value::Integer(raw.parse().map_err(|_| bad("an integer"))?),
        Some(toml::Value::Float(_)) => toml::Value::Float(raw.parse().map_err(|_| bad("a number"))?),
        Some(toml::Value::Boolean(_)) => toml::Value::Boolean(raw.parse().map_err(|_| bad("true or false"))?),
        Some(toml::Value::Table(_)) | Some(toml::Value::Array(_)) => return Err(bad("a scalar key")),
        _ => toml::Value::String(raw.to_string()),
    })
}

/// Splits `--key value` pairs; a bare `--flag` followed by another flag or
/// nothing is an error.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, got {a:?}")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            continue;
        }
        let v = it
            .next()
            .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
        out.push((key.to_string(), v.clone()));
    }
    Ok(out)
}
