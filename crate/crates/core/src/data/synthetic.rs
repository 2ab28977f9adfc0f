//! Generator for a knowledge-discrimination task.
//!
//! Every image belongs to a scene domain whose words label its objects. Each
//! OCR token is an invented word with several knowledge-base meanings of the
//! form "`<category>` seen near `<domain words>`", one per domain it can
//! appear in. The question asks for one category; exactly one token has that
//! category in the meaning that fits the scene. Tokens are reused within a
//! split, answering in one image and acting as distractors in others, so
//! neither the token nor the asked category alone identifies the answer.
//! The two splits draw from disjoint token pools.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::emit_dataset;
use crate::error::{Error, Result};
use crate::features::types::{BBox, FeatureDims, OcrToken, QAInstance, VisualObject};
use crate::knowledge::{KbEntry, KbRecord, KbSnapshot, MAX_CANDIDATES};
use crate::model::AnswerVocab;

pub const CATEGORIES: [&str; 12] = [
    "brand", "drink", "city", "band", "airline", "bank", "team", "game", "car", "phone", "food", "store",
];

pub const DOMAINS: [[&str; 3]; 8] = [
    ["stove", "kettle", "sink"],
    ["lamp", "curb", "hydrant"],
    ["sand", "wave", "towel"],
    ["desk", "monitor", "stapler"],
    ["seat", "field", "scoreboard"],
    ["pine", "moss", "trail"],
    ["wrench", "tire", "jack"],
    ["runway", "gate", "luggage"],
];

const FILLER: [&str; 16] = [
    "yes", "no", "red", "blue", "green", "white", "black", "one", "two", "three", "open", "closed", "left", "right",
    "top", "bottom",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_instances: usize,
    /// Number of question categories (entity families).
    pub n_families: usize,
    pub n_domains: usize,
    /// Answer vocabulary size including the three markers.
    pub vocab_size: usize,
    /// OCR tokens per image besides the answer.
    pub distractors: usize,
    /// Knowledge-base meanings per token, each in a different domain with a
    /// different category.
    pub meanings_per_token: usize,
    /// Average number of images each token appears in.
    pub uses_per_token: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_instances: 600,
            n_families: 8,
            n_domains: 6,
            vocab_size: 19,
            distractors: 3,
            meanings_per_token: 3,
            uses_per_token: 10,
            train_fraction: 5.0 / 6.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if !(2..=CATEGORIES.len()).contains(&self.n_families) {
            return err("n_families must be between 2 and 12");
        }
        if !(2..=DOMAINS.len()).contains(&self.n_domains) {
            return err("n_domains must be between 2 and 8");
        }
        if self.distractors + 1 > self.n_families {
            return err("needs more families than OCR tokens");
        }
        let max_meanings = MAX_CANDIDATES.min(self.n_domains).min(self.n_families);
        if !(1..=max_meanings).contains(&self.meanings_per_token) {
            return err("meanings_per_token must be between 1 and min(4, n_domains, n_families)");
        }
        if self.uses_per_token == 0 {
            return err("uses_per_token must be positive");
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return err("train_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub train: Vec<QAInstance>,
    pub val: Vec<QAInstance>,
    pub kb: KbSnapshot,
    pub vocab: AnswerVocab,
}

struct WordMaker {
    used: BTreeSet<String>,
}

impl WordMaker {
    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        const C: &[u8] = b"bcdfghjklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let mut w = String::new();
            for _ in 0..rng.gen_range(2..=3) {
                w.push(C[rng.gen_range(0..C.len())] as char);
                w.push(V[rng.gen_range(0..V.len())] as char);
            }
            w.push(C[rng.gen_range(0..C.len())] as char);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn meaning(token: &str, category: &str, domain: usize) -> KbEntry {
    let mut name = token.to_string();
    name[..1].make_ascii_uppercase();
    KbEntry {
        name: format!("{name} ({category})"),
        description: format!("{category} seen near {}", DOMAINS[domain].join(" ")),
        attribute: String::new(),
    }
}

fn region(rng: &mut ChaCha8Rng, w: f64, h: f64) -> BBox {
    let x1 = rng.gen_range(0.0..w * 0.8).floor();
    let y1 = rng.gen_range(0.0..h * 0.8).floor();
    let x2 = (x1 + rng.gen_range(20.0..w * 0.2)).min(w).floor();
    let y2 = (y1 + rng.gen_range(10.0..h * 0.2)).min(h).floor();
    BBox::new(x1, y1, x2, y2, w, h).expect("inside image")
}

/// A token together with its category in each domain it can appear in.
struct PoolToken {
    text: String,
    meanings: BTreeMap<usize, usize>,
}

fn make_pool(spec: &SyntheticSpec, size: usize, words: &mut WordMaker, rng: &mut ChaCha8Rng) -> Vec<PoolToken> {
    let domains: Vec<usize> = (0..spec.n_domains).collect();
    let cats: Vec<usize> = (0..spec.n_families).collect();
    (0..size)
        .map(|_| {
            let text = words.fresh(rng);
            let ds = domains.choose_multiple(rng, spec.meanings_per_token);
            let cs = cats.choose_multiple(rng, spec.meanings_per_token);
            PoolToken {
                text,
                meanings: ds.copied().zip(cs.copied()).collect(),
            }
        })
        .collect()
}

fn make_split(
    spec: &SyntheticSpec,
    count: usize,
    first_id: usize,
    words: &mut WordMaker,
    rng: &mut ChaCha8Rng,
    dims: &FeatureDims,
    records: &mut Vec<KbRecord>,
) -> Result<Vec<QAInstance>> {
    let (w, h) = (640.0, 480.0);
    let n_ocr = spec.distractors + 1;
    let size = (count * n_ocr)
        .div_ceil(spec.uses_per_token)
        .max(spec.n_domains * n_ocr);
    let pool = make_pool(spec, size, words, rng);

    // category -> tokens, per domain
    let mut by_domain: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); spec.n_domains];
    for (t, tok) in pool.iter().enumerate() {
        for (&d, &c) in &tok.meanings {
            by_domain[d].entry(c).or_default().push(t);
        }
    }
    let feasible: Vec<usize> = (0..spec.n_domains).filter(|&d| by_domain[d].len() >= n_ocr).collect();
    if count > 0 && feasible.is_empty() {
        return Err(Error::Config(
            "synthetic spec: token pool too small for the distractor count".into(),
        ));
    }

    let mut used = vec![false; pool.len()];
    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let domain = *feasible.choose(rng).expect("nonempty");
        let cats: Vec<usize> = by_domain[domain].keys().copied().collect();
        let chosen: Vec<usize> = cats.choose_multiple(rng, n_ocr).copied().collect();
        let asked = chosen[0];
        let mut picks: Vec<(usize, bool)> = chosen
            .iter()
            .map(|c| (*by_domain[domain][c].choose(rng).expect("nonempty"), *c == asked))
            .collect();
        picks.shuffle(rng);

        let ocr = picks
            .iter()
            .enumerate()
            .map(|(k, &(t, _))| {
                used[t] = true;
                OcrToken::new(&pool[t].text, region(rng, w, h), k, None, dims)
            })
            .collect::<Result<Vec<_>>>()?;
        let target = picks.iter().position(|p| p.1).expect("asked category present");
        let objects = DOMAINS[domain]
            .iter()
            .map(|label| VisualObject::new(label, region(rng, w, h), None, dims))
            .collect::<Result<Vec<_>>>()?;
        let id = first_id + i;
        instances.push(QAInstance {
            question_id: format!("syn{id:05}"),
            image_id: format!("img{id:05}"),
            question: ["what", CATEGORIES[asked], "is", "shown"].map(String::from).to_vec(),
            objects,
            answers: vec![ocr[target].text.clone(); 10],
            ocr,
        });
    }

    for (tok, _) in pool.iter().zip(&used).filter(|(_, u)| **u) {
        let mut candidates: Vec<KbEntry> = tok
            .meanings
            .iter()
            .map(|(&d, &c)| meaning(&tok.text, CATEGORIES[c], d))
            .collect();
        candidates.shuffle(rng);
        records.push(KbRecord {
            query: tok.text.clone(),
            candidates,
        });
    }
    Ok(instances)
}

pub fn gen_synthetic(spec: &SyntheticSpec, dims: &FeatureDims) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut words = WordMaker { used: BTreeSet::new() };
    let mut records = Vec::new();
    let n_train = ((spec.n_instances as f64 * spec.train_fraction).round() as usize).min(spec.n_instances);
    let train = make_split(spec, n_train, 0, &mut words, &mut rng, dims, &mut records)?;
    let val = make_split(
        spec,
        spec.n_instances - n_train,
        n_train,
        &mut words,
        &mut rng,
        dims,
        &mut records,
    )?;
    Ok(SyntheticData {
        train,
        val,
        kb: KbSnapshot::from_records(records),
        vocab: AnswerVocab::new(FILLER.iter().take(spec.vocab_size.saturating_sub(3))),
    })
}

/// Writes `train.jsonl`, `val.jsonl`, `kb.jsonl` and `vocab.txt` into `dir`.
pub fn write_synthetic(dir: &Path, data: &SyntheticData, dims: &FeatureDims) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    emit_dataset(&dir.join("train.jsonl"), &data.train, dims)?;
    emit_dataset(&dir.join("val.jsonl"), &data.val, dims)?;
    data.kb.save(&dir.join("kb.jsonl"))?;
    data.vocab.save(&dir.join("vocab.txt"))
}
