//! Line-delimited JSON datasets.
//!
//! ```json
//! {"question_id": "q1", "image_id": "i1", "image_w": 640, "image_h": 480,
//!  "question": "what brand is shown?",
//!  "objects": [{"label": "car", "bbox": [0, 0, 10, 10]}],
//!  "ocr": [{"text": "stop", "bbox": [5, 5, 20, 12], "reading_order": 0}],
//!  "answers": ["stop", "..."]}
//! ```
//!
//! Region vectors may be inlined as `"fr": [...]`, joined from a feature
//! file by image id, or left out, in which case text-keyed stubs are used.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::embed::{stub_text_embed, REGION};
use crate::features::featfile::ImageFeatures;
use crate::features::types::{BBox, FeatureDims, OcrToken, QAInstance, VisualObject};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectJson {
    pub label: String,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fr: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcrJson {
    pub text: String,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reading_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fr: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub question_id: String,
    pub image_id: String,
    pub image_w: f64,
    pub image_h: f64,
    pub question: String,
    #[serde(default)]
    pub objects: Vec<ObjectJson>,
    #[serde(default)]
    pub ocr: Vec<OcrJson>,
    pub answers: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub l_max: usize,
    pub m_max: usize,
    pub n_max: usize,
    /// Required answer count per question, if any.
    pub answers_per_question: Option<usize>,
    pub dims: FeatureDims,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            l_max: 20,
            m_max: 100,
            n_max: 50,
            answers_per_question: Some(10),
            dims: FeatureDims::default(),
        }
    }
}

/// Lowercased words with surrounding punctuation removed.
pub fn tokenize_question(q: &str) -> Vec<String> {
    q.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn record_to_instance(
    rec: RecordJson,
    opts: &IngestOptions,
    features: Option<&ImageFeatures>,
) -> std::result::Result<QAInstance, String> {
    if let Some(k) = opts.answers_per_question {
        if rec.answers.len() != k {
            return Err(format!("expected {k} answers, found {}", rec.answers.len()));
        }
    }
    if rec.answers.is_empty() {
        return Err("no answers".into());
    }
    let bbox = |b: &[f64; 4]| BBox::new(b[0], b[1], b[2], b[3], rec.image_w, rec.image_h).map_err(|e| e.to_string());
    let fr_at = |list: Option<&Vec<crate::features::featfile::RegionRecord>>, i: usize| {
        list.and_then(|l| l.get(i)).map(|r| r.fr.clone())
    };

    let mut question = tokenize_question(&rec.question);
    if question.len() > opts.l_max {
        log::warn!("{}: question truncated to {} words", rec.question_id, opts.l_max);
        question.truncate(opts.l_max);
    }
    if rec.objects.len() > opts.m_max {
        log::warn!(
            "{}: {} objects truncated to {}",
            rec.question_id,
            rec.objects.len(),
            opts.m_max
        );
    }
    let objects = rec
        .objects
        .iter()
        .take(opts.m_max)
        .enumerate()
        .map(|(i, o)| {
            let fr = o.fr.clone().or_else(|| fr_at(features.map(|f| &f.objects), i));
            VisualObject::new(&o.label, bbox(&o.bbox)?, fr, &opts.dims).map_err(|e| e.to_string())
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;

    let mut ocr = rec
        .ocr
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let fr = t.fr.clone().or_else(|| fr_at(features.map(|f| &f.ocr), i));
            OcrToken::new(&t.text, bbox(&t.bbox)?, t.reading_order.unwrap_or(i), fr, &opts.dims)
                .map_err(|e| e.to_string())
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    ocr.sort_by_key(|t| t.reading_order);
    if ocr.len() > opts.n_max {
        log::warn!(
            "{}: {} OCR tokens truncated to {}",
            rec.question_id,
            ocr.len(),
            opts.n_max
        );
        ocr.truncate(opts.n_max);
    }
    Ok(QAInstance {
        question_id: rec.question_id,
        image_id: rec.image_id,
        question,
        objects,
        ocr,
        answers: rec.answers,
    })
}

pub fn ingest_dataset(
    path: &Path,
    opts: &IngestOptions,
    features: Option<&BTreeMap<String, ImageFeatures>>,
) -> Result<Vec<QAInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |msg: String| Error::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let rec: RecordJson = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        let feats = features.and_then(|f| f.get(&rec.image_id));
        out.push(record_to_instance(rec, opts, feats).map_err(schema)?);
    }
    log::info!("{}: {} instances", path.display(), out.len());
    Ok(out)
}

fn image_size(inst: &QAInstance) -> (f64, f64) {
    inst.objects
        .iter()
        .map(|o| o.bbox)
        .chain(inst.ocr.iter().map(|t| t.bbox))
        .next()
        .map_or((1.0, 1.0), |b| (b.image_w, b.image_h))
}

fn bbox_array(b: &BBox) -> [f64; 4] {
    [b.x1, b.y1, b.x2, b.y2]
}

/// Inverse of [`ingest_dataset`]; stub region vectors are left out.
pub fn instance_to_record(inst: &QAInstance, dims: &FeatureDims) -> RecordJson {
    let (image_w, image_h) = image_size(inst);
    RecordJson {
        question_id: inst.question_id.clone(),
        image_id: inst.image_id.clone(),
        image_w,
        image_h,
        question: inst.question.join(" "),
        objects: inst
            .objects
            .iter()
            .map(|o| ObjectJson {
                label: o.label.clone(),
                bbox: bbox_array(&o.bbox),
                fr: (o.fr_vec != stub_text_embed(&format!("object {}", o.label), dims.region, REGION))
                    .then(|| o.fr_vec.clone()),
            })
            .collect(),
        ocr: inst
            .ocr
            .iter()
            .map(|t| OcrJson {
                text: t.text.clone(),
                bbox: bbox_array(&t.bbox),
                reading_order: Some(t.reading_order),
                fr: (t.fr_vec != stub_text_embed(&t.text, dims.region, REGION)).then(|| t.fr_vec.clone()),
            })
            .collect(),
        answers: inst.answers.clone(),
    }
}

pub fn emit_dataset(path: &Path, instances: &[QAInstance], dims: &FeatureDims) -> Result<()> {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(&instance_to_record(inst, dims))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> IngestOptions {
        IngestOptions {
            dims: FeatureDims {
                contextual: 8,
                subword: 6,
                region: 5,
            },
            ..IngestOptions::default()
        }
    }

    fn record(answers: usize) -> RecordJson {
        RecordJson {
            question_id: "q1".into(),
            image_id: "i1".into(),
            image_w: 100.0,
            image_h: 50.0,
            question: "What brand is shown?".into(),
            objects: vec![ObjectJson {
                label: "Car".into(),
                bbox: [0.0, 0.0, 10.0, 10.0],
                fr: Some(vec![0.5, 0.25, 0.0, 1.0, -1.0]),
            }],
            ocr: vec![
                OcrJson {
                    text: "York".into(),
                    bbox: [20.0, 5.0, 40.0, 15.0],
                    reading_order: Some(1),
                    fr: None,
                },
                OcrJson {
                    text: "New".into(),
                    bbox: [0.0, 5.0, 18.0, 15.0],
                    reading_order: Some(0),
                    fr: None,
                },
            ],
            answers: vec!["new york".into(); answers],
        }
    }

    fn write(lines: &[String]) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), lines.join("\n")).unwrap();
        f
    }

    #[test]
    fn empty_file() {
        let f = write(&[]);
        assert!(ingest_dataset(f.path(), &opts(), None).unwrap().is_empty());
    }

    #[test]
    fn parses_and_normalizes() {
        let f = write(&[serde_json::to_string(&record(10)).unwrap()]);
        let inst = &ingest_dataset(f.path(), &opts(), None).unwrap()[0];
        assert_eq!(inst.question, ["what", "brand", "is", "shown"]);
        assert_eq!(inst.ocr[0].text, "new");
        assert_eq!(inst.objects[0].label, "car");
        assert_eq!(inst.objects[0].fr_vec[0], 0.5);
    }

    #[test]
    fn wrong_answer_count_reports_line() {
        let f = write(&[
            serde_json::to_string(&record(10)).unwrap(),
            serde_json::to_string(&record(12)).unwrap(),
        ]);
        let err = ingest_dataset(f.path(), &opts(), None).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 2, .. }), "{err}");
        let mut single = opts();
        single.answers_per_question = None;
        assert_eq!(ingest_dataset(f.path(), &single, None).unwrap().len(), 2);
    }

    #[test]
    fn truncates_over_limit() {
        let f = write(&[serde_json::to_string(&record(10)).unwrap()]);
        let mut o = opts();
        o.n_max = 1;
        o.l_max = 2;
        let inst = &ingest_dataset(f.path(), &o, None).unwrap()[0];
        assert_eq!(inst.ocr.len(), 1);
        assert_eq!(inst.question.len(), 2);
    }

    #[test]
    fn round_trip() {
        let f = write(&[serde_json::to_string(&record(10)).unwrap()]);
        let a = ingest_dataset(f.path(), &opts(), None).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        emit_dataset(out.path(), &a, &opts().dims).unwrap();
        assert_eq!(ingest_dataset(out.path(), &opts(), None).unwrap(), a);
    }
}
