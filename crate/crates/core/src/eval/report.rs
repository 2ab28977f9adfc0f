//! Prediction files and the metric report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bounds::upper_bounds;
use super::metrics::{anls, answer_accuracy, EvalRecord};
use crate::error::{Error, Result};
use crate::features::types::QAInstance;
use crate::model::vocab::AnswerVocab;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub question_id: String,
    pub answer: String,
}

pub fn write_predictions(path: &Path, preds: &[PredictionLine]) -> Result<()> {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Accuracy and bounds are percentages; ANLS is in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub questions: usize,
    pub accuracy: f64,
    pub anls: f64,
    pub ocr_ub: f64,
    pub vocab_ub: f64,
    pub both_ub: f64,
}

impl EvalReport {
    /// Scores `preds` against `instances`; questions without a prediction
    /// count as empty answers.
    pub fn compute(
        variant: &str,
        instances: &[QAInstance],
        preds: &[PredictionLine],
        vocab: &AnswerVocab,
    ) -> Result<Self> {
        let by_id: BTreeMap<&str, &str> = preds
            .iter()
            .map(|p| (p.question_id.as_str(), p.answer.as_str()))
            .collect();
        let mut acc = 0.0;
        let mut records = Vec::with_capacity(instances.len());
        for inst in instances {
            let pred = by_id.get(inst.question_id.as_str()).copied().unwrap_or("");
            acc += answer_accuracy(pred, &inst.answers);
            records.push(EvalRecord::new(pred, &inst.answers));
        }
        let ub = upper_bounds(instances, vocab);
        let n = instances.len();
        Ok(Self {
            variant: variant.to_string(),
            questions: n,
            accuracy: if n == 0 { 0.0 } else { 100.0 * acc / n as f64 },
            anls: if n == 0 { 0.0 } else { anls(&records, 0.5)? },
            ocr_ub: ub.ocr_ub,
            vocab_ub: ub.vocab_ub,
            both_ub: ub.both_ub,
        })
    }

    /// JSON object with every metric at four decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::from("{\n");
        let _ = writeln!(s, "  \"variant\": {},", serde_json::Value::from(self.variant.as_str()));
        let _ = writeln!(s, "  \"questions\": {},", self.questions);
        let metrics = [
            ("accuracy", self.accuracy),
            ("anls", self.anls),
            ("ocr_ub", self.ocr_ub),
            ("vocab_ub", self.vocab_ub),
            ("both_ub", self.both_ub),
        ];
        for (i, (k, v)) in metrics.iter().enumerate() {
            let sep = if i + 1 < metrics.len() { "," } else { "" };
            let _ = writeln!(s, "  \"{k}\": {v:.4}{sep}");
        }
        s.push_str("}\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_has_four_decimals_and_parses() {
        let r = EvalReport {
            variant: "TVQA".into(),
            questions: 3,
            accuracy: 100.0 / 3.0,
            anls: 0.5,
            ocr_ub: 50.0,
            vocab_ub: 0.0,
            both_ub: 50.0,
        };
        let t = r.to_text();
        assert!(t.contains("\"accuracy\": 33.3333,"));
        assert!(t.contains("\"anls\": 0.5000,"));
        let back = EvalReport::from_text(&t).unwrap();
        assert_eq!(back.questions, 3);
        assert_eq!(back.accuracy, 33.3333);
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.jsonl");
        let preds = vec![PredictionLine {
            question_id: "1".into(),
            answer: "new york".into(),
        }];
        write_predictions(&p, &preds).unwrap();
        assert_eq!(read_predictions(&p).unwrap(), preds);
    }
}
