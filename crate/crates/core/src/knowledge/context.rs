use crate::features::embed::{stub_text_embed, CONTEXTUAL};
use crate::features::types::QAInstance;

/// Image context entries in `[OCR | object labels | question]` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBag {
    pub entries: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
}

impl ContextBag {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Unweighted sum of entry embeddings; duplicates count every time.
    pub fn sum(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for e in &self.embeddings {
            out.iter_mut().zip(e).for_each(|(a, b)| *a += b);
        }
        out
    }
}

pub fn build_context(instance: &QAInstance, dim: usize) -> ContextBag {
    let entries: Vec<String> = instance
        .ocr
        .iter()
        .map(|t| t.text.clone())
        .chain(instance.objects.iter().map(|o| o.label.clone()))
        .chain(instance.question.iter().cloned())
        .collect();
    let embeddings = entries.iter().map(|e| stub_text_embed(e, dim, CONTEXTUAL)).collect();
    ContextBag { entries, embeddings }
}
