use serde::{Deserialize, Serialize};

use super::embed::{stub_text_embed, REGION, SUBWORD};
use super::phoc::phoc_encode;
use crate::error::{Error, Result};

/// Widths of the precomputed input features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureDims {
    /// Contextual embeddings of question words, context entries and knowledge.
    pub contextual: usize,
    /// Subword word vectors of OCR tokens.
    pub subword: usize,
    /// Region appearance vectors of objects and OCR tokens.
    pub region: usize,
}

impl Default for FeatureDims {
    fn default() -> Self {
        Self {
            contextual: 768,
            subword: 300,
            region: 2048,
        }
    }
}

/// Pixel box inside an image of known size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub image_w: f64,
    pub image_h: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, image_w: f64, image_h: f64) -> Result<Self> {
        let ok = 0.0 <= x1 && x1 < x2 && x2 <= image_w && 0.0 <= y1 && y1 < y2 && y2 <= image_h;
        if !ok {
            return Err(Error::contract(format!(
                "invalid box ({x1}, {y1}, {x2}, {y2}) in {image_w}x{image_h} image"
            )));
        }
        Ok(Self {
            x1,
            y1,
            x2,
            y2,
            image_w,
            image_h,
        })
    }

    pub fn full(image_w: f64, image_h: f64) -> Self {
        Self {
            x1: 0.0,
            y1: 0.0,
            x2: image_w,
            y2: image_h,
            image_w,
            image_h,
        }
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
            image_w: self.image_w,
            image_h: self.image_h,
        }
    }
}

/// `[x1/w, y1/h, x2/w, y2/h]`.
pub fn embed_bbox(b: &BBox) -> [f64; 4] {
    [b.x1 / b.image_w, b.y1 / b.image_h, b.x2 / b.image_w, b.y2 / b.image_h]
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcrToken {
    pub text: String,
    pub bbox: BBox,
    pub reading_order: usize,
    pub ft_vec: Vec<f64>,
    pub fr_vec: Vec<f64>,
    pub ph_vec: Vec<f64>,
}

impl OcrToken {
    /// Lowercases `text` and derives subword and PHOC vectors from it.
    /// Without an appearance vector a stub keyed on the text is used.
    pub fn new(
        text: &str,
        bbox: BBox,
        reading_order: usize,
        fr_vec: Option<Vec<f64>>,
        dims: &FeatureDims,
    ) -> Result<Self> {
        let text = text.trim().to_lowercase();
        if text.is_empty() {
            return Err(Error::contract("empty OCR token"));
        }
        let fr_vec = match fr_vec {
            Some(v) if v.len() == dims.region => v,
            Some(v) => {
                return Err(Error::Shape {
                    op: "ocr appearance vector",
                    left: vec![v.len()],
                    right: vec![dims.region],
                })
            }
            None => stub_text_embed(&text, dims.region, REGION),
        };
        Ok(Self {
            ft_vec: stub_text_embed(&text, dims.subword, SUBWORD),
            ph_vec: phoc_encode(&text),
            fr_vec,
            text,
            bbox,
            reading_order,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisualObject {
    pub label: String,
    pub bbox: BBox,
    pub fr_vec: Vec<f64>,
}

impl VisualObject {
    pub fn new(label: &str, bbox: BBox, fr_vec: Option<Vec<f64>>, dims: &FeatureDims) -> Result<Self> {
        let label = label.trim().to_lowercase();
        if label.is_empty() {
            return Err(Error::contract("empty object label"));
        }
        let fr_vec = match fr_vec {
            Some(v) if v.len() == dims.region => v,
            Some(v) => {
                return Err(Error::Shape {
                    op: "object appearance vector",
                    left: vec![v.len()],
                    right: vec![dims.region],
                })
            }
            None => stub_text_embed(&format!("object {label}"), dims.region, REGION),
        };
        Ok(Self { label, bbox, fr_vec })
    }
}

/// One question about one image.
#[derive(Clone, Debug, PartialEq)]
pub struct QAInstance {
    pub question_id: String,
    pub image_id: String,
    pub question: Vec<String>,
    pub objects: Vec<VisualObject>,
    pub ocr: Vec<OcrToken>,
    pub answers: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_embedding() {
        assert_eq!(embed_bbox(&BBox::full(640.0, 480.0)), [0.0, 0.0, 1.0, 1.0]);
        let b = BBox::new(10.0, 20.0, 30.0, 40.0, 100.0, 100.0).unwrap();
        assert_eq!(embed_bbox(&b), [0.1, 0.2, 0.3, 0.4]);
        let moved = BBox::new(50.0, 20.0, 70.0, 40.0, 100.0, 100.0).unwrap();
        assert_ne!(embed_bbox(&b), embed_bbox(&moved));
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::new(10.0, 10.0, 10.0, 20.0, 100.0, 100.0).is_err());
        assert!(BBox::new(10.0, 10.0, 20.0, 120.0, 100.0, 100.0).is_err());
    }

    #[test]
    fn token_is_lowercased_with_binary_phoc() {
        let dims = FeatureDims {
            contextual: 8,
            subword: 6,
            region: 5,
        };
        let t = OcrToken::new(" Commodore ", BBox::full(10.0, 10.0), 0, None, &dims).unwrap();
        assert_eq!(t.text, "commodore");
        assert_eq!((t.ft_vec.len(), t.fr_vec.len(), t.ph_vec.len()), (6, 5, 604));
        assert!(t.ph_vec.iter().all(|&b| b == 0.0 || b == 1.0));
        assert!(OcrToken::new("  ", BBox::full(1.0, 1.0), 0, None, &dims).is_err());
        assert!(OcrToken::new("a", BBox::full(1.0, 1.0), 0, Some(vec![0.0; 4]), &dims).is_err());
    }
}
