//! Input featurization: PHOC, stub text embedders, boxes and the trainable
//! per-modality encoders.

pub mod embed;
pub mod encode;
pub mod featfile;
pub mod phoc;
pub mod types;

pub use embed::{cosine, stub_text_embed};
pub use encode::{embed_previous_prediction, encode_object, encode_ocr, PrevChoice, MAX_DECODE_STEPS};
pub use phoc::{phoc_encode, PHOC_DIM};
pub use types::{embed_bbox, BBox, FeatureDims, OcrToken, QAInstance, VisualObject};
