//! Attention masks, the multimodal transformer with pointer decoding,
//! training and the ablation variants.

#[cfg(test)]
pub(crate) mod fixtures;
pub mod forward;
pub mod inputs;
pub mod mask;
pub mod train;
pub mod variant;
pub mod vocab;

pub use forward::{
    decode_step, forward, generate_answer, init_model_params, is_knowledge_param, pointer_scores, ForwardOutput,
    Prediction,
};
pub use inputs::{encode_instance, EncodedInstance};
pub use mask::{build_attention_mask, AttentionMaskSpec, BlockSizes, MaskMode};
pub use train::{batch_gradients, instance_loss, train_step, TrainExample};
pub use variant::{ModelConfig, Variant};
pub use vocab::AnswerVocab;
