//! Dense tensors, a reverse-mode tape, transformer layers and Adam.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_params, GradCheck};
pub use graph::{Graph, NodeId, TensorNode};
pub use layers::{
    layer_norm, linear, masked_multihead_attention, transformer_forward, AttentionParams, TransformerConfig, MASK_NEG,
};
pub use optim::{adam_step, OptimizerState};
pub use params::{Init, ParamStore};
pub use tensor::Tensor;
