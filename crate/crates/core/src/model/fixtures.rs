//! Small shared setups for unit tests.

use super::variant::{ModelConfig, Variant};
use crate::data::{gen_synthetic, SyntheticData, SyntheticSpec};
use crate::features::FeatureDims;

pub const DIMS: FeatureDims = FeatureDims {
    contextual: 16,
    subword: 8,
    region: 8,
};

pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        validity_hidden: 8,
        max_steps: 12,
        open_knowledge: false,
        dims: DIMS,
        seed: 3,
    }
}

pub fn tiny_data(n_instances: usize) -> SyntheticData {
    let spec = SyntheticSpec {
        n_instances,
        train_fraction: 1.0,
        ..SyntheticSpec::default()
    };
    gen_synthetic(&spec, &DIMS).expect("valid spec")
}
