//! Setups shared by the integration test targets.
#![allow(dead_code)]

use kvqa::data::{gen_synthetic, SyntheticData, SyntheticSpec};
use kvqa::features::FeatureDims;
use kvqa::model::{ModelConfig, Variant};
use kvqa::nn::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DIMS: FeatureDims = FeatureDims {
    contextual: 16,
    subword: 8,
    region: 8,
};

pub fn tiny_config(variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        validity_hidden: 8,
        max_steps: 12,
        open_knowledge: false,
        dims: DIMS,
        seed,
    }
}

pub fn tiny_data(n_instances: usize, seed: u64) -> SyntheticData {
    let spec = SyntheticSpec {
        n_instances,
        train_fraction: 1.0,
        seed,
        ..SyntheticSpec::default()
    };
    gen_synthetic(&spec, &DIMS).expect("valid spec")
}

pub fn normal(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let x: f64 = StandardNormal.sample(rng);
        *v = scale * x;
    }
    t
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(lo..hi);
    }
    t
}
