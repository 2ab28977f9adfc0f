//! Projection, normalization, masked attention and the post-norm
//! transformer stack.

use super::graph::{Graph, NodeId};
use super::params::{Init, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Additive bias standing in for −∞ in attention masks.
pub const MASK_NEG: f64 = -1e9;

pub const LN_EPS: f64 = 1e-5;

/// `x W (+ b)`.
pub fn linear(g: &mut Graph, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
    let y = g.matmul(x, w)?;
    match b {
        Some(b) => g.add_row(y, b),
        None => Ok(y),
    }
}

pub fn layer_norm(g: &mut Graph, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
    if eps <= 0.0 {
        return Err(Error::contract("layer_norm eps must be positive"));
    }
    g.layer_norm(x, gamma, beta, eps)
}

/// Registers a `[fan_in, fan_out]` weight and optional bias under `prefix`.
pub fn init_linear(store: &mut ParamStore, seed: u64, prefix: &str, fan_in: usize, fan_out: usize, bias: bool) {
    store.init(seed, &format!("{prefix}.w"), &[fan_in, fan_out], Init::FanIn(fan_in));
    if bias {
        store.init(seed, &format!("{prefix}.b"), &[fan_out], Init::Zeros);
    }
}

pub fn init_layer_norm(store: &mut ParamStore, seed: u64, prefix: &str, d: usize) {
    store.init(seed, &format!("{prefix}.gamma"), &[d], Init::Ones);
    store.init(seed, &format!("{prefix}.beta"), &[d], Init::Zeros);
}

/// Applies the linear layer registered under `prefix`.
pub fn apply_linear(g: &mut Graph, store: &ParamStore, prefix: &str, x: NodeId) -> Result<NodeId> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b_name = format!("{prefix}.b");
    let b = if store.contains(&b_name) {
        Some(g.param(store, &b_name)?)
    } else {
        None
    };
    linear(g, x, w, b)
}

pub fn apply_layer_norm(g: &mut Graph, store: &ParamStore, prefix: &str, x: NodeId) -> Result<NodeId> {
    let gamma = g.param(store, &format!("{prefix}.gamma"))?;
    let beta = g.param(store, &format!("{prefix}.beta"))?;
    layer_norm(g, x, gamma, beta, LN_EPS)
}

/// Head layout of one self-attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub n_heads: usize,
    pub d_model: usize,
}

impl Default for AttentionParams {
    fn default() -> Self {
        Self {
            n_heads: 8,
            d_model: 768,
        }
    }
}

impl AttentionParams {
    pub fn new(n_heads: usize, d_model: usize) -> Result<Self> {
        if n_heads == 0 || d_model % n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {d_model} is not divisible by n_heads {n_heads}"
            )));
        }
        Ok(Self { n_heads, d_model })
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64, prefix: &str) {
        for proj in ["wq", "wk", "wv", "wo"] {
            init_linear(
                store,
                seed,
                &format!("{prefix}.{proj}"),
                self.d_model,
                self.d_model,
                true,
            );
        }
    }
}

/// Checks that every row of an `[E, E]` bias keeps at least one column open.
pub fn check_mask(mask: &Tensor) -> Result<()> {
    for r in 0..mask.rows() {
        if mask.row(r).iter().all(|&v| v <= MASK_NEG / 2.0) {
            return Err(Error::DegenerateRow { row: r });
        }
    }
    Ok(())
}

/// Scaled dot-product attention per head with `mask` added to the logits
/// before the softmax, followed by the output projection.
pub fn masked_multihead_attention(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    x: NodeId,
    mask: &Tensor,
    params: &AttentionParams,
) -> Result<NodeId> {
    let xv = g.value(x);
    let e = xv.rows();
    if xv.cols() != params.d_model {
        return Err(Error::Shape {
            op: "attention input",
            left: xv.shape().to_vec(),
            right: vec![e, params.d_model],
        });
    }
    if mask.shape() != [e, e] {
        return Err(Error::Shape {
            op: "attention mask",
            left: mask.shape().to_vec(),
            right: vec![e, e],
        });
    }
    check_mask(mask)?;

    let q = apply_linear(g, store, &format!("{prefix}.wq"), x)?;
    let k = apply_linear(g, store, &format!("{prefix}.wk"), x)?;
    let v = apply_linear(g, store, &format!("{prefix}.wv"), x)?;
    let bias = g.constant(mask.clone());
    let dh = params.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let mut heads = Vec::with_capacity(params.n_heads);
    for h in 0..params.n_heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let kt = g.transpose(kh);
        let logits = g.matmul(qh, kt)?;
        let logits = g.scale(logits, scale);
        let logits = g.add(logits, bias)?;
        let weights = g.softmax_rows(logits);
        heads.push(g.matmul(weights, vh)?);
    }
    let merged = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    apply_linear(g, store, &format!("{prefix}.wo"), merged)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransformerConfig {
    pub n_layers: usize,
    pub attention: AttentionParams,
    pub ffn_mult: usize,
}

impl TransformerConfig {
    pub fn new(n_layers: usize, n_heads: usize, d_model: usize) -> Result<Self> {
        Ok(Self {
            n_layers,
            attention: AttentionParams::new(n_heads, d_model)?,
            ffn_mult: 4,
        })
    }

    pub fn d_model(&self) -> usize {
        self.attention.d_model
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64, prefix: &str) {
        let d = self.d_model();
        for l in 0..self.n_layers {
            let p = format!("{prefix}.{l}");
            self.attention.init(store, seed, &format!("{p}.attn"));
            init_layer_norm(store, seed, &format!("{p}.ln1"), d);
            init_linear(store, seed, &format!("{p}.ffn.w1"), d, d * self.ffn_mult, true);
            init_linear(store, seed, &format!("{p}.ffn.w2"), d * self.ffn_mult, d, true);
            init_layer_norm(store, seed, &format!("{p}.ln2"), d);
        }
    }
}

/// Post-norm layers: `LN(x + attn(x))` then `LN(h + ffn(h))`.
pub fn transformer_forward(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    x: NodeId,
    mask: &Tensor,
    cfg: &TransformerConfig,
) -> Result<NodeId> {
    let e = g.value(x).rows();
    if mask.shape() != [e, e] {
        return Err(Error::Shape {
            op: "transformer mask",
            left: mask.shape().to_vec(),
            right: vec![e, e],
        });
    }
    let mut h = x;
    for l in 0..cfg.n_layers {
        let p = format!("{prefix}.{l}");
        let a = masked_multihead_attention(g, store, &format!("{p}.attn"), h, mask, &cfg.attention)?;
        let r = g.add(h, a)?;
        let n1 = apply_layer_norm(g, store, &format!("{p}.ln1"), r)?;
        let f = apply_linear(g, store, &format!("{p}.ffn.w1"), n1)?;
        let f = g.relu(f);
        let f = apply_linear(g, store, &format!("{p}.ffn.w2"), f)?;
        let r2 = g.add(n1, f)?;
        h = apply_layer_norm(g, store, &format!("{p}.ln2"), r2)?;
    }
    Ok(h)
}
