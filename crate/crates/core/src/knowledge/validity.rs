//! Context-based validity scoring of knowledge candidates.
//!
//! `r_j = W_c (ReLU(W_a s_j) ⊙ ReLU(W_a c))` where `s_j` is the candidate
//! embedding and `c` the summed context; scores are softmaxed over candidates
//! and the arg-max candidate is taken as the valid fact.

use crate::error::{Error, Result};
use crate::nn::{Graph, Init, NodeId, ParamStore, Tensor};

pub const WA: &str = "validity.wa.w";
pub const WC: &str = "validity.wc.w";

/// Registers `W_a` (`[dim, h]`) and `W_c` (`[h, 1]`). `W_c` starts
/// non-negative so the untrained scorer already ranks by projected
/// agreement with the context.
pub fn init_validity_params(store: &mut ParamStore, seed: u64, dim: usize, h: usize) {
    store.init(seed, WA, &[dim, h], Init::FanIn(dim));
    store.init(seed, WC, &[h, 1], Init::FanInPositive(h));
}

/// Raw scores `[1, K]` for candidate rows `cands` (`[K, dim]`) against the
/// context sum `ctx` (`[1, dim]`).
pub fn validity_logits(g: &mut Graph, store: &ParamStore, cands: NodeId, ctx: NodeId) -> Result<NodeId> {
    let wa = g.param(store, WA)?;
    let wc = g.param(store, WC)?;
    let s = g.matmul(cands, wa)?;
    let s = g.relu(s);
    let c = g.matmul(ctx, wa)?;
    let c = g.relu(c);
    let joint = g.mul_row(s, c)?;
    let r = g.matmul(joint, wc)?;
    Ok(g.transpose(r))
}

/// Softmaxed validity of each candidate.
pub fn validity_scores(candidates: &[Vec<f64>], context_sum: &[f64], store: &ParamStore) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::contract("validity scoring needs at least one candidate"));
    }
    let dim = context_sum.len();
    let mut g = Graph::new();
    let c = g.constant(Tensor::from_rows(candidates, dim)?);
    let x = g.constant(Tensor::matrix(1, dim, context_sum.to_vec())?);
    let r = validity_logits(&mut g, store, c, x)?;
    let p = g.softmax_rows(r);
    Ok(g.value(p).data().to_vec())
}

/// Arg-max with ties going to the lowest index.
pub fn select_valid(scores: &[f64]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_store() -> ParamStore {
        // dim 3, h 2: W_a maps e0 -> [1, 0], e1 -> [0, 1], e2 -> [1, 0]
        let mut s = ParamStore::new();
        s.insert(WA, Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap());
        s.insert(WC, Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        s
    }

    #[test]
    fn hand_evaluated_scores() {
        let s = hand_store();
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.0, 1.0, 0.0];
        let ctx = [0.0, 0.0, 1.0];
        let p = validity_scores(&[a, b], &ctx, &s).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert_eq!(select_valid(&p), Some(0));
    }

    #[test]
    fn identical_candidates_are_uniform() {
        let mut s = ParamStore::new();
        init_validity_params(&mut s, 3, 5, 4);
        let c = vec![0.3, -0.1, 0.2, 0.5, 0.0];
        let p = validity_scores(&[c.clone(), c.clone(), c], &[1.0, 0.5, -0.2, 0.1, 0.3], &s).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn context_scaling_keeps_argmax() {
        let mut s = ParamStore::new();
        init_validity_params(&mut s, 9, 6, 5);
        let cands: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..6).map(|k| ((j * 6 + k) as f64).sin()).collect())
            .collect();
        let ctx: Vec<f64> = (0..6).map(|k| (k as f64 * 0.7).cos()).collect();
        let base = select_valid(&validity_scores(&cands, &ctx, &s).unwrap());
        for scale in [0.01, 2.0, 100.0] {
            let scaled: Vec<f64> = ctx.iter().map(|v| v * scale).collect();
            assert_eq!(select_valid(&validity_scores(&cands, &scaled, &s).unwrap()), base);
        }
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(select_valid(&[0.1, 0.7, 0.2]), Some(1));
        assert_eq!(select_valid(&[0.4]), Some(0));
        assert_eq!(select_valid(&[0.5, 0.5]), Some(0));
        assert_eq!(select_valid(&[]), None);
        assert!(validity_scores(&[], &[1.0], &hand_store()).is_err());
    }
}
