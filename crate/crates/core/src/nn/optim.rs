use std::collections::BTreeMap;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::new(1e-4)
    }
}

impl OptimizerState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second.get(name)
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
/// Parameters absent from `grads` are updated with a zero gradient.
pub fn adam_step(params: &mut ParamStore, grads: &BTreeMap<String, Tensor>, state: &mut OptimizerState) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::contract(format!("gradient for unknown parameter `{name}`")))?;
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "adam gradient",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    for (name, p) in params.iter() {
        if let Some(m) = state.first.get(name) {
            if m.shape() != p.shape() {
                return Err(Error::contract(format!(
                    "optimizer moment for `{name}` has shape {:?} but parameter has {:?}",
                    m.shape(),
                    p.shape()
                )));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);

    for (name, p) in params.iter_mut() {
        let m = state
            .first
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state
            .second
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let g = grads.get(name).map(Tensor::data);
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.map_or(0.0, |g| g[i]);
            md[i] = b1 * md[i] + (1.0 - b1) * gi;
            vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
            let mhat = md[i] / bc1;
            let vhat = vd[i] / bc2;
            pd[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(v));
        s
    }

    fn grad(v: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("x".to_string(), Tensor::scalar(v))])
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(1.5);
        let mut st = OptimizerState::new(0.1);
        adam_step(&mut s, &grad(0.0), &mut st).unwrap();
        assert_eq!(s.get("x").unwrap().item(), 1.5);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g = 1 and v̂ = g² = 1 after bias correction, so Δ = lr/(1+eps).
        let mut s = scalar_store(0.0);
        let mut st = OptimizerState::new(0.1);
        adam_step(&mut s, &grad(1.0), &mut st).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((s.get("x").unwrap().item() - expected).abs() < 1e-15);
    }

    #[test]
    fn second_moment_grows_for_constant_gradient() {
        let mut s = scalar_store(0.0);
        let mut st = OptimizerState::new(0.01);
        adam_step(&mut s, &grad(0.5), &mut st).unwrap();
        let v1 = st.second_moment("x").unwrap().item();
        adam_step(&mut s, &grad(0.5), &mut st).unwrap();
        let v2 = st.second_moment("x").unwrap().item();
        assert!(v2 >= v1);
        assert_eq!(st.step(), 2);
    }

    #[test]
    fn shape_drift_is_rejected() {
        let mut s = scalar_store(0.0);
        let mut st = OptimizerState::new(0.01);
        adam_step(&mut s, &grad(1.0), &mut st).unwrap();
        s.insert("x", Tensor::vector(vec![0.0, 0.0]));
        let g = BTreeMap::from([("x".to_string(), Tensor::vector(vec![1.0, 1.0]))]);
        assert!(matches!(adam_step(&mut s, &g, &mut st), Err(Error::Contract(_))));
    }
}
