//! Central finite-difference checks for tape gradients.
//!
//! A coordinate whose step window straddles a ReLU kink gives a central
//! difference that is off by up to half the slope jump. Such coordinates are
//! recognised by one-sided slopes that disagree while bracketing the analytic
//! value, and are counted in `kinks` instead of entering `max_rel_err`. A wrong
//! gradient leaves both one-sided slopes on the same side of the analytic value.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::Result;

/// One-sided slopes further apart than this (relative to `max(1, |analytic|)`)
/// mark a kink.
const KINK_GAP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    /// Max over smooth coordinates of `|analytic - central| / max(1, |analytic|)`.
    pub max_rel_err: f64,
    pub probed: usize,
    pub kinks: usize,
}

impl GradCheck {
    fn record(&mut self, analytic: f64, minus: f64, base: f64, plus: f64, eps: f64) {
        self.probed += 1;
        let scale = analytic.abs().max(1.0);
        let (left, right) = ((base - minus) / eps, (plus - base) / eps);
        let (lo, hi) = (left.min(right), left.max(right));
        if hi - lo > KINK_GAP * scale && (lo..=hi).contains(&analytic) {
            self.kinks += 1;
            return;
        }
        let central = (plus - minus) / (2.0 * eps);
        self.max_rel_err = self.max_rel_err.max((analytic - central).abs() / scale);
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            probed: self.probed + other.probed,
            kinks: self.kinks + other.kinks,
        }
    }
}

/// Compares the tape gradient of the scalar function `f` at `x` with central
/// differences at every coordinate.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let xn = g.leaf(x.clone(), true);
    let y = f(&mut g, xn)?;
    g.backward(y)?;
    let analytic = g.grad(xn).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let xn = g.leaf(t, false);
        let y = f(&mut g, xn)?;
        Ok(g.value(y).item())
    };

    let base = eval(x.clone())?;
    let mut check = GradCheck::default();
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        check.record(analytic.data()[i], eval(minus)?, base, eval(plus)?, eps);
    }
    Ok(check)
}

/// Same check over named parameters of a store. When `max_coords` is set,
/// each parameter is probed at that many seeded random coordinates.
pub fn finite_diff_check_params<F>(
    f: F,
    store: &ParamStore,
    names: &[&str],
    eps: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let y = f(&mut g, store)?;
    let f0 = g.value(y).item();
    g.backward(y)?;
    let grads = g.param_grads();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = GradCheck::default();
    let mut probe = store.clone();
    for &name in names {
        let base = store.require(name)?.clone();
        let analytic = grads.get(name).cloned().unwrap_or_else(|| Tensor::zeros(base.shape()));
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < base.numel() => sample(&mut rng, base.numel(), k).into_vec(),
            _ => (0..base.numel()).collect(),
        };
        for i in coords {
            let orig = base.data()[i];
            probe.get_mut(name).expect("present").data_mut()[i] = orig + eps;
            let mut gp = Graph::new();
            let yp = f(&mut gp, &probe)?;
            let fp = gp.value(yp).item();
            probe.get_mut(name).expect("present").data_mut()[i] = orig - eps;
            let mut gm = Graph::new();
            let ym = f(&mut gm, &probe)?;
            let fm = gm.value(ym).item();
            probe.get_mut(name).expect("present").data_mut()[i] = orig;
            check.record(analytic.data()[i], fm, f0, fp, eps);
        }
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let c = finite_diff_check(|g, x| g.mul(x, x), &Tensor::scalar(3.0), 1e-5).unwrap();
        assert!(c.max_rel_err < 1e-6 && c.kinks == 0, "{c:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // detach hides the dependency from the tape, so the analytic grad is 0.
        let c = finite_diff_check(
            |g, x| {
                let d = g.detach(x);
                let y = g.mul(d, x)?;
                Ok(g.sum(y))
            },
            &Tensor::vector(vec![1.0, 2.0]),
            1e-5,
        )
        .unwrap();
        assert!(c.max_rel_err > 0.1 && c.kinks == 0, "{c:?}");
    }

    #[test]
    fn straddled_kink_is_counted_not_scored() {
        let relu_sum = |g: &mut Graph, x: NodeId| {
            let r = g.relu(x);
            Ok(g.sum(r))
        };
        let c = finite_diff_check(relu_sum, &Tensor::vector(vec![3e-7, -2.0, 1.5]), 1e-6).unwrap();
        assert_eq!((c.kinks, c.probed), (1, 3));
        assert!(c.max_rel_err < 1e-9, "{c:?}");
    }

    #[test]
    fn curvature_is_not_a_kink() {
        let cube = |g: &mut Graph, x: NodeId| {
            let sq = g.mul(x, x)?;
            let cu = g.mul(sq, x)?;
            Ok(g.sum(cu))
        };
        let c = finite_diff_check(cube, &Tensor::vector(vec![-4.0, 0.5, 7.0]), 1e-6).unwrap();
        assert_eq!(c.kinks, 0);
        assert!(c.max_rel_err < 1e-6, "{c:?}");
    }
}
