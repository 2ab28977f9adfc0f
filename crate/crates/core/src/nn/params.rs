use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::hash::fnv1a;

/// Named model parameters in canonical (sorted) order.
///
/// Tensors are reference counted so binding them on a tape is free; a
/// mutable access copies a tensor only while a tape still shares it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Arc<Tensor>>,
}

/// How a freshly created parameter is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanIn(usize),
    /// Uniform in `[0, 1/sqrt(fan_in)]`.
    FanInPositive(usize),
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Arc::new(value));
    }

    /// Creates a parameter whose values depend only on `(seed, name)`.
    pub fn init(&mut self, seed: u64, name: &str, shape: &[usize], init: Init) {
        let mut t = Tensor::zeros(shape);
        match init {
            Init::Zeros => {}
            Init::Ones => t.data_mut().iter_mut().for_each(|v| *v = 1.0),
            Init::FanIn(fan_in) | Init::FanInPositive(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let low = if matches!(init, Init::FanIn(_)) { -bound } else { 0.0 };
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()));
                for v in t.data_mut() {
                    *v = rng.gen_range(low..=bound);
                }
            }
        }
        self.params.insert(name.to_string(), Arc::new(t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|t| &**t)
    }

    pub(crate) fn shared(&self, name: &str) -> Option<Arc<Tensor>> {
        self.params.get(name).cloned()
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(Arc::make_mut)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::contract(format!("missing parameter `{name}`")))
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.params
            .remove(name)
            .map(|t| Arc::try_unwrap(t).unwrap_or_else(|t| (*t).clone()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), &**v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), Arc::make_mut(v)))
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    /// Human-readable list of name/shape differences against `other`,
    /// empty when both stores have identical layouts.
    pub fn layout_diff(&self, other: &ParamStore) -> Vec<String> {
        let mut out = Vec::new();
        for (name, t) in &self.params {
            match other.params.get(name) {
                None => out.push(format!("- {name} {:?} (missing on the other side)", t.shape())),
                Some(o) if o.shape() != t.shape() => out.push(format!("~ {name} {:?} vs {:?}", t.shape(), o.shape())),
                _ => {}
            }
        }
        for (name, t) in &other.params {
            if !self.params.contains_key(name) {
                out.push(format!("+ {name} {:?} (unexpected)", t.shape()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_depends_only_on_seed_and_name() {
        let mut a = ParamStore::new();
        a.init(7, "x.w", &[3, 4], Init::FanIn(3));
        a.init(7, "y.w", &[3, 4], Init::FanIn(3));
        let mut b = ParamStore::new();
        b.init(7, "y.w", &[3, 4], Init::FanIn(3));
        assert_eq!(a.get("y.w"), b.get("y.w"));
        assert_ne!(a.get("x.w"), a.get("y.w"));
        let bound = 1.0 / 3f64.sqrt();
        assert!(a.get("x.w").unwrap().data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn layout_diff_reports_both_directions() {
        let mut a = ParamStore::new();
        a.insert("p", Tensor::zeros(&[2]));
        a.insert("q", Tensor::zeros(&[2]));
        let mut b = ParamStore::new();
        b.insert("p", Tensor::zeros(&[3]));
        b.insert("r", Tensor::zeros(&[1]));
        let diff = a.layout_diff(&b);
        assert_eq!(diff.len(), 3);
    }
}
