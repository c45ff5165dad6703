use std::collections::HashMap;

use mmdm_tensor::{Graph, Tensor, Var};

use super::layers::AttentionStats;
use super::{NetworkError, Result};
use crate::rng::{self, Rng};

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.tensors[i] = t;
        } else {
            self.index.insert(name.clone(), self.names.len());
            self.names.push(name);
            self.tensors.push(t);
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NetworkError::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

/// Draws initial values for a fresh model.
pub(crate) struct Init {
    rng: Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { rng: rng::seeded(seed) }
    }

    pub fn normal(&mut self, shape: &[usize], sd: f64) -> Tensor {
        Tensor::from_fn(shape, |_| sd * rng::normal(&mut self.rng))
    }

    pub fn linear(&mut self, store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) {
        let sd = (1.0 / fan_in as f64).sqrt();
        store.insert(format!("{name}.w"), self.normal(&[fan_in, fan_out], sd));
        store.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
    }

    pub fn norm(&mut self, store: &mut ParamStore, name: &str, dim: usize) {
        store.insert(format!("{name}.g"), Tensor::ones(&[dim]));
        store.insert(format!("{name}.b"), Tensor::zeros(&[dim]));
    }
}

/// One forward pass: a graph holding every parameter as a leaf, plus the
/// attention counters collected while building it.
pub struct Session<'a> {
    pub g: Graph,
    store: &'a ParamStore,
    vars: Vec<Var>,
    pub stats: AttentionStats,
}

impl<'a> Session<'a> {
    /// Parameters are differentiable leaves.
    pub fn new(store: &'a ParamStore) -> Self {
        Self::with_grad(store, true)
    }

    /// Parameters are constants.
    pub fn frozen(store: &'a ParamStore) -> Self {
        Self::with_grad(store, false)
    }

    fn with_grad(store: &'a ParamStore, grad: bool) -> Self {
        let mut g = Graph::new();
        let vars = store.tensors.iter().map(|t| g.leaf(t.clone(), grad)).collect();
        Self {
            g,
            store,
            vars,
            stats: AttentionStats::default(),
        }
    }

    pub fn p(&self, name: &str) -> Result<Var> {
        self.store.position(name).map(|i| self.vars[i])
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    /// Gradients of `loss` for every parameter, zero where unused.
    pub fn param_grads(&self, loss: Var) -> Result<Vec<Tensor>> {
        let mut grads = self.g.backward(loss)?;
        Ok(self
            .vars
            .iter()
            .zip(&self.store.tensors)
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect())
    }
}
