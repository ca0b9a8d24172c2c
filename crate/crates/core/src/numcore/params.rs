use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of learned tensors.
///
/// Values sit behind `Arc` so binding them into a graph is free and a store
/// can be shared read-only across worker threads.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F: Scalar = f32> {
    names: Vec<String>,
    values: Vec<Arc<Tensor<F>>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn shared(&self, id: ParamId) -> Arc<Tensor<F>> {
        Arc::clone(&self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().map(|v| v.as_ref()))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Register every parameter as a leaf of `graph`, in store order.
    pub fn bind(&self, graph: &mut Graph<F>) -> Vec<Var> {
        self.values
            .iter()
            .map(|v| graph.leaf_shared(Arc::clone(v)))
            .collect()
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Arc::new(v.cast())).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.values.iter().map(|v| v.shape().to_vec()).collect()
    }

    /// Replace a value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<F>) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::dim("ParamStore::set", self.values[id.0].shape(), value.shape()));
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }

    /// Take values from `other`, matched by name; shapes must agree and every
    /// parameter of `self` must be present.
    pub fn load_from(&mut self, other: &ParamStore<F>) -> Result<()> {
        for i in 0..self.values.len() {
            let name = &self.names[i];
            let src = other
                .find(name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter {name}")))?;
            let v = other.get(src);
            if v.shape() != self.values[i].shape() {
                return Err(Error::dim("load_from", self.values[i].shape(), v.shape()));
            }
            self.values[i] = other.shared(src);
        }
        Ok(())
    }

    /// Overwrite all values with `Uniform[-scale, scale]` draws, in store order.
    pub fn init_uniform(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut self.values {
            let t = Arc::make_mut(v);
            for x in t.data_mut() {
                *x = F::from_f64(rng.random_range(-scale..=scale));
            }
        }
    }

    pub fn zero_all(&mut self) {
        for v in &mut self.values {
            for x in Arc::make_mut(v).data_mut() {
                *x = F::zero();
            }
        }
    }
}
