use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PdaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors, stored in insertion order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    #[serde(skip)]
    index: HashMap<String, ParamId>,
}

pub enum Init {
    Zeros,
    Ones,
    Constant(f64),
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Xavier,
    Normal(f64),
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, shape: (usize, usize), init: Init, rng: &mut ChaCha8Rng) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let value = match init {
            Init::Zeros => Array2::zeros(shape),
            Init::Ones => Array2::ones(shape),
            Init::Constant(c) => Array2::from_elem(shape, c),
            Init::Xavier => {
                let bound = (6.0 / (shape.0 + shape.1) as f64).sqrt();
                Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
            }
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("finite std");
                Array2::from_shape_simple_fn(shape, || dist.sample(rng))
            }
        };
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Array2<f64>) {
        assert_eq!(
            self.values[id.0].dim(),
            value.dim(),
            "shape change for {}",
            self.names[id.0]
        );
        self.values[id.0] = value;
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Sets every tensor whose name starts with `prefix` to zero.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (name, v) in self.names.iter().zip(self.values.iter_mut()) {
            if name.starts_with(prefix) {
                v.fill(0.0);
            }
        }
    }

    /// Rebuilds the name index; needed after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), ParamId(i)))
            .collect();
    }

    /// Copies values from `other`, which must hold the same names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.names != self.names {
            return Err(PdaError::Checkpoint(
                "parameter names differ from the model layout".into(),
            ));
        }
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            if dst.dim() != src.dim() {
                return Err(PdaError::Checkpoint(
                    "parameter shapes differ from the model layout".into(),
                ));
            }
            dst.assign(src);
        }
        Ok(())
    }
}
