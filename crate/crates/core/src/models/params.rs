use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named, shaped block of trainable values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// How a block is drawn at initialization.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))` for a `[out, in]` matrix.
    Glorot,
    Zeros,
    Ones,
    Uniform(f64),
}

/// Ordered collection of parameter blocks. Order is fixed at construction and
/// defines the layout of gradients and optimizer state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
}

impl ParamStore {
    pub(crate) fn add<R: Rng + ?Sized>(&mut self, name: String, shape: Vec<usize>, init: Init, rng: &mut R) {
        let len: usize = shape.iter().product();
        let values = match init {
            Init::Glorot => {
                let (fan_out, fan_in) = (shape[0], shape.get(1).copied().unwrap_or(1));
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
            }
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
            Init::Uniform(a) => (0..len).map(|_| rng.random_range(-a..=a)).collect(),
        };
        self.blocks.push(ParamBlock { name, shape, values });
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamBlock> {
        self.blocks.iter_mut().find(|b| b.name == name)
    }

    /// Total scalar count.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// All values concatenated in block order.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Shape(format!(
                "flat parameter vector of {} for a store of {}",
                flat.len(),
                self.len()
            )));
        }
        let mut offset = 0;
        for b in &mut self.blocks {
            let n = b.values.len();
            b.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn check_layout(&self, other: &ParamStore) -> Result<()> {
        if self.blocks.len() != other.blocks.len()
            || self
                .blocks
                .iter()
                .zip(&other.blocks)
                .any(|(a, b)| a.name != b.name || a.shape != b.shape || b.values.len() != a.values.len())
        {
            return Err(Error::Shape("parameter layouts differ".into()));
        }
        Ok(())
    }
}
