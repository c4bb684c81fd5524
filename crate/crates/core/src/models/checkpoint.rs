use std::fs;
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec, ParamStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "qlstm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Structured-text model dump: every named block with its shape and values.
/// `f64` values are written in shortest round-trip form, so the text is
/// identical on every platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            spec: model.spec,
            params: model.params.clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        self.spec.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let reference = Model::init(self.spec, &mut rng)?;
        reference.params.check_layout(&self.params)?;
        for b in self.params.blocks() {
            let n: usize = b.shape.iter().product();
            if n != b.values.len() {
                return Err(Error::Shape(format!("block '{}' has {} values for shape {:?}", b.name, b.values.len(), b.shape)));
            }
        }
        Ok(Model {
            spec: self.spec,
            params: self.params,
        })
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
