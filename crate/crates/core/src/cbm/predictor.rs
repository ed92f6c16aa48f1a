use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nnet::MlpModel;
use crate::numkit::{LinearModel, Matrix};

/// A fitted map from one real vector space to another.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictor {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Predictor {
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Predictor::Linear(m) => m.predict(x),
            Predictor::Mlp(m) => m.forward(x),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Predictor::Linear(m) => m.in_dim(),
            Predictor::Mlp(m) => m.spec.input_size(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Predictor::Linear(m) => m.out_dim(),
            Predictor::Mlp(m) => m.spec.output_size(),
        }
    }

    pub(crate) fn save(&self, dir: &Path) -> Result<()> {
        match self {
            Predictor::Linear(m) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("linear.json"), serde_json::to_string(m)?)?;
                Ok(())
            }
            Predictor::Mlp(m) => m.save(dir),
        }
    }

    pub(crate) fn load(dir: &Path) -> Result<Self> {
        let linear = dir.join("linear.json");
        if linear.exists() {
            Ok(Predictor::Linear(serde_json::from_str(
                &fs::read_to_string(linear)?,
            )?))
        } else if dir.join("manifest.json").exists() {
            Ok(Predictor::Mlp(MlpModel::load(dir)?))
        } else {
            Err(Error::Format(format!(
                "no model found in {}",
                dir.display()
            )))
        }
    }
}
