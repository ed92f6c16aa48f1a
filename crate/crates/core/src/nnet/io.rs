//! Model bundles: `manifest.json` plus little-endian `f64` tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::model::{AdamState, MlpModel, MlpSpec};

const FORMAT: &str = "debias-cbm-mlp/1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    spec: MlpSpec,
    seed: u64,
    step: u64,
    param_count: usize,
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl MlpModel {
    /// Writes the model into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format: FORMAT.into(),
            spec: self.spec.clone(),
            seed: self.seed,
            step: self.adam.step,
            param_count: self.params.len(),
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        write_f64s(&dir.join("params.bin"), &self.params)?;
        write_f64s(&dir.join("adam_m.bin"), &self.adam.m)?;
        write_f64s(&dir.join("adam_v.bin"), &self.adam.v)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.format != FORMAT {
            return Err(Error::Format(format!(
                "unknown model format {:?}",
                manifest.format
            )));
        }
        manifest.spec.validate()?;
        let count = manifest.spec.param_count();
        if count != manifest.param_count {
            return Err(Error::Format(
                "parameter count disagrees with layer sizes".into(),
            ));
        }
        Ok(MlpModel {
            spec: manifest.spec,
            params: read_f64s(&dir.join("params.bin"), count)?,
            adam: AdamState {
                m: read_f64s(&dir.join("adam_m.bin"), count)?,
                v: read_f64s(&dir.join("adam_v.bin"), count)?,
                step: manifest.step,
            },
            seed: manifest.seed,
        })
    }
}
