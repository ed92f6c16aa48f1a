//! Run configuration: TOML file, then `--set` and flag overrides, then typed
//! deserialization with unknown keys rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use debias_cbm::cbm::{CbmConfig, ConceptModelKind, DebiaserKind, HeadKind};
use debias_cbm::eval::{DEFAULT_MASK_FRACTIONS, DEFAULT_REPEATS};
use debias_cbm::nnet::{Activation, TrainConfig};
use debias_cbm::numkit::DEFAULT_RIDGE_LAMBDA;
use debias_cbm::synthgen::{Design, SynthConfig};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub scaling: ScalingSection,
    pub roar: RoarSection,
    pub completeness: CompletenessSection,
    pub gradcheck: GradcheckSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Unset means the per-command default.
    pub n: Option<usize>,
    pub dim: usize,
    pub noise_sigma: f64,
    pub w_sigma: f64,
    /// `random` or `orthogonal`.
    pub design: String,
    /// Unset means regression labels (classification for `roar` and
    /// `evidence`, which default to 20 classes).
    pub num_classes: Option<usize>,
    pub class_jitter: f64,
    pub confounding_scale: f64,
    pub noiseless: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            n: None,
            dim: d.dim,
            noise_sigma: d.noise_sigma,
            w_sigma: d.w_sigma,
            design: d.design.name().to_string(),
            num_classes: None,
            class_jitter: d.class_jitter,
            confounding_scale: d.confounding_scale,
            noiseless: d.noiseless,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `debiased` or `regular`.
    pub method: String,
    /// `class_mean` or `linear`; unset picks `class_mean` for classification
    /// and `linear` otherwise.
    pub debiaser: Option<String>,
    pub ridge_lambda: f64,
    /// Hidden widths of the concept mean model; empty means ridge regression.
    pub concept_hidden: Vec<usize>,
    pub concept_skip: bool,
    /// Hidden widths of the label head; empty means a linear network.
    pub head_hidden: Vec<usize>,
    pub head_skip: bool,
    /// Replace the network head by ridge regression on the concept means.
    pub closed_form_head: bool,
    /// `relu` or `tanh`.
    pub activation: String,
    pub logit_concepts: bool,
    pub mc_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// `0` disables early stopping.
    pub patience: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let c = CbmConfig::default();
        Self {
            method: "debiased".into(),
            debiaser: None,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            concept_hidden: Vec::new(),
            concept_skip: false,
            head_hidden: Vec::new(),
            head_skip: false,
            closed_form_head: false,
            activation: "relu".into(),
            logit_concepts: c.logit_concepts,
            mc_samples: c.mc_samples,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            patience: t.patience.unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub ns: Vec<usize>,
    pub seeds: usize,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            ns: vec![100, 1_000, 10_000, 100_000],
            seeds: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoarSection {
    pub mask_fractions: Vec<f64>,
    pub repeats: usize,
    pub top_k: usize,
}

impl Default for RoarSection {
    fn default() -> Self {
        Self {
            mask_fractions: DEFAULT_MASK_FRACTIONS.to_vec(),
            repeats: DEFAULT_REPEATS,
            top_k: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompletenessSection {
    pub q_hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for CompletenessSection {
    fn default() -> Self {
        Self {
            q_hidden: vec![32],
            epochs: 200,
            learning_rate: 1e-2,
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    /// Architectures per (loss, activation, skip) combination.
    pub per_combination: usize,
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            per_combination: 3,
            samples: 5,
            tolerance: 1e-4,
        }
    }
}

/// Parses `key.path=value`. The value is read as a TOML value when it
/// parses as one, otherwise as a bare string.
pub fn parse_assignment(spec: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected key=value, got `{spec}`")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("bad key in `{spec}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Writes `value` at the dotted `key` inside `table`, creating sections.
pub fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for part in parts {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(CliError::Config(format!(
                    "`{part}` in `{key}` is not a section"
                )))
            }
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Reads the optional file, applies overrides in order and deserializes.
pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for (key, value) in overrides {
        set_path(&mut table, key, value.clone())?;
    }
    let config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    config.check()?;
    Ok(config)
}

fn activation(name: &str) -> Result<Activation, CliError> {
    match name {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        _ => Err(CliError::Config(format!("unknown activation `{name}`"))),
    }
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        self.design()?;
        activation(&self.model.activation)?;
        if !matches!(self.model.method.as_str(), "debiased" | "regular") {
            return Err(CliError::Config(format!(
                "model.method must be `debiased` or `regular`, got `{}`",
                self.model.method
            )));
        }
        if let Some(d) = &self.model.debiaser {
            if !matches!(d.as_str(), "class_mean" | "linear") {
                return Err(CliError::Config(format!(
                    "model.debiaser must be `class_mean` or `linear`, got `{d}`"
                )));
            }
        }
        Ok(())
    }

    pub fn design(&self) -> Result<Design, CliError> {
        self.data
            .design
            .parse()
            .map_err(|e: debias_cbm::Error| CliError::Config(e.to_string()))
    }

    /// Generator settings. `n` is ignored by `scaling`, which sets it per
    /// cell.
    pub fn synth(&self, seed: u64) -> Result<SynthConfig, CliError> {
        let d = &self.data;
        Ok(SynthConfig {
            n: d.n.unwrap_or(SynthConfig::default().n),
            dim: d.dim,
            noise_sigma: d.noise_sigma,
            w_sigma: d.w_sigma,
            design: self.design()?,
            seed,
            num_classes: d.num_classes,
            class_jitter: d.class_jitter,
            confounding_scale: d.confounding_scale,
            noiseless: d.noiseless,
        })
    }

    pub fn head_train(&self, seed: u64) -> TrainConfig {
        let m = &self.model;
        TrainConfig {
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            epochs: m.epochs,
            patience: (m.patience > 0).then_some(m.patience),
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn cbm(&self, classification: bool, seed: u64) -> Result<CbmConfig, CliError> {
        let m = &self.model;
        let act = activation(&m.activation)?;
        let lambda = m.ridge_lambda;
        let debiaser = match m.debiaser.as_deref() {
            Some("class_mean") => DebiaserKind::ClassMean,
            Some(_) => DebiaserKind::Linear { lambda },
            None if classification => DebiaserKind::ClassMean,
            None => DebiaserKind::Linear { lambda },
        };
        let concept_model = if m.concept_hidden.is_empty() {
            ConceptModelKind::Linear { lambda }
        } else {
            ConceptModelKind::Mlp {
                hidden: m.concept_hidden.clone(),
                activation: act,
                skip: m.concept_skip,
                train: self.head_train(seed),
            }
        };
        let head = if m.closed_form_head {
            HeadKind::ClosedForm { lambda }
        } else {
            HeadKind::Network {
                hidden: m.head_hidden.clone(),
                activation: act,
                skip: m.head_skip,
            }
        };
        Ok(CbmConfig {
            debiaser,
            concept_model,
            logit_concepts: m.logit_concepts,
            head,
            head_train: self.head_train(seed),
            mc_samples: m.mc_samples,
            seed,
        })
    }

    pub fn debiased(&self) -> bool {
        self.model.method == "debiased"
    }
}
