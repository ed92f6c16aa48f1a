//! Directory bundles for fitted models.
//!
//! Layout: `cbm.json` holds the small state (task, centering, variances,
//! mask, seeds, class-mean tables); `concept_mean/`, `label_head/` and,
//! for regression debiasers, `debiaser/` hold the predictors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cbm::concept::GaussianConceptModel;
use crate::cbm::debiaser::{ConceptDebiaser, DebiaserFit};
use crate::cbm::model::{DebiasedCbm, Task};
use crate::cbm::predictor::Predictor;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

const FORMAT: &str = "debias-cbm-model/1";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DebiaserState {
    ClassMean { table: Matrix, counts: Vec<usize> },
    Regression { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct CbmState {
    format: String,
    task: Task,
    explanation_center: Vec<f64>,
    variance: Vec<f64>,
    logit_space: bool,
    mc_samples: usize,
    masked: Vec<bool>,
    seed: u64,
    debiaser: Option<DebiaserState>,
}

impl DebiasedCbm {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let debiaser = match &self.debiaser {
            None => None,
            Some(d) => Some(match &d.fit {
                DebiaserFit::ClassMean { table, counts } => DebiaserState::ClassMean {
                    table: table.clone(),
                    counts: counts.clone(),
                },
                DebiaserFit::Regression { model, lo, hi } => {
                    model.save(&dir.join("debiaser"))?;
                    DebiaserState::Regression {
                        lo: lo.clone(),
                        hi: hi.clone(),
                    }
                }
            }),
        };
        self.concept_dist
            .mean_model
            .save(&dir.join("concept_mean"))?;
        self.label_head.save(&dir.join("label_head"))?;
        let state = CbmState {
            format: FORMAT.into(),
            task: self.task,
            explanation_center: self.explanation_center.clone(),
            variance: self.concept_dist.variance.clone(),
            logit_space: self.concept_dist.logit_space,
            mc_samples: self.mc_samples,
            masked: self.masked.clone(),
            seed: self.seed,
            debiaser,
        };
        fs::write(dir.join("cbm.json"), serde_json::to_string_pretty(&state)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let state: CbmState = serde_json::from_str(&fs::read_to_string(dir.join("cbm.json"))?)?;
        if state.format != FORMAT {
            return Err(Error::Format(format!(
                "unknown model format {:?}",
                state.format
            )));
        }
        let debiaser = match state.debiaser {
            None => None,
            Some(DebiaserState::ClassMean { table, counts }) => Some(ConceptDebiaser {
                fit: DebiaserFit::ClassMean { table, counts },
            }),
            Some(DebiaserState::Regression { lo, hi }) => Some(ConceptDebiaser {
                fit: DebiaserFit::Regression {
                    model: Predictor::load(&dir.join("debiaser"))?,
                    lo,
                    hi,
                },
            }),
        };
        let cbm = DebiasedCbm {
            debiaser,
            concept_dist: GaussianConceptModel {
                mean_model: Predictor::load(&dir.join("concept_mean"))?,
                variance: state.variance,
                logit_space: state.logit_space,
            },
            label_head: Predictor::load(&dir.join("label_head"))?,
            task: state.task,
            explanation_center: state.explanation_center,
            mc_samples: state.mc_samples,
            masked: state.masked,
            seed: state.seed,
        };
        let m = cbm.concept_dim();
        if cbm.explanation_center.len() != m
            || cbm.masked.len() != m
            || cbm.label_head.in_dim() != m
            || cbm.concept_dist.mean_model.out_dim() != m
        {
            return Err(Error::Format(
                "inconsistent concept dimensions in bundle".into(),
            ));
        }
        Ok(cbm)
    }
}
