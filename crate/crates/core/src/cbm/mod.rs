//! Debiased concept bottleneck models.
//!
//! The label `y` acts as an instrument for the concepts: the first stage
//! estimates `d̂(y) = E[c|y]`, which removes the parts of the observed
//! concepts driven by the confounder and by annotation noise. The concept
//! model `p(d|x)` is then fitted to `d̂`, and the label head to Monte Carlo
//! averages over that distribution.

mod bundle;
mod completeness;
mod concept;
mod debiaser;
mod explain;
mod model;
mod predictor;

pub use completeness::{measure_completeness, r_squared, CompletenessMetric, CompletenessReport};
pub use concept::{
    fit_concept_distribution, logit_targets, ConceptModelKind, GaussianConceptModel, LOGIT_CLAMP,
    VARIANCE_FLOOR,
};
pub use debiaser::{fit_debiaser, ConceptDebiaser, DebiaserFit, DebiaserKind};
pub use explain::{mask_least_explanatory, masked_count, rank_concepts, ConceptRanking};
pub use model::{
    explanation_scores, fit_debiased_cbm, fit_label_head_mc, fit_linear_gaussian, fit_regular_cbm,
    fit_regular_linear, CbmConfig, DebiasedCbm, HeadKind, Task, ValidationSet, DEFAULT_MC_SAMPLES,
};
pub use predictor::Predictor;
