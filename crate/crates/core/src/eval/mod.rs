//! Experiment harness: scaling study, remove-and-retrain, the evidence
//! comparison, annotation mapping and CSV output.

mod annotation;
mod evidence;
mod parallel;
mod roar;
mod scaling;
pub mod tables;

pub use annotation::{map_annotation, map_certainty, Certainty};
pub use evidence::{evidence_experiment, EvidenceReport, EvidenceRow};
pub use parallel::run_cells;
pub use roar::{
    fit_arm, roar_run, RoarConfig, RoarCurve, RoarRecord, DEFAULT_MASK_FRACTIONS, DEFAULT_REPEATS,
};
pub use scaling::{
    concept_truth_correlation, scaling_cell_seed, scaling_experiment, Method, ScalingRecord,
    ScalingResult, ScalingSummary,
};
