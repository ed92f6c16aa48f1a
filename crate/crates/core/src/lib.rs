//! Debiased concept bottleneck models.
//!
//! Concept annotations are often contaminated by noise and by hidden
//! variables that also shape the features. Treating the label as an
//! instrument, the concepts are first replaced by their label-conditional
//! expectation `E[c | y]`; a feature → concept model and a concept → label
//! head are then fitted on those debiased targets.
//!
//! Modules:
//! - [`numkit`]: matrices, random streams, least squares, correlations.
//! - [`synthgen`]: linear structural-equation data with hidden confounders.
//! - [`nnet`]: a small MLP stack with exact backpropagation and Adam.
//! - [`cbm`]: the debiasing estimator, explanations, completeness.
//! - [`eval`]: scaling, ROAR and evidence experiments with CSV output.
//!
//! ```
//! use debias_cbm::cbm::{fit_debiased_cbm, CbmConfig};
//! use debias_cbm::synthgen::{generate, SynthConfig};
//!
//! let data = generate(&SynthConfig { n: 2000, dim: 10, seed: 1, ..Default::default() })?;
//! let model = fit_debiased_cbm(&data.x, &data.c, &data.labels(), &CbmConfig::default(), None)?;
//! let concepts = model.concept_means(&data.x)?;
//! let y_hat = model.predict(&data.x)?;
//! assert_eq!(concepts.shape(), (2000, 10));
//! assert_eq!(y_hat.shape(), (2000, 10));
//! # Ok::<(), debias_cbm::Error>(())
//! ```

pub mod cbm;
pub mod error;
pub mod eval;
pub mod labels;
pub mod nnet;
pub mod numkit;
pub mod synthgen;

pub use error::{Error, Result};
pub use labels::Labels;
pub use numkit::{LinearModel, Matrix, RngStream};
