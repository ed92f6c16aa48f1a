use serde::{Deserialize, Serialize};

use crate::cbm::{fit_debiaser, DebiaserKind};
use crate::error::{Error, Result};
use crate::numkit::{solve_least_squares, spearman, DEFAULT_RIDGE_LAMBDA};
use crate::synthgen::{Split, SynthDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub concept_id: usize,
    /// Spearman ρ of the feature-based predictor; `None` when undefined.
    pub rho_x: Option<f64>,
    /// Spearman ρ of the class-mean predictor; `None` when undefined.
    pub rho_y: Option<f64>,
    pub x_beats_y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    /// Sorted by increasing `rho_y`; undefined values last, ties by id.
    pub rows: Vec<EvidenceRow>,
    pub x_beats_y_count: usize,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Compares two concept predictors on the test split: a linear regression
/// on the features, `ĉ(x)`, and the per-class average of the training
/// concepts, `ĉ(y)`. A concept counts as x-dominant when
/// `ρ(ĉ(x), c) > ρ(ĉ(y), c)`.
pub fn evidence_experiment(data: &SynthDataset) -> Result<EvidenceReport> {
    let labels = data.labels();
    if !labels.is_categorical() {
        return Err(Error::Config(
            "evidence experiment needs categorical labels".into(),
        ));
    }
    let split = Split::by_index(data.n());
    let x = data.x.select_rows(&split.train);
    let c = data.c.select_rows(&split.train);
    let y = labels.subset(&split.train);
    let x_test = data.x.select_rows(&split.test);
    let c_test = data.c.select_rows(&split.test);
    let y_test = labels.subset(&split.test);

    let from_x = solve_least_squares(&x, &c, DEFAULT_RIDGE_LAMBDA)?.predict(&x_test)?;
    let from_y = fit_debiaser(&c, &y, &DebiaserKind::ClassMean)?.predict(&y_test)?;

    let mut rows = Vec::with_capacity(c.cols());
    for j in 0..c.cols() {
        let truth = c_test.column(j);
        let rho_x = defined(spearman(&from_x.column(j), &truth))?;
        let rho_y = defined(spearman(&from_y.column(j), &truth))?;
        let x_beats_y = matches!((rho_x, rho_y), (Some(a), Some(b)) if a > b);
        rows.push(EvidenceRow {
            concept_id: j,
            rho_x,
            rho_y,
            x_beats_y,
        });
    }
    rows.sort_by(|a, b| match (a.rho_y, b.rho_y) {
        (Some(p), Some(q)) => p.total_cmp(&q).then(a.concept_id.cmp(&b.concept_id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.concept_id.cmp(&b.concept_id),
    });
    let x_beats_y_count = rows.iter().filter(|r| r.x_beats_y).count();
    Ok(EvidenceReport {
        rows,
        x_beats_y_count,
    })
}
