use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Supervision targets: either class ids or real-valued label vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Classes { ids: Vec<usize>, num_classes: usize },
    Real(Matrix),
}

impl Labels {
    pub fn classes(ids: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&k| k >= num_classes) {
            return Err(Error::Domain(format!(
                "class id {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Labels::Classes { ids, num_classes })
    }

    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { ids, .. } => ids.len(),
            Labels::Real(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Labels::Classes { .. })
    }

    /// Width of [`Labels::to_matrix`].
    pub fn width(&self) -> usize {
        match self {
            Labels::Classes { num_classes, .. } => *num_classes,
            Labels::Real(m) => m.cols(),
        }
    }

    /// One-hot encoding for classes, the matrix itself otherwise.
    pub fn to_matrix(&self) -> Matrix {
        match self {
            Labels::Classes { ids, num_classes } => {
                let mut m = Matrix::zeros(ids.len(), *num_classes);
                for (i, &k) in ids.iter().enumerate() {
                    m[(i, k)] = 1.0;
                }
                m
            }
            Labels::Real(m) => m.clone(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Labels {
        match self {
            Labels::Classes { ids, num_classes } => Labels::Classes {
                ids: indices.iter().map(|&i| ids[i]).collect(),
                num_classes: *num_classes,
            },
            Labels::Real(m) => Labels::Real(m.select_rows(indices)),
        }
    }

    pub fn class_ids(&self) -> Option<&[usize]> {
        match self {
            Labels::Classes { ids, .. } => Some(ids),
            Labels::Real(_) => None,
        }
    }
}
