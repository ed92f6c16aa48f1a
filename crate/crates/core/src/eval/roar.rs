use serde::{Deserialize, Serialize};

use crate::cbm::{
    fit_debiased_cbm, fit_regular_cbm, mask_least_explanatory, rank_concepts, CbmConfig,
    ConceptRanking, DebiasedCbm, ValidationSet,
};
use crate::error::{Error, Result};
use crate::eval::parallel::run_cells;
use crate::eval::scaling::Method;
use crate::nnet::top_k_accuracy;
use crate::numkit::derive_seed;
use crate::synthgen::{Split, SynthDataset};

pub const DEFAULT_MASK_FRACTIONS: [f64; 11] =
    [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
pub const DEFAULT_REPEATS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoarConfig {
    pub cbm: CbmConfig,
    pub mask_fractions: Vec<f64>,
    pub repeats: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for RoarConfig {
    fn default() -> Self {
        Self {
            cbm: CbmConfig::default(),
            mask_fractions: DEFAULT_MASK_FRACTIONS.to_vec(),
            repeats: DEFAULT_REPEATS,
            top_k: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoarRecord {
    pub method: Method,
    pub fraction: f64,
    pub repeat: usize,
    pub raw_accuracy: f64,
    /// Raw accuracy divided by the same method and repeat at fraction 0.
    pub normalized_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoarCurve {
    pub mask_fractions: Vec<f64>,
    pub repeats: usize,
    pub top_k: usize,
    pub records: Vec<RoarRecord>,
    /// Global concept order (least explanatory first) used by each method.
    pub rankings: Vec<(Method, Vec<usize>)>,
}

impl RoarCurve {
    /// Mean normalized accuracy over repeats at each fraction.
    pub fn normalized_means(&self, method: Method) -> Vec<f64> {
        self.mean_of(method, |r| r.normalized_accuracy)
    }

    pub fn raw_means(&self, method: Method) -> Vec<f64> {
        self.mean_of(method, |r| r.raw_accuracy)
    }

    fn mean_of(&self, method: Method, value: impl Fn(&RoarRecord) -> f64) -> Vec<f64> {
        self.mask_fractions
            .iter()
            .map(|&f| {
                let vals: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.method == method && r.fraction == f)
                    .map(&value)
                    .collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect()
    }
}

fn validate(config: &RoarConfig, num_classes: usize) -> Result<()> {
    if config.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    if config.top_k == 0 || config.top_k > num_classes {
        return Err(Error::Config(format!(
            "top_k must lie in 1..={num_classes}, got {}",
            config.top_k
        )));
    }
    if config
        .mask_fractions
        .iter()
        .any(|f| !(f.is_finite() && *f >= 0.0))
    {
        return Err(Error::Config(
            "mask fractions must be finite and non-negative".into(),
        ));
    }
    if !config.mask_fractions.contains(&0.0) {
        return Err(Error::Config(
            "mask fractions must include 0 for normalization".into(),
        ));
    }
    let mut seen = config.mask_fractions.clone();
    seen.sort_by(f64::total_cmp);
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("mask fractions must be distinct".into()));
    }
    Ok(())
}

/// Fits one arm on the training split and ranks its concepts by the
/// training-set explanation scores.
pub fn fit_arm(
    data: &SynthDataset,
    split: &Split,
    method: Method,
    config: &RoarConfig,
) -> Result<(DebiasedCbm, ConceptRanking)> {
    let labels = data.labels();
    let x = data.x.select_rows(&split.train);
    let c = data.c.select_rows(&split.train);
    let y = labels.subset(&split.train);
    let vx = data.x.select_rows(&split.valid);
    let vc = data.c.select_rows(&split.valid);
    let vy = labels.subset(&split.valid);
    let validation = (!split.valid.is_empty()).then_some(ValidationSet {
        x: &vx,
        c: &vc,
        y: &vy,
    });
    let cbm_config = CbmConfig {
        seed: derive_seed(config.seed, &format!("roar/{}/fit", method.name())),
        ..config.cbm.clone()
    };
    let cbm = match method {
        Method::Regular => fit_regular_cbm(&x, &c, &y, &cbm_config, validation)?,
        Method::Debiased => fit_debiased_cbm(&x, &c, &y, &cbm_config, validation)?,
    };
    let ranking = rank_concepts(&cbm.explanation_scores(&x)?);
    Ok((cbm, ranking))
}

/// Remove-and-retrain evaluation of both arms on a classification data set.
///
/// Each arm is fitted once. For every fraction and repeat the least
/// explanatory concepts are zeroed at the label head's input, the head alone
/// is retrained with a fresh seed, and top-k accuracy is measured on the
/// test split.
pub fn roar_run(data: &SynthDataset, config: &RoarConfig, jobs: usize) -> Result<RoarCurve> {
    let labels = data.labels();
    let Some(num_classes) = data.config.num_classes.filter(|_| labels.is_categorical()) else {
        return Err(Error::Config(
            "remove-and-retrain needs categorical labels".into(),
        ));
    };
    validate(config, num_classes)?;
    let split = Split::by_index(data.n());
    let arms = Method::BOTH
        .iter()
        .map(|&m| fit_arm(data, &split, m, config))
        .collect::<Result<Vec<_>>>()?;

    let x = data.x.select_rows(&split.train);
    let y = labels.subset(&split.train);
    let x_test = data.x.select_rows(&split.test);
    let test_ids: Vec<usize> = labels
        .subset(&split.test)
        .class_ids()
        .expect("categorical")
        .to_vec();

    let mut cells = Vec::new();
    for (a, method) in Method::BOTH.into_iter().enumerate() {
        for &fraction in &config.mask_fractions {
            for repeat in 0..config.repeats {
                cells.push((a, method, fraction, repeat));
            }
        }
    }
    let raw = run_cells(
        jobs,
        &cells,
        |&(a, method, fraction, repeat)| -> Result<f64> {
            let (cbm, ranking) = &arms[a];
            let mask = mask_least_explanatory(ranking, fraction);
            let seed = derive_seed(
                config.seed,
                &format!("roar/{}/fraction={fraction}/repeat={repeat}", method.name()),
            );
            let retrained = cbm.retrain_head(
                &x,
                &y,
                &mask,
                &config.cbm.head,
                &config.cbm.head_train,
                seed,
            )?;
            top_k_accuracy(&retrained.predict(&x_test)?, &test_ids, config.top_k)
        },
    )?
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    let mut records = Vec::with_capacity(cells.len());
    for (&(_, method, fraction, repeat), &raw_accuracy) in cells.iter().zip(&raw) {
        let base = cells
            .iter()
            .zip(&raw)
            .find(|(&(_, m, f, r), _)| m == method && f == 0.0 && r == repeat)
            .map(|(_, &v)| v)
            .expect("fraction 0 present");
        if base == 0.0 {
            return Err(Error::NonFinite(format!(
                "{} accuracy at fraction 0 is zero; cannot normalize",
                method.name()
            )));
        }
        records.push(RoarRecord {
            method,
            fraction,
            repeat,
            raw_accuracy,
            normalized_accuracy: raw_accuracy / base,
        });
    }
    Ok(RoarCurve {
        mask_fractions: config.mask_fractions.clone(),
        repeats: config.repeats,
        top_k: config.top_k,
        records,
        rankings: Method::BOTH
            .into_iter()
            .zip(&arms)
            .map(|(m, (_, r))| (m, r.global.clone()))
            .collect(),
    })
}
