use serde::{Deserialize, Serialize};

use crate::cbm::concept::{fit_concept_distribution, ConceptModelKind, GaussianConceptModel};
use crate::cbm::debiaser::{fit_debiaser, ConceptDebiaser, DebiaserKind};
use crate::cbm::predictor::Predictor;
use crate::error::{Error, Result};
use crate::labels::Labels;
use crate::nnet::{
    backward, softmax_rows, train_with, Activation, Gradients, Loss, MlpModel, MlpSpec, TrainConfig,
};
use crate::numkit::{solve_least_squares, Matrix, RngStream, DEFAULT_RIDGE_LAMBDA};

pub const DEFAULT_MC_SAMPLES: usize = 25;

/// Upper bound on stacked Monte Carlo rows evaluated at once during
/// prediction.
const PREDICT_CHUNK_ROWS: usize = 1 << 16;

/// Label head `g(d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    /// Ridge regression of the label representation on the mean concepts.
    ClosedForm { lambda: f64 },
    /// Network fitted to Monte Carlo averages over concept draws. An empty
    /// `hidden` list gives a linear head.
    Network {
        hidden: Vec<usize>,
        activation: Activation,
        skip: bool,
    },
}

impl HeadKind {
    pub fn linear_network() -> Self {
        HeadKind::Network {
            hidden: Vec::new(),
            activation: Activation::Relu,
            skip: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Regression { outputs: usize },
    Classification { num_classes: usize },
}

impl Task {
    pub fn of(y: &Labels) -> Task {
        match y {
            Labels::Classes { num_classes, .. } => Task::Classification {
                num_classes: *num_classes,
            },
            Labels::Real(m) => Task::Regression { outputs: m.cols() },
        }
    }

    pub fn width(self) -> usize {
        match self {
            Task::Regression { outputs } => outputs,
            Task::Classification { num_classes } => num_classes,
        }
    }

    fn loss(self) -> Loss {
        match self {
            Task::Regression { .. } => Loss::Mse,
            Task::Classification { .. } => Loss::SoftmaxCrossEntropy,
        }
    }
}

/// Settings for the full pipeline. Seeds inside the nested training
/// configurations are replaced by streams derived from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbmConfig {
    pub debiaser: DebiaserKind,
    pub concept_model: ConceptModelKind,
    /// Treat concepts as probabilities and model them in logit space.
    pub logit_concepts: bool,
    pub head: HeadKind,
    pub head_train: TrainConfig,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for CbmConfig {
    fn default() -> Self {
        Self {
            debiaser: DebiaserKind::default(),
            concept_model: ConceptModelKind::default(),
            logit_concepts: false,
            head: HeadKind::linear_network(),
            head_train: TrainConfig::default(),
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

/// Held-out data used for early stopping.
#[derive(Clone, Copy)]
pub struct ValidationSet<'a> {
    pub x: &'a Matrix,
    pub c: &'a Matrix,
    pub y: &'a Labels,
}

/// A fitted concept bottleneck: concept distribution `p(d|x)`, label head
/// `g(d)` and the centering used for explanations. Without a debiaser the
/// concept model was trained on the raw concepts (the regular baseline).
#[derive(Clone, Debug, PartialEq)]
pub struct DebiasedCbm {
    pub debiaser: Option<ConceptDebiaser>,
    pub concept_dist: GaussianConceptModel,
    pub label_head: Predictor,
    pub task: Task,
    pub explanation_center: Vec<f64>,
    pub mc_samples: usize,
    /// Concepts zeroed at the head's input.
    pub masked: Vec<bool>,
    pub seed: u64,
}

fn check_rows(x: &Matrix, c: &Matrix, y: &Labels) -> Result<()> {
    if x.rows() != c.rows() || x.rows() != y.len() {
        return Err(Error::shape(
            "fit_cbm",
            format!(
                "{} features, {} concepts, {} labels",
                x.rows(),
                c.rows(),
                y.len()
            ),
        ));
    }
    if x.rows() < 2 {
        return Err(Error::shape("fit_cbm", "need at least two training rows"));
    }
    Ok(())
}

fn reseed_debiaser(kind: &DebiaserKind, seed: u64) -> DebiaserKind {
    match kind {
        DebiaserKind::Mlp {
            hidden,
            activation,
            train,
        } => DebiaserKind::Mlp {
            hidden: hidden.clone(),
            activation: *activation,
            train: TrainConfig {
                seed,
                ..train.clone()
            },
        },
        other => other.clone(),
    }
}

fn reseed_concept(kind: &ConceptModelKind, seed: u64) -> ConceptModelKind {
    match kind {
        ConceptModelKind::Mlp {
            hidden,
            activation,
            skip,
            train,
        } => ConceptModelKind::Mlp {
            hidden: hidden.clone(),
            activation: *activation,
            skip: *skip,
            train: TrainConfig {
                seed,
                ..train.clone()
            },
        },
        other => other.clone(),
    }
}

fn fit_cbm(
    x: &Matrix,
    c: &Matrix,
    y: &Labels,
    config: &CbmConfig,
    validation: Option<ValidationSet<'_>>,
    debias: bool,
) -> Result<DebiasedCbm> {
    check_rows(x, c, y)?;
    if config.mc_samples == 0 {
        return Err(Error::Config("mc_samples must be at least 1".into()));
    }
    let root = RngStream::new(config.seed);
    let (debiaser, targets, valid_targets) = if debias {
        let kind = reseed_debiaser(&config.debiaser, root.child("debiaser").seed());
        let d = fit_debiaser(c, y, &kind)?;
        let t = d.predict(y)?;
        let vt = validation.map(|v| d.predict(v.y)).transpose()?;
        (Some(d), t, vt)
    } else {
        (None, c.clone(), validation.map(|v| v.c.clone()))
    };
    let concept_kind = reseed_concept(&config.concept_model, root.child("concept").seed());
    let concept_dist = fit_concept_distribution(
        x,
        &targets,
        &concept_kind,
        config.logit_concepts,
        validation
            .zip(valid_targets.as_ref())
            .map(|(v, t)| (v.x, t)),
    )?;
    let masked = vec![false; concept_dist.dim()];
    let head_train = TrainConfig {
        seed: root.child("head").seed(),
        ..config.head_train.clone()
    };
    let label_head = fit_label_head_mc(
        &concept_dist,
        x,
        y,
        &config.head,
        &head_train,
        config.mc_samples,
        &masked,
        root.child("mc").seed(),
        validation.map(|v| (v.x, v.y)),
    )?;
    let explanation_center = concept_dist.mean(x)?.column_means();
    Ok(DebiasedCbm {
        debiaser,
        concept_dist,
        label_head,
        task: Task::of(y),
        explanation_center,
        mc_samples: config.mc_samples,
        masked,
        seed: config.seed,
    })
}

/// Runs the debiased procedure: first-stage `d̂(y)`, concept distribution
/// on `(x, d̂)`, label head on Monte Carlo averages, explanation centering.
pub fn fit_debiased_cbm(
    x: &Matrix,
    c: &Matrix,
    y: &Labels,
    config: &CbmConfig,
    validation: Option<ValidationSet<'_>>,
) -> Result<DebiasedCbm> {
    fit_cbm(x, c, y, config, validation, true)
}

/// The same pipeline trained on the observed concepts directly.
pub fn fit_regular_cbm(
    x: &Matrix,
    c: &Matrix,
    y: &Labels,
    config: &CbmConfig,
    validation: Option<ValidationSet<'_>>,
) -> Result<DebiasedCbm> {
    fit_cbm(x, c, y, config, validation, false)
}

fn linear_gaussian_config() -> CbmConfig {
    CbmConfig {
        debiaser: DebiaserKind::Linear {
            lambda: DEFAULT_RIDGE_LAMBDA,
        },
        concept_model: ConceptModelKind::Linear {
            lambda: DEFAULT_RIDGE_LAMBDA,
        },
        head: HeadKind::ClosedForm {
            lambda: DEFAULT_RIDGE_LAMBDA,
        },
        ..CbmConfig::default()
    }
}

fn make_isotropic(mut cbm: DebiasedCbm) -> DebiasedCbm {
    let v = &mut cbm.concept_dist.variance;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|e| *e = mean);
    cbm
}

/// Closed-form three-step regression: `y → c` gives `d̂`, `x → d̂` gives
/// the concept mean, and the label head regresses `y` on that mean. The
/// concept variance is isotropic (mean residual variance).
pub fn fit_linear_gaussian(x: &Matrix, c: &Matrix, y: &Matrix) -> Result<DebiasedCbm> {
    let cbm = fit_debiased_cbm(
        x,
        c,
        &Labels::Real(y.clone()),
        &linear_gaussian_config(),
        None,
    )?;
    Ok(make_isotropic(cbm))
}

/// [`fit_linear_gaussian`] with the observed concepts in place of `d̂`.
pub fn fit_regular_linear(x: &Matrix, c: &Matrix, y: &Matrix) -> Result<DebiasedCbm> {
    let cbm = fit_regular_cbm(
        x,
        c,
        &Labels::Real(y.clone()),
        &linear_gaussian_config(),
        None,
    )?;
    Ok(make_isotropic(cbm))
}

fn apply_mask(m: &mut Matrix, masked: &[bool]) {
    if !masked.iter().any(|&b| b) {
        return;
    }
    for r in 0..m.rows() {
        for (v, &hide) in m.row_mut(r).iter_mut().zip(masked) {
            if hide {
                *v = 0.0;
            }
        }
    }
}

/// The Monte Carlo objective `loss(mean_s g(d_s), y)` over a data set.
struct McObjective {
    means: Matrix,
    sd: Vec<f64>,
    targets: Matrix,
    task: Task,
    samples: usize,
    deterministic: bool,
}

impl McObjective {
    fn new(
        dist: &GaussianConceptModel,
        x: &Matrix,
        y: &Labels,
        masked: &[bool],
        samples: usize,
    ) -> Result<Self> {
        let mut means = dist.mean(x)?;
        apply_mask(&mut means, masked);
        let sd: Vec<f64> = dist
            .variance
            .iter()
            .zip(masked)
            .map(|(&v, &hide)| if hide { 0.0 } else { v.sqrt() })
            .collect();
        let deterministic = sd.iter().all(|&s| s == 0.0);
        Ok(Self {
            means,
            sd,
            targets: y.to_matrix(),
            task: Task::of(y),
            samples,
            deterministic,
        })
    }

    fn draws(&self, rows: &[usize], rng: &mut RngStream) -> Matrix {
        let s = self.samples;
        let m = self.means.cols();
        let mut stacked = Matrix::zeros(rows.len() * s, m);
        for (b, &i) in rows.iter().enumerate() {
            let mean = self.means.row(i);
            for k in 0..s {
                let dst = stacked.row_mut(b * s + k);
                for ((d, &mu), &sd) in dst.iter_mut().zip(mean).zip(&self.sd) {
                    *d = mu + sd * rng.standard_normal();
                }
            }
        }
        stacked
    }

    /// Per-row average of the draws [`McObjective::draws`] would produce.
    fn draw_means(&self, rows: &[usize], rng: &mut RngStream) -> Matrix {
        let m = self.means.cols();
        let mut out = Matrix::zeros(rows.len(), m);
        let mut acc = vec![0.0; m];
        for (b, &i) in rows.iter().enumerate() {
            let mean = self.means.row(i);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for _ in 0..self.samples {
                for ((a, &mu), &sd) in acc.iter_mut().zip(mean).zip(&self.sd) {
                    *a += mu + sd * rng.standard_normal();
                }
            }
            for (d, a) in out.row_mut(b).iter_mut().zip(&acc) {
                *d = a / self.samples as f64;
            }
        }
        out
    }

    fn evaluate(
        &self,
        head: &MlpModel,
        rows: &[usize],
        rng: &mut RngStream,
    ) -> Result<(f64, Gradients)> {
        let targets = self.targets.select_rows(rows);
        let loss = self.task.loss();
        if self.deterministic {
            let (g, l) = backward(head, &self.means.select_rows(rows), &targets, loss)?;
            return Ok((l, g));
        }
        if head.spec.depth() == 1 && matches!(self.task, Task::Regression { .. }) {
            // An affine head commutes with the average over draws, so the
            // averaged output is the head applied to the averaged draw.
            let (g, l) = backward(head, &self.draw_means(rows, rng), &targets, loss)?;
            return Ok((l, g));
        }
        let s = self.samples;
        let b = rows.len();
        let stacked = self.draws(rows, rng);
        let cache = head.forward_cached(&stacked)?;
        let out = &cache.output;
        let k = out.cols();
        let mut grad = Matrix::zeros(b * s, k);
        let value = match self.task {
            Task::Regression { .. } => {
                let mut avg = Matrix::zeros(b, k);
                for i in 0..b {
                    let dst = avg.row_mut(i);
                    for j in 0..s {
                        dst.iter_mut()
                            .zip(out.row(i * s + j))
                            .for_each(|(a, o)| *a += o);
                    }
                    dst.iter_mut().for_each(|a| *a /= s as f64);
                }
                let value = loss.value(&avg, &targets)?;
                if !value.is_finite() {
                    return Err(diverged());
                }
                let (_, g_avg) = loss.value_and_grad(&avg, &targets)?;
                for i in 0..b {
                    for j in 0..s {
                        grad.row_mut(i * s + j)
                            .iter_mut()
                            .zip(g_avg.row(i))
                            .for_each(|(g, ga)| *g = ga / s as f64);
                    }
                }
                value
            }
            Task::Classification { .. } => {
                // Average probabilities over draws; work in log space.
                let ln_s = (s as f64).ln();
                let scale = 1.0 / (b * s) as f64;
                let mut total = 0.0;
                let mut logp = vec![0.0; s * k];
                let mut log_pbar = vec![0.0; k];
                for i in 0..b {
                    for j in 0..s {
                        let o = out.row(i * s + j);
                        let lse = log_sum_exp(o);
                        for (dst, v) in logp[j * k..(j + 1) * k].iter_mut().zip(o) {
                            *dst = v - lse;
                        }
                    }
                    for (c, lp) in log_pbar.iter_mut().enumerate() {
                        let max = (0..s)
                            .map(|j| logp[j * k + c])
                            .fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = (0..s).map(|j| (logp[j * k + c] - max).exp()).sum();
                        *lp = max + sum.ln() - ln_s;
                    }
                    let t = targets.row(i);
                    total -= t.iter().zip(&log_pbar).map(|(tv, lp)| tv * lp).sum::<f64>();
                    for j in 0..s {
                        let lp_s = &logp[j * k..(j + 1) * k];
                        let ratio: Vec<f64> = lp_s
                            .iter()
                            .zip(&log_pbar)
                            .map(|(a, b)| (a - b).exp())
                            .collect();
                        let weighted: f64 = t.iter().zip(&ratio).map(|(tv, r)| tv * r).sum();
                        for (c, g) in grad.row_mut(i * s + j).iter_mut().enumerate() {
                            let p = lp_s[c].exp();
                            *g = -scale * (t[c] * ratio[c] - p * weighted);
                        }
                    }
                }
                let value = total / b as f64;
                if !value.is_finite() {
                    return Err(diverged());
                }
                value
            }
        };
        Ok((value, head.backward_from_output(&cache, &grad)))
    }
}

fn diverged() -> Error {
    Error::TrainingDiverged {
        epoch: 0,
        history: Vec::new(),
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Fits `g(d)` so that its average over draws from `p(d|x)` matches the
/// labels. Each optimisation step draws `mc_samples` fresh concept vectors
/// per example. With all variances zero no sampling happens and this is
/// ordinary training on the mean concepts.
#[allow(clippy::too_many_arguments)]
pub fn fit_label_head_mc(
    concept_dist: &GaussianConceptModel,
    x: &Matrix,
    y: &Labels,
    head: &HeadKind,
    train_config: &TrainConfig,
    mc_samples: usize,
    masked: &[bool],
    mc_seed: u64,
    validation: Option<(&Matrix, &Labels)>,
) -> Result<Predictor> {
    if x.rows() != y.len() {
        return Err(Error::shape(
            "fit_label_head_mc",
            format!("{} feature rows for {} labels", x.rows(), y.len()),
        ));
    }
    if masked.len() != concept_dist.dim() {
        return Err(Error::shape(
            "fit_label_head_mc",
            format!(
                "mask of {} for {} concepts",
                masked.len(),
                concept_dist.dim()
            ),
        ));
    }
    if mc_samples == 0 {
        return Err(Error::Config("mc_samples must be at least 1".into()));
    }
    match head {
        HeadKind::ClosedForm { lambda } => {
            let mut means = concept_dist.mean(x)?;
            apply_mask(&mut means, masked);
            Ok(Predictor::Linear(solve_least_squares(
                &means,
                &y.to_matrix(),
                *lambda,
            )?))
        }
        HeadKind::Network {
            hidden,
            activation,
            skip,
        } => {
            let task = Task::of(y);
            let mut sizes = vec![concept_dist.dim()];
            sizes.extend(hidden);
            sizes.push(task.width());
            let spec = MlpSpec::new(sizes)
                .with_activation(*activation)
                .with_skip(*skip);
            let config = TrainConfig {
                loss: task.loss(),
                ..train_config.clone()
            };
            let model = MlpModel::new(spec, config.seed)?;
            let objective = McObjective::new(concept_dist, x, y, masked, mc_samples)?;
            let mut rng = RngStream::new(mc_seed).child("train");
            let step = |m: &MlpModel, idx: &[usize]| objective.evaluate(m, idx, &mut rng);
            let outcome = match validation {
                Some((vx, vy)) => {
                    let vobj = McObjective::new(concept_dist, vx, vy, masked, mc_samples)?;
                    let all: Vec<usize> = (0..vx.rows()).collect();
                    let check = |m: &MlpModel| {
                        // Same draws every epoch so epochs are comparable.
                        let mut r = RngStream::new(mc_seed).child("valid");
                        Ok(vobj.evaluate(m, &all, &mut r)?.0)
                    };
                    train_with(model, x.rows(), &config, step, Some(check))?
                }
                None => train_with(
                    model,
                    x.rows(),
                    &config,
                    step,
                    None::<fn(&MlpModel) -> Result<f64>>,
                )?,
            };
            Ok(Predictor::Mlp(outcome.model))
        }
    }
}

impl DebiasedCbm {
    pub fn concept_dim(&self) -> usize {
        self.concept_dist.dim()
    }

    pub fn is_debiased(&self) -> bool {
        self.debiaser.is_some()
    }

    /// `E[d|x]` for each row.
    pub fn concept_means(&self, x: &Matrix) -> Result<Matrix> {
        self.concept_dist.mean(x)
    }

    /// Centered explanations `E[d|x] − mean_train E[d|x]`.
    pub fn explanation_scores(&self, x: &Matrix) -> Result<Matrix> {
        let mut s = self.concept_means(x)?;
        let neg: Vec<f64> = self.explanation_center.iter().map(|v| -v).collect();
        s.add_row_vector(&neg);
        Ok(s)
    }

    fn head_input(&self, x: &Matrix) -> Result<Matrix> {
        let mut m = self.concept_means(x)?;
        apply_mask(&mut m, &self.masked);
        Ok(m)
    }

    fn softmax_link(&self) -> bool {
        matches!(self.label_head, Predictor::Mlp(_))
            && matches!(self.task, Task::Classification { .. })
    }

    fn link(&self, out: Matrix) -> Matrix {
        if self.softmax_link() {
            softmax_rows(&out)
        } else {
            out
        }
    }

    /// Label head applied to the mean concepts only. Cheaper than
    /// [`DebiasedCbm::predict`] but ignores the concept uncertainty for
    /// non-linear heads.
    pub fn predict_mean(&self, x: &Matrix) -> Result<Matrix> {
        let out = self.label_head.predict(&self.head_input(x)?)?;
        Ok(self.link(out))
    }

    /// `E[y|x]` estimated with `mc_samples` draws per row from a stream
    /// derived from the model seed, so repeated calls agree. Classification
    /// heads return class probabilities. A linear head commutes with the
    /// expectation and is evaluated at the mean directly.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let Predictor::Mlp(head) = &self.label_head else {
            return self.predict_mean(x);
        };
        let obj = McObjective {
            means: self.head_input(x)?,
            sd: self
                .concept_dist
                .variance
                .iter()
                .zip(&self.masked)
                .map(|(&v, &hide)| if hide { 0.0 } else { v.sqrt() })
                .collect(),
            targets: Matrix::zeros(0, 0),
            task: self.task,
            samples: self.mc_samples,
            deterministic: false,
        };
        if obj.sd.iter().all(|&s| s == 0.0) {
            return self.predict_mean(x);
        }
        let s = self.mc_samples;
        let k = head.spec.output_size();
        let mut rng = RngStream::new(self.seed).child("predict");
        let mut out = Matrix::zeros(x.rows(), k);
        let chunk = (PREDICT_CHUNK_ROWS / s).max(1);
        let rows: Vec<usize> = (0..x.rows()).collect();
        for block in rows.chunks(chunk) {
            let stacked = obj.draws(block, &mut rng);
            let scores = self.link(head.forward(&stacked)?);
            for (b, &i) in block.iter().enumerate() {
                let dst = out.row_mut(i);
                for j in 0..s {
                    dst.iter_mut()
                        .zip(scores.row(b * s + j))
                        .for_each(|(d, v)| *d += v);
                }
                dst.iter_mut().for_each(|d| *d /= s as f64);
            }
        }
        Ok(out)
    }

    /// Scores on the logit scale: log-probabilities for network
    /// classification heads, raw outputs otherwise.
    pub fn label_logits(&self, x: &Matrix) -> Result<Matrix> {
        let p = self.predict(x)?;
        if self.softmax_link() {
            Ok(p.map(|v| v.max(f64::MIN_POSITIVE).ln()))
        } else {
            Ok(p)
        }
    }

    /// Copy of this model whose label head is refitted with the given
    /// concepts zeroed at its input. The concept model is left untouched.
    pub fn retrain_head(
        &self,
        x: &Matrix,
        y: &Labels,
        masked: &[bool],
        head: &HeadKind,
        train_config: &TrainConfig,
        seed: u64,
    ) -> Result<DebiasedCbm> {
        let root = RngStream::new(seed);
        let config = TrainConfig {
            seed: root.child("head").seed(),
            ..train_config.clone()
        };
        let label_head = fit_label_head_mc(
            &self.concept_dist,
            x,
            y,
            head,
            &config,
            self.mc_samples,
            masked,
            root.child("mc").seed(),
            None,
        )?;
        Ok(DebiasedCbm {
            label_head,
            masked: masked.to_vec(),
            seed,
            ..self.clone()
        })
    }
}

/// Free-function form of [`DebiasedCbm::explanation_scores`].
pub fn explanation_scores(cbm: &DebiasedCbm, x: &Matrix) -> Result<Matrix> {
    cbm.explanation_scores(x)
}
