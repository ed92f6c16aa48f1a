//! Synthetic data from the linear structural equations
//!
//! ```text
//! d = W₁ y + ε_d
//! c = d + W₂ u
//! x = W₃ d + W₄ u + ε_x
//! ```
//!
//! with `y, u ~ N(0, I)` drawn independently. Two designs are supported:
//! fully random generator matrices, and an orthogonal design where
//! `W_j = Q Λ_j Qᵀ` and the label and confounder act on complementary
//! halves of the eigenbasis.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Labels;
use crate::numkit::{random_gaussian, random_orthonormal, random_uniform, Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    FullyRandom,
    OrthogonalConfounding,
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::FullyRandom => "random",
            Design::OrthogonalConfounding => "orthogonal",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "fully_random" => Ok(Design::FullyRandom),
            "orthogonal" | "orthogonal_confounding" => Ok(Design::OrthogonalConfounding),
            other => Err(Error::Config(format!(
                "unknown design {other:?} (expected \"random\" or \"orthogonal\")"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub dim: usize,
    /// Standard deviation of `ε_d` and `ε_x`.
    pub noise_sigma: f64,
    /// Standard deviation of generator-matrix entries (random design).
    pub w_sigma: f64,
    pub design: Design,
    pub seed: u64,
    /// Classification variant only.
    pub num_classes: Option<usize>,
    /// Within-class spread of the latent label vector around its class
    /// prototype (classification variant only).
    pub class_jitter: f64,
    /// Diagnostic multiplier on `W₂` and `W₄`; `0` removes confounding.
    pub confounding_scale: f64,
    /// Diagnostic switch that zeroes `ε_d` and `ε_x`.
    pub noiseless: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            dim: 100,
            noise_sigma: 0.02,
            w_sigma: 0.1,
            design: Design::FullyRandom,
            seed: 0,
            num_classes: None,
            class_jitter: 0.1,
            confounding_scale: 1.0,
            noiseless: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n < 1 {
            return fail("n must be at least 1".into());
        }
        if self.dim < 2 {
            return fail(format!("dim must be at least 2, got {}", self.dim));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            ));
        }
        if !(self.w_sigma > 0.0 && self.w_sigma.is_finite()) {
            return fail(format!("w_sigma must be positive, got {}", self.w_sigma));
        }
        if self.design == Design::OrthogonalConfounding && self.dim % 2 != 0 {
            return fail(format!(
                "orthogonal design needs an even dim, got {}",
                self.dim
            ));
        }
        if !(self.confounding_scale >= 0.0 && self.confounding_scale.is_finite()) {
            return fail("confounding_scale must be a nonnegative number".into());
        }
        if !(self.class_jitter >= 0.0 && self.class_jitter.is_finite()) {
            return fail("class_jitter must be a nonnegative number".into());
        }
        if let Some(k) = self.num_classes {
            if k < 2 {
                return fail(format!("num_classes must be at least 2, got {k}"));
            }
            if k > self.n {
                return fail(format!("num_classes ({k}) exceeds n ({})", self.n));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Matrix,
    pub w4: Matrix,
    /// Class prototypes in label space (`K × dim`), classification only.
    pub prototypes: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    /// Features, `n × dim`.
    pub x: Matrix,
    /// Observed concepts, `n × dim`.
    pub c: Matrix,
    /// Labels: real vectors (`n × dim`) or one-hot (`n × K`).
    pub y: Matrix,
    /// Noiseless discriminative concepts `W₁ y`.
    pub d_true: Matrix,
    /// Hidden confounders.
    pub u: Matrix,
    pub eps_d: Matrix,
    pub eps_x: Matrix,
    /// Latent label vectors fed to the generator (equal to `y` for the
    /// regression variant).
    pub latent_y: Matrix,
    pub classes: Option<Vec<usize>>,
    pub params: GeneratorParams,
}

/// Index partition of a dataset: 70 % train, 15 % validation, rest test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn by_index(n: usize) -> Self {
        let n_train = n * 70 / 100;
        let n_valid = n * 15 / 100;
        Self {
            train: (0..n_train).collect(),
            valid: (n_train..n_train + n_valid).collect(),
            test: (n_train + n_valid..n).collect(),
        }
    }
}

fn generator_matrices(config: &SynthConfig, rng: &RngStream) -> [Matrix; 4] {
    let dim = config.dim;
    let scale = config.confounding_scale;
    match config.design {
        Design::FullyRandom => {
            let draw = |name: &str| random_gaussian(&mut rng.child(name), dim, dim, config.w_sigma);
            [
                draw("W1"),
                draw("W2").scale(scale),
                draw("W3"),
                draw("W4").scale(scale),
            ]
        }
        Design::OrthogonalConfounding => {
            let q = random_orthonormal(&mut rng.child("Q"), dim);
            let half = dim / 2;
            let build = |j: usize| -> Matrix {
                let mut lambda =
                    random_uniform(&mut rng.child(&format!("lambda{j}")), 1, dim, 0.1, 1.0)
                        .into_vec();
                match j {
                    1 => lambda[half..].iter_mut().for_each(|v| *v = 0.0),
                    2 | 4 => {
                        lambda[..half].iter_mut().for_each(|v| *v = 0.0);
                        lambda[half..].iter_mut().for_each(|v| *v *= scale);
                    }
                    _ => {}
                }
                // Q Λ Qᵀ
                let ql = Matrix::from_fn(dim, dim, |r, c| q[(r, c)] * lambda[c]);
                ql.matmul_t(&q).expect("square factors")
            };
            [build(1), build(2), build(3), build(4)]
        }
    }
}

fn assemble(
    config: SynthConfig,
    rng: &RngStream,
    latent_y: Matrix,
    y: Matrix,
    classes: Option<Vec<usize>>,
    prototypes: Option<Matrix>,
) -> Result<SynthDataset> {
    let (n, dim) = (config.n, config.dim);
    let [w1, w2, w3, w4] = generator_matrices(&config, rng);
    let u = random_gaussian(&mut rng.child("u"), n, dim, 1.0);
    let (eps_d, eps_x) = if config.noiseless {
        (Matrix::zeros(n, dim), Matrix::zeros(n, dim))
    } else {
        (
            random_gaussian(&mut rng.child("eps_d"), n, dim, config.noise_sigma),
            random_gaussian(&mut rng.child("eps_x"), n, dim, config.noise_sigma),
        )
    };

    let d_true = latent_y.matmul_t(&w1)?;
    let d = d_true.add(&eps_d)?;
    let c = d.add(&u.matmul_t(&w2)?)?;
    let mut x = d.matmul_t(&w3)?;
    x.add_scaled_assign(1.0, &u.matmul_t(&w4)?)?;
    x.add_scaled_assign(1.0, &eps_x)?;

    Ok(SynthDataset {
        config,
        x,
        c,
        y,
        d_true,
        u,
        eps_d,
        eps_x,
        latent_y,
        classes,
        params: GeneratorParams {
            w1,
            w2,
            w3,
            w4,
            prototypes,
        },
    })
}

/// Real-valued variant: `y ~ N(0, I)`.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let rng = RngStream::new(config.seed);
    let y = random_gaussian(&mut rng.child("y"), config.n, config.dim, 1.0);
    assemble(config.clone(), &rng, y.clone(), y, None, None)
}

/// Classification variant: each sample picks a class uniformly and its
/// latent label vector is that class's prototype plus jitter.
pub fn generate_classification(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let k = config
        .num_classes
        .ok_or_else(|| Error::Config("classification variant requires num_classes".into()))?;
    let rng = RngStream::new(config.seed);
    let prototypes = random_gaussian(&mut rng.child("prototypes"), k, config.dim, 1.0);
    let mut class_rng = rng.child("classes");
    let classes: Vec<usize> = (0..config.n).map(|_| class_rng.below(k)).collect();
    let mut latent = prototypes.select_rows(&classes);
    if config.class_jitter > 0.0 {
        let jitter = random_gaussian(
            &mut rng.child("jitter"),
            config.n,
            config.dim,
            config.class_jitter,
        );
        latent.add_scaled_assign(1.0, &jitter)?;
    }
    let one_hot = Labels::Classes {
        ids: classes.clone(),
        num_classes: k,
    }
    .to_matrix();
    assemble(
        config.clone(),
        &rng,
        latent,
        one_hot,
        Some(classes),
        Some(prototypes),
    )
}

impl SynthDataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Class ids when present, real label vectors otherwise.
    pub fn labels(&self) -> Labels {
        match (&self.classes, self.config.num_classes) {
            (Some(ids), Some(k)) => Labels::Classes {
                ids: ids.clone(),
                num_classes: k,
            },
            _ => Labels::Real(self.y.clone()),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> SynthDataset {
        SynthDataset {
            config: SynthConfig {
                n: indices.len(),
                ..self.config.clone()
            },
            x: self.x.select_rows(indices),
            c: self.c.select_rows(indices),
            y: self.y.select_rows(indices),
            d_true: self.d_true.select_rows(indices),
            u: self.u.select_rows(indices),
            eps_d: self.eps_d.select_rows(indices),
            eps_x: self.eps_x.select_rows(indices),
            latent_y: self.latent_y.select_rows(indices),
            classes: self
                .classes
                .as_ref()
                .map(|ids| indices.iter().map(|&i| ids[i]).collect()),
            params: self.params.clone(),
        }
    }

    /// Writes `X.csv`, `C.csv`, `Y.csv`, `D_true.csv` and `manifest.json`
    /// into `dir` (created if needed).
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_matrix_csv(&dir.join("X.csv"), "x", &self.x)?;
        write_matrix_csv(&dir.join("C.csv"), "c", &self.c)?;
        write_matrix_csv(&dir.join("Y.csv"), "y", &self.y)?;
        write_matrix_csv(&dir.join("D_true.csv"), "d", &self.d_true)?;
        let manifest = BundleManifest {
            format: "debias-cbm-synth-bundle/1".into(),
            seed: self.config.seed,
            config: self.config.clone(),
            rows: self.n(),
            files: vec![
                "X.csv".into(),
                "C.csv".into(),
                "Y.csv".into(),
                "D_true.csv".into(),
            ],
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub seed: u64,
    pub config: SynthConfig,
    pub rows: usize,
    pub files: Vec<String>,
}

/// CSV with a header `prefix0,prefix1,…` and one row per matrix row.
pub fn write_matrix_csv(path: &Path, prefix: &str, m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..m.cols()).map(|j| format!("{prefix}{j}")))?;
    for row in m.iter_rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter() {
            data.push(field.parse::<f64>().map_err(|e| {
                Error::Format(format!("{}: bad number {field:?}: {e}", path.display()))
            })?);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(design: Design) -> SynthConfig {
        SynthConfig {
            n: 200,
            dim: 10,
            design,
            seed: 42,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn shapes_match_config() {
        let ds = generate(&SynthConfig {
            n: 500,
            ..SynthConfig::default()
        })
        .unwrap();
        for m in [&ds.x, &ds.c, &ds.y, &ds.d_true] {
            assert_eq!(m.shape(), (500, 100));
        }
    }

    #[test]
    fn reconstruction_identities_hold() {
        for design in [Design::FullyRandom, Design::OrthogonalConfounding] {
            let ds = generate(&small(design)).unwrap();
            let p = &ds.params;
            let c = ds
                .d_true
                .add(&ds.eps_d)
                .unwrap()
                .add(&ds.u.matmul_t(&p.w2).unwrap())
                .unwrap();
            assert!(c.max_abs_diff(&ds.c) < 1e-10);
            let x = ds
                .d_true
                .matmul_t(&p.w3)
                .unwrap()
                .add(&ds.eps_d.matmul_t(&p.w3).unwrap())
                .unwrap()
                .add(&ds.u.matmul_t(&p.w4).unwrap())
                .unwrap()
                .add(&ds.eps_x)
                .unwrap();
            assert!(x.max_abs_diff(&ds.x) < 1e-10);
        }
    }

    #[test]
    fn noiseless_unconfounded_concepts_equal_truth() {
        let ds = generate(&SynthConfig {
            noiseless: true,
            confounding_scale: 0.0,
            ..small(Design::FullyRandom)
        })
        .unwrap();
        assert_eq!(ds.c, ds.d_true);
        assert_eq!(ds.d_true, ds.y.matmul_t(&ds.params.w1).unwrap());
    }

    #[test]
    fn orthogonal_design_separates_label_and_confounder() {
        let ds = generate(&small(Design::OrthogonalConfounding)).unwrap();
        let p = &ds.params;
        assert!(p.w1.matmul(&p.w2).unwrap().max_abs() < 1e-8);
        assert!(p.w1.matmul(&p.w4).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            SynthConfig {
                n: 0,
                ..small(Design::FullyRandom)
            },
            SynthConfig {
                dim: 1,
                ..small(Design::FullyRandom)
            },
            SynthConfig {
                noise_sigma: 0.0,
                ..small(Design::FullyRandom)
            },
            SynthConfig {
                w_sigma: -1.0,
                ..small(Design::FullyRandom)
            },
            SynthConfig {
                dim: 9,
                ..small(Design::OrthogonalConfounding)
            },
            SynthConfig {
                num_classes: Some(1),
                ..small(Design::FullyRandom)
            },
            SynthConfig {
                num_classes: Some(201),
                ..small(Design::FullyRandom)
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        assert!(generate_classification(&small(Design::FullyRandom)).is_err());
    }

    #[test]
    fn classification_is_deterministic_and_one_hot() {
        let cfg = SynthConfig {
            num_classes: Some(5),
            ..small(Design::FullyRandom)
        };
        let a = generate_classification(&cfg).unwrap();
        let b = generate_classification(&cfg).unwrap();
        assert_eq!(a.classes, b.classes);
        assert_eq!(a.y.shape(), (200, 5));
        for (i, &k) in a.classes.as_ref().unwrap().iter().enumerate() {
            assert_eq!(a.y[(i, k)], 1.0);
            assert_eq!(a.y.row(i).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn split_is_70_15_15() {
        let s = Split::by_index(100);
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (70, 15, 15));
        let s = Split::by_index(7);
        assert_eq!(s.train.len() + s.valid.len() + s.test.len(), 7);
    }

    #[test]
    fn bundle_round_trips_through_csv() {
        let ds = generate(&SynthConfig {
            n: 20,
            dim: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.write_bundle(dir.path()).unwrap();
        let x = read_matrix_csv(&dir.path().join("X.csv")).unwrap();
        assert_eq!(x, ds.x);
        let manifest: BundleManifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.config, ds.config);
    }
}
