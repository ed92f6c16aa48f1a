//! Command bodies. Each one writes its artifacts under the output directory
//! and records them in the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use debias_cbm::cbm::{
    fit_debiased_cbm, fit_regular_cbm, measure_completeness, r_squared, DebiasedCbm, ValidationSet,
};
use debias_cbm::eval::tables::{write_evidence, write_roar, write_scaling, write_to_path};
use debias_cbm::eval::{
    concept_truth_correlation, evidence_experiment, roar_run, scaling_experiment, Method,
    RoarConfig,
};
use debias_cbm::nnet::{gradient_check, top_k_accuracy, Activation, Loss, MlpSpec, TrainConfig};
use debias_cbm::numkit::RngStream;
use debias_cbm::synthgen::{generate, generate_classification, Split, SynthConfig, SynthDataset};
use debias_cbm::Labels;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{Manifest, CONFIG_FILE, MANIFEST_FILE, MANIFEST_FORMAT};
use crate::seeds::resolve_seeds;

/// Classes used by `roar` and `evidence` when `data.num_classes` is unset.
pub const DEFAULT_EVAL_CLASSES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Scaling,
    Roar,
    Evidence,
    Completeness,
    Gradcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Scaling => "scaling",
            Command::Roar => "roar",
            Command::Evidence => "evidence",
            Command::Completeness => "completeness",
            Command::Gradcheck => "gradcheck",
        }
    }

    /// Sample size and class count used when `data.n` / `data.num_classes`
    /// are unset. `scaling` and `gradcheck` take sizes from elsewhere.
    fn data_defaults(self) -> Option<(usize, Option<usize>)> {
        match self {
            Command::Synth => Some((SynthConfig::default().n, None)),
            Command::Train => Some((2_000, None)),
            Command::Roar => Some((5_000, Some(DEFAULT_EVAL_CLASSES))),
            Command::Evidence => Some((20_000, Some(DEFAULT_EVAL_CLASSES))),
            Command::Completeness => Some((3_000, None)),
            Command::Scaling | Command::Gradcheck => None,
        }
    }

    fn seed_labels(self) -> &'static [&'static str] {
        match self {
            Command::Synth | Command::Evidence => &["data"],
            Command::Train => &["data", "model"],
            Command::Scaling => &["scaling"],
            Command::Roar => &["data", "roar"],
            Command::Completeness => &["data", "model", "q"],
            Command::Gradcheck => &["gradcheck"],
        }
    }
}

pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub master_seed: u64,
    pub out: PathBuf,
    pub force: bool,
    pub jobs: usize,
}

/// Collects artifacts, timings and summary values while a command runs.
struct Run<'a> {
    out: &'a Path,
    seeds: BTreeMap<String, u64>,
    timings: BTreeMap<String, f64>,
    artifacts: Vec<String>,
    summary: Map<String, Value>,
}

impl Run<'_> {
    fn seed(&self, label: &str) -> u64 {
        self.seeds[label]
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let v = f();
        self.timings
            .insert(stage.to_string(), start.elapsed().as_secs_f64());
        v
    }

    fn path(&mut self, rel: &str) -> PathBuf {
        self.artifacts.push(rel.to_string());
        self.out.join(rel)
    }

    fn note(&mut self, key: &str, value: Value) {
        self.summary.insert(key.to_string(), value);
    }
}

/// Runs the command. The manifest is written whether or not the command
/// succeeds; artifacts produced before a failure are kept.
pub fn execute(inv: &Invocation) -> Result<Manifest, CliError> {
    if inv.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    if inv.out.join(MANIFEST_FILE).exists() && !inv.force {
        return Err(CliError::Config(format!(
            "{} already holds a run; pass --force to overwrite",
            inv.out.display()
        )));
    }
    fs::create_dir_all(&inv.out)?;
    let mut run = Run {
        out: &inv.out,
        seeds: resolve_seeds(inv.master_seed, inv.command.seed_labels())?,
        timings: BTreeMap::new(),
        artifacts: Vec::new(),
        summary: Map::new(),
    };
    let resolved = resolve(&inv.config, inv.command);
    let cfg = &resolved;
    let path = run.path(CONFIG_FILE);
    let result = match toml::to_string(cfg) {
        Ok(text) => fs::write(path, text).map_err(CliError::from),
        Err(e) => Err(CliError::Config(e.to_string())),
    }
    .and_then(|()| match inv.command {
        Command::Synth => synth(cfg, &mut run),
        Command::Train => train(cfg, &mut run),
        Command::Scaling => scaling(cfg, &mut run, inv.jobs),
        Command::Roar => roar(cfg, &mut run, inv.jobs),
        Command::Evidence => evidence(cfg, &mut run),
        Command::Completeness => completeness(cfg, &mut run),
        Command::Gradcheck => gradcheck(cfg, &mut run),
    });
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: inv.command.name().into(),
        master_seed: inv.master_seed,
        seeds: run.seeds,
        config: cfg.clone(),
        jobs: inv.jobs,
        status: if result.is_ok() { "ok" } else { "failed" }.into(),
        error: result.as_ref().err().map(ToString::to_string),
        timings: run.timings,
        artifacts: run.artifacts,
        summary: run.summary,
    };
    manifest.write(&inv.out)?;
    result.map(|()| manifest)
}

/// Fills command defaults into the configuration so the recorded copy
/// needs no outside knowledge to replay.
fn resolve(config: &RunConfig, command: Command) -> RunConfig {
    let mut c = config.clone();
    if let Some((n, classes)) = command.data_defaults() {
        c.data.n.get_or_insert(n);
        if c.data.num_classes.is_none() {
            c.data.num_classes = classes;
        }
        if c.model.debiaser.is_none() {
            let name = if c.data.num_classes.is_some() {
                "class_mean"
            } else {
                "linear"
            };
            c.model.debiaser = Some(name.into());
        }
    }
    c
}

fn make_data(config: &SynthConfig) -> Result<SynthDataset, CliError> {
    Ok(if config.num_classes.is_some() {
        generate_classification(config)?
    } else {
        generate(config)?
    })
}

fn synth(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let sc = cfg.synth(run.seed("data"))?;
    let data = run.timed("generate", || make_data(&sc))?;
    let dir = run.path("data");
    run.timed("write", || data.write_bundle(&dir))?;
    run.note("n", json!(data.n()));
    run.note("dim", json!(data.dim()));
    Ok(())
}

struct Parts {
    x: debias_cbm::Matrix,
    c: debias_cbm::Matrix,
    y: Labels,
    d_true: debias_cbm::Matrix,
}

fn parts(data: &SynthDataset, idx: &[usize]) -> Parts {
    let s = data.subset(idx);
    Parts {
        y: s.labels(),
        x: s.x,
        c: s.c,
        d_true: s.d_true,
    }
}

fn fit(cfg: &RunConfig, train: &Parts, valid: &Parts, seed: u64) -> Result<DebiasedCbm, CliError> {
    let config = cfg.cbm(train.y.is_categorical(), seed)?;
    let v = Some(ValidationSet {
        x: &valid.x,
        c: &valid.c,
        y: &valid.y,
    });
    Ok(if cfg.debiased() {
        fit_debiased_cbm(&train.x, &train.c, &train.y, &config, v)?
    } else {
        fit_regular_cbm(&train.x, &train.c, &train.y, &config, v)?
    })
}

fn label_metric(cbm: &DebiasedCbm, p: &Parts) -> Result<(&'static str, f64), CliError> {
    Ok(match &p.y {
        Labels::Classes { ids, .. } => (
            "accuracy",
            top_k_accuracy(&cbm.label_logits(&p.x)?, ids, 1)?,
        ),
        Labels::Real(y) => ("r2", r_squared(&cbm.predict(&p.x)?, y)?),
    })
}

fn train(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let sc = cfg.synth(run.seed("data"))?;
    let data = run.timed("generate", || make_data(&sc))?;
    let split = Split::by_index(data.n());
    let (tr, va, te) = (
        parts(&data, &split.train),
        parts(&data, &split.valid),
        parts(&data, &split.test),
    );
    let seed = run.seed("model");
    let cbm = run.timed("fit", || fit(cfg, &tr, &va, seed))?;
    let dir = run.path("model");
    cbm.save(&dir)?;
    let (name, value) = label_metric(&cbm, &te)?;
    run.note(&format!("test_{name}"), json!(value));
    // Undefined correlations (constant columns) are reported as null.
    let corr = concept_truth_correlation(&cbm.concept_means(&te.x)?, &te.d_true).ok();
    run.note("test_concept_correlation", json!(corr));
    let path = run.path("metrics.json");
    fs::write(path, serde_json::to_string_pretty(&run.summary)? + "\n")?;
    Ok(())
}

fn scaling(cfg: &RunConfig, run: &mut Run, jobs: usize) -> Result<(), CliError> {
    let base = cfg.synth(run.seed("scaling"))?;
    let res = run.timed("experiment", || {
        scaling_experiment(&base, &cfg.scaling.ns, cfg.scaling.seeds, jobs)
    })?;
    let path = run.path("scaling.csv");
    write_to_path(&path, &res, write_scaling)?;
    for s in res.summary() {
        run.note(&format!("mean/{}/{}", s.method.name(), s.n), json!(s.mean));
    }
    let failed = res.failures().count();
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "{failed} of {} scaling records failed; see scaling.csv",
            res.records.len()
        )));
    }
    Ok(())
}

fn roar(cfg: &RunConfig, run: &mut Run, jobs: usize) -> Result<(), CliError> {
    let sc = cfg.synth(run.seed("data"))?;
    let data = run.timed("generate", || make_data(&sc))?;
    let seed = run.seed("roar");
    let rc = RoarConfig {
        cbm: cfg.cbm(true, seed)?,
        mask_fractions: cfg.roar.mask_fractions.clone(),
        repeats: cfg.roar.repeats,
        top_k: cfg.roar.top_k,
        seed,
    };
    let curve = run.timed("experiment", || roar_run(&data, &rc, jobs))?;
    let path = run.path("roar.csv");
    write_to_path(&path, &curve, write_roar)?;
    for m in Method::BOTH {
        run.note(
            &format!("normalized/{}", m.name()),
            json!(curve.normalized_means(m)),
        );
    }
    Ok(())
}

fn evidence(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let sc = cfg.synth(run.seed("data"))?;
    let data = run.timed("generate", || make_data(&sc))?;
    let rep = run.timed("experiment", || evidence_experiment(&data))?;
    let path = run.path("evidence.csv");
    write_to_path(&path, &rep, write_evidence)?;
    run.note("x_beats_y_count", json!(rep.x_beats_y_count));
    Ok(())
}

fn completeness(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let sc = cfg.synth(run.seed("data"))?;
    let data = run.timed("generate", || make_data(&sc))?;
    let split = Split::by_index(data.n());
    let (tr, va) = (parts(&data, &split.train), parts(&data, &split.valid));
    let seed = run.seed("model");
    let cbm = run.timed("fit", || fit(cfg, &tr, &va, seed))?;
    let q = &cfg.completeness;
    let q_train = TrainConfig {
        learning_rate: q.learning_rate,
        batch_size: q.batch_size,
        epochs: q.epochs,
        seed: run.seed("q"),
        ..TrainConfig::default()
    };
    let rep = run.timed("residual", || {
        measure_completeness(&cbm, &tr.x, &tr.y, &va.x, &va.y, &q.q_hidden, &q_train)
    })?;
    let path = run.path("completeness.json");
    fs::write(path, serde_json::to_string_pretty(&rep)? + "\n")?;
    run.note("completeness_gap", json!(rep.completeness_gap));
    Ok(())
}

fn gradcheck(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let g = &cfg.gradcheck;
    let mut rng = RngStream::new(run.seed("gradcheck"));
    let mut rows = Vec::new();
    let start = Instant::now();
    for loss in [Loss::Mse, Loss::SoftmaxCrossEntropy] {
        for skip in [false, true] {
            for activation in [Activation::Relu, Activation::Tanh] {
                for _ in 0..g.per_combination {
                    let mut sizes = vec![1 + rng.below(6)];
                    for _ in 0..1 + rng.below(3) {
                        sizes.push(1 + rng.below(8));
                    }
                    sizes.push(2 + rng.below(4));
                    let spec = MlpSpec::new(sizes.clone())
                        .with_activation(activation)
                        .with_skip(skip);
                    let err = gradient_check(&spec, loss, g.samples, rng.next_u64())?;
                    rows.push((loss, activation, skip, sizes, err));
                }
            }
        }
    }
    run.timings
        .insert("check".into(), start.elapsed().as_secs_f64());
    let path = run.path("gradcheck.csv");
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["loss", "activation", "skip", "layers", "max_relative_error"])?;
    for (loss, act, skip, sizes, err) in &rows {
        let layers: Vec<String> = sizes.iter().map(ToString::to_string).collect();
        w.write_record([
            match loss {
                Loss::Mse => "mse",
                Loss::SoftmaxCrossEntropy => "softmax_cross_entropy",
            },
            match act {
                Activation::Relu => "relu",
                Activation::Tanh => "tanh",
            },
            if *skip { "true" } else { "false" },
            &layers.join("-"),
            &err.to_string(),
        ])?;
    }
    w.flush()?;
    let worst = rows.iter().map(|r| r.4).fold(0.0, f64::max);
    run.note("architectures", json!(rows.len()));
    run.note("max_relative_error", json!(worst));
    if !(worst < g.tolerance) {
        return Err(CliError::Numerical(format!(
            "max relative gradient error {worst:e} is not below {:e}",
            g.tolerance
        )));
    }
    Ok(())
}
