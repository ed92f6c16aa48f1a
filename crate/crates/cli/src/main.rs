use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use debias_cbm_cli::config::{load, parse_assignment};
use debias_cbm_cli::error::{EXIT_NUMERICAL, EXIT_OK};
use debias_cbm_cli::{execute, CliError, Command, Invocation};

#[derive(Parser)]
#[command(
    name = "debias-cbm",
    version,
    about = "Debiased concept bottleneck experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overwrite an existing run in the output directory.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads for experiment grids.
    #[arg(long, global = true, env = "DEBIAS_CBM_JOBS", default_value_t = 1)]
    jobs: usize,

    /// `random` or `orthogonal`.
    #[arg(long, global = true)]
    design: Option<String>,

    /// Comma-separated sample sizes for `scaling`.
    #[arg(long, global = true)]
    ns: Option<String>,

    /// Replicates per sample size for `scaling`.
    #[arg(long, global = true)]
    seeds: Option<usize>,

    #[arg(long, global = true)]
    noise_sigma: Option<f64>,

    /// Comma-separated masking fractions for `roar`.
    #[arg(long, global = true)]
    mask_fractions: Option<String>,

    #[arg(long, global = true)]
    repeats: Option<usize>,

    #[arg(long, global = true)]
    mc_samples: Option<usize>,

    #[arg(long, global = true)]
    top_k: Option<usize>,

    /// Override any configuration key, e.g. `--set model.epochs=20`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate a synthetic data set.
    Synth,
    /// Fit one model and report held-out metrics.
    Train,
    /// Concept recovery of regular vs debiased fits over sample sizes.
    Scaling,
    /// Remove-and-retrain curves.
    Roar,
    /// Feature vs label correlation of each concept.
    Evidence,
    /// Gain of a residual feature network over the bottleneck.
    Completeness,
    /// Finite-difference check of backpropagation.
    Gradcheck,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Synth => Command::Synth,
            Cmd::Train => Command::Train,
            Cmd::Scaling => Command::Scaling,
            Cmd::Roar => Command::Roar,
            Cmd::Evidence => Command::Evidence,
            Cmd::Completeness => Command::Completeness,
            Cmd::Gradcheck => Command::Gradcheck,
        }
    }
}

fn overrides(cli: &Cli) -> Result<Vec<(String, toml::Value)>, CliError> {
    let mut specs: Vec<String> = Vec::new();
    let list = |s: &str| format!("[{s}]");
    if let Some(d) = &cli.design {
        specs.push(format!("data.design={d:?}"));
    }
    if let Some(v) = &cli.ns {
        specs.push(format!("scaling.ns={}", list(v)));
    }
    if let Some(v) = cli.seeds {
        specs.push(format!("scaling.seeds={v}"));
    }
    if let Some(v) = cli.noise_sigma {
        specs.push(format!("data.noise_sigma={v:?}"));
    }
    if let Some(v) = &cli.mask_fractions {
        specs.push(format!("roar.mask_fractions={}", list(v)));
    }
    if let Some(v) = cli.repeats {
        specs.push(format!("roar.repeats={v}"));
    }
    if let Some(v) = cli.mc_samples {
        specs.push(format!("model.mc_samples={v}"));
    }
    if let Some(v) = cli.top_k {
        specs.push(format!("roar.top_k={v}"));
    }
    // `--set` wins over the dedicated flags.
    specs.extend(cli.set.iter().cloned());
    specs.iter().map(|s| parse_assignment(s)).collect()
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let master_seed = cli
        .seed
        .ok_or_else(|| CliError::Config("--seed is required".into()))?;
    let config = load(cli.config.as_deref(), &overrides(cli)?)?;
    let manifest = execute(&Invocation {
        command: cli.command.into(),
        config,
        master_seed,
        out: cli.out.clone(),
        force: cli.force,
        jobs: cli.jobs,
    })?;
    for (k, v) in &manifest.summary {
        println!("{k}: {v}");
    }
    for a in &manifest.artifacts {
        println!("wrote {}", cli.out.join(a).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if code == EXIT_NUMERICAL {
                eprintln!("partial results kept in {}", cli.out.display());
            }
            ExitCode::from(code)
        }
    }
}
