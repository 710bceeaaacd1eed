//! `flowguard` command-line front end.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use flowguard::commands;
use flowguard::config::{RawConfig, RunConfig, SEED_ENV};

#[derive(Parser)]
#[command(
    name = "flowguard",
    about = "Invertible-flow OOD detection: training, attacks, scoring, evaluation",
    version
)]
struct Cli {
    /// INI-style configuration file; flags and --set entries override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one key: --set section.key=value (repeatable).
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,

    /// Output directory; shorthand for --set run.out_dir=...
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Root seed; shorthand for --set run.seed=...
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (or import a text fixture).
    GenData {
        /// Family: ring, moons, gauss_mixture, grid8, or noise.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        /// Average-pooling size for the noise family.
        #[arg(long)]
        kappa: Option<usize>,
        /// Tag role: indist or ood.
        #[arg(long)]
        role: Option<String>,
        /// Delimited-text file to import instead of generating.
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Train the normalizing flow on a dataset.
    TrainFlow {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Train the toy classifier on a labeled dataset.
    TrainClassifier {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train the autoencoder baseline.
    TrainAe {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Untargeted projected-gradient attack against the classifier.
    Attack {
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Score a dataset with the requested detectors.
    Score {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Comma list from {ll, ttl, re, pre, waic, llr, comp, msp, ae}.
        #[arg(long)]
        detectors: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        precision: Option<String>,
        /// Output dump stem under dumps/.
        #[arg(long)]
        out: Option<String>,
    },
    /// Compare an in-distribution dump against an OOD dump.
    Evaluate {
        #[arg(long)]
        in_dump: Option<PathBuf>,
        #[arg(long)]
        ood_dump: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
    },
    /// PRE AUROC across the penalty-coefficient grid.
    SweepLambda {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        in_data: Option<PathBuf>,
        #[arg(long)]
        ood_data: Option<PathBuf>,
        /// Comma list of coefficients.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Per-sample shifted round-trip curves over the synthetic grid.
    SweepPenalty {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Chernoff tail-bound numbers for the latent norm.
    TailBound {
        #[arg(long)]
        d: Option<usize>,
        /// Bits of improbability.
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Latent-norm statistics against the annulus radius.
    Annulus {
        #[arg(long)]
        d: Option<usize>,
        /// Number of direct Gaussian draws (checkpoint-free mode).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut raw = RawConfig::default();
    if let Some(path) = &cli.config {
        raw.merge(&RawConfig::load(path)?);
    }

    // Dedicated flags become section.key entries so the resolved echo
    // captures the full invocation.
    let mut set = |section: &str, key: &str, value: String| raw.set(section, key, &value);
    match &cli.command {
        Command::GenData {
            name,
            n,
            d,
            kappa,
            role,
            import,
        } => {
            if let Some(v) = name {
                set("data", "name", v.clone());
            }
            if let Some(v) = n {
                set("data", "n", v.to_string());
            }
            if let Some(v) = d {
                set("data", "d", v.to_string());
            }
            if let Some(v) = kappa {
                set("data", "kappa", v.to_string());
            }
            if let Some(v) = role {
                set("data", "role", v.clone());
            }
            if let Some(v) = import {
                set("data", "import", v.display().to_string());
            }
        }
        Command::TrainFlow {
            data,
            iterations,
            variant,
        } => {
            if let Some(v) = data {
                set("train", "data", v.display().to_string());
            }
            if let Some(v) = iterations {
                set("train", "iterations", v.to_string());
            }
            if let Some(v) = variant {
                set("flow", "variant", v.clone());
            }
        }
        Command::TrainClassifier { data } => {
            if let Some(v) = data {
                set("classifier", "data", v.display().to_string());
            }
        }
        Command::TrainAe { data } => {
            if let Some(v) = data {
                set("ae", "data", v.display().to_string());
            }
        }
        Command::Attack {
            classifier,
            dataset,
            epsilon,
            step,
            iterations,
        } => {
            if let Some(v) = classifier {
                set("attack", "classifier", v.display().to_string());
            }
            if let Some(v) = dataset {
                set("attack", "dataset", v.display().to_string());
            }
            if let Some(v) = epsilon {
                set("attack", "epsilon", v.to_string());
            }
            if let Some(v) = step {
                set("attack", "step", v.to_string());
            }
            if let Some(v) = iterations {
                set("attack", "iterations", v.to_string());
            }
        }
        Command::Score {
            checkpoint,
            dataset,
            detectors,
            lambda,
            precision,
            out,
        } => {
            if let Some(v) = checkpoint {
                set("score", "checkpoint", v.display().to_string());
            }
            if let Some(v) = dataset {
                set("score", "dataset", v.display().to_string());
            }
            if let Some(v) = detectors {
                set("score", "detectors", v.clone());
            }
            if let Some(v) = lambda {
                set("score", "lambda", v.to_string());
            }
            if let Some(v) = precision {
                set("run", "precision", v.clone());
            }
            if let Some(v) = out {
                set("score", "out", v.clone());
            }
        }
        Command::Evaluate {
            in_dump,
            ood_dump,
            name,
        } => {
            if let Some(v) = in_dump {
                set("evaluate", "in_dump", v.display().to_string());
            }
            if let Some(v) = ood_dump {
                set("evaluate", "ood_dump", v.display().to_string());
            }
            if let Some(v) = name {
                set("evaluate", "name", v.clone());
            }
        }
        Command::SweepLambda {
            checkpoint,
            in_data,
            ood_data,
            grid,
        } => {
            if let Some(v) = checkpoint {
                set("sweep", "checkpoint", v.display().to_string());
            }
            if let Some(v) = in_data {
                set("sweep", "in_data", v.display().to_string());
            }
            if let Some(v) = ood_data {
                set("sweep", "ood_data", v.display().to_string());
            }
            if let Some(v) = grid {
                set("sweep", "lambda_grid", v.clone());
            }
        }
        Command::SweepPenalty {
            checkpoint,
            dataset,
        } => {
            if let Some(v) = checkpoint {
                set("sweep", "checkpoint", v.display().to_string());
            }
            if let Some(v) = dataset {
                set("sweep", "dataset", v.display().to_string());
            }
        }
        Command::TailBound { d, s, epsilon } => {
            if let Some(v) = d {
                set("tailbound", "d", v.to_string());
            }
            if let Some(v) = s {
                set("tailbound", "s", v.to_string());
            }
            if let Some(v) = epsilon {
                set("tailbound", "epsilon", v.to_string());
            }
        }
        Command::Annulus {
            d,
            n,
            checkpoint,
            dataset,
        } => {
            if let Some(v) = d {
                set("annulus", "d", v.to_string());
            }
            if let Some(v) = n {
                set("annulus", "n", v.to_string());
            }
            if let Some(v) = checkpoint {
                set("annulus", "checkpoint", v.display().to_string());
            }
            if let Some(v) = dataset {
                set("annulus", "dataset", v.display().to_string());
            }
        }
    }

    if let Some(dir) = &cli.out_dir {
        raw.set("run", "out_dir", &dir.display().to_string());
    }
    if let Some(seed) = cli.seed {
        raw.set("run", "seed", &seed.to_string());
    }
    for spec in &cli.sets {
        raw.apply_override(spec)?;
    }
    if let Ok(seed) = std::env::var(SEED_ENV) {
        let seed: u64 = seed
            .parse()
            .with_context(|| format!("{SEED_ENV} must be an integer, got {seed:?}"))?;
        raw.set("run", "seed", &seed.to_string());
    }
    Ok(RunConfig::resolve(&raw)?)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = build_config(&cli)?;
    // File outputs only happen when the caller names an output directory.
    let wants_files = cli.out_dir.is_some()
        || cli.config.is_some()
        || cli.sets.iter().any(|s| s.starts_with("run.out_dir"));
    match &cli.command {
        Command::GenData { .. } => {
            let path = commands::cmd_gen_data(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::TrainFlow { .. } => {
            let path = commands::cmd_train_flow(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::TrainClassifier { .. } => {
            let path = commands::cmd_train_classifier(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::TrainAe { .. } => {
            let path = commands::cmd_train_ae(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Attack { .. } => {
            let path = commands::cmd_attack(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Score { .. } => {
            let path = commands::cmd_score(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate { .. } => {
            let path = commands::cmd_evaluate(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::SweepLambda { .. } => {
            let path = commands::cmd_sweep_lambda(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::SweepPenalty { .. } => {
            let path = commands::cmd_sweep_penalty(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::TailBound { .. } => {
            let (_, text) = commands::cmd_tail_bound(&cfg, wants_files)?;
            print!("{text}");
        }
        Command::Annulus { .. } => {
            let text = commands::cmd_annulus(&cfg, wants_files)?;
            print!("{text}");
        }
    }
    Ok(())
}
