//! Command implementations behind the CLI.
//!
//! Every command resolves one [`RunConfig`], writes its artifacts under
//! the run's output directory (`config.resolved`, `data/`, `checkpoints/`,
//! `traces/`, `dumps/`, `reports/`), and is byte-reproducible from the
//! resolved configuration alone. The root seed is split per consumer, so
//! sub-experiments stay independently reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use flowguard_core::attack::{attack_success_rate, pgd_attack, AttackBudget};
use flowguard_core::data::{
    balanced_eval, corrupt_bernoulli, gen_indist_with, gen_noise_kappa, DatasetHandle, NoiseSpec,
    Provenance,
};
use flowguard_core::detect::{
    DeflateCompressor, DetectorEnsemble, DetectorKind, PenaltyConfig, ScoreContext,
};
use flowguard_core::eval::{
    annulus_from_norms, annulus_stats, build_report, latent_norms_direct, partitioned_norms,
    sweep_lambda, sweep_penalty, tail_bound, TailBound, TailBoundQuery, TailSpec,
};
use flowguard_core::flow::{train_flow, FlowModel};
use flowguard_core::models::{train_ae, train_classifier};
use flowguard_core::rng::{self};
use flowguard_core::DetRng;

use crate::config::RunConfig;
use crate::{dataset_io, dump, report, weights, IoError, Result};

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .map_err(|e| IoError::io(format!("creating directory {}", path.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| IoError::io(format!("writing {}", path.display()), e))
}

/// Writes the resolved configuration echo next to the run's outputs.
fn write_resolved(cfg: &RunConfig) -> Result<()> {
    ensure_dir(&cfg.run.out_dir)?;
    write_text(&cfg.run.out_dir.join("config.resolved"), &cfg.render())
}

fn require(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| IoError::Config(format!("missing required config key {key}")))
}

fn sanitize(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// `gen-data`: synthesize a dataset (or import a text fixture) and write
/// it in the binary dataset format.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let d = &cfg.data;
    let seed = DetRng::from_seed(cfg.run.seed).split("data").seed();
    let mut handle = if let Some(import) = &d.import {
        let tag = match d.role.as_str() {
            "ood" => Provenance::Ood(d.name.clone()),
            _ => Provenance::InDist(d.name.clone()),
        };
        dataset_io::import_text(import, tag, seed)?
    } else if d.name == "noise" {
        let spec = NoiseSpec {
            kappa: d.kappa,
            height: d.height,
            width: d.width,
            channels: d.channels,
        };
        gen_noise_kappa(&spec, d.n, seed)?
    } else {
        let mut h = gen_indist_with(&d.name, d.n, d.d, seed, &d.options)?;
        if d.role == "ood" {
            h.tag = Provenance::Ood(d.name.clone());
        }
        h
    };
    if d.corrupt_bernoulli > 0.0 {
        handle = corrupt_bernoulli(&handle, d.corrupt_bernoulli, seed ^ 0x5eed)?;
    }

    let dir = cfg.run.out_dir.join("data");
    ensure_dir(&dir)?;
    let path = dir.join(format!("{}.fgd", sanitize(&handle.tag.render())));
    let mut meta = BTreeMap::new();
    meta.insert("rng".to_string(), rng::ALGORITHM.to_string());
    dataset_io::save_dataset(&handle, &meta, &path)?;
    Ok(path)
}

/// `train-flow`: fit a flow to the configured dataset; writes the
/// checkpoint and the per-iteration loss trace.
pub fn cmd_train_flow(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let data_path = require(&cfg.train.data, "train.data")?;
    let (data, _) = dataset_io::load_dataset(&data_path)?;
    let root = DetRng::from_seed(cfg.run.seed);
    let mut flow_cfg = cfg.flow.clone();
    flow_cfg.dim = data.dim();
    let mut model =
        FlowModel::build_for_data(&flow_cfg, &data, &mut root.split("flow-build"))?;
    let trace = train_flow(&mut model, &data, &cfg.train.config, &root.split("flow-train"))?;

    let ckpt_dir = cfg.run.out_dir.join("checkpoints");
    ensure_dir(&ckpt_dir)?;
    let path = ckpt_dir.join("flow.fgw");
    weights::save_flow(&model, &path)?;

    let trace_dir = cfg.run.out_dir.join("traces");
    ensure_dir(&trace_dir)?;
    let mut text = String::from("iteration\tnll\n");
    for (i, v) in trace.iter().enumerate() {
        text.push_str(&format!("{i}\t{v}\n"));
    }
    write_text(&trace_dir.join("flow_loss.tsv"), &text)?;
    Ok(path)
}

/// `train-classifier`: cross-entropy training on a labeled dataset.
pub fn cmd_train_classifier(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let data_path = require(&cfg.classifier.data, "classifier.data")?;
    let (data, _) = dataset_io::load_dataset(&data_path)?;
    let root = DetRng::from_seed(cfg.run.seed);
    let (clf, trace) =
        train_classifier(&data, &cfg.classifier.config, &root.split("classifier"))?;

    let ckpt_dir = cfg.run.out_dir.join("checkpoints");
    ensure_dir(&ckpt_dir)?;
    let path = ckpt_dir.join("classifier.fgw");
    weights::save_classifier(&clf, &cfg.classifier.config.hidden, &path)?;

    let trace_dir = cfg.run.out_dir.join("traces");
    ensure_dir(&trace_dir)?;
    let mut text = String::from("iteration\tbatch_accuracy\n");
    for (i, v) in trace.per_iteration.iter().enumerate() {
        text.push_str(&format!("{i}\t{v}\n"));
    }
    text.push_str(&format!("final\t{}\n", trace.final_train_accuracy));
    write_text(&trace_dir.join("classifier_acc.tsv"), &text)?;
    Ok(path)
}

/// `train-ae`: reconstruction training for the autoencoder baseline.
pub fn cmd_train_ae(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let data_path = require(&cfg.ae.data, "ae.data")?;
    let (data, _) = dataset_io::load_dataset(&data_path)?;
    let root = DetRng::from_seed(cfg.run.seed);
    let (ae, trace) = train_ae(&data, &cfg.ae.config, &root.split("ae"))?;

    let ckpt_dir = cfg.run.out_dir.join("checkpoints");
    ensure_dir(&ckpt_dir)?;
    let path = ckpt_dir.join("ae.fgw");
    weights::save_autoencoder(&ae, &cfg.ae.config.hidden, cfg.ae.config.final_activation, &path)?;

    let trace_dir = cfg.run.out_dir.join("traces");
    ensure_dir(&trace_dir)?;
    let mut text = String::from("iteration\tmse\n");
    for (i, v) in trace.iter().enumerate() {
        text.push_str(&format!("{i}\t{v}\n"));
    }
    write_text(&trace_dir.join("ae_loss.tsv"), &text)?;
    Ok(path)
}

/// `attack`: untargeted PGD over a labeled dataset; the adversarial set
/// persists in the dataset format with a provenance header recording the
/// budget and the classifier checksum.
pub fn cmd_attack(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let clf_path = require(&cfg.attack.classifier, "attack.classifier")?;
    let data_path = require(&cfg.attack.dataset, "attack.dataset")?;
    let clf = weights::load_classifier(&clf_path)?;
    let (data, _) = dataset_io::load_dataset(&data_path)?;
    let budget = AttackBudget {
        random_start: cfg.attack.random_start,
        ..AttackBudget::new(cfg.attack.epsilon, cfg.attack.step, cfg.attack.iterations)?
    };
    let root = DetRng::from_seed(cfg.run.seed);
    let set = pgd_attack(&clf, &data, &budget, &root.split("attack"))?;

    let clf_bytes = fs::read(&clf_path)
        .map_err(|e| IoError::io(format!("reading {}", clf_path.display()), e))?;
    let checksum = Sha256::digest(&clf_bytes);
    let checksum_hex: String = checksum.iter().map(|b| format!("{b:02x}")).collect();

    let mut meta = BTreeMap::new();
    meta.insert("attack".to_string(), "pgd".to_string());
    meta.insert("attack_epsilon".to_string(), budget.epsilon.to_string());
    meta.insert("attack_step".to_string(), budget.step_size.to_string());
    meta.insert(
        "attack_iterations".to_string(),
        budget.iterations.to_string(),
    );
    meta.insert("classifier_sha256".to_string(), checksum_hex);
    meta.insert(
        "success_rate".to_string(),
        attack_success_rate(&set)?.to_string(),
    );

    let dir = cfg.run.out_dir.join("data");
    ensure_dir(&dir)?;
    let path = dir.join(format!("{}.fgd", sanitize(&set.perturbed.tag.render())));
    dataset_io::save_dataset(&set.perturbed, &meta, &path)?;
    Ok(path)
}

/// `score`: one record per sample per requested detector.
pub fn cmd_score(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let data_path = require(&cfg.score.dataset, "score.dataset")?;
    let (data, _) = dataset_io::load_dataset(&data_path)?;

    let needs_flow = cfg.score.detectors.iter().any(|k| {
        matches!(
            k,
            DetectorKind::Ll
                | DetectorKind::Ttl
                | DetectorKind::Re
                | DetectorKind::Pre
                | DetectorKind::Llr
                | DetectorKind::Comp
        )
    });
    let flow = if needs_flow {
        let ckpt = require(&cfg.score.checkpoint, "score.checkpoint")?;
        let model = weights::load_flow(&ckpt)?;
        if model.dim != data.dim() {
            return Err(IoError::Config(format!(
                "checkpoint dimension {} does not match dataset dimension {}",
                model.dim,
                data.dim()
            )));
        }
        Some(model)
    } else {
        None
    };
    let background = match &cfg.score.llr_background {
        Some(p) if cfg.score.detectors.contains(&DetectorKind::Llr) => {
            Some(weights::load_flow(p)?)
        }
        _ => None,
    };
    let ensemble = if cfg.score.detectors.contains(&DetectorKind::Waic) {
        if cfg.score.waic_members.len() != 5 {
            return Err(IoError::Config(format!(
                "score.waic_members needs exactly 5 checkpoints, got {}",
                cfg.score.waic_members.len()
            )));
        }
        let members = cfg
            .score
            .waic_members
            .iter()
            .map(|p| {
                let model = weights::load_flow(p)?;
                let label = model.variant.name().to_string();
                Ok((label, model))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(DetectorEnsemble::new(members)?)
    } else {
        None
    };
    let classifier = match &cfg.score.classifier {
        Some(p) if cfg.score.detectors.contains(&DetectorKind::Msp) => {
            Some(weights::load_classifier(p)?)
        }
        _ => None,
    };
    let autoencoder = match &cfg.score.autoencoder {
        Some(p) if cfg.score.detectors.contains(&DetectorKind::Ae) => {
            Some(weights::load_autoencoder(p)?)
        }
        _ => None,
    };

    let compressor = DeflateCompressor::default();
    let ctx = ScoreContext {
        flow: flow.as_ref(),
        ensemble: ensemble.as_ref(),
        background: background.as_ref(),
        classifier: classifier.as_ref(),
        autoencoder: autoencoder.as_ref(),
        penalty: PenaltyConfig::new(cfg.score.lambda)?,
        precision: cfg.run.precision,
        compressor: &compressor,
    };
    let scored = ctx.score_batch(&cfg.score.detectors, &data)?;

    let dir = cfg.run.out_dir.join("dumps");
    ensure_dir(&dir)?;
    let path = dir.join(format!("{}.tsv", cfg.score.out));
    dump::write_dump(&scored, &data.tag.render(), &path)?;
    Ok(path)
}

/// `evaluate`: AUROC/AUPR per detector plus thresholds and histograms.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let in_path = require(&cfg.evaluate.in_dump, "evaluate.in_dump")?;
    let ood_path = require(&cfg.evaluate.ood_dump, "evaluate.ood_dump")?;
    let in_dump = dump::read_dump(&in_path)?;
    let ood_dump = dump::read_dump(&ood_path)?;

    let mut meta = BTreeMap::new();
    meta.insert("seed".to_string(), cfg.run.seed.to_string());
    meta.insert("lambda".to_string(), cfg.score.lambda.to_string());
    meta.insert("precision".to_string(), cfg.run.precision.name().to_string());
    meta.insert("dataset_in".to_string(), in_dump.dataset_tag.clone());
    meta.insert("dataset_ood".to_string(), ood_dump.dataset_tag.clone());
    let report_data = build_report(
        &in_dump.scores,
        &ood_dump.scores,
        cfg.evaluate.target_tpr,
        meta,
    )?;

    let dir = cfg.run.out_dir.join("reports");
    ensure_dir(&dir)?;
    let path = dir.join(format!("{}.txt", cfg.evaluate.name));
    report::write_report(&report_data, &path)?;
    for d in &report_data.detectors {
        let csv = dir.join(format!("hist_{}_{}.csv", d.detector.name(), cfg.evaluate.name));
        report::write_histogram_csv(&d.histogram, &csv)?;
    }
    Ok(path)
}

/// `sweep-lambda`: PRE AUROC across the penalty-coefficient grid.
pub fn cmd_sweep_lambda(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let ckpt = require(&cfg.sweep.checkpoint, "sweep.checkpoint")?;
    let in_path = require(&cfg.sweep.in_data, "sweep.in_data")?;
    let ood_path = require(&cfg.sweep.ood_data, "sweep.ood_data")?;
    let model = weights::load_flow(&ckpt)?;
    let (in_data, _) = dataset_io::load_dataset(&in_path)?;
    let (ood_data, _) = dataset_io::load_dataset(&ood_path)?;
    let per_side = in_data.len().min(ood_data.len());
    let (in_data, ood_data) = balanced_eval(&in_data, &ood_data, per_side, cfg.run.seed)?;

    let rows = sweep_lambda(
        &model,
        &in_data,
        &ood_data,
        &cfg.sweep.lambda_grid,
        cfg.run.precision,
    )?;
    let dir = cfg.run.out_dir.join("reports");
    ensure_dir(&dir)?;
    let path = dir.join("lambda_sweep.tsv");
    let mut text = String::from("lambda\tauroc_pre\n");
    for (lambda, auroc) in rows {
        text.push_str(&format!("{lambda}\t{auroc}\n"));
    }
    write_text(&path, &text)?;
    Ok(path)
}

/// `sweep-penalty`: per-sample shifted round-trip curves over the
/// synthetic penalty grid, in long format.
pub fn cmd_sweep_penalty(cfg: &RunConfig) -> Result<PathBuf> {
    write_resolved(cfg)?;
    let ckpt = require(&cfg.sweep.checkpoint, "sweep.checkpoint")?;
    let data_path = require(&cfg.sweep.dataset, "sweep.dataset")?;
    let model = weights::load_flow(&ckpt)?;
    let (data, _) = dataset_io::load_dataset(&data_path)?;
    let data = if data.len() > cfg.sweep.max_samples {
        data.select(&(0..cfg.sweep.max_samples).collect::<Vec<_>>())?
    } else {
        data
    };

    let steps = (cfg.sweep.xi_max / cfg.sweep.xi_step).round() as i64;
    let grid: Vec<f64> = (-steps..=steps)
        .map(|k| k as f64 * cfg.sweep.xi_step)
        .collect();
    let curves = sweep_penalty(&model, &data, &grid, cfg.run.precision)?;

    let dir = cfg.run.out_dir.join("reports");
    ensure_dir(&dir)?;
    let path = dir.join("penalty_curves.tsv");
    let mut text = String::from("sample_id\txi_prime\tr_prime\n");
    for (i, curve) in curves.iter().enumerate() {
        for (x, r) in grid.iter().zip(curve) {
            text.push_str(&format!("{i}\t{x}\t{r}\n"));
        }
    }
    write_text(&path, &text)?;
    Ok(path)
}

/// `tail-bound`: worked Chernoff-bound numbers for a dimension and either
/// an ε or a bits-of-improbability budget. Returns the render for stdout.
pub fn cmd_tail_bound(cfg: &RunConfig, write_files: bool) -> Result<(TailBound, String)> {
    let spec = match (cfg.tail_bound.s, cfg.tail_bound.epsilon) {
        (Some(s), None) => TailSpec::Bits(s),
        (None, Some(e)) => TailSpec::Epsilon(e),
        (Some(_), Some(_)) => {
            return Err(IoError::Config(
                "give either tailbound.s or tailbound.epsilon, not both".into(),
            ))
        }
        (None, None) => {
            return Err(IoError::Config(
                "missing required config key tailbound.s or tailbound.epsilon".into(),
            ))
        }
    };
    let bound = tail_bound(&TailBoundQuery {
        d: cfg.tail_bound.d,
        spec,
    })?;
    let text = format!(
        "d={}\nepsilon={}\nlower_radius={}\nupper_radius={}\ntwo_sided_bound={}\none_sided_bound={}\nbits={}\n",
        bound.d,
        bound.epsilon,
        bound.lower_radius,
        bound.upper_radius,
        bound.two_sided_bound,
        bound.one_sided_bound,
        bound.bits
    );
    if write_files {
        write_resolved(cfg)?;
        let dir = cfg.run.out_dir.join("reports");
        ensure_dir(&dir)?;
        write_text(&dir.join("tail_bound.txt"), &text)?;
    }
    Ok((bound, text))
}

/// `annulus`: latent-norm statistics either for direct Gaussian draws
/// (default) or for a dataset mapped through a checkpoint; optionally
/// adds the partitioned-norm view.
pub fn cmd_annulus(cfg: &RunConfig, write_files: bool) -> Result<String> {
    let (stats, parts) = match (&cfg.annulus.checkpoint, &cfg.annulus.dataset) {
        (Some(ckpt), Some(data_path)) => {
            let model = weights::load_flow(ckpt)?;
            let (data, _) = dataset_io::load_dataset(data_path)?;
            let stats = annulus_stats(&model, &data)?;
            let parts = match cfg.annulus.split {
                Some(split) => Some(partitioned_norms(&model, &data, split)?),
                None => None,
            };
            (stats, parts)
        }
        (None, None) => {
            let mut rng = DetRng::from_seed(cfg.run.seed).split("annulus");
            let norms = latent_norms_direct(cfg.annulus.d, cfg.annulus.n, &mut rng);
            (annulus_from_norms(norms, cfg.annulus.d)?, None)
        }
        _ => {
            return Err(IoError::Config(
                "annulus needs both annulus.checkpoint and annulus.dataset, or neither".into(),
            ))
        }
    };

    let mut text = format!(
        "n={}\nsqrt_d={}\nmedian={}\nrelative_deviation={}\n",
        stats.norms.len(),
        stats.sqrt_d,
        stats.median,
        stats.relative_deviation
    );
    if write_files {
        write_resolved(cfg)?;
        let dir = cfg.run.out_dir.join("reports");
        ensure_dir(&dir)?;
        let mut rows = String::from("sample_id\tnorm\n");
        for (i, n) in stats.norms.iter().enumerate() {
            rows.push_str(&format!("{i}\t{n}\n"));
        }
        write_text(&dir.join("annulus.tsv"), &rows)?;
        if let Some(parts) = &parts {
            let mut rows = String::from("sample_id\tnorm_a\tnorm_b\n");
            for (i, (a, b)) in parts.iter().enumerate() {
                rows.push_str(&format!("{i}\t{a}\t{b}\n"));
            }
            write_text(&dir.join("partitioned_norms.tsv"), &rows)?;
        }
        write_text(&dir.join("annulus_summary.txt"), &text)?;
    }
    if let Some(parts) = &parts {
        let median = |mut v: Vec<f64>| -> f64 {
            v.sort_by(|a, b| a.total_cmp(b));
            if v.len() % 2 == 1 {
                v[v.len() / 2]
            } else {
                0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
            }
        };
        let na = median(parts.iter().map(|p| p.0).collect());
        let nb = median(parts.iter().map(|p| p.1).collect());
        text.push_str(&format!("median_norm_a={na}\nmedian_norm_b={nb}\n"));
    }
    Ok(text)
}

/// Loads a dataset for library callers (re-exported convenience).
pub fn load_dataset_file(path: &Path) -> Result<DatasetHandle> {
    Ok(dataset_io::load_dataset(path)?.0)
}
