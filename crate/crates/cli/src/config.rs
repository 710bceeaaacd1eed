//! Run configuration: INI-style sections, strict key checking, override
//! plumbing, and the resolved echo written next to every run's outputs.
//!
//! Precedence, lowest to highest: built-in defaults, `--config` file,
//! command-line flags (applied as section.key sets), `--set` overrides,
//! then the `FLOWGUARD_SEED` environment variable for the root seed.
//! Unknown sections or keys are rejected, not ignored. The resolved echo
//! parses back to the identical configuration, so any run can be
//! reproduced from its `config.resolved` alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use flowguard_core::data::GenOptions;
use flowguard_core::detect::DetectorKind;
use flowguard_core::flow::{FlowConfig, ScalingVariant, TrainConfig};
use flowguard_core::mlp::{Activation, Init};
use flowguard_core::models::{AeConfig, ClassifierConfig};
use flowguard_core::tensor::Precision;

use crate::{IoError, Result};

/// Environment variable overriding the root seed.
pub const SEED_ENV: &str = "FLOWGUARD_SEED";

/// Raw section.key → value map with insertion-independent ordering.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(format!("line {}: unterminated section", lineno + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", lineno + 1)))?;
            if section.is_empty() {
                return Err(config_err(format!(
                    "line {}: key {:?} appears before any section",
                    lineno + 1,
                    key.trim()
                )));
            }
            entries.insert(
                (section.clone(), key.trim().to_string()),
                value.trim().to_string(),
            );
        }
        Ok(RawConfig { entries })
    }

    pub fn load(path: &Path) -> Result<RawConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| IoError::io(format!("reading config {}", path.display()), e))?;
        RawConfig::parse(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.entries
            .insert((section.to_string(), key.to_string()), value.to_string());
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| config_err(format!("override {spec:?} is not section.key=value")))?;
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| config_err(format!("override key {path:?} is not section.key")))?;
        self.set(section.trim(), key.trim(), value.trim());
        Ok(())
    }

    pub fn merge(&mut self, other: &RawConfig) {
        for ((s, k), v) in &other.entries {
            self.entries.insert((s.clone(), k.clone()), v.clone());
        }
    }
}

fn config_err(msg: impl Into<String>) -> IoError {
    IoError::Config(msg.into())
}

/// Typed view of one section that tracks which keys were consumed.
struct Section<'a> {
    name: &'a str,
    values: BTreeMap<&'a str, &'a str>,
}

impl<'a> Section<'a> {
    fn get(&mut self, key: &str) -> Option<&'a str> {
        self.values.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                config_err(format!("bad value {v:?} for key {}.{key}", self.name))
            }),
        }
    }

    fn parse_opt<T: std::str::FromStr>(&mut self, key: &str, default: Option<T>) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(default),
            Some("") | Some("none") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| config_err(format!("bad value {v:?} for key {}.{key}", self.name))),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    fn string_opt(&mut self, key: &str) -> Option<String> {
        match self.get(key) {
            None | Some("") | Some("none") => None,
            Some(v) => Some(v.to_string()),
        }
    }

    fn usize_list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| config_err(format!("bad value {v:?} for key {}.{key}", self.name)))
                })
                .collect(),
        }
    }

    fn f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| config_err(format!("bad value {v:?} for key {}.{key}", self.name)))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub precision: Precision,
}

#[derive(Debug, Clone)]
pub struct DataSection {
    pub name: String,
    pub n: usize,
    pub d: usize,
    /// Noise grid geometry.
    pub kappa: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub options: GenOptions,
    /// Probability of per-coordinate uniform replacement (background-model
    /// training data).
    pub corrupt_bernoulli: f64,
    /// Role recorded in the output tag: in-distribution or OOD.
    pub role: String,
    /// Optional delimited-text import instead of a generator.
    pub import: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainSection {
    pub data: Option<PathBuf>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct ClassifierSection {
    pub data: Option<PathBuf>,
    pub config: ClassifierConfig,
}

#[derive(Debug, Clone)]
pub struct AeSection {
    pub data: Option<PathBuf>,
    pub config: AeConfig,
}

#[derive(Debug, Clone)]
pub struct AttackSection {
    pub classifier: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub epsilon: f64,
    pub step: f64,
    pub iterations: usize,
    pub random_start: bool,
}

#[derive(Debug, Clone)]
pub struct ScoreSection {
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub detectors: Vec<DetectorKind>,
    pub lambda: f64,
    pub out: String,
    pub waic_members: Vec<PathBuf>,
    pub llr_background: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub autoencoder: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvaluateSection {
    pub in_dump: Option<PathBuf>,
    pub ood_dump: Option<PathBuf>,
    pub name: String,
    pub target_tpr: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSection {
    pub checkpoint: Option<PathBuf>,
    pub in_data: Option<PathBuf>,
    pub ood_data: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub lambda_grid: Vec<f64>,
    /// Penalty grid bounds and step for the synthetic-shift experiment.
    pub xi_max: f64,
    pub xi_step: f64,
    /// Sample cap for the per-sample penalty curves.
    pub max_samples: usize,
}

#[derive(Debug, Clone)]
pub struct TailBoundSection {
    pub d: usize,
    pub s: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AnnulusSection {
    pub d: usize,
    pub n: usize,
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub split: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub flow: FlowConfig,
    pub train: TrainSection,
    pub classifier: ClassifierSection,
    pub ae: AeSection,
    pub attack: AttackSection,
    pub score: ScoreSection,
    pub evaluate: EvaluateSection,
    pub sweep: SweepSection,
    pub tail_bound: TailBoundSection,
    pub annulus: AnnulusSection,
}

impl RunConfig {
    /// Typed resolution with strict leftover checking.
    pub fn resolve(raw: &RawConfig) -> Result<RunConfig> {
        // Group raw entries by section.
        let mut by_section: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
        for ((s, k), v) in &raw.entries {
            by_section
                .entry(s.as_str())
                .or_default()
                .insert(k.as_str(), v.as_str());
        }
        let known = [
            "run", "data", "flow", "train", "classifier", "ae", "attack", "score", "evaluate",
            "sweep", "tailbound", "annulus",
        ];
        for section in by_section.keys() {
            if !known.contains(section) {
                return Err(config_err(format!(
                    "unknown section [{section}]; known sections: {}",
                    known.join(", ")
                )));
            }
        }
        let mut section = |name: &'static str| -> Section<'_> {
            Section {
                name,
                values: by_section.remove(name).unwrap_or_default(),
            }
        };

        let mut s = section("run");
        let run = RunSection {
            seed: s.parse("seed", 42u64)?,
            out_dir: PathBuf::from(s.string("out_dir", "runs/out")),
            precision: Precision::parse(&s.string("precision", "single"))?,
        };
        finish(s)?;

        let mut s = section("data");
        let defaults = GenOptions::default();
        let centers = match s.get("mixture_centers") {
            None => None,
            Some(v) if v.is_empty() || v == "none" => None,
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(';') {
                    let c: Vec<f64> = part
                        .split(',')
                        .filter(|t| !t.trim().is_empty())
                        .map(|t| {
                            t.trim().parse().map_err(|_| {
                                config_err(format!("bad value {v:?} for key data.mixture_centers"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    out.push(c);
                }
                Some(out)
            }
        };
        let d = s.parse("d", 16usize)?;
        let centers = centers.map(|cs| {
            cs.into_iter()
                .map(|c| if c.len() == 1 { vec![c[0]; d] } else { c })
                .collect()
        });
        let data = DataSection {
            name: s.string("name", "ring"),
            n: s.parse("n", 2048usize)?,
            d,
            kappa: s.parse("kappa", 1usize)?,
            height: s.parse("height", 4usize)?,
            width: s.parse("width", 4usize)?,
            channels: s.parse("channels", 1usize)?,
            options: GenOptions {
                ring_radius: s.parse("ring_radius", defaults.ring_radius)?,
                ring_radial_sigma: s.parse("ring_radial_sigma", defaults.ring_radial_sigma)?,
                off_manifold_sigma: s.parse("off_manifold_sigma", defaults.off_manifold_sigma)?,
                moons_sigma: s.parse("moons_sigma", defaults.moons_sigma)?,
                mixture_centers: centers,
                mixture_sigma: s.parse("mixture_sigma", defaults.mixture_sigma)?,
            },
            corrupt_bernoulli: s.parse("corrupt_bernoulli", 0.0)?,
            role: s.string("role", "indist"),
            import: s.string_opt("import").map(PathBuf::from),
        };
        finish(s)?;

        let mut s = section("flow");
        let fdef = FlowConfig::default();
        let flow = FlowConfig {
            dim: data.d,
            blocks: s.parse("blocks", fdef.blocks)?,
            hidden: s.usize_list("hidden", &fdef.hidden)?,
            variant: ScalingVariant::parse(&s.string("variant", fdef.variant.name()))?,
            mixing_every: s.parse("mixing_every", fdef.mixing_every)?,
            factor_out_after: s.parse_opt("factor_out_after", None)?,
            standardize: s.parse("standardize", true)?,
            final_init: Init::Zero,
        };
        finish(s)?;

        let mut s = section("train");
        let tdef = TrainConfig::default();
        let train = TrainSection {
            data: s.string_opt("data").map(PathBuf::from),
            config: TrainConfig {
                iterations: s.parse("iterations", tdef.iterations)?,
                batch_size: s.parse("batch", tdef.batch_size)?,
                learning_rate: s.parse("lr", tdef.learning_rate)?,
                lr_drop_iteration: s.parse_opt("lr_drop_iteration", None)?,
                learning_rate_after_drop: s.parse("lr_after_drop", tdef.learning_rate_after_drop)?,
            },
        };
        finish(s)?;

        let mut s = section("classifier");
        let cdef = ClassifierConfig::default();
        let classifier = ClassifierSection {
            data: s.string_opt("data").map(PathBuf::from),
            config: ClassifierConfig {
                classes: s.parse("classes", cdef.classes)?,
                hidden: s.usize_list("hidden", &cdef.hidden)?,
                iterations: s.parse("iterations", cdef.iterations)?,
                batch_size: s.parse("batch", cdef.batch_size)?,
                learning_rate: s.parse("lr", cdef.learning_rate)?,
            },
        };
        finish(s)?;

        let mut s = section("ae");
        let adef = AeConfig::default();
        let ae = AeSection {
            data: s.string_opt("data").map(PathBuf::from),
            config: AeConfig {
                hidden: s.usize_list("hidden", &adef.hidden)?,
                bottleneck: s.parse("bottleneck", adef.bottleneck)?,
                iterations: s.parse("iterations", adef.iterations)?,
                batch_size: s.parse("batch", adef.batch_size)?,
                learning_rate: s.parse("lr", adef.learning_rate)?,
                hidden_activation: Activation::Tanh,
                final_activation: parse_activation(&s.string("final_activation", "sigmoid"))?,
            },
        };
        finish(s)?;

        let mut s = section("attack");
        let attack = AttackSection {
            classifier: s.string_opt("classifier").map(PathBuf::from),
            dataset: s.string_opt("dataset").map(PathBuf::from),
            epsilon: s.parse("epsilon", 0.08)?,
            step: s.parse("step", 0.01)?,
            iterations: s.parse("iterations", 100usize)?,
            random_start: s.parse("random_start", false)?,
        };
        finish(s)?;

        let mut s = section("score");
        let detectors = match s.get("detectors") {
            None => vec![
                DetectorKind::Ll,
                DetectorKind::Ttl,
                DetectorKind::Re,
                DetectorKind::Pre,
            ],
            Some(v) => v
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| DetectorKind::parse(t.trim()))
                .collect::<flowguard_core::Result<_>>()?,
        };
        let score = ScoreSection {
            checkpoint: s.string_opt("checkpoint").map(PathBuf::from),
            dataset: s.string_opt("dataset").map(PathBuf::from),
            detectors,
            lambda: s.parse("lambda", 50.0)?,
            out: s.string("out", "scores"),
            waic_members: s
                .string_opt("waic_members")
                .map(|v| v.split(',').map(PathBuf::from).collect())
                .unwrap_or_default(),
            llr_background: s.string_opt("llr_background").map(PathBuf::from),
            classifier: s.string_opt("classifier").map(PathBuf::from),
            autoencoder: s.string_opt("autoencoder").map(PathBuf::from),
        };
        finish(s)?;

        let mut s = section("evaluate");
        let evaluate = EvaluateSection {
            in_dump: s.string_opt("in_dump").map(PathBuf::from),
            ood_dump: s.string_opt("ood_dump").map(PathBuf::from),
            name: s.string("name", "report"),
            target_tpr: s.parse("target_tpr", 0.95)?,
        };
        finish(s)?;

        let mut s = section("sweep");
        let sweep = SweepSection {
            checkpoint: s.string_opt("checkpoint").map(PathBuf::from),
            in_data: s.string_opt("in_data").map(PathBuf::from),
            ood_data: s.string_opt("ood_data").map(PathBuf::from),
            dataset: s.string_opt("dataset").map(PathBuf::from),
            lambda_grid: s.f64_list("lambda_grid", &flowguard_core::eval::LAMBDA_GRID_DEFAULT)?,
            xi_max: s.parse("xi_max", 11.0)?,
            xi_step: s.parse("xi_step", 0.2)?,
            max_samples: s.parse("max_samples", 256usize)?,
        };
        finish(s)?;

        let mut s = section("tailbound");
        let tail_bound = TailBoundSection {
            d: s.parse("d", 3072usize)?,
            s: s.parse_opt("s", None)?,
            epsilon: s.parse_opt("epsilon", None)?,
        };
        finish(s)?;

        let mut s = section("annulus");
        let da = s.parse_opt("split_a", None)?;
        let db = s.parse_opt("split_b", None)?;
        let split = match (da, db) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(config_err(
                    "annulus.split_a and annulus.split_b must be given together",
                ))
            }
        };
        let annulus = AnnulusSection {
            d: s.parse("d", 3072usize)?,
            n: s.parse("n", 100_000usize)?,
            checkpoint: s.string_opt("checkpoint").map(PathBuf::from),
            dataset: s.string_opt("dataset").map(PathBuf::from),
            split,
        };
        finish(s)?;

        Ok(RunConfig {
            run,
            data,
            flow,
            train,
            classifier,
            ae,
            attack,
            score,
            evaluate,
            sweep,
            tail_bound,
            annulus,
        })
    }

    /// The fully-resolved INI echo; parsing it back reproduces this
    /// configuration exactly.
    pub fn render(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "[run]");
        let _ = writeln!(o, "seed = {}", self.run.seed);
        let _ = writeln!(o, "out_dir = {}", self.run.out_dir.display());
        let _ = writeln!(o, "precision = {}", self.run.precision.name());

        let _ = writeln!(o, "\n[data]");
        let _ = writeln!(o, "name = {}", self.data.name);
        let _ = writeln!(o, "role = {}", self.data.role);
        let _ = writeln!(o, "n = {}", self.data.n);
        let _ = writeln!(o, "d = {}", self.data.d);
        let _ = writeln!(o, "kappa = {}", self.data.kappa);
        let _ = writeln!(o, "height = {}", self.data.height);
        let _ = writeln!(o, "width = {}", self.data.width);
        let _ = writeln!(o, "channels = {}", self.data.channels);
        let opts = &self.data.options;
        let _ = writeln!(o, "ring_radius = {}", opts.ring_radius);
        let _ = writeln!(o, "ring_radial_sigma = {}", opts.ring_radial_sigma);
        let _ = writeln!(o, "off_manifold_sigma = {}", opts.off_manifold_sigma);
        let _ = writeln!(o, "moons_sigma = {}", opts.moons_sigma);
        let centers = match &opts.mixture_centers {
            None => "none".to_string(),
            Some(cs) => cs
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect::<Vec<_>>()
                .join(";"),
        };
        let _ = writeln!(o, "mixture_centers = {centers}");
        let _ = writeln!(o, "mixture_sigma = {}", opts.mixture_sigma);
        let _ = writeln!(o, "corrupt_bernoulli = {}", self.data.corrupt_bernoulli);
        let _ = writeln!(o, "import = {}", opt_path(&self.data.import));

        let _ = writeln!(o, "\n[flow]");
        let _ = writeln!(o, "blocks = {}", self.flow.blocks);
        let _ = writeln!(
            o,
            "hidden = {}",
            self.flow
                .hidden
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(o, "variant = {}", self.flow.variant.name());
        let _ = writeln!(o, "mixing_every = {}", self.flow.mixing_every);
        let _ = writeln!(
            o,
            "factor_out_after = {}",
            self.flow
                .factor_out_after
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into())
        );
        let _ = writeln!(o, "standardize = {}", self.flow.standardize);

        let _ = writeln!(o, "\n[train]");
        let _ = writeln!(o, "data = {}", opt_path(&self.train.data));
        let t = &self.train.config;
        let _ = writeln!(o, "iterations = {}", t.iterations);
        let _ = writeln!(o, "batch = {}", t.batch_size);
        let _ = writeln!(o, "lr = {}", t.learning_rate);
        let _ = writeln!(
            o,
            "lr_drop_iteration = {}",
            t.lr_drop_iteration
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into())
        );
        let _ = writeln!(o, "lr_after_drop = {}", t.learning_rate_after_drop);

        let _ = writeln!(o, "\n[classifier]");
        let _ = writeln!(o, "data = {}", opt_path(&self.classifier.data));
        let c = &self.classifier.config;
        let _ = writeln!(o, "classes = {}", c.classes);
        let _ = writeln!(
            o,
            "hidden = {}",
            c.hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(o, "iterations = {}", c.iterations);
        let _ = writeln!(o, "batch = {}", c.batch_size);
        let _ = writeln!(o, "lr = {}", c.learning_rate);

        let _ = writeln!(o, "\n[ae]");
        let _ = writeln!(o, "data = {}", opt_path(&self.ae.data));
        let a = &self.ae.config;
        let _ = writeln!(
            o,
            "hidden = {}",
            a.hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(o, "bottleneck = {}", a.bottleneck);
        let _ = writeln!(o, "iterations = {}", a.iterations);
        let _ = writeln!(o, "batch = {}", a.batch_size);
        let _ = writeln!(o, "lr = {}", a.learning_rate);
        let _ = writeln!(o, "final_activation = {}", activation_name(a.final_activation));

        let _ = writeln!(o, "\n[attack]");
        let _ = writeln!(o, "classifier = {}", opt_path(&self.attack.classifier));
        let _ = writeln!(o, "dataset = {}", opt_path(&self.attack.dataset));
        let _ = writeln!(o, "epsilon = {}", self.attack.epsilon);
        let _ = writeln!(o, "step = {}", self.attack.step);
        let _ = writeln!(o, "iterations = {}", self.attack.iterations);
        let _ = writeln!(o, "random_start = {}", self.attack.random_start);

        let _ = writeln!(o, "\n[score]");
        let _ = writeln!(o, "checkpoint = {}", opt_path(&self.score.checkpoint));
        let _ = writeln!(o, "dataset = {}", opt_path(&self.score.dataset));
        let _ = writeln!(
            o,
            "detectors = {}",
            self.score
                .detectors
                .iter()
                .map(|k| k.name())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(o, "lambda = {}", self.score.lambda);
        let _ = writeln!(o, "out = {}", self.score.out);
        let _ = writeln!(
            o,
            "waic_members = {}",
            if self.score.waic_members.is_empty() {
                "none".to_string()
            } else {
                self.score
                    .waic_members
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            }
        );
        let _ = writeln!(o, "llr_background = {}", opt_path(&self.score.llr_background));
        let _ = writeln!(o, "classifier = {}", opt_path(&self.score.classifier));
        let _ = writeln!(o, "autoencoder = {}", opt_path(&self.score.autoencoder));

        let _ = writeln!(o, "\n[evaluate]");
        let _ = writeln!(o, "in_dump = {}", opt_path(&self.evaluate.in_dump));
        let _ = writeln!(o, "ood_dump = {}", opt_path(&self.evaluate.ood_dump));
        let _ = writeln!(o, "name = {}", self.evaluate.name);
        let _ = writeln!(o, "target_tpr = {}", self.evaluate.target_tpr);

        let _ = writeln!(o, "\n[sweep]");
        let _ = writeln!(o, "checkpoint = {}", opt_path(&self.sweep.checkpoint));
        let _ = writeln!(o, "in_data = {}", opt_path(&self.sweep.in_data));
        let _ = writeln!(o, "ood_data = {}", opt_path(&self.sweep.ood_data));
        let _ = writeln!(o, "dataset = {}", opt_path(&self.sweep.dataset));
        let _ = writeln!(
            o,
            "lambda_grid = {}",
            self.sweep
                .lambda_grid
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(o, "xi_max = {}", self.sweep.xi_max);
        let _ = writeln!(o, "xi_step = {}", self.sweep.xi_step);
        let _ = writeln!(o, "max_samples = {}", self.sweep.max_samples);

        let _ = writeln!(o, "\n[tailbound]");
        let _ = writeln!(o, "d = {}", self.tail_bound.d);
        let _ = writeln!(
            o,
            "s = {}",
            self.tail_bound.s.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
        );
        let _ = writeln!(
            o,
            "epsilon = {}",
            self.tail_bound
                .epsilon
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into())
        );

        let _ = writeln!(o, "\n[annulus]");
        let _ = writeln!(o, "d = {}", self.annulus.d);
        let _ = writeln!(o, "n = {}", self.annulus.n);
        let _ = writeln!(o, "checkpoint = {}", opt_path(&self.annulus.checkpoint));
        let _ = writeln!(o, "dataset = {}", opt_path(&self.annulus.dataset));
        let (sa, sb) = match self.annulus.split {
            Some((a, b)) => (a.to_string(), b.to_string()),
            None => ("none".into(), "none".into()),
        };
        let _ = writeln!(o, "split_a = {sa}");
        let _ = writeln!(o, "split_b = {sb}");
        o
    }
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "none".into())
}

fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "identity" => Ok(Activation::Identity),
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        other => Err(config_err(format!(
            "unknown activation {other:?}; expected identity, tanh, or sigmoid"
        ))),
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Identity => "identity",
        Activation::Tanh => "tanh",
        Activation::Sigmoid => "sigmoid",
    }
}

fn finish(s: Section<'_>) -> Result<()> {
    if let Some(key) = s.values.keys().next() {
        return Err(config_err(format!(
            "unknown key {key:?} in section [{}]",
            s.name
        )));
    }
    Ok(())
}
