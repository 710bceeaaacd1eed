//! Binary weight files and model checkpoints.
//!
//! Layout: magic `FGW1`, a version byte, a length-prefixed UTF-8 header,
//! then the raw little-endian element payloads in header order. The header
//! carries an optional `[arch]` section (model kind and architecture keys)
//! and a `[params]` section listing every tensor's name, precision, and
//! shape. Round trips are bitwise exact for both precisions.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flowguard_core::flow::{FlowConfig, FlowModel, ScalingVariant};
use flowguard_core::mlp::{Activation, Init, Mlp};
use flowguard_core::models::{Autoencoder, Classifier};
use flowguard_core::tensor::{Precision, Tensor};
use flowguard_core::DetRng;

use crate::{IoError, Result};

const MAGIC: &[u8; 4] = b"FGW1";
const VERSION: u8 = 1;

/// Architecture key-value lines plus named tensors, in name order.
#[derive(Debug)]
pub struct WeightFile {
    pub arch: BTreeMap<String, String>,
    pub params: BTreeMap<String, Tensor>,
}

pub fn save_weights(
    params: &BTreeMap<String, Tensor>,
    arch: &BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    let mut header = String::new();
    if !arch.is_empty() {
        header.push_str("[arch]\n");
        for (k, v) in arch {
            header.push_str(&format!("{k}={v}\n"));
        }
    }
    header.push_str("[params]\n");
    header.push_str(&format!("count={}\n", params.len()));
    for (name, t) in params {
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!(
            "{name}\t{}\t{}\n",
            t.precision().name(),
            shape.join("x")
        ));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for t in params.values() {
        match t.precision() {
            Precision::Double => {
                for v in t.f64_slice().expect("precision checked") {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Precision::Single => {
                for v in t.f32_slice().expect("precision checked") {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    let mut f = fs::File::create(path)
        .map_err(|e| IoError::io(format!("creating {}", path.display()), e))?;
    f.write_all(&out)
        .map_err(|e| IoError::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<WeightFile> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| IoError::io(format!("opening {}", path.display()), e))?
        .read_to_end(&mut bytes)
        .map_err(|e| IoError::io(format!("reading {}", path.display()), e))?;

    let fail = |offset: u64, msg: &str| IoError::format(path, offset, msg);
    if bytes.len() < 9 {
        return Err(fail(bytes.len() as u64, "file too short for the fixed header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail(0, "bad magic; expected FGW1"));
    }
    if bytes[4] != VERSION {
        return Err(fail(4, &format!("unsupported version {}", bytes[4])));
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    if bytes.len() < 9 + header_len {
        return Err(fail(bytes.len() as u64, "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[9..9 + header_len])
        .map_err(|_| fail(9, "header is not valid UTF-8"))?;

    let mut arch = BTreeMap::new();
    let mut entries: Vec<(String, Precision, Vec<usize>)> = Vec::new();
    let mut declared: Option<usize> = None;
    let mut section = "";
    for line in header.lines() {
        if line.is_empty() {
            continue;
        }
        if line == "[arch]" || line == "[params]" {
            section = line;
            continue;
        }
        match section {
            "[arch]" => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| fail(9, &format!("bad arch line {line:?}")))?;
                arch.insert(k.to_string(), v.to_string());
            }
            "[params]" => {
                if let Some(count) = line.strip_prefix("count=") {
                    declared = Some(
                        count
                            .parse()
                            .map_err(|_| fail(9, &format!("bad parameter count {count:?}")))?,
                    );
                    continue;
                }
                let mut parts = line.split('\t');
                let name = parts
                    .next()
                    .ok_or_else(|| fail(9, &format!("bad parameter line {line:?}")))?;
                let prec = parts
                    .next()
                    .ok_or_else(|| fail(9, &format!("missing precision in {line:?}")))?;
                let shape_s = parts
                    .next()
                    .ok_or_else(|| fail(9, &format!("missing shape in {line:?}")))?;
                let precision = Precision::parse(prec)
                    .map_err(|_| fail(9, &format!("bad precision {prec:?}")))?;
                let shape: Vec<usize> = if shape_s.is_empty() {
                    Vec::new()
                } else {
                    shape_s
                        .split('x')
                        .map(|d| {
                            d.parse()
                                .map_err(|_| fail(9, &format!("bad extent {d:?} in {line:?}")))
                        })
                        .collect::<Result<_>>()?
                };
                entries.push((name.to_string(), precision, shape));
            }
            _ => return Err(fail(9, &format!("line outside any section: {line:?}"))),
        }
    }
    if let Some(count) = declared {
        if count != entries.len() {
            return Err(fail(
                9,
                &format!("header declares {count} parameters, lists {}", entries.len()),
            ));
        }
    }

    let mut offset = 9 + header_len;
    let mut params = BTreeMap::new();
    for (name, precision, shape) in entries {
        let n: usize = shape.iter().product();
        let width = match precision {
            Precision::Double => 8,
            Precision::Single => 4,
        };
        let need = n * width;
        if bytes.len() < offset + need {
            return Err(fail(
                offset as u64,
                &format!(
                    "payload for {name:?} needs {need} bytes, {} remain",
                    bytes.len() - offset
                ),
            ));
        }
        let t = match precision {
            Precision::Double => {
                let data: Vec<f64> = bytes[offset..offset + need]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Tensor::from_f64(&shape, data)
                    .map_err(|e| fail(offset as u64, &e.to_string()))?
            }
            Precision::Single => {
                let data: Vec<f32> = bytes[offset..offset + need]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Tensor::from_f32(&shape, data)
                    .map_err(|e| fail(offset as u64, &e.to_string()))?
            }
        };
        params.insert(name, t);
        offset += need;
    }
    if offset != bytes.len() {
        return Err(fail(
            offset as u64,
            &format!("{} trailing bytes after the declared payload", bytes.len() - offset),
        ));
    }
    Ok(WeightFile { arch, params })
}

fn usize_list(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|p| p.parse().ok()).collect()
}

fn arch_get<'a>(arch: &'a BTreeMap<String, String>, key: &str, path: &Path) -> Result<&'a str> {
    arch.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| IoError::format(path, 9, format!("checkpoint is missing arch key {key:?}")))
}

/// Flow checkpoint: the weight file plus the architecture section needed
/// to rebuild the block structure.
pub fn save_flow(model: &FlowModel, path: &Path) -> Result<()> {
    let cfg = &model.config;
    let mut arch = BTreeMap::new();
    arch.insert("kind".into(), "flow".into());
    arch.insert("dim".into(), cfg.dim.to_string());
    arch.insert("blocks".into(), cfg.blocks.to_string());
    arch.insert(
        "hidden".into(),
        cfg.hidden
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    arch.insert("variant".into(), cfg.variant.name().into());
    arch.insert("mixing_every".into(), cfg.mixing_every.to_string());
    arch.insert(
        "factor_out_after".into(),
        cfg.factor_out_after
            .map(|v| v.to_string())
            .unwrap_or_else(|| "none".into()),
    );
    arch.insert("standardize".into(), cfg.standardize.to_string());
    save_weights(&model.collect_params(), &arch, path)
}

pub fn load_flow(path: &Path) -> Result<FlowModel> {
    let file = load_weights(path)?;
    let kind = arch_get(&file.arch, "kind", path)?;
    if kind != "flow" {
        return Err(IoError::format(
            path,
            9,
            format!("expected a flow checkpoint, found kind {kind:?}"),
        ));
    }
    let bad = |key: &str| IoError::format(path, 9, format!("bad arch value for {key:?}"));
    let cfg = FlowConfig {
        dim: arch_get(&file.arch, "dim", path)?
            .parse()
            .map_err(|_| bad("dim"))?,
        blocks: arch_get(&file.arch, "blocks", path)?
            .parse()
            .map_err(|_| bad("blocks"))?,
        hidden: usize_list(arch_get(&file.arch, "hidden", path)?).ok_or_else(|| bad("hidden"))?,
        variant: ScalingVariant::parse(arch_get(&file.arch, "variant", path)?)?,
        mixing_every: arch_get(&file.arch, "mixing_every", path)?
            .parse()
            .map_err(|_| bad("mixing_every"))?,
        factor_out_after: match arch_get(&file.arch, "factor_out_after", path)? {
            "none" => None,
            v => Some(v.parse().map_err(|_| bad("factor_out_after"))?),
        },
        standardize: arch_get(&file.arch, "standardize", path)?
            .parse()
            .map_err(|_| bad("standardize"))?,
        final_init: Init::Zero,
    };
    let mut model = FlowModel::build(&cfg, &mut DetRng::from_seed(0))?;
    model.set_params(&file.params)?;
    Ok(model)
}

pub fn save_classifier(clf: &Classifier, hidden: &[usize], path: &Path) -> Result<()> {
    let mut arch = BTreeMap::new();
    arch.insert("kind".into(), "classifier".into());
    arch.insert("dim".into(), clf.dim.to_string());
    arch.insert("classes".into(), clf.classes.to_string());
    arch.insert(
        "hidden".into(),
        hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
    );
    let mut params = BTreeMap::new();
    clf.net.collect_params("net", &mut params);
    save_weights(&params, &arch, path)
}

pub fn load_classifier(path: &Path) -> Result<Classifier> {
    let file = load_weights(path)?;
    if arch_get(&file.arch, "kind", path)? != "classifier" {
        return Err(IoError::format(path, 9, "expected a classifier checkpoint"));
    }
    let bad = |key: &str| IoError::format(path, 9, format!("bad arch value for {key:?}"));
    let dim: usize = arch_get(&file.arch, "dim", path)?
        .parse()
        .map_err(|_| bad("dim"))?;
    let classes: usize = arch_get(&file.arch, "classes", path)?
        .parse()
        .map_err(|_| bad("classes"))?;
    let hidden = usize_list(arch_get(&file.arch, "hidden", path)?).ok_or_else(|| bad("hidden"))?;
    let mut widths = vec![dim];
    widths.extend(&hidden);
    widths.push(classes);
    let mut net = Mlp::new(
        &widths,
        Activation::Tanh,
        Activation::Identity,
        Init::Zero,
        &mut DetRng::from_seed(0),
    );
    net.set_params("net", &file.params)?;
    Ok(Classifier { net, classes, dim })
}

pub fn save_autoencoder(
    ae: &Autoencoder,
    hidden: &[usize],
    final_activation: Activation,
    path: &Path,
) -> Result<()> {
    let mut arch = BTreeMap::new();
    arch.insert("kind".into(), "autoencoder".into());
    arch.insert("dim".into(), ae.dim.to_string());
    arch.insert("bottleneck".into(), ae.bottleneck.to_string());
    arch.insert(
        "hidden".into(),
        hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
    );
    arch.insert(
        "final_activation".into(),
        match final_activation {
            Activation::Identity => "identity".into(),
            Activation::Tanh => "tanh".into(),
            Activation::Sigmoid => "sigmoid".into(),
        },
    );
    let mut params = BTreeMap::new();
    ae.encoder.collect_params("enc", &mut params);
    ae.decoder.collect_params("dec", &mut params);
    save_weights(&params, &arch, path)
}

pub fn load_autoencoder(path: &Path) -> Result<Autoencoder> {
    let file = load_weights(path)?;
    if arch_get(&file.arch, "kind", path)? != "autoencoder" {
        return Err(IoError::format(path, 9, "expected an autoencoder checkpoint"));
    }
    let bad = |key: &str| IoError::format(path, 9, format!("bad arch value for {key:?}"));
    let dim: usize = arch_get(&file.arch, "dim", path)?
        .parse()
        .map_err(|_| bad("dim"))?;
    let bottleneck: usize = arch_get(&file.arch, "bottleneck", path)?
        .parse()
        .map_err(|_| bad("bottleneck"))?;
    let hidden = usize_list(arch_get(&file.arch, "hidden", path)?).ok_or_else(|| bad("hidden"))?;
    let final_activation = match arch_get(&file.arch, "final_activation", path)? {
        "identity" => Activation::Identity,
        "tanh" => Activation::Tanh,
        "sigmoid" => Activation::Sigmoid,
        other => {
            return Err(IoError::format(
                path,
                9,
                format!("unknown final activation {other:?}"),
            ))
        }
    };
    let mut enc_widths = vec![dim];
    enc_widths.extend(&hidden);
    enc_widths.push(bottleneck);
    let mut dec_widths = vec![bottleneck];
    dec_widths.extend(hidden.iter().rev());
    dec_widths.push(dim);
    let mut rng = DetRng::from_seed(0);
    let mut encoder = Mlp::new(
        &enc_widths,
        Activation::Tanh,
        Activation::Identity,
        Init::Zero,
        &mut rng,
    );
    let mut decoder = Mlp::new(
        &dec_widths,
        Activation::Tanh,
        final_activation,
        Init::Zero,
        &mut rng,
    );
    encoder.set_params("enc", &file.params)?;
    decoder.set_params("dec", &file.params)?;
    Ok(Autoencoder {
        encoder,
        decoder,
        dim,
        bottleneck,
    })
}
