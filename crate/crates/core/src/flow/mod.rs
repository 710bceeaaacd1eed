//! Invertible normalizing-flow models.
//!
//! A model is an ordered stack of coupling blocks and optional LU-factored
//! mixing layers over a fixed dimension, with a standard Gaussian latent
//! law. `forward` maps data to latent codes while accumulating the exact
//! log-determinant; `inverse` applies the blocks' algebraic inverses in
//! reverse; `log_density` combines the two change-of-variables terms.

pub mod affine;
pub mod coupling;
pub mod mixing;
pub mod train;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::math::{Real, LN_2PI};
use crate::mlp::{Activation, Init, Mlp};
use crate::rng::DetRng;
use crate::tensor::{Precision, Tensor};

pub use affine::AffineLayer;
pub use coupling::{couple_forward, couple_inverse, CouplingBlock, Mask, ScalingVariant};
pub use mixing::MixingLayer;
pub use train::{train_flow, TrainConfig};

use affine::AffineInfer;
use coupling::BlockInfer;
use mixing::MixInfer;

#[derive(Debug, Clone)]
pub enum Layer {
    /// Per-coordinate normalization; when present, the first layer.
    Affine(AffineLayer),
    Coupling(CouplingBlock),
    Mixing(MixingLayer),
}

/// Latent code and the log-determinant accumulated on the way to it.
#[derive(Debug, Clone)]
pub struct LatentCode {
    pub z: Tensor,
    pub log_det: f64,
}

/// Architecture of a flow model.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub dim: usize,
    /// Number of coupling blocks.
    pub blocks: usize,
    /// Hidden widths of both coupling subnets.
    pub hidden: Vec<usize>,
    pub variant: ScalingVariant,
    /// Insert a mixing layer after every this many coupling blocks; 0 disables.
    pub mixing_every: usize,
    /// When set, the trailing half of the coordinates is routed directly to
    /// the latent after this many coupling blocks; the remaining blocks act
    /// on the leading half only. Off by default for flat vectors.
    pub factor_out_after: Option<usize>,
    /// Lead with an invertible per-coordinate normalization layer. Couplings
    /// with restricted scaling can only contract, so without this layer
    /// thin data directions never reach unit variance in the latent.
    pub standardize: bool,
    /// Initialization of the final subnet layers. `Zero` starts every block
    /// at a known benign map (with half-sigmoid scaling, a 0.75 contraction).
    pub final_init: Init,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dim: 16,
            blocks: 8,
            hidden: alloc::vec![64, 64],
            variant: ScalingVariant::HalfSigmoid,
            mixing_every: 2,
            factor_out_after: None,
            standardize: true,
            final_init: Init::Zero,
        }
    }
}

/// A trained model is a plain value: scoring takes `&self`, so concurrent
/// read-only use across threads is safe, while training requires the
/// exclusive borrow.
#[derive(Debug, Clone)]
pub struct FlowModel {
    pub dim: usize,
    pub layers: Vec<Layer>,
    /// Scaling-variant tag shared by all coupling blocks.
    pub variant: ScalingVariant,
    /// Layer index after which the active width shrinks to `keep_width`.
    pub split_after_layer: Option<usize>,
    pub config: FlowConfig,
}

impl FlowModel {
    /// Build a model from `config`, drawing initial weights from `rng`.
    pub fn build(config: &FlowConfig, rng: &mut DetRng) -> Result<FlowModel> {
        if config.dim < 2 {
            return Err(Error::config(format!(
                "flow dimension must be >= 2, got {}",
                config.dim
            )));
        }
        let keep = keep_width(config.dim);
        if config.factor_out_after.is_some() && keep < 2 {
            return Err(Error::config(
                "factoring out needs at least 2 remaining coordinates",
            ));
        }
        if let Some(k) = config.factor_out_after {
            if k >= config.blocks {
                return Err(Error::config(format!(
                    "factor_out_after {k} must be below the block count {}",
                    config.blocks
                )));
            }
        }

        let mut init_rng = rng.split("flow-init");
        let mut layers = Vec::new();
        if config.standardize {
            layers.push(Layer::Affine(AffineLayer::identity(config.dim)));
        }
        let mut split_after_layer = None;
        let mut width = config.dim;
        for b in 0..config.blocks {
            let mask = Mask::alternating(width, b)?;
            let (na, nb) = (mask.a_idx.len(), mask.b_idx.len());
            let mut widths = alloc::vec![na];
            widths.extend_from_slice(&config.hidden);
            widths.push(nb);
            // A zero-started clip scale is min(|0|, 15) = 0, a singular
            // map; that variant's s-net must start from random weights.
            let s_final_init = if config.variant == ScalingVariant::Clip15 {
                Init::FanIn
            } else {
                config.final_init
            };
            let s_net = (config.variant != ScalingVariant::Additive).then(|| {
                Mlp::new(
                    &widths,
                    Activation::Tanh,
                    Activation::Identity,
                    s_final_init,
                    &mut init_rng,
                )
            });
            let t_net = Mlp::new(
                &widths,
                Activation::Tanh,
                Activation::Identity,
                config.final_init,
                &mut init_rng,
            );
            layers.push(Layer::Coupling(CouplingBlock {
                index: layers.len(),
                mask,
                s_net,
                t_net,
                variant: config.variant,
            }));
            if config.factor_out_after == Some(b) {
                split_after_layer = Some(layers.len() - 1);
                width = keep;
            }
            let insert_mixing = config.mixing_every > 0
                && (b + 1) % config.mixing_every == 0
                && b + 1 < config.blocks;
            if insert_mixing {
                let layer = match config.final_init {
                    Init::Zero => MixingLayer::identity(width),
                    Init::FanIn => MixingLayer::random(width, &mut init_rng),
                };
                layers.push(Layer::Mixing(layer));
            }
        }
        Ok(FlowModel {
            dim: config.dim,
            layers,
            variant: config.variant,
            split_after_layer,
            config: config.clone(),
        })
    }

    /// Width of the still-active part after factoring out.
    pub fn keep_width(&self) -> usize {
        keep_width(self.dim)
    }

    /// Model built for `data`: the leading normalization layer (when
    /// configured) starts at the per-coordinate mean and standard deviation
    /// of the dataset.
    pub fn build_for_data(
        config: &FlowConfig,
        data: &crate::data::DatasetHandle,
        rng: &mut DetRng,
    ) -> Result<FlowModel> {
        let mut model = FlowModel::build(config, rng)?;
        if config.standardize {
            model.initialize_standardization(data)?;
        }
        Ok(model)
    }

    /// Reinitialize the leading normalization layer from dataset statistics.
    pub fn initialize_standardization(&mut self, data: &crate::data::DatasetHandle) -> Result<()> {
        if data.dim() != self.dim {
            return Err(Error::dimension(
                "standardization data",
                &[data.dim()],
                &[self.dim],
            ));
        }
        if data.is_empty() {
            return Err(Error::contract("standardization needs samples"));
        }
        let d = self.dim;
        let n = data.len() as f64;
        let mut mean = alloc::vec![0.0; d];
        for i in 0..data.len() {
            for (m, &v) in mean.iter_mut().zip(data.row(i)) {
                *m += v as f64;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = alloc::vec![0.0; d];
        for i in 0..data.len() {
            for j in 0..d {
                let dv = data.row(i)[j] as f64 - mean[j];
                var[j] += dv * dv;
            }
        }
        let std: Vec<f64> = var.iter().map(|v| crate::math::sqrt(v / n)).collect();
        match self.layers.first_mut() {
            Some(Layer::Affine(layer)) => {
                *layer = AffineLayer::standardizing(&mean, &std);
                Ok(())
            }
            _ => Err(Error::contract(
                "model has no leading normalization layer to initialize",
            )),
        }
    }

    /// Data-to-latent map at the precision of `x`.
    pub fn forward(&self, x: &Tensor) -> Result<LatentCode> {
        self.check_input(x)?;
        match x.precision() {
            Precision::Double => {
                let fi = self.inference::<f64>();
                let (z, ld) = fi.forward(&x.to_elems::<f64>())?;
                Ok(LatentCode {
                    z: Tensor::from_f64(&[z.len()], z)?,
                    log_det: ld,
                })
            }
            Precision::Single => {
                let fi = self.inference::<f32>();
                let (z, ld) = fi.forward(&x.to_elems::<f32>())?;
                Ok(LatentCode {
                    z: Tensor::from_f32(&[z.len()], z)?,
                    log_det: ld as f64,
                })
            }
        }
    }

    /// Latent-to-data map at the precision of `z`.
    pub fn inverse(&self, z: &Tensor) -> Result<Tensor> {
        self.check_input(z)?;
        match z.precision() {
            Precision::Double => {
                let fi = self.inference::<f64>();
                let x = fi.inverse(&z.to_elems::<f64>())?;
                Tensor::from_f64(&[x.len()], x)
            }
            Precision::Single => {
                let fi = self.inference::<f32>();
                let x = fi.inverse(&z.to_elems::<f32>())?;
                Tensor::from_f32(&[x.len()], x)
            }
        }
    }

    /// `log p(x)` under the standard Gaussian latent law, at the precision
    /// of `x`.
    pub fn log_density(&self, x: &Tensor) -> Result<f64> {
        self.check_input(x)?;
        let lp = match x.precision() {
            Precision::Double => self.inference::<f64>().log_density(&x.to_elems::<f64>())?,
            Precision::Single => {
                self.inference::<f32>().log_density(&x.to_elems::<f32>())? as f64
            }
        };
        if !lp.is_finite() {
            return Err(Error::numeric("log_density", None));
        }
        Ok(lp)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != [self.dim] {
            return Err(Error::dimension("flow input", x.shape(), &[self.dim]));
        }
        Ok(())
    }

    pub(crate) fn inference<E: Real>(&self) -> FlowInfer<E> {
        FlowInfer {
            dim: self.dim,
            keep: self.keep_width(),
            split_after: self.split_after_layer,
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Affine(a) => LayerInfer::Affine(a.inference()),
                    Layer::Coupling(b) => LayerInfer::Coupling(b.inference()),
                    Layer::Mixing(m) => LayerInfer::Mixing(m.inference()),
                })
                .collect(),
        }
    }

    pub fn collect_params(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Affine(a) => {
                    out.insert(format!("layers.{i:03}.aff.b"), a.shift.clone());
                    out.insert(format!("layers.{i:03}.aff.ls"), a.log_scale.clone());
                }
                Layer::Coupling(b) => {
                    if let Some(s) = &b.s_net {
                        s.collect_params(&format!("layers.{i:03}.s"), &mut out);
                    }
                    b.t_net.collect_params(&format!("layers.{i:03}.t"), &mut out);
                }
                Layer::Mixing(m) => {
                    out.insert(format!("layers.{i:03}.mix.l"), m.lower.clone());
                    out.insert(format!("layers.{i:03}.mix.u"), m.upper.clone());
                    out.insert(format!("layers.{i:03}.mix.d"), m.u_diag.clone());
                }
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &BTreeMap<String, Tensor>) -> Result<()> {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Affine(a) => {
                    for (key, slot) in [
                        (format!("layers.{i:03}.aff.b"), &mut a.shift),
                        (format!("layers.{i:03}.aff.ls"), &mut a.log_scale),
                    ] {
                        let t = params
                            .get(&key)
                            .ok_or_else(|| Error::contract(format!("missing parameter {key:?}")))?;
                        if t.shape() != slot.shape() {
                            return Err(Error::dimension(
                                format!("parameter {key:?}"),
                                slot.shape(),
                                t.shape(),
                            ));
                        }
                        *slot = t.clone();
                    }
                }
                Layer::Coupling(b) => {
                    if let Some(s) = &mut b.s_net {
                        s.set_params(&format!("layers.{i:03}.s"), params)?;
                    }
                    b.t_net.set_params(&format!("layers.{i:03}.t"), params)?;
                }
                Layer::Mixing(m) => {
                    for (key, slot) in [
                        (format!("layers.{i:03}.mix.l"), &mut m.lower),
                        (format!("layers.{i:03}.mix.u"), &mut m.upper),
                        (format!("layers.{i:03}.mix.d"), &mut m.u_diag),
                    ] {
                        let t = params
                            .get(&key)
                            .ok_or_else(|| Error::contract(format!("missing parameter {key:?}")))?;
                        if t.shape() != slot.shape() {
                            return Err(Error::dimension(
                                format!("parameter {key:?}"),
                                slot.shape(),
                                t.shape(),
                            ));
                        }
                        *slot = t.clone();
                    }
                }
            }
        }
        Ok(())
    }

    /// Forward pass of a `[n, dim]` batch on the tape, registering all
    /// parameters. Returns the latent batch node and the scalar node for
    /// the batch-mean log-determinant.
    pub fn forward_graph(&self, g: &mut Graph, x: NodeId) -> Result<(NodeId, NodeId)> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(Error::dimension("flow batch input", &shape, &[0, self.dim]));
        }
        let n = shape[0];
        let keep = self.keep_width();

        let mut active = x;
        let mut frozen: Option<NodeId> = None;
        let mut width = self.dim;
        // Batch-summed coupling log-dets (to be scaled by 1/n) and
        // per-sample-constant mixing log-dets.
        let mut coupling_terms: Vec<NodeId> = Vec::new();
        let mut mixing_terms: Vec<NodeId> = Vec::new();

        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Affine(a) => {
                    let (y, ld) = affine_forward_graph(a, g, active, width, i)?;
                    active = y;
                    mixing_terms.push(ld);
                }
                Layer::Coupling(b) => {
                    let (h, ld) = coupling_forward_graph(b, g, active, i)?;
                    active = h;
                    if let Some(ld) = ld {
                        coupling_terms.push(ld);
                    }
                }
                Layer::Mixing(m) => {
                    let (y, ld) = mixing_forward_graph(m, g, active, width, i)?;
                    active = y;
                    mixing_terms.push(ld);
                }
            }
            if self.split_after_layer == Some(i) {
                let keep_idx: Vec<usize> = (0..keep).collect();
                let frozen_idx: Vec<usize> = (keep..self.dim).collect();
                frozen = Some(g.gather_cols(active, &frozen_idx)?);
                active = g.gather_cols(active, &keep_idx)?;
                width = keep;
            }
        }

        let z = match frozen {
            None => active,
            Some(fr) => {
                let keep_idx: Vec<usize> = (0..keep).collect();
                let frozen_idx: Vec<usize> = (keep..self.dim).collect();
                let za = g.scatter_cols(active, &keep_idx, self.dim)?;
                let zb = g.scatter_cols(fr, &frozen_idx, self.dim)?;
                g.add(za, zb)?
            }
        };

        let mut mean_ld = {
            let zero = Tensor::vector(alloc::vec![0.0]);
            g.constant(&zero)
        };
        for t in coupling_terms {
            let scaled = g.scale(t, 1.0 / n as f64);
            mean_ld = g.add(mean_ld, scaled)?;
        }
        for t in mixing_terms {
            mean_ld = g.add(mean_ld, t)?;
        }
        Ok((z, mean_ld))
    }
}

fn keep_width(dim: usize) -> usize {
    dim - dim / 2
}

fn coupling_forward_graph(
    block: &CouplingBlock,
    g: &mut Graph,
    x: NodeId,
    layer_index: usize,
) -> Result<(NodeId, Option<NodeId>)> {
    let width = block.mask.dim;
    let xa = g.gather_cols(x, &block.mask.a_idx)?;
    let xb = g.gather_cols(x, &block.mask.b_idx)?;
    let prefix_t = format!("layers.{layer_index:03}.t");
    let t = block.t_net.forward_graph(g, xa, &prefix_t)?;
    let (hb, logdet) = match (&block.s_net, block.variant) {
        (None, ScalingVariant::Additive) => (g.add(xb, t)?, None),
        (Some(s_net), variant) => {
            let prefix_s = format!("layers.{layer_index:03}.s");
            let s_raw = s_net.forward_graph(g, xa, &prefix_s)?;
            let scale = match variant {
                ScalingVariant::Sigmoid => g.sigmoid(s_raw),
                ScalingVariant::HalfSigmoid => {
                    let sg = g.sigmoid(s_raw);
                    let half = g.scale(sg, 0.5);
                    g.add_scalar(half, 0.5)
                }
                ScalingVariant::Clip15 => g.clip_abs(s_raw, 15.0),
                ScalingVariant::Additive => unreachable!("additive blocks carry no s-net"),
            };
            let scaled = g.mul(xb, scale)?;
            let hb = g.add(scaled, t)?;
            let ln_g = g.ln_abs(scale);
            (hb, Some(g.sum(ln_g)))
        }
        (None, _) => {
            return Err(Error::contract(
                "non-additive coupling block is missing its s-net",
            ))
        }
    };
    let ha = g.scatter_cols(xa, &block.mask.a_idx, width)?;
    let hb = g.scatter_cols(hb, &block.mask.b_idx, width)?;
    Ok((g.add(ha, hb)?, logdet))
}

fn affine_forward_graph(
    layer: &AffineLayer,
    g: &mut Graph,
    x: NodeId,
    width: usize,
    layer_index: usize,
) -> Result<(NodeId, NodeId)> {
    debug_assert_eq!(width, layer.dim);
    let b = g.param(&format!("layers.{layer_index:03}.aff.b"), &layer.shift)?;
    let ls = g.param(&format!("layers.{layer_index:03}.aff.ls"), &layer.log_scale)?;
    let centered = g.add_row(x, b)?;
    let scale = g.exp(ls);
    let y = g.mul_row(centered, scale)?;
    Ok((y, g.sum(ls)))
}

fn mixing_forward_graph(
    layer: &MixingLayer,
    g: &mut Graph,
    x: NodeId,
    width: usize,
    layer_index: usize,
) -> Result<(NodeId, NodeId)> {
    debug_assert_eq!(width, layer.dim);
    let d = layer.dim;
    let x = match &layer.perm {
        Some(p) => g.gather_cols(x, p)?,
        None => x,
    };
    let l = g.param(&format!("layers.{layer_index:03}.mix.l"), &layer.lower)?;
    let u = g.param(&format!("layers.{layer_index:03}.mix.u"), &layer.upper)?;
    let diag = g.param(&format!("layers.{layer_index:03}.mix.d"), &layer.u_diag)?;

    let mut strict_lower = alloc::vec![0.0; d * d];
    let mut strict_upper = alloc::vec![0.0; d * d];
    let mut eye = alloc::vec![0.0; d * d];
    for i in 0..d {
        eye[i * d + i] = 1.0;
        for j in 0..d {
            if i > j {
                strict_lower[i * d + j] = 1.0;
            }
            if i < j {
                strict_upper[i * d + j] = 1.0;
            }
        }
    }
    let msl = g.constant(&Tensor::from_f64(&[d, d], strict_lower)?);
    let msu = g.constant(&Tensor::from_f64(&[d, d], strict_upper)?);
    let eye = g.constant(&Tensor::from_f64(&[d, d], eye)?);

    let l_masked = g.mul(l, msl)?;
    let l_eff = g.add(l_masked, eye)?;
    let u_masked = g.mul(u, msu)?;
    let d_embed = g.diag_embed(diag)?;
    let u_eff = g.add(u_masked, d_embed)?;
    let w = g.matmul(l_eff, u_eff)?;
    let y = g.matmul(x, w)?;
    let ln_d = g.ln_abs(diag);
    Ok((y, g.sum(ln_d)))
}

pub(crate) enum LayerInfer<E> {
    Affine(AffineInfer<E>),
    Coupling(BlockInfer<E>),
    Mixing(MixInfer<E>),
}

/// A [`FlowModel`] with all weights cast to one element type.
pub(crate) struct FlowInfer<E> {
    pub dim: usize,
    keep: usize,
    split_after: Option<usize>,
    layers: Vec<LayerInfer<E>>,
}

impl<E: Real> FlowInfer<E> {
    pub fn forward(&self, x: &[E]) -> Result<(Vec<E>, E)> {
        let mut v = x.to_vec();
        let mut logdet = E::ZERO;
        let mut width = self.dim;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerInfer::Affine(a) => {
                    let y = a.forward(&v[..width]);
                    v[..width].copy_from_slice(&y);
                    logdet += a.logdet;
                }
                LayerInfer::Coupling(b) => {
                    let (h, ld) = b.forward(&v[..width])?;
                    v[..width].copy_from_slice(&h);
                    logdet += ld;
                }
                LayerInfer::Mixing(m) => {
                    let y = m.forward(&v[..width]);
                    v[..width].copy_from_slice(&y);
                    logdet += m.logdet;
                }
            }
            if self.split_after == Some(i) {
                width = self.keep;
            }
        }
        Ok((v, logdet))
    }

    pub fn inverse(&self, z: &[E]) -> Result<Vec<E>> {
        let mut v = z.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let width = match self.split_after {
                Some(s) if i > s => self.keep,
                _ => self.dim,
            };
            match layer {
                LayerInfer::Affine(a) => {
                    let x = a.inverse(&v[..width]);
                    v[..width].copy_from_slice(&x);
                }
                LayerInfer::Coupling(b) => {
                    let x = b.inverse(&v[..width])?;
                    v[..width].copy_from_slice(&x);
                }
                LayerInfer::Mixing(m) => {
                    let x = m.inverse(&v[..width])?;
                    v[..width].copy_from_slice(&x);
                }
            }
        }
        Ok(v)
    }

    pub fn log_density(&self, x: &[E]) -> Result<E> {
        let (z, logdet) = self.forward(x)?;
        let mut sq = E::ZERO;
        for &v in &z {
            sq += v * v;
        }
        let d = E::from_f64(self.dim as f64);
        let half = E::from_f64(0.5);
        Ok(-half * d * E::from_f64(LN_2PI) - half * sq + logdet)
    }
}

/// Squared Euclidean distance helper used by the detectors.
pub(crate) fn norm<E: Real>(v: &[E]) -> E {
    let mut acc = E::ZERO;
    for &x in v {
        acc += x * x;
    }
    acc.sqrt()
}
