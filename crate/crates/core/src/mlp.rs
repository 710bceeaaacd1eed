//! Dense multilayer perceptrons: the coupling subnets, the toy classifier,
//! and the autoencoder halves are all built from these.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::math::Real;
use crate::rng::DetRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply<E: Real>(self, x: E) -> E {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// One affine layer with its activation.
#[derive(Debug, Clone)]
pub struct Dense {
    /// `[in, out]`, double precision.
    pub weight: Tensor,
    /// `[out]`, double precision.
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn input_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Weight initialization for a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `±1/√fan_in`, zero bias.
    FanIn,
    /// All-zero weights and bias; used for the last layer of coupling
    /// subnets so freshly built blocks start at a known benign map.
    Zero,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Build from `widths = [in, hidden.., out]`. Hidden layers use
    /// `hidden_act`, the last layer `final_act`; `final_init` controls the
    /// last layer's initialization.
    pub fn new(
        widths: &[usize],
        hidden_act: Activation,
        final_act: Activation,
        final_init: Init,
        rng: &mut DetRng,
    ) -> Mlp {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for i in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            let last = i == widths.len() - 2;
            let init = if last { final_init } else { Init::FanIn };
            let w = match init {
                Init::Zero => Tensor::zeros(&[fan_in, fan_out], crate::tensor::Precision::Double),
                Init::FanIn => {
                    let bound = 1.0 / crate::math::sqrt(fan_in as f64);
                    let data: Vec<f64> = (0..fan_in * fan_out)
                        .map(|_| rng.uniform_in(-bound, bound))
                        .collect();
                    Tensor::from_f64(&[fan_in, fan_out], data).expect("shape matches data")
                }
            };
            layers.push(Dense {
                weight: w,
                bias: Tensor::zeros(&[fan_out], crate::tensor::Precision::Double),
                activation: if last { final_act } else { hidden_act },
            });
        }
        Mlp { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    /// Register this net's parameters on `g` and build the forward pass for
    /// a `[n, input_width]` batch node.
    pub fn forward_graph(&self, g: &mut Graph, x: NodeId, prefix: &str) -> Result<NodeId> {
        if g.shape(x).len() != 2 || g.shape(x)[1] != self.input_width() {
            return Err(Error::dimension(
                format!("{prefix}: input width"),
                g.shape(x),
                &[0, self.input_width()],
            ));
        }
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.param(&format!("{prefix}.{i:02}.w"), &layer.weight)?;
            let b = g.param(&format!("{prefix}.{i:02}.b"), &layer.bias)?;
            h = g.matmul(h, w)?;
            h = g.add_row(h, b)?;
            h = match layer.activation {
                Activation::Identity => h,
                Activation::Tanh => g.tanh(h),
                Activation::Sigmoid => g.sigmoid(h),
            };
        }
        Ok(h)
    }

    /// Pre-cast weights for precision-generic inference.
    pub fn inference<E: Real>(&self) -> MlpInfer<E> {
        MlpInfer {
            layers: self
                .layers
                .iter()
                .map(|l| InferLayer {
                    weight: l.weight.to_elems(),
                    bias: l.bias.to_elems(),
                    rows: l.input_width(),
                    cols: l.output_width(),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Single forward pass at the precision of `x`.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != [self.input_width()] {
            return Err(Error::dimension(
                "mlp input width",
                x.shape(),
                &[self.input_width()],
            ));
        }
        match x.precision() {
            crate::tensor::Precision::Double => {
                let out = self.inference::<f64>().forward(&x.to_elems::<f64>());
                Tensor::from_f64(&[out.len()], out)
            }
            crate::tensor::Precision::Single => {
                let out = self.inference::<f32>().forward(&x.to_elems::<f32>());
                Tensor::from_f32(&[out.len()], out)
            }
        }
    }

    pub fn collect_params(&self, prefix: &str, out: &mut BTreeMap<String, Tensor>) {
        for (i, layer) in self.layers.iter().enumerate() {
            out.insert(format!("{prefix}.{i:02}.w"), layer.weight.clone());
            out.insert(format!("{prefix}.{i:02}.b"), layer.bias.clone());
        }
    }

    pub fn set_params(&mut self, prefix: &str, params: &BTreeMap<String, Tensor>) -> Result<()> {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let wk = format!("{prefix}.{i:02}.w");
            let bk = format!("{prefix}.{i:02}.b");
            let w = params
                .get(&wk)
                .ok_or_else(|| Error::contract(format!("missing parameter {wk:?}")))?;
            let b = params
                .get(&bk)
                .ok_or_else(|| Error::contract(format!("missing parameter {bk:?}")))?;
            if w.shape() != layer.weight.shape() || b.shape() != layer.bias.shape() {
                return Err(Error::dimension(
                    format!("parameter {wk:?}"),
                    layer.weight.shape(),
                    w.shape(),
                ));
            }
            layer.weight = w.clone();
            layer.bias = b.clone();
        }
        Ok(())
    }
}

struct InferLayer<E> {
    weight: Vec<E>,
    bias: Vec<E>,
    rows: usize,
    cols: usize,
    activation: Activation,
}

/// An [`Mlp`] with weights cast to one element type, ready for repeated
/// single-sample forward passes.
pub struct MlpInfer<E> {
    layers: Vec<InferLayer<E>>,
}

impl<E: Real> MlpInfer<E> {
    pub fn forward(&self, x: &[E]) -> Vec<E> {
        let mut h: Vec<E> = x.to_vec();
        for layer in &self.layers {
            debug_assert_eq!(h.len(), layer.rows);
            let mut out = layer.bias.clone();
            for (i, &hi) in h.iter().enumerate() {
                let wrow = &layer.weight[i * layer.cols..(i + 1) * layer.cols];
                for (o, &w) in out.iter_mut().zip(wrow) {
                    *o += hi * w;
                }
            }
            for o in out.iter_mut() {
                *o = layer.activation.apply(*o);
            }
            h = out;
        }
        h
    }
}
