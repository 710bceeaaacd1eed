//! Affine coupling blocks with restricted scaling.
//!
//! A block leaves the `a`-part of the coordinates untouched and maps the
//! `b`-part as `h_b = x_b ⊙ g(s(x_a)) + t(x_a)`, where `s` and `t` are
//! dense subnets and `g` squashes the raw scale. The inverse is the exact
//! algebraic reversal, `x_b = (h_b − t(x_a)) ⊘ g(s(x_a))`, and the
//! log-determinant is `Σ log g(s(x_a))`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Real;
use crate::mlp::{Mlp, MlpInfer};
use crate::tensor::{Precision, Tensor};

/// Squashing applied to the raw scale output of the `s` subnet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingVariant {
    /// `g(s) = σ(s)`, scale in (0, 1).
    Sigmoid,
    /// `g(s) = σ(s)/2 + 0.5`, scale in (0.5, 1); the stable default.
    HalfSigmoid,
    /// `g(s) = min(|s|, 15)`; may reach 0, intentionally less stable.
    Clip15,
    /// `g ≡ 1`; pure shift, zero log-determinant.
    Additive,
}

impl ScalingVariant {
    pub fn name(self) -> &'static str {
        match self {
            ScalingVariant::Sigmoid => "sigmoid",
            ScalingVariant::HalfSigmoid => "half_sigmoid",
            ScalingVariant::Clip15 => "clip15",
            ScalingVariant::Additive => "additive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(ScalingVariant::Sigmoid),
            "half_sigmoid" => Ok(ScalingVariant::HalfSigmoid),
            "clip15" => Ok(ScalingVariant::Clip15),
            "additive" => Ok(ScalingVariant::Additive),
            other => Err(Error::config(format!(
                "unknown scaling variant {other:?}; expected one of: sigmoid, half_sigmoid, clip15, additive"
            ))),
        }
    }

    /// The squashed scale for a raw subnet output.
    pub fn apply<E: Real>(self, s: E) -> E {
        match self {
            ScalingVariant::Sigmoid => s.sigmoid(),
            ScalingVariant::HalfSigmoid => {
                s.sigmoid() * E::from_f64(0.5) + E::from_f64(0.5)
            }
            ScalingVariant::Clip15 => {
                let a = s.abs();
                let max = E::from_f64(15.0);
                if a < max {
                    a
                } else {
                    max
                }
            }
            ScalingVariant::Additive => E::ONE,
        }
    }

    /// Greatest lower bound of the scale; division by scales at or below
    /// the underflow floor is reported as a numeric error on inversion.
    pub fn scale_floor(self) -> f64 {
        match self {
            ScalingVariant::Sigmoid => 0.0,
            ScalingVariant::HalfSigmoid => 0.5,
            ScalingVariant::Clip15 => 0.0,
            ScalingVariant::Additive => 1.0,
        }
    }
}

/// Boolean partition of `dim` coordinates into the untouched `a`-part and
/// the transformed `b`-part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub a_idx: Vec<usize>,
    pub b_idx: Vec<usize>,
    pub dim: usize,
}

impl Mask {
    /// Parity mask for block `index`: even blocks transform the odd
    /// coordinates, odd blocks the even ones. For odd `dim` the trailing
    /// coordinate always stays in the `a`-part, so the `a`-part carries
    /// the extra coordinate in every block.
    pub fn alternating(dim: usize, index: usize) -> Result<Mask> {
        if dim < 2 {
            return Err(Error::config(format!(
                "coupling requires dimension >= 2, got {dim}"
            )));
        }
        let paired = dim - dim % 2;
        let b_parity = if index % 2 == 0 { 1 } else { 0 };
        let mut a_idx = Vec::new();
        let mut b_idx = Vec::new();
        for i in 0..paired {
            if i % 2 == b_parity {
                b_idx.push(i);
            } else {
                a_idx.push(i);
            }
        }
        if paired < dim {
            a_idx.push(dim - 1);
        }
        Ok(Mask { a_idx, b_idx, dim })
    }

    /// Every coordinate must land in exactly one part.
    pub fn validate(&self) -> Result<()> {
        let mut seen = alloc::vec![false; self.dim];
        for &i in self.a_idx.iter().chain(&self.b_idx) {
            if i >= self.dim || seen[i] {
                return Err(Error::contract(format!(
                    "mask is not a partition of 0..{}",
                    self.dim
                )));
            }
            seen[i] = true;
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "mask leaves coordinates of 0..{} unassigned",
                self.dim
            )))
        }
    }
}

/// One invertible coupling block.
///
/// `s_net` is absent for the additive variant, whose scale is constant 1.
#[derive(Debug, Clone)]
pub struct CouplingBlock {
    pub index: usize,
    pub mask: Mask,
    pub s_net: Option<Mlp>,
    pub t_net: Mlp,
    pub variant: ScalingVariant,
}

/// Scale outputs at or below this magnitude make the inverse division
/// meaningless; treated as a numeric error. Cannot trigger for
/// half-sigmoid scaling, whose floor is 0.5.
pub const INVERSE_SCALE_FLOOR: f64 = 1e-300;

pub(crate) struct BlockInfer<E> {
    pub index: usize,
    pub a_idx: Vec<usize>,
    pub b_idx: Vec<usize>,
    pub s_net: Option<MlpInfer<E>>,
    pub t_net: MlpInfer<E>,
    pub variant: ScalingVariant,
}

impl CouplingBlock {
    pub(crate) fn inference<E: Real>(&self) -> BlockInfer<E> {
        BlockInfer {
            index: self.index,
            a_idx: self.mask.a_idx.clone(),
            b_idx: self.mask.b_idx.clone(),
            s_net: self.s_net.as_ref().map(|n| n.inference()),
            t_net: self.t_net.inference(),
            variant: self.variant,
        }
    }
}

impl<E: Real> BlockInfer<E> {
    fn subnet_outputs(&self, xa: &[E]) -> Result<(Option<Vec<E>>, Vec<E>)> {
        let t = self.t_net.forward(xa);
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("coupling t-net output", Some(self.index)));
        }
        let s = match &self.s_net {
            Some(net) => {
                let s = net.forward(xa);
                if !s.iter().all(|v| v.is_finite()) {
                    return Err(Error::numeric("coupling s-net output", Some(self.index)));
                }
                Some(s)
            }
            None => None,
        };
        Ok((s, t))
    }

    /// `(h, log|det|)` for one sample.
    pub fn forward(&self, x: &[E]) -> Result<(Vec<E>, E)> {
        let xa: Vec<E> = self.a_idx.iter().map(|&i| x[i]).collect();
        let (s, t) = self.subnet_outputs(&xa)?;
        let mut h = x.to_vec();
        let mut logdet = E::ZERO;
        for (j, &bi) in self.b_idx.iter().enumerate() {
            let g = match &s {
                Some(s) => self.variant.apply(s[j]),
                None => E::ONE,
            };
            h[bi] = x[bi] * g + t[j];
            if self.variant != ScalingVariant::Additive {
                logdet += g.ln();
            }
        }
        Ok((h, logdet))
    }

    /// Exact algebraic inverse of [`BlockInfer::forward`].
    pub fn inverse(&self, h: &[E]) -> Result<Vec<E>> {
        let ha: Vec<E> = self.a_idx.iter().map(|&i| h[i]).collect();
        let (s, t) = self.subnet_outputs(&ha)?;
        let mut x = h.to_vec();
        let floor = E::from_f64(INVERSE_SCALE_FLOOR);
        for (j, &bi) in self.b_idx.iter().enumerate() {
            let g = match &s {
                Some(s) => self.variant.apply(s[j]),
                None => E::ONE,
            };
            if g.abs() <= floor {
                return Err(Error::numeric(
                    "coupling inverse scale underflow",
                    Some(self.index),
                ));
            }
            x[bi] = (h[bi] - t[j]) / g;
        }
        Ok(x)
    }
}

/// `(h, log|det|)` at the precision of `x`.
pub fn couple_forward(block: &CouplingBlock, x: &Tensor) -> Result<(Tensor, f64)> {
    check_len(block, x)?;
    match x.precision() {
        Precision::Double => {
            let (h, ld) = block.inference::<f64>().forward(&x.to_elems::<f64>())?;
            Ok((Tensor::from_f64(&[h.len()], h)?, ld))
        }
        Precision::Single => {
            let (h, ld) = block.inference::<f32>().forward(&x.to_elems::<f32>())?;
            Ok((Tensor::from_f32(&[h.len()], h)?, ld as f64))
        }
    }
}

/// Recovers `x` from `couple_forward`'s output at the precision of `h`.
pub fn couple_inverse(block: &CouplingBlock, h: &Tensor) -> Result<Tensor> {
    check_len(block, h)?;
    match h.precision() {
        Precision::Double => {
            let x = block.inference::<f64>().inverse(&h.to_elems::<f64>())?;
            Tensor::from_f64(&[x.len()], x)
        }
        Precision::Single => {
            let x = block.inference::<f32>().inverse(&h.to_elems::<f32>())?;
            Tensor::from_f32(&[x.len()], x)
        }
    }
}

fn check_len(block: &CouplingBlock, x: &Tensor) -> Result<()> {
    if x.shape() != [block.mask.dim] {
        return Err(Error::dimension(
            "coupling input",
            x.shape(),
            &[block.mask.dim],
        ));
    }
    Ok(())
}
