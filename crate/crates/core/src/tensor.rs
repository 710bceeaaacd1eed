//! Shape-carrying dense arrays, the universal value type for samples,
//! activations, and gradients.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Real;

/// Storage width of a tensor's elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "single" | "f32" => Ok(Precision::Single),
            "double" | "f64" => Ok(Precision::Double),
            other => Err(Error::config(alloc::format!(
                "unknown precision {other:?}; expected one of: single, double"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Data {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// Dense row-major array with explicit element precision.
///
/// Elements are allowed to be non-finite; [`Tensor::all_finite`] is the
/// overflow-detection query callers use where finiteness matters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Data,
}

impl Tensor {
    pub fn from_f64(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Data::F64(data),
        })
    }

    pub fn from_f32(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Data::F32(data),
        })
    }

    /// Rank-1 double-precision tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data: Data::F64(data),
        }
    }

    pub fn zeros(shape: &[usize], precision: Precision) -> Self {
        let n: usize = shape.iter().product();
        let data = match precision {
            Precision::Single => Data::F32(vec![0.0; n]),
            Precision::Double => Data::F64(vec![0.0; n]),
        };
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> Precision {
        match self.data {
            Data::F32(_) => Precision::Single,
            Data::F64(_) => Precision::Double,
        }
    }

    pub fn f64_slice(&self) -> Result<&[f64]> {
        match &self.data {
            Data::F64(v) => Ok(v),
            Data::F32(_) => Err(Error::contract(
                "expected a double-precision tensor".to_string(),
            )),
        }
    }

    pub fn f32_slice(&self) -> Result<&[f32]> {
        match &self.data {
            Data::F32(v) => Ok(v),
            Data::F64(_) => Err(Error::contract(
                "expected a single-precision tensor".to_string(),
            )),
        }
    }

    /// Elements widened to `f64` regardless of storage precision.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            Data::F64(v) => v.clone(),
            Data::F32(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    /// Elements in the requested element type, converting if needed.
    pub fn to_elems<E: Real>(&self) -> Vec<E> {
        match &self.data {
            Data::F64(v) => v.iter().map(|&x| E::from_f64(x)).collect(),
            Data::F32(v) => v.iter().map(|&x| E::from_f64(x as f64)).collect(),
        }
    }

    /// Copy of this tensor at the requested precision.
    ///
    /// Double→single narrows by rounding; single→double is exact.
    pub fn cast(&self, precision: Precision) -> Tensor {
        if self.precision() == precision {
            return self.clone();
        }
        match (&self.data, precision) {
            (Data::F64(v), Precision::Single) => Tensor {
                shape: self.shape.clone(),
                data: Data::F32(v.iter().map(|&x| x as f32).collect()),
            },
            (Data::F32(v), Precision::Double) => Tensor {
                shape: self.shape.clone(),
                data: Data::F64(v.iter().map(|&x| x as f64).collect()),
            },
            _ => unreachable!(),
        }
    }

    pub fn all_finite(&self) -> bool {
        match &self.data {
            Data::F64(v) => v.iter().all(|x| x.is_finite()),
            Data::F32(v) => v.iter().all(|x| x.is_finite()),
        }
    }

    /// Element at flat index `i`, widened to `f64`.
    pub fn get(&self, i: usize) -> f64 {
        match &self.data {
            Data::F64(v) => v[i],
            Data::F32(v) => v[i] as f64,
        }
    }

    /// Bit pattern of every element, widened to 64 bits for single storage.
    ///
    /// Used by the bitwise-equality tests; two tensors of equal precision
    /// are bit-identical iff these streams match.
    pub fn bits(&self) -> Vec<u64> {
        match &self.data {
            Data::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
            Data::F32(v) => v.iter().map(|x| x.to_bits() as u64).collect(),
        }
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let expect: usize = shape.iter().product();
    if expect != len {
        return Err(Error::contract(alloc::format!(
            "tensor shape {shape:?} implies {expect} elements, got {len}"
        )));
    }
    Ok(())
}
