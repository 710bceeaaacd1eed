//! Invertible normalizing flows and out-of-distribution scoring.
//!
//! This crate carries the numeric substance of the toolkit: a small dense
//! tensor core with reverse-mode autodiff and Adam, affine-coupling flows
//! with restricted scaling, the detector family (likelihood, typicality,
//! reconstruction error and its penalized variant, plus the usual
//! baselines), an L∞ projected-gradient attack, synthetic dataset
//! generators, and the evaluation metrics.
//!
//! Everything here is pure computation over in-memory values; file formats,
//! checkpoints, and the command-line front end live in the companion
//! `flowguard` crate. The crate is `no_std`-compatible (with `alloc`) and
//! all transcendental math goes through [`libm`], so results are bit-stable
//! across platforms.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adam;
pub mod attack;
pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod flow;
pub mod graph;
pub mod math;
pub mod mlp;
pub mod models;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::DetRng;
pub use tensor::{Precision, Tensor};
