//! Detector score functions.
//!
//! Every detector emits a scalar oriented so that larger means more likely
//! out-of-distribution. Detectors whose natural quantity points the other
//! way (likelihoods, softmax confidence) declare that via [`RawSign`] and
//! are flipped exactly once, in [`orient`].
//!
//! Non-finite round trips through the flow — inverse explosions — are not
//! errors but detections: they surface as [`Score::Failure`], which ranks
//! above every finite score.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{self, DatasetHandle};
use crate::error::{Error, Result};
use crate::flow::{norm, FlowModel};
use crate::math::{self, Real};
use crate::models::{predict, Autoencoder, Classifier};
use crate::tensor::{Precision, Tensor};

/// One detector output: a finite score or a recorded failure marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Finite(f64),
    /// Inverse explosion or other non-finite evaluation; maximal OOD
    /// evidence.
    Failure,
}

impl Score {
    /// Failure markers sort as +∞.
    pub fn value(self) -> f64 {
        match self {
            Score::Finite(v) => v,
            Score::Failure => f64::INFINITY,
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Score::Failure)
    }

    fn from_raw(v: f64) -> Score {
        if v.is_finite() {
            Score::Finite(v)
        } else {
            Score::Failure
        }
    }
}

/// Direction of a detector's natural quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawSign {
    /// The raw quantity already grows with OOD-ness (errors, distances).
    OodIsLarger,
    /// The raw quantity grows with in-distribution-ness (likelihoods,
    /// confidences) and must be flipped.
    OodIsSmaller,
}

/// The single sign-flip point: every detector's raw quantity passes
/// through here exactly once.
pub fn orient(sign: RawSign, raw: f64) -> f64 {
    match sign {
        RawSign::OodIsLarger => raw,
        RawSign::OodIsSmaller => -raw,
    }
}

/// The detector family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DetectorKind {
    Ll,
    Ttl,
    Re,
    Pre,
    Waic,
    Llr,
    Comp,
    Msp,
    Ae,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 9] = [
        DetectorKind::Ll,
        DetectorKind::Ttl,
        DetectorKind::Re,
        DetectorKind::Pre,
        DetectorKind::Waic,
        DetectorKind::Llr,
        DetectorKind::Comp,
        DetectorKind::Msp,
        DetectorKind::Ae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Ll => "ll",
            DetectorKind::Ttl => "ttl",
            DetectorKind::Re => "re",
            DetectorKind::Pre => "pre",
            DetectorKind::Waic => "waic",
            DetectorKind::Llr => "llr",
            DetectorKind::Comp => "comp",
            DetectorKind::Msp => "msp",
            DetectorKind::Ae => "ae",
        }
    }

    pub fn parse(s: &str) -> Result<DetectorKind> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::config(format!(
                    "unknown detector {s:?}; supported detectors: {}",
                    names.join(", ")
                ))
            })
    }

    /// Direction of this detector's raw quantity before orientation.
    pub fn raw_sign(self) -> RawSign {
        match self {
            DetectorKind::Ttl | DetectorKind::Re | DetectorKind::Pre | DetectorKind::Ae => {
                RawSign::OodIsLarger
            }
            DetectorKind::Ll
            | DetectorKind::Waic
            | DetectorKind::Llr
            | DetectorKind::Comp
            | DetectorKind::Msp => RawSign::OodIsSmaller,
        }
    }
}

/// Penalty configuration for the penalized reconstruction error.
///
/// With `lambda = 0` the penalized score is bitwise equal to the plain
/// reconstruction error. When the latent norm is numerically zero the
/// radial direction is undefined; the shift falls back to the first basis
/// vector so the maximally atypical origin still receives the full
/// penalty.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyConfig {
    pub lambda: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64) -> Result<PenaltyConfig> {
        if !(lambda >= 0.0) {
            return Err(Error::contract(format!(
                "penalty coefficient must be nonnegative, got {lambda}"
            )));
        }
        Ok(PenaltyConfig { lambda })
    }
}

/// Latent norms below this are treated as zero for the radial direction.
pub const ZERO_NORM_FLOOR: f64 = 1e-12;

/// Annulus penalty: `ξ(z) = −sign(‖z‖ − √d)·((‖z‖ − √d)/√d)²`.
///
/// Zero exactly on the annulus, positive inside (pushing outward),
/// negative outside (pulling inward).
pub fn penalty_xi(z: &Tensor, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::contract("annulus dimension must be at least 1"));
    }
    if z.len() != d {
        return Err(Error::dimension("penalty latent", z.shape(), &[d]));
    }
    let r = math::norm2(&z.to_f64_vec());
    Ok(xi_from_norm(r, math::sqrt(d as f64)))
}

fn xi_from_norm<E: Real>(r: E, sqrt_d: E) -> E {
    let dev = r - sqrt_d;
    let scaled = dev / sqrt_d;
    let mag = scaled * scaled;
    if dev > E::ZERO {
        -mag
    } else if dev < E::ZERO {
        mag
    } else {
        E::ZERO
    }
}

/// Threshold decision on an oriented score: OOD iff `score > tau`; a tie
/// stays in-distribution. Non-finite scores (failure markers) count as
/// detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    InDist,
    Ood,
}

pub fn decide(score: f64, tau: f64) -> Decision {
    if !score.is_finite() || score > tau {
        Decision::Ood
    } else {
        Decision::InDist
    }
}

/// `−log p(x)` at the precision of `x`.
pub fn score_ll(model: &FlowModel, x: &Tensor) -> Result<f64> {
    Ok(orient(DetectorKind::Ll.raw_sign(), model.log_density(x)?))
}

/// Distance of the latent norm from the Gaussian annulus radius:
/// `|‖f(x)‖ − √d|`.
pub fn score_ttl(model: &FlowModel, x: &Tensor) -> Result<f64> {
    let code = model.forward(x)?;
    let r = math::norm2(&code.z.to_f64_vec());
    let raw = math::abs(r - math::sqrt(model.dim as f64));
    if !raw.is_finite() {
        return Err(Error::numeric("typicality score", None));
    }
    Ok(orient(DetectorKind::Ttl.raw_sign(), raw))
}

/// Round-trip error `‖x − f⁻¹(f(x))‖₂` computed at `precision`.
pub fn score_re(model: &FlowModel, x: &Tensor, precision: Precision) -> Result<Score> {
    score_pre(model, x, &PenaltyConfig { lambda: 0.0 }, precision)
}

/// Penalized round trip `‖x − f⁻¹(z + λ·ξ(z)·z/‖z‖)‖₂` with `z = f(x)`.
///
/// A zero shift (λ = 0, or `z` exactly on the annulus) leaves the latent
/// untouched, making the result bitwise identical to [`score_re`].
pub fn score_pre(
    model: &FlowModel,
    x: &Tensor,
    cfg: &PenaltyConfig,
    precision: Precision,
) -> Result<Score> {
    let xs = x.cast(precision);
    match precision {
        Precision::Double => {
            let fi = model.inference::<f64>();
            penalized_roundtrip(&fi, &xs.to_elems::<f64>(), cfg.lambda)
        }
        Precision::Single => {
            let fi = model.inference::<f32>();
            penalized_roundtrip(&fi, &xs.to_elems::<f32>(), cfg.lambda)
        }
    }
}

pub(crate) fn penalized_roundtrip<E: Real>(
    fi: &crate::flow::FlowInfer<E>,
    x: &[E],
    lambda: f64,
) -> Result<Score> {
    let (z, _) = match fi.forward(x) {
        Ok(v) => v,
        Err(Error::Numeric { .. }) => return Ok(Score::Failure),
        Err(e) => return Err(e),
    };
    let sqrt_d = E::from_f64(fi.dim as f64).sqrt();
    let r = norm(&z);
    let shift = E::from_f64(lambda) * xi_from_norm(r, sqrt_d);
    shifted_roundtrip(fi, x, z, r, shift)
}

/// Round trip through `f⁻¹` after a radial latent shift of magnitude
/// `shift`; a zero shift reuses `z` without touching it.
pub(crate) fn shifted_roundtrip<E: Real>(
    fi: &crate::flow::FlowInfer<E>,
    x: &[E],
    mut z: Vec<E>,
    r: E,
    shift: E,
) -> Result<Score> {
    if !shift.is_finite() {
        return Ok(Score::Failure);
    }
    if shift != E::ZERO {
        if r.to_f64() < ZERO_NORM_FLOOR {
            z[0] += shift;
        } else {
            let c = shift / r;
            for v in z.iter_mut() {
                *v += c * *v;
            }
        }
    }
    let back = match fi.inverse(&z) {
        Ok(v) => v,
        Err(Error::Numeric { .. }) => return Ok(Score::Failure),
        Err(e) => return Err(e),
    };
    let mut acc = E::ZERO;
    for (a, b) in x.iter().zip(&back) {
        let diff = *a - *b;
        acc += diff * diff;
    }
    Ok(Score::from_raw(acc.sqrt().to_f64()))
}

/// Whole-dataset reconstruction scores with the weight cast built once.
/// Bitwise identical to calling [`score_re`] per sample.
pub fn score_re_batch(
    model: &FlowModel,
    data: &DatasetHandle,
    precision: Precision,
) -> Result<Vec<Score>> {
    score_pre_batch(model, data, &PenaltyConfig { lambda: 0.0 }, precision)
}

/// Whole-dataset penalized reconstruction scores; see [`score_pre`].
pub fn score_pre_batch(
    model: &FlowModel,
    data: &DatasetHandle,
    cfg: &PenaltyConfig,
    precision: Precision,
) -> Result<Vec<Score>> {
    match precision {
        Precision::Double => {
            let fi = model.inference::<f64>();
            (0..data.len())
                .map(|i| penalized_roundtrip(&fi, &data.sample(i, precision).to_elems::<f64>(), cfg.lambda))
                .collect()
        }
        Precision::Single => {
            let fi = model.inference::<f32>();
            (0..data.len())
                .map(|i| penalized_roundtrip(&fi, &data.sample(i, precision).to_elems::<f32>(), cfg.lambda))
                .collect()
        }
    }
}

/// Five flow models trained with different scaling restrictions plus the
/// background model; the ensemble behind the WAIC score.
#[derive(Debug, Clone)]
pub struct DetectorEnsemble {
    members: Vec<(String, FlowModel)>,
}

impl DetectorEnsemble {
    pub fn new(members: Vec<(String, FlowModel)>) -> Result<DetectorEnsemble> {
        if members.len() != 5 {
            return Err(Error::contract(format!(
                "the ensemble takes exactly five members, got {}",
                members.len()
            )));
        }
        let dim = members[0].1.dim;
        if members.iter().any(|(_, m)| m.dim != dim) {
            return Err(Error::contract(
                "ensemble members must share one dimension",
            ));
        }
        Ok(DetectorEnsemble { members })
    }

    pub fn members(&self) -> &[(String, FlowModel)] {
        &self.members
    }

    /// Member variant labels, recorded in reports.
    pub fn labels(&self) -> Vec<&str> {
        self.members.iter().map(|(l, _)| l.as_str()).collect()
    }
}

/// `−(E[log p(x)] − Var[log p(x)])` over the five members; the variance is
/// the population variance.
pub fn score_waic(ensemble: &DetectorEnsemble, x: &Tensor) -> Result<Score> {
    let mut lps = Vec::with_capacity(5);
    for (_, m) in ensemble.members() {
        match m.log_density(x) {
            Ok(lp) => lps.push(lp),
            Err(Error::Numeric { .. }) => return Ok(Score::Failure),
            Err(e) => return Err(e),
        }
    }
    let n = lps.len() as f64;
    let mean: f64 = lps.iter().sum::<f64>() / n;
    let var: f64 = lps.iter().map(|lp| (lp - mean) * (lp - mean)).sum::<f64>() / n;
    Ok(Score::from_raw(orient(
        DetectorKind::Waic.raw_sign(),
        mean - var,
    )))
}

/// `−(log p(x) − log p₀(x))` against a background model.
pub fn score_llr(model: &FlowModel, background: &FlowModel, x: &Tensor) -> Result<f64> {
    if model.dim != background.dim {
        return Err(Error::dimension(
            "likelihood-ratio models",
            &[model.dim],
            &[background.dim],
        ));
    }
    let lp = model.log_density(x)?;
    let lp0 = background.log_density(x)?;
    Ok(orient(DetectorKind::Llr.raw_sign(), lp - lp0))
}

/// Lossless coder measuring a bit length for quantized inputs.
pub trait Compressor {
    fn compressed_len_bits(&self, bytes: &[u8]) -> Result<u64>;
    fn name(&self) -> &'static str;
}

/// Deflate-class coder over the 8-bit quantized representation.
#[derive(Debug, Clone, Copy)]
pub struct DeflateCompressor {
    pub level: u8,
}

impl Default for DeflateCompressor {
    fn default() -> Self {
        DeflateCompressor { level: 6 }
    }
}

impl Compressor for DeflateCompressor {
    fn compressed_len_bits(&self, bytes: &[u8]) -> Result<u64> {
        let out = miniz_oxide::deflate::compress_to_vec(bytes, self.level);
        Ok(out.len() as u64 * 8)
    }

    fn name(&self) -> &'static str {
        "deflate"
    }
}

/// Complexity-corrected likelihood: `−(log p(x) + |B(x)|/d)` with `|B(x)|`
/// the compressed bit length of the quantized input.
///
/// Computed as `score_ll − |B(x)|/d`, so the correction is exactly the
/// compressed bits-per-dimension on top of the likelihood score.
pub fn score_comp(model: &FlowModel, x: &Tensor, compressor: &dyn Compressor) -> Result<Score> {
    let ll = score_ll(model, x)?;
    let bytes = data::quantize(x)?;
    let bits = match compressor.compressed_len_bits(&bytes) {
        Ok(b) => b,
        Err(_) => return Ok(Score::Failure),
    };
    Ok(Score::from_raw(ll - bits as f64 / x.len() as f64))
}

/// `−max softmax(C(x))`.
pub fn score_msp(classifier: &Classifier, x: &Tensor) -> Result<f64> {
    let (_, softmax) = predict(classifier, x)?;
    let max = softmax.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(orient(DetectorKind::Msp.raw_sign(), max))
}

/// Autoencoder reconstruction error `‖x − f_d(f_e(x))‖₂`.
pub fn score_ae(ae: &Autoencoder, x: &Tensor) -> Result<f64> {
    let recon = ae.reconstruct(x)?;
    let xv = x.to_f64_vec();
    let rv = recon.to_f64_vec();
    let mut acc = 0.0;
    for (a, b) in xv.iter().zip(&rv) {
        acc += (a - b) * (a - b);
    }
    Ok(orient(DetectorKind::Ae.raw_sign(), math::sqrt(acc)))
}

/// Rescales a latent vector so its prefix inflates and its suffix deflates
/// while the overall norm lands exactly on `target_norm`: the suffix is
/// scaled by `suffix_scale` and the prefix by the α > 0 that closes the
/// norm budget. The typicality score cannot see the redistribution.
pub fn cancellation_shift(
    z: &[f64],
    prefix_len: usize,
    suffix_scale: f64,
    target_norm: f64,
) -> Result<Vec<f64>> {
    if prefix_len == 0 || prefix_len >= z.len() {
        return Err(Error::contract(format!(
            "prefix length {prefix_len} must split the {}-vector",
            z.len()
        )));
    }
    let u: f64 = z[..prefix_len].iter().map(|v| v * v).sum();
    let v: f64 = z[prefix_len..].iter().map(|v| v * v).sum();
    if u == 0.0 {
        return Err(Error::contract("prefix norm is zero"));
    }
    let remaining = target_norm * target_norm - suffix_scale * suffix_scale * v;
    if remaining <= 0.0 {
        return Err(Error::contract(format!(
            "target norm {target_norm} is too small for suffix scale {suffix_scale}"
        )));
    }
    let alpha = math::sqrt(remaining / u);
    let mut out = Vec::with_capacity(z.len());
    out.extend(z[..prefix_len].iter().map(|x| alpha * x));
    out.extend(z[prefix_len..].iter().map(|x| suffix_scale * x));
    Ok(out)
}

/// A test input paired with its named detector scores; orientation is
/// fixed at "larger = more OOD".
#[derive(Debug, Clone)]
pub struct ScoredSample {
    pub id: usize,
    pub scores: BTreeMap<DetectorKind, Score>,
}

/// Trained models a batch scoring run can draw on; detectors whose models
/// are absent report a contract error naming what is missing.
pub struct ScoreContext<'a> {
    pub flow: Option<&'a FlowModel>,
    pub ensemble: Option<&'a DetectorEnsemble>,
    pub background: Option<&'a FlowModel>,
    pub classifier: Option<&'a Classifier>,
    pub autoencoder: Option<&'a Autoencoder>,
    pub penalty: PenaltyConfig,
    pub precision: Precision,
    pub compressor: &'a dyn Compressor,
}

impl<'a> ScoreContext<'a> {
    pub fn flow_only(flow: &'a FlowModel, penalty: PenaltyConfig, precision: Precision) -> Self {
        ScoreContext {
            flow: Some(flow),
            ensemble: None,
            background: None,
            classifier: None,
            autoencoder: None,
            penalty,
            precision,
            compressor: &DeflateCompressor { level: 6 },
        }
    }

    fn flow(&self) -> Result<&'a FlowModel> {
        self.flow
            .ok_or_else(|| Error::contract("this detector needs a flow model"))
    }

    /// One detector on one sample. Per-sample numeric trouble comes back
    /// as a failure marker; missing models and shape mismatches are errors.
    pub fn score_sample(&self, kind: DetectorKind, x: &Tensor) -> Result<Score> {
        let x = x.cast(self.precision);
        match kind {
            DetectorKind::Ll => wrap_numeric(score_ll(self.flow()?, &x)),
            DetectorKind::Ttl => wrap_numeric(score_ttl(self.flow()?, &x)),
            DetectorKind::Re => score_re(self.flow()?, &x, self.precision),
            DetectorKind::Pre => score_pre(self.flow()?, &x, &self.penalty, self.precision),
            DetectorKind::Waic => {
                let ens = self
                    .ensemble
                    .ok_or_else(|| Error::contract("waic needs a five-member ensemble"))?;
                score_waic(ens, &x)
            }
            DetectorKind::Llr => {
                let bg = self
                    .background
                    .ok_or_else(|| Error::contract("llr needs a background model"))?;
                wrap_numeric(score_llr(self.flow()?, bg, &x))
            }
            DetectorKind::Comp => score_comp(self.flow()?, &x, self.compressor),
            DetectorKind::Msp => {
                let c = self
                    .classifier
                    .ok_or_else(|| Error::contract("msp needs a classifier"))?;
                wrap_numeric(score_msp(c, &x))
            }
            DetectorKind::Ae => {
                let ae = self
                    .autoencoder
                    .ok_or_else(|| Error::contract("ae needs an autoencoder"))?;
                wrap_numeric(score_ae(ae, &x))
            }
        }
    }

    /// Every requested detector on every sample, in input order. The
    /// round-trip detectors run as whole columns so the precision cast of
    /// the weights is built once per detector instead of once per sample.
    pub fn score_batch(
        &self,
        kinds: &[DetectorKind],
        data: &DatasetHandle,
    ) -> Result<Vec<ScoredSample>> {
        let mut columns: BTreeMap<DetectorKind, Vec<Score>> = BTreeMap::new();
        for &kind in kinds {
            let column = match kind {
                DetectorKind::Re => score_re_batch(self.flow()?, data, self.precision)?,
                DetectorKind::Pre => {
                    score_pre_batch(self.flow()?, data, &self.penalty, self.precision)?
                }
                _ => (0..data.len())
                    .map(|i| self.score_sample(kind, &data.sample(i, self.precision)))
                    .collect::<Result<_>>()?,
            };
            columns.insert(kind, column);
        }
        let mut out = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let scores = columns
                .iter()
                .map(|(&kind, col)| (kind, col[i]))
                .collect();
            out.push(ScoredSample { id: i, scores });
        }
        Ok(out)
    }
}

/// Per-sample numeric errors become failure markers; everything else
/// propagates.
fn wrap_numeric(r: Result<f64>) -> Result<Score> {
    match r {
        Ok(v) => Ok(Score::from_raw(v)),
        Err(Error::Numeric { .. }) => Ok(Score::Failure),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowConfig, ScalingVariant};
    use crate::mlp::Init;
    use crate::rng::DetRng;
    use alloc::string::ToString;
    use alloc::vec;

    fn zero_block_model(d: usize) -> FlowModel {
        let cfg = FlowConfig {
            dim: d,
            blocks: 0,
            hidden: vec![4],
            variant: ScalingVariant::HalfSigmoid,
            mixing_every: 0,
            factor_out_after: None,
            standardize: false,
            final_init: Init::Zero,
        };
        FlowModel::build(&cfg, &mut DetRng::from_seed(0)).unwrap()
    }

    fn random_model(d: usize, blocks: usize, seed: u64) -> FlowModel {
        let cfg = FlowConfig {
            dim: d,
            blocks,
            hidden: vec![8],
            variant: ScalingVariant::HalfSigmoid,
            mixing_every: 2,
            factor_out_after: None,
            standardize: false,
            final_init: Init::FanIn,
        };
        FlowModel::build(&cfg, &mut DetRng::from_seed(seed)).unwrap()
    }

    #[test]
    fn ll_at_the_gaussian_mode_matches_the_mode_density() {
        // Coupling needs d >= 2; at d = 2 the mode score is 2·(½ ln 2π).
        let model = zero_block_model(2);
        let s = score_ll(&model, &Tensor::vector(vec![0.0, 0.0])).unwrap();
        assert!((s - crate::math::LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn ll_reverses_the_log_density_ordering() {
        let model = random_model(4, 4, 3);
        let mut rng = DetRng::from_seed(9);
        let xs: Vec<Tensor> = (0..16).map(|_| Tensor::vector(rng.normal_vec(4))).collect();
        for w in xs.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let lp_cmp = model.log_density(a).unwrap() < model.log_density(b).unwrap();
            let s_cmp = score_ll(&model, a).unwrap() > score_ll(&model, b).unwrap();
            assert_eq!(lp_cmp, s_cmp);
        }
    }

    #[test]
    fn ttl_is_zero_on_the_annulus_and_rotation_invariant() {
        let model = zero_block_model(4);
        // ‖z‖ = √4 = 2 exactly.
        let on = Tensor::vector(vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(score_ttl(&model, &on).unwrap(), 0.0);
        // ‖z‖ = 4 at d = 4 gives |4 − 2| = 2.
        let off = Tensor::vector(vec![4.0, 0.0, 0.0, 0.0]);
        assert_eq!(score_ttl(&model, &off).unwrap(), 2.0);
        let rotated = Tensor::vector(vec![0.0, 0.0, 4.0, 0.0]);
        assert_eq!(score_ttl(&model, &rotated).unwrap(), 2.0);
    }

    #[test]
    fn xi_hand_values() {
        let z4 = Tensor::vector(vec![4.0, 0.0, 0.0, 0.0]);
        assert_eq!(penalty_xi(&z4, 4).unwrap(), -1.0);
        let z0 = Tensor::vector(vec![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(penalty_xi(&z0, 4).unwrap(), 1.0);
        let on = Tensor::vector(vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(penalty_xi(&on, 4).unwrap(), 0.0);
    }

    #[test]
    fn zero_block_reconstruction_error_is_exactly_zero() {
        let model = zero_block_model(4);
        let x = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(
            score_re(&model, &x, Precision::Double).unwrap(),
            Score::Finite(0.0)
        );
    }

    #[test]
    fn pre_with_zero_lambda_is_bitwise_re() {
        let model = random_model(6, 6, 5);
        let mut rng = DetRng::from_seed(2);
        for _ in 0..32 {
            let x = Tensor::vector(rng.normal_vec(6));
            for precision in [Precision::Double, Precision::Single] {
                let re = score_re(&model, &x, precision).unwrap();
                let pre =
                    score_pre(&model, &x, &PenaltyConfig { lambda: 0.0 }, precision).unwrap();
                assert_eq!(re.value().to_bits(), pre.value().to_bits());
            }
        }
    }

    #[test]
    fn pre_on_the_annulus_is_bitwise_re_for_any_lambda() {
        let model = random_model(4, 4, 8);
        // ‖x‖ = 2 = √4 exactly in f64 only if z lands there; use the
        // zero-block model where z = x to control the norm exactly.
        let idmodel = zero_block_model(4);
        let x = Tensor::vector(vec![2.0, 0.0, 0.0, 0.0]);
        for lambda in [0.0, 1.0, 50.0, 1000.0] {
            let re = score_re(&idmodel, &x, Precision::Double).unwrap();
            let pre =
                score_pre(&idmodel, &x, &PenaltyConfig { lambda }, Precision::Double).unwrap();
            assert_eq!(re.value().to_bits(), pre.value().to_bits());
        }
        // And on a generic model the two differ once λ > 0 off the annulus.
        let x = Tensor::vector(vec![3.0, 0.0, 0.5, -0.25]);
        let re = score_re(&model, &x, Precision::Double).unwrap();
        let pre = score_pre(&model, &x, &PenaltyConfig { lambda: 50.0 }, Precision::Double).unwrap();
        assert_ne!(re.value().to_bits(), pre.value().to_bits());
    }

    #[test]
    fn decide_uses_strict_inequality_with_in_dist_ties() {
        assert_eq!(decide(0.5, 1.0), Decision::InDist);
        assert_eq!(decide(1.5, 1.0), Decision::Ood);
        assert_eq!(decide(1.0, 1.0), Decision::InDist);
        assert_eq!(decide(f64::INFINITY, 1.0), Decision::Ood);
        assert_eq!(decide(f64::NAN, 1.0), Decision::Ood);
    }

    #[test]
    fn waic_hand_values() {
        let members: Vec<(String, FlowModel)> = ["sigmoid", "half_sigmoid", "clip15", "additive", "background"]
            .iter()
            .map(|l| (l.to_string(), zero_block_model(2)))
            .collect();
        let ens = DetectorEnsemble::new(members).unwrap();
        // Identical members: variance 0, score = −log p.
        let x = Tensor::vector(vec![0.0, 0.0]);
        let s = score_waic(&ens, &x).unwrap();
        assert!((s.value() - crate::math::LN_2PI).abs() < 1e-12);
        // Member values [0,0,0,0,5] → −(mean − var) = −(1 − 4) = 3.
        let lps = [0.0, 0.0, 0.0, 0.0, 5.0];
        let mean: f64 = lps.iter().sum::<f64>() / 5.0;
        let var: f64 = lps.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / 5.0;
        assert_eq!(-(mean - var), 3.0);
    }

    #[test]
    fn ensemble_requires_exactly_five_members() {
        let members: Vec<(String, FlowModel)> = (0..4)
            .map(|i| (format!("m{i}"), zero_block_model(2)))
            .collect();
        assert!(DetectorEnsemble::new(members).is_err());
    }

    #[test]
    fn llr_of_a_model_against_itself_is_zero_and_antisymmetric() {
        let m = random_model(4, 4, 1);
        let b = random_model(4, 4, 2);
        let mut rng = DetRng::from_seed(3);
        for _ in 0..8 {
            let x = Tensor::vector(rng.normal_vec(4));
            assert_eq!(score_llr(&m, &m, &x).unwrap(), 0.0);
            let ab = score_llr(&m, &b, &x).unwrap();
            let ba = score_llr(&b, &m, &x).unwrap();
            assert!((ab + ba).abs() < 1e-12);
        }
    }

    #[test]
    fn comp_equals_ll_minus_bits_per_dim() {
        let model = random_model(4, 2, 7);
        let x = Tensor::vector(vec![0.25, 0.5, 0.125, 0.75]);
        let comp = score_comp(&model, &x, &DeflateCompressor::default()).unwrap();
        let ll = score_ll(&model, &x).unwrap();
        let bits = DeflateCompressor::default()
            .compressed_len_bits(&crate::data::quantize(&x).unwrap())
            .unwrap();
        assert_eq!(
            comp.value().to_bits(),
            (ll - bits as f64 / 4.0).to_bits()
        );
    }

    #[test]
    fn constant_bytes_compress_smaller_than_uniform_bytes() {
        let comp = DeflateCompressor::default();
        let constant = alloc::vec![127u8; 4096];
        let mut rng = DetRng::from_seed(12);
        let uniform: Vec<u8> = (0..4096).map(|_| (rng.next_u64() & 0xff) as u8).collect();
        let cb = comp.compressed_len_bits(&constant).unwrap();
        let ub = comp.compressed_len_bits(&uniform).unwrap();
        assert!(cb < ub, "constant {cb} vs uniform {ub}");
    }

    #[test]
    fn cancellation_shift_exact_dyadic_construction() {
        // 7 prefix coordinates at 1.25 and 9 suffix coordinates at 0.75:
        // 7·(1.25)² + 9·(0.75)² = 10.9375 + 5.0625 = 16 exactly in f64,
        // so the typicality score of the shifted vector is exactly zero.
        let z = alloc::vec![1.0; 16];
        let shifted = cancellation_shift(&z, 7, 0.75, 4.0).unwrap();
        for &v in &shifted[..7] {
            assert_eq!(v, 1.25);
        }
        for &v in &shifted[7..] {
            assert_eq!(v, 0.75);
        }
        let norm_sq: f64 = shifted.iter().map(|v| v * v).sum();
        assert_eq!(norm_sq, 16.0);
        let model = zero_block_model(16);
        assert_eq!(
            score_ttl(&model, &Tensor::vector(shifted.clone())).unwrap(),
            0.0
        );
        // The per-partition norms deviate even though the total is exact.
        let pu: f64 = shifted[..7].iter().map(|v| v * v).sum();
        let pv: f64 = shifted[7..].iter().map(|v| v * v).sum();
        assert!(pu > 7.0 && pv < 9.0);
    }

    #[test]
    fn msp_hand_values() {
        use crate::mlp::{Activation, Init, Mlp};
        use crate::models::Classifier;
        let mut rng = DetRng::from_seed(0);
        let mut clf = Classifier {
            net: Mlp::new(&[3, 3], Activation::Tanh, Activation::Identity, Init::Zero, &mut rng),
            classes: 3,
            dim: 3,
        };
        // Zero weights: uniform softmax over k classes scores −1/k.
        let s = score_msp(&clf, &Tensor::vector(vec![0.3, 0.1, 0.9])).unwrap();
        assert!((s - (-1.0 / 3.0)).abs() < 1e-12, "{s}");

        // Identity logits: a dominant one-hot scores ≈ −1, and adding a
        // constant to all logits changes nothing.
        clf.net.layers[0].weight =
            Tensor::from_f64(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let hot = score_msp(&clf, &Tensor::vector(vec![20.0, 0.0, 0.0])).unwrap();
        assert!((hot - (-1.0)).abs() < 1e-8, "{hot}");
        let a = score_msp(&clf, &Tensor::vector(vec![2.0, -1.0, 0.5])).unwrap();
        let b = score_msp(&clf, &Tensor::vector(vec![7.0, 4.0, 5.5])).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ae_hand_values() {
        use crate::mlp::{Activation, Init, Mlp};
        use crate::models::Autoencoder;
        let mut rng = DetRng::from_seed(0);
        let identity = |d: usize, rng: &mut DetRng| {
            let mut m = Mlp::new(&[d, d], Activation::Tanh, Activation::Identity, Init::Zero, rng);
            let mut eye = alloc::vec![0.0; d * d];
            for i in 0..d {
                eye[i * d + i] = 1.0;
            }
            m.layers[0].weight = Tensor::from_f64(&[d, d], eye).unwrap();
            m
        };
        // Linear pair where the decoder inverts the encoder exactly.
        let ae = Autoencoder {
            encoder: identity(3, &mut rng),
            decoder: identity(3, &mut rng),
            dim: 3,
            bottleneck: 3,
        };
        let x = Tensor::vector(vec![0.3, -0.7, 0.25]);
        assert_eq!(score_ae(&ae, &x).unwrap(), 0.0);

        // Zero decoder reconstructs nothing: score is the input norm.
        let zero = Autoencoder {
            encoder: identity(3, &mut rng),
            decoder: Mlp::new(&[3, 3], Activation::Tanh, Activation::Identity, Init::Zero, &mut rng),
            dim: 3,
            bottleneck: 3,
        };
        let expect = math::norm2(&x.to_f64_vec());
        assert!((score_ae(&zero, &x).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn batch_scoring_covers_every_sample_and_detector() {
        let model = random_model(4, 4, 11);
        let data = crate::data::gen_indist("gauss_mixture", 10, 4, 5).unwrap();
        let ctx = ScoreContext::flow_only(
            &model,
            PenaltyConfig { lambda: 10.0 },
            Precision::Double,
        );
        let kinds = [DetectorKind::Ll, DetectorKind::Ttl, DetectorKind::Re, DetectorKind::Pre];
        let scored = ctx.score_batch(&kinds, &data).unwrap();
        assert_eq!(scored.len(), 10);
        for s in &scored {
            assert_eq!(s.scores.len(), 4);
        }
    }

    #[test]
    fn unknown_detector_name_lists_supported() {
        match DetectorKind::parse("pixelcnn") {
            Err(Error::Config(msg)) => {
                for k in DetectorKind::ALL {
                    assert!(msg.contains(k.name()), "{msg}");
                }
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
