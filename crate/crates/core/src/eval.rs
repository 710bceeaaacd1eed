//! Detection metrics, threshold selection, tail-bound and annulus
//! analysis, and the latent-penalty sweep experiments.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::DatasetHandle;
use crate::detect::{self, DetectorKind, PenaltyConfig, Score};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::math;
use crate::rng::DetRng;
use crate::tensor::Precision;

fn check_scores(scores: &[f64], side: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::contract(format!("{side} score set is empty")));
    }
    if scores.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
        return Err(Error::contract(format!(
            "{side} scores must be finite (failure markers are +inf)"
        )));
    }
    Ok(())
}

/// Area under the ROC curve, in percent: the probability that a random OOD
/// score exceeds a random in-distribution score, ties counting one half.
/// Failure markers enter as +∞ and rank above everything finite.
pub fn auroc(in_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(in_scores, "in-distribution")?;
    check_scores(ood_scores, "OOD")?;
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Midrank sum over the OOD entries.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum += midrank;
            }
        }
        i = j;
    }
    let n_ood = ood_scores.len() as f64;
    let n_in = in_scores.len() as f64;
    let u = rank_sum - n_ood * (n_ood + 1.0) / 2.0;
    Ok(u / (n_in * n_ood) * 100.0)
}

/// Area under the precision-recall curve with OOD as the positive class,
/// in percent; descending-score sweep with step-wise summation.
pub fn aupr(in_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(in_scores, "in-distribution")?;
    check_scores(ood_scores, "OOD")?;
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_ood = ood_scores.len() as f64;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let mut group_tp = 0.0;
        let mut group_fp = 0.0;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                group_tp += 1.0;
            } else {
                group_fp += 1.0;
            }
            j += 1;
        }
        tp += group_tp;
        fp += group_fp;
        let recall = tp / n_ood;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area * 100.0)
}

/// Threshold at the `target_tpr` in-distribution quantile (linear
/// interpolation), raised to the order statistic that guarantees at least
/// `⌈target·n⌉` in-distribution scores are accepted by [`detect::decide`].
pub fn pick_threshold(in_scores: &[f64], target_tpr: f64) -> Result<f64> {
    if in_scores.is_empty() {
        return Err(Error::contract("threshold needs a nonempty score set"));
    }
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(Error::contract(format!(
            "target acceptance rate must lie in (0, 1], got {target_tpr}"
        )));
    }
    let mut sorted = in_scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();

    let h = target_tpr * (n - 1) as f64;
    let lo = math::floor(h) as usize;
    let frac = h - lo as f64;
    let interp = if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    };

    // ⌈target·n⌉-th order statistic keeps the acceptance-rate guarantee.
    let need = ceil_count(target_tpr, n).min(n);
    let guard = sorted[need - 1];
    Ok(if interp > guard { interp } else { guard })
}

fn ceil_count(q: f64, n: usize) -> usize {
    let raw = q * n as f64;
    let fl = math::floor(raw);
    if raw > fl {
        fl as usize + 1
    } else {
        fl as usize
    }
}

/// Two-sided Chernoff tail bound for the norm of a standard Gaussian
/// vector: `Pr[d(1−ε) < ‖z‖² < d(1+ε)] ≥ 1 − 2·exp(−dε²/8)`.
#[derive(Debug, Clone, Copy)]
pub struct TailBound {
    pub d: usize,
    pub epsilon: f64,
    pub lower_radius: f64,
    pub upper_radius: f64,
    /// `2·exp(−dε²/8)`; the two-sided escape bound (vacuous → 2 as ε → 0).
    pub two_sided_bound: f64,
    /// `exp(−dε²/8)`; each one-sided bound.
    pub one_sided_bound: f64,
    /// Bits of improbability: `log₂(1/one_sided_bound) = dε²/(8·ln 2)`.
    pub bits: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum TailSpec {
    Epsilon(f64),
    /// Bits of improbability `s`, giving `ε = √(8s·ln2/d)`.
    Bits(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct TailBoundQuery {
    pub d: usize,
    pub spec: TailSpec,
}

pub fn tail_bound(query: &TailBoundQuery) -> Result<TailBound> {
    if query.d == 0 {
        return Err(Error::domain("tail bound needs a positive dimension"));
    }
    let d = query.d as f64;
    let epsilon = match query.spec {
        TailSpec::Epsilon(e) => e,
        TailSpec::Bits(s) => {
            if !(s > 0.0) {
                return Err(Error::domain(format!(
                    "bits of improbability must be positive, got {s}"
                )));
            }
            math::sqrt(8.0 * s * core::f64::consts::LN_2 / d)
        }
    };
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!(
            "tail-bound epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let exponent = d * epsilon * epsilon / 8.0;
    let one_sided = math::exp(-exponent);
    Ok(TailBound {
        d: query.d,
        epsilon,
        lower_radius: math::sqrt(d * (1.0 - epsilon)),
        upper_radius: math::sqrt(d * (1.0 + epsilon)),
        two_sided_bound: 2.0 * one_sided,
        one_sided_bound: one_sided,
        bits: exponent / core::f64::consts::LN_2,
    })
}

/// Latent-norm summary against the theoretical annulus radius √d.
#[derive(Debug, Clone)]
pub struct AnnulusStats {
    pub norms: Vec<f64>,
    pub median: f64,
    pub sqrt_d: f64,
    /// `(median − √d) / √d`.
    pub relative_deviation: f64,
}

pub fn annulus_from_norms(norms: Vec<f64>, d: usize) -> Result<AnnulusStats> {
    if norms.is_empty() {
        return Err(Error::contract("annulus statistics need samples"));
    }
    let sqrt_d = math::sqrt(d as f64);
    let mut sorted = norms.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(AnnulusStats {
        norms,
        median,
        sqrt_d,
        relative_deviation: (median - sqrt_d) / sqrt_d,
    })
}

/// Norms of `f(x)` over a dataset (double precision).
pub fn annulus_stats(model: &FlowModel, data: &DatasetHandle) -> Result<AnnulusStats> {
    let fi = model.inference::<f64>();
    let mut norms = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let (z, _) = fi.forward(&data.row_f64(i))?;
        norms.push(math::norm2(&z));
    }
    annulus_from_norms(norms, model.dim)
}

/// Norms of direct draws from the d-dimensional standard Gaussian.
pub fn latent_norms_direct(d: usize, n: usize, rng: &mut DetRng) -> Vec<f64> {
    let mut norms = Vec::with_capacity(n);
    for _ in 0..n {
        let mut acc = 0.0;
        for _ in 0..d {
            let z = rng.normal();
            acc += z * z;
        }
        norms.push(math::sqrt(acc));
    }
    norms
}

/// Per-sample norms of the contiguous-prefix split `[z_a, z_b]` of the
/// latent vector.
pub fn partitioned_norms(
    model: &FlowModel,
    data: &DatasetHandle,
    split: (usize, usize),
) -> Result<Vec<(f64, f64)>> {
    let (da, db) = split;
    if da + db != model.dim {
        return Err(Error::contract(format!(
            "partition {da}+{db} does not cover dimension {}",
            model.dim
        )));
    }
    let fi = model.inference::<f64>();
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let (z, _) = fi.forward(&data.row_f64(i))?;
        out.push((math::norm2(&z[..da]), math::norm2(&z[da..])));
    }
    Ok(out)
}

/// Default synthetic penalty grid: `[−11, 11]` in steps of 0.2.
pub fn xi_grid_default() -> Vec<f64> {
    (0..=110).map(|k| (-110 + 2 * k as i64) as f64 / 10.0).collect()
}

/// Per-sample curves of the shifted round-trip error
/// `R'(ξ') = ‖x − f⁻¹(z + ξ'·z/‖z‖)‖` over the grid. Non-finite round
/// trips enter the curve as +∞.
pub fn sweep_penalty(
    model: &FlowModel,
    data: &DatasetHandle,
    xi_grid: &[f64],
    precision: Precision,
) -> Result<Vec<Vec<f64>>> {
    match precision {
        Precision::Double => sweep_penalty_impl::<f64>(model, data, xi_grid),
        Precision::Single => sweep_penalty_impl::<f32>(model, data, xi_grid),
    }
}

fn sweep_penalty_impl<E: crate::math::Real>(
    model: &FlowModel,
    data: &DatasetHandle,
    xi_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let fi = model.inference::<E>();
    let mut curves = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let x: Vec<E> = data
            .sample(i, E::PRECISION)
            .to_elems::<E>();
        let (z, _) = match fi.forward(&x) {
            Ok(v) => v,
            Err(Error::Numeric { .. }) => {
                curves.push(alloc::vec![f64::INFINITY; xi_grid.len()]);
                continue;
            }
            Err(e) => return Err(e),
        };
        let r = crate::flow::norm(&z);
        let mut curve = Vec::with_capacity(xi_grid.len());
        for &xi in xi_grid {
            let score =
                detect::shifted_roundtrip(&fi, &x, z.clone(), r, E::from_f64(xi))?;
            curve.push(score.value());
        }
        curves.push(curve);
    }
    Ok(curves)
}

/// Norm-cancellation OOD set: each donor's latent is rescaled so the
/// prefix partition inflates and the suffix partition deflates (by
/// `suffix_scale`) while the total norm stays exactly the donor's own —
/// the typicality score cannot tell the result from its donor, but the
/// per-partition norms deviate in opposite directions. Samples whose
/// prefix cannot absorb the norm budget are skipped.
pub fn gen_cancellation_set(
    model: &FlowModel,
    donors: &DatasetHandle,
    prefix_len: usize,
    suffix_scale: f64,
) -> Result<DatasetHandle> {
    if donors.dim() != model.dim {
        return Err(Error::dimension(
            "cancellation donors",
            &[donors.dim()],
            &[model.dim],
        ));
    }
    let fi = model.inference::<f64>();
    let mut rows: Vec<f32> = Vec::new();
    for i in 0..donors.len() {
        let (z, _) = fi.forward(&donors.row_f64(i))?;
        let target = math::norm2(&z);
        let shifted = match detect::cancellation_shift(&z, prefix_len, suffix_scale, target) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let x = fi.inverse(&shifted)?;
        rows.extend(x.iter().map(|&v| v as f32));
    }
    if rows.is_empty() {
        return Err(Error::contract(
            "cancellation construction produced no samples",
        ));
    }
    DatasetHandle::from_rows(
        donors.dim(),
        rows,
        None,
        crate::data::Provenance::Ood("norm_cancellation".into()),
        donors.seed,
    )
}

/// The penalty-coefficient grid reported by default.
pub const LAMBDA_GRID_DEFAULT: [f64; 6] = [0.0, 10.0, 50.0, 100.0, 500.0, 1000.0];

/// AUROC of the penalized reconstruction error at each coefficient.
/// The λ = 0 row is bitwise the plain reconstruction-error AUROC.
pub fn sweep_lambda(
    model: &FlowModel,
    in_data: &DatasetHandle,
    ood_data: &DatasetHandle,
    lambda_grid: &[f64],
    precision: Precision,
) -> Result<Vec<(f64, f64)>> {
    if lambda_grid.is_empty() {
        return Err(Error::contract("lambda grid is empty"));
    }
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let cfg = PenaltyConfig::new(lambda)?;
        let values = |scores: Vec<detect::Score>| -> Vec<f64> {
            scores.into_iter().map(|s| s.value()).collect()
        };
        let in_scores = values(detect::score_pre_batch(model, in_data, &cfg, precision)?);
        let ood_scores = values(detect::score_pre_batch(model, ood_data, &cfg, precision)?);
        rows.push((lambda, auroc(&in_scores, &ood_scores)?));
    }
    Ok(rows)
}

/// Score histogram over shared bins; failure markers land in the overflow
/// row so the counts always sum to the sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` finite edges.
    pub edges: Vec<f64>,
    pub count_in: Vec<u64>,
    pub count_ood: Vec<u64>,
    pub overflow_in: u64,
    pub overflow_ood: u64,
}

pub fn histogram(in_scores: &[f64], ood_scores: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::contract("histogram needs at least one bin"));
    }
    let finite: Vec<f64> = in_scores
        .iter()
        .chain(ood_scores)
        .copied()
        .filter(|s| s.is_finite())
        .collect();
    let (lo, hi) = if finite.is_empty() {
        (0.0, 1.0)
    } else {
        let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut h = Histogram {
        edges,
        count_in: alloc::vec![0; bins],
        count_ood: alloc::vec![0; bins],
        overflow_in: 0,
        overflow_ood: 0,
    };
    let place = |s: f64| -> Option<usize> {
        if !s.is_finite() {
            return None;
        }
        let idx = ((s - lo) / width) as usize;
        Some(idx.min(bins - 1))
    };
    for &s in in_scores {
        match place(s) {
            Some(i) => h.count_in[i] += 1,
            None => h.overflow_in += 1,
        }
    }
    for &s in ood_scores {
        match place(s) {
            Some(i) => h.count_ood[i] += 1,
            None => h.overflow_ood += 1,
        }
    }
    Ok(h)
}

/// Everything reported for one detector.
#[derive(Debug, Clone)]
pub struct DetectorReport {
    pub detector: DetectorKind,
    pub auroc: f64,
    pub aupr: f64,
    pub tau: f64,
    /// Fraction of OOD scores above τ.
    pub tpr: f64,
    /// Fraction of in-distribution scores above τ.
    pub fpr: f64,
    pub failures_in: usize,
    pub failures_ood: usize,
    pub histogram: Histogram,
}

/// Full evaluation report: per-detector metrics plus experiment metadata.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub detectors: Vec<DetectorReport>,
    pub in_count: usize,
    pub ood_count: usize,
    pub meta: BTreeMap<String, String>,
}

/// Number of histogram bins in reports.
pub const REPORT_HISTOGRAM_BINS: usize = 32;

/// Assemble per-detector metrics from raw scores; `target_tpr` drives the
/// threshold choice.
pub fn build_report(
    scores_in: &BTreeMap<DetectorKind, Vec<Score>>,
    scores_ood: &BTreeMap<DetectorKind, Vec<Score>>,
    target_tpr: f64,
    meta: BTreeMap<String, String>,
) -> Result<EvalReport> {
    if scores_in.is_empty() {
        return Err(Error::contract("report needs at least one detector"));
    }
    let in_kinds: Vec<DetectorKind> = scores_in.keys().copied().collect();
    let ood_kinds: Vec<DetectorKind> = scores_ood.keys().copied().collect();
    if in_kinds != ood_kinds {
        let fmt = |ks: &[DetectorKind]| {
            ks.iter().map(|k| k.name()).collect::<Vec<_>>().join(",")
        };
        return Err(Error::contract(format!(
            "detector sets differ: in-dist has [{}], OOD has [{}]",
            fmt(&in_kinds),
            fmt(&ood_kinds)
        )));
    }

    let mut detectors = Vec::new();
    let mut in_count = 0;
    let mut ood_count = 0;
    for kind in in_kinds {
        let si: Vec<f64> = scores_in[&kind].iter().map(|s| s.value()).collect();
        let so: Vec<f64> = scores_ood[&kind].iter().map(|s| s.value()).collect();
        in_count = si.len();
        ood_count = so.len();
        let tau = pick_threshold(&si, target_tpr)?;
        let tpr = so.iter().filter(|&&s| s > tau).count() as f64 / so.len() as f64;
        let fpr = si.iter().filter(|&&s| s > tau).count() as f64 / si.len() as f64;
        detectors.push(DetectorReport {
            detector: kind,
            auroc: auroc(&si, &so)?,
            aupr: aupr(&si, &so)?,
            tau,
            tpr,
            fpr,
            failures_in: scores_in[&kind].iter().filter(|s| s.is_failure()).count(),
            failures_ood: scores_ood[&kind].iter().filter(|s| s.is_failure()).count(),
            histogram: histogram(&si, &so, REPORT_HISTOGRAM_BINS)?,
        });
    }
    Ok(EvalReport {
        detectors,
        in_count,
        ood_count,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn auroc_hand_cases() {
        assert_eq!(auroc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 100.0);
        assert_eq!(auroc(&[0.1, 0.3], &[0.2, 0.4]).unwrap(), 75.0);
        let same = [0.5, 0.7, 0.9];
        assert_eq!(auroc(&same, &same).unwrap(), 50.0);
    }

    #[test]
    fn auroc_complement_identity() {
        let a = [0.1, 0.5, 0.5, 2.0];
        let b = [0.2, 0.5, 1.0];
        let fwd = auroc(&a, &b).unwrap();
        let rev = auroc(&b, &a).unwrap();
        assert_eq!(fwd + rev, 100.0);
    }

    #[test]
    fn auroc_rejects_empty_and_nan() {
        assert!(auroc(&[], &[1.0]).is_err());
        assert!(auroc(&[1.0], &[f64::NAN]).is_err());
        assert!(auroc(&[f64::NEG_INFINITY], &[1.0]).is_err());
        // +inf failure markers are fine.
        assert!(auroc(&[1.0], &[f64::INFINITY]).is_ok());
    }

    #[test]
    fn aupr_degenerate_cases() {
        // Perfect separation, balanced.
        let p = aupr(&[0.1, 0.2], &[0.3, 0.4]).unwrap();
        assert!(p >= 99.9, "{p}");
        // All identical, balanced: precision pinned at prevalence.
        let p = aupr(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((p - 50.0).abs() < 1e-12, "{p}");
    }

    /// Brute-force oracle: recount precision/recall at every distinct
    /// threshold and integrate step-wise.
    fn aupr_oracle(in_scores: &[f64], ood_scores: &[f64]) -> f64 {
        let mut thresholds: Vec<f64> = in_scores.iter().chain(ood_scores).copied().collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let tp = ood_scores.iter().filter(|&&s| s >= t).count() as f64;
            let fp = in_scores.iter().filter(|&&s| s >= t).count() as f64;
            let recall = tp / ood_scores.len() as f64;
            let precision = tp / (tp + fp);
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        area * 100.0
    }

    #[test]
    fn aupr_matches_the_quadratic_oracle_with_ties() {
        let mut rng = DetRng::from_seed(64);
        for _ in 0..50 {
            let n = 2 + rng.index(62);
            let m = 2 + rng.index(62);
            // Coarse grid of values forces plenty of ties.
            let draw = |rng: &mut DetRng| (rng.index(12) as f64) * 0.25;
            let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let b: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
            let fast = aupr(&a, &b).unwrap();
            let slow = aupr_oracle(&a, &b);
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    #[test]
    fn threshold_hand_cases() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(pick_threshold(&s, 1.0).unwrap(), 4.0);
        assert_eq!(pick_threshold(&s, 0.5).unwrap(), 2.5);
        assert!(pick_threshold(&s, 0.0).is_err());
        assert!(pick_threshold(&s, 1.5).is_err());
    }

    #[test]
    fn threshold_accepts_at_least_the_target_fraction() {
        let mut rng = DetRng::from_seed(5);
        for _ in 0..200 {
            let n = 1 + rng.index(40);
            let scores: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let q = 0.05 + 0.95 * rng.uniform();
            let tau = pick_threshold(&scores, q).unwrap();
            let accepted = scores.iter().filter(|&&s| s <= tau).count();
            let need = ceil_count(q, n);
            assert!(
                accepted >= need,
                "n={n} q={q}: accepted {accepted} < {need}"
            );
        }
    }

    #[test]
    fn tail_bound_worked_values() {
        let from_bits = tail_bound(&TailBoundQuery {
            d: 3072,
            spec: TailSpec::Bits(58.0),
        })
        .unwrap();
        assert!((from_bits.epsilon - 0.32356413).abs() < 1e-6, "{}", from_bits.epsilon);
        assert!(
            (from_bits.upper_radius - 63.765108).abs() < 1e-4,
            "{}",
            from_bits.upper_radius
        );

        let from_eps = tail_bound(&TailBoundQuery {
            d: 12288,
            spec: TailSpec::Epsilon(0.108318603),
        })
        .unwrap();
        assert!(
            (from_eps.upper_radius - 116.700553).abs() < 1e-4,
            "{}",
            from_eps.upper_radius
        );
        assert!((from_eps.bits - 26.0).abs() < 0.05, "{}", from_eps.bits);
    }

    #[test]
    fn tail_bound_is_vacuous_as_epsilon_vanishes() {
        let b = tail_bound(&TailBoundQuery {
            d: 16,
            spec: TailSpec::Epsilon(1e-9),
        })
        .unwrap();
        assert!((b.two_sided_bound - 2.0).abs() < 1e-9);
    }

    #[test]
    fn tail_bound_rejects_out_of_domain_epsilon() {
        for eps in [0.0, 1.0, 1.5, -0.25] {
            assert!(matches!(
                tail_bound(&TailBoundQuery {
                    d: 64,
                    spec: TailSpec::Epsilon(eps)
                }),
                Err(Error::Domain(_))
            ));
        }
        // Bits large enough to push ε past 1 are rejected the same way.
        assert!(matches!(
            tail_bound(&TailBoundQuery {
                d: 8,
                spec: TailSpec::Bits(1e6)
            }),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sqrt_d_constants() {
        for (d, expect) in [(3072usize, 55.43), (12288, 110.85), (150528, 387.98)] {
            let stats = annulus_from_norms(vec![1.0], d).unwrap();
            assert!(
                (stats.sqrt_d - expect).abs() < 0.01,
                "d={d}: {}",
                stats.sqrt_d
            );
        }
    }

    #[test]
    fn partition_norms_satisfy_pythagoras() {
        use crate::flow::{FlowConfig, FlowModel};
        use crate::mlp::Init;
        let cfg = FlowConfig {
            dim: 6,
            blocks: 4,
            hidden: vec![8],
            final_init: Init::FanIn,
            ..FlowConfig::default()
        };
        let model = FlowModel::build(&cfg, &mut DetRng::from_seed(3)).unwrap();
        let data = crate::data::gen_indist("gauss_mixture", 32, 6, 5).unwrap();
        let fi = model.inference::<f64>();
        let parts = partitioned_norms(&model, &data, (4, 2)).unwrap();
        for (i, (na, nb)) in parts.iter().enumerate() {
            let (z, _) = fi.forward(&data.row_f64(i)).unwrap();
            let total = math::norm2(&z);
            let sum = na * na + nb * nb;
            assert!(
                (sum - total * total).abs() / (total * total) < 1e-9,
                "sample {i}"
            );
        }
        // Degenerate split: everything in the prefix.
        let parts = partitioned_norms(&model, &data, (6, 0)).unwrap();
        for (i, (na, nb)) in parts.iter().enumerate() {
            let (z, _) = fi.forward(&data.row_f64(i)).unwrap();
            assert_eq!(*na, math::norm2(&z), "sample {i}");
            assert_eq!(*nb, 0.0);
        }
        assert!(partitioned_norms(&model, &data, (3, 2)).is_err());
    }

    #[test]
    fn xi_grid_spans_minus_eleven_to_eleven() {
        let grid = xi_grid_default();
        assert_eq!(grid.len(), 111);
        assert_eq!(grid[0], -11.0);
        assert_eq!(grid[110], 11.0);
        assert!((grid[1] - grid[0] - 0.2).abs() < 1e-15);
        assert_eq!(grid[55], 0.0);
    }

    #[test]
    fn histogram_counts_sum_to_sample_counts() {
        let in_s = [0.0, 0.5, 1.0, f64::INFINITY];
        let ood_s = [0.25, 2.0];
        let h = histogram(&in_s, &ood_s, 8).unwrap();
        let total_in: u64 = h.count_in.iter().sum::<u64>() + h.overflow_in;
        let total_ood: u64 = h.count_ood.iter().sum::<u64>() + h.overflow_ood;
        assert_eq!(total_in, 4);
        assert_eq!(total_ood, 2);
        assert_eq!(h.overflow_in, 1);
    }

    #[test]
    fn report_requires_matching_detector_sets() {
        let mut a = BTreeMap::new();
        a.insert(DetectorKind::Re, vec![Score::Finite(0.1)]);
        let mut b = BTreeMap::new();
        b.insert(DetectorKind::Pre, vec![Score::Finite(0.2)]);
        match build_report(&a, &b, 0.95, BTreeMap::new()) {
            Err(Error::Contract(msg)) => {
                assert!(msg.contains("re") && msg.contains("pre"), "{msg}");
            }
            other => panic!("expected contract error, got {other:?}"),
        }
        assert!(build_report(&BTreeMap::new(), &BTreeMap::new(), 0.95, BTreeMap::new()).is_err());
    }
}
