//! Untargeted projected-gradient attacks on the toy classifier.
//!
//! The attack minimizes `C_y_true(x*) − C_y_target(x*)` by signed gradient
//! steps, projecting onto the L∞ ball of radius ε around the clean input
//! and onto the valid domain `[0, 1]` after every step. The target class is
//! fixed once, from the clean input's logits.

use alloc::format;
use alloc::vec::Vec;

use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{logits, predict, Classifier};
use crate::rng::DetRng;
use crate::tensor::Tensor;

/// L∞ attack budget.
#[derive(Debug, Clone, Copy)]
pub struct AttackBudget {
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    /// Seeded random start inside the ball; off by default so the attack
    /// is a pure function of its inputs.
    pub random_start: bool,
}

impl AttackBudget {
    pub fn new(epsilon: f64, step_size: f64, iterations: usize) -> Result<AttackBudget> {
        if !(epsilon >= 0.0) {
            return Err(Error::contract(format!(
                "attack budget must be nonnegative, got {epsilon}"
            )));
        }
        if !(step_size >= 0.0) || step_size > 2.0 * epsilon {
            return Err(Error::contract(format!(
                "step size {step_size} must lie in [0, 2ε] = [0, {}]",
                2.0 * epsilon
            )));
        }
        Ok(AttackBudget {
            epsilon,
            step_size,
            iterations,
            random_start: false,
        })
    }
}

/// Originals, perturbed samples, and per-sample success flags.
#[derive(Debug, Clone)]
pub struct AdversarialSet {
    pub originals: DatasetHandle,
    pub perturbed: DatasetHandle,
    /// Whether the prediction changed away from the true label.
    pub success: Vec<bool>,
    pub budget: AttackBudget,
}

/// One PGD attack. Returns the perturbed sample (still satisfying the
/// budget exactly) and whether the final prediction differs from `y_true`.
/// A non-finite gradient marks the sample failed and returns the original.
pub fn pgd_attack_sample(
    classifier: &Classifier,
    x: &Tensor,
    y_true: u8,
    budget: &AttackBudget,
    rng: Option<&mut DetRng>,
) -> Result<(Tensor, bool)> {
    if x.shape() != [classifier.dim] {
        return Err(Error::dimension("attack input", x.shape(), &[classifier.dim]));
    }
    if (y_true as usize) >= classifier.classes {
        return Err(Error::contract(format!(
            "true label {y_true} outside [0, {})",
            classifier.classes
        )));
    }
    if classifier.classes < 2 {
        return Err(Error::contract("attacks need at least two classes"));
    }

    let x0 = x.to_f64_vec();
    let d = x0.len();

    // Fix the target once: the strongest wrong class on the clean input.
    let clean_logits = logits(classifier, x)?;
    let y_target = best_wrong_class(&clean_logits, y_true as usize);

    let mut adv = x0.clone();
    if budget.random_start {
        if let Some(rng) = rng {
            let mut start_rng = rng.split("pgd-start");
            for (a, &o) in adv.iter_mut().zip(&x0) {
                *a = o + start_rng.uniform_in(-budget.epsilon, budget.epsilon);
            }
            project(&mut adv, &x0, budget.epsilon);
        }
    }

    for _ in 0..budget.iterations {
        let grad = match loss_input_gradient(classifier, &adv, y_true as usize, y_target) {
            Ok(g) => g,
            Err(Error::Numeric { .. }) => {
                // Gradient failure: hand back the original, marked by the
                // caller via the unchanged prediction.
                let original = single_tensor(&x0);
                let (pred, _) = predict(classifier, &original)?;
                return Ok((original, pred != y_true as usize));
            }
            Err(e) => return Err(e),
        };
        if !grad.iter().all(|g| g.is_finite()) {
            let original = single_tensor(&x0);
            let (pred, _) = predict(classifier, &original)?;
            return Ok((original, pred != y_true as usize));
        }
        for j in 0..d {
            adv[j] -= budget.step_size * sign(grad[j]);
        }
        project(&mut adv, &x0, budget.epsilon);
    }

    let adv_t = single_tensor(&adv);
    let (pred, _) = predict(classifier, &adv_t)?;
    Ok((adv_t, pred != y_true as usize))
}

/// Attacks every labeled sample of `data` in input order.
pub fn pgd_attack(
    classifier: &Classifier,
    data: &DatasetHandle,
    budget: &AttackBudget,
    rng: &DetRng,
) -> Result<AdversarialSet> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::contract("attacks need labeled data"))?
        .to_vec();
    if data.dim() != classifier.dim {
        return Err(Error::dimension(
            "attack dataset",
            &[data.dim()],
            &[classifier.dim],
        ));
    }

    let mut perturbed = Vec::with_capacity(data.len() * data.dim());
    let mut success = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let x = data.sample(i, crate::tensor::Precision::Double);
        let mut sample_rng = rng.split(&format!("pgd/{i}"));
        let (adv, ok) =
            pgd_attack_sample(classifier, &x, labels[i], budget, Some(&mut sample_rng))?;
        // Final projection in the storage precision so the budget holds for
        // the persisted f32 values as well.
        let x0 = data.row(i);
        for j in 0..data.dim() {
            let lo = (x0[j] - budget.epsilon as f32).max(0.0);
            let hi = (x0[j] + budget.epsilon as f32).min(1.0);
            perturbed.push((adv.get(j) as f32).clamp(lo, hi.max(lo)));
        }
        success.push(ok);
    }

    let tag = crate::data::Provenance::Ood(format!("pgd_eps{}", budget.epsilon));
    let perturbed =
        DatasetHandle::from_rows(data.dim(), perturbed, Some(labels), tag, data.seed)?;
    Ok(AdversarialSet {
        originals: data.clone(),
        perturbed,
        success,
        budget: *budget,
    })
}

/// Fraction of samples whose prediction changed from the true label.
pub fn attack_success_rate(set: &AdversarialSet) -> Result<f64> {
    if set.success.is_empty() {
        return Err(Error::contract("success rate of an empty attack set"));
    }
    let hits = set.success.iter().filter(|&&s| s).count();
    Ok(hits as f64 / set.success.len() as f64)
}

fn single_tensor(v: &[f64]) -> Tensor {
    Tensor::vector(v.to_vec())
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn best_wrong_class(logits: &[f64], y_true: usize) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in logits.iter().enumerate() {
        if i == y_true {
            continue;
        }
        if best == usize::MAX || v > logits[best] {
            best = i;
        }
    }
    best
}

/// Clamp onto the ε-ball around `x0` intersected with the unit box.
fn project(adv: &mut [f64], x0: &[f64], epsilon: f64) {
    for (a, &o) in adv.iter_mut().zip(x0) {
        let lo = (o - epsilon).max(0.0);
        let hi = (o + epsilon).min(1.0);
        *a = a.clamp(lo, hi.max(lo));
    }
}

/// Gradient of `C_y_true(x) − C_y_target(x)` with respect to the input.
fn loss_input_gradient(
    classifier: &Classifier,
    x: &[f64],
    y_true: usize,
    y_target: usize,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let xn = g.param("x", &Tensor::from_f64(&[1, x.len()], x.to_vec())?)?;
    let logits = classifier.net.forward_graph(&mut g, xn, "net")?;
    let true_logit = g.pick_per_row(logits, &[y_true])?;
    let target_logit = g.pick_per_row(logits, &[y_target])?;
    let diff = g.sub(true_logit, target_logit)?;
    let loss = g.sum(diff);
    let grads = g.backward(loss)?;
    Ok(grads["x"].to_f64_vec())
}
