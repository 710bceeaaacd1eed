//! Toy classifier (for the softmax baseline and the attack) and the
//! autoencoder baseline.

use alloc::format;
use alloc::vec::Vec;

use crate::adam::AdamState;
use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::math;
use crate::mlp::{Activation, Init, Mlp};
use crate::rng::DetRng;
use crate::tensor::Tensor;

/// Dense classifier over `dim` inputs and `classes` logits.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub net: Mlp,
    pub classes: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub classes: usize,
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            classes: 2,
            hidden: alloc::vec![32, 32],
            iterations: 500,
            batch_size: 64,
            learning_rate: 3e-3,
        }
    }
}

/// Training accuracy observations.
#[derive(Debug, Clone)]
pub struct AccuracyTrace {
    /// Batch accuracy per iteration.
    pub per_iteration: Vec<f64>,
    /// Accuracy over the full training set after the last update.
    pub final_train_accuracy: f64,
}

/// Cross-entropy training by Adam; deterministic under the given rng.
pub fn train_classifier(
    data: &DatasetHandle,
    config: &ClassifierConfig,
    rng: &DetRng,
) -> Result<(Classifier, AccuracyTrace)> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::contract("classifier training needs labels"))?;
    if config.classes < 2 {
        return Err(Error::config("classifier needs at least 2 classes"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| (l as usize) >= config.classes) {
        return Err(Error::contract(format!(
            "label {bad} outside [0, {})",
            config.classes
        )));
    }
    let d = data.dim();
    let mut widths = alloc::vec![d];
    widths.extend_from_slice(&config.hidden);
    widths.push(config.classes);
    let mut init_rng = rng.split("classifier-init");
    let net = Mlp::new(
        &widths,
        Activation::Tanh,
        Activation::Identity,
        Init::FanIn,
        &mut init_rng,
    );
    let mut clf = Classifier {
        net,
        classes: config.classes,
        dim: d,
    };

    let mut batch_rng = rng.split("classifier-train/batches");
    let mut adam = AdamState::new(config.learning_rate);
    let n = config.batch_size.min(data.len()).max(1);
    let mut trace = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let mut batch = Vec::with_capacity(n * d);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let row = batch_rng.index(data.len());
            batch.extend_from_slice(&data.row_f64(row));
            ys.push(labels[row] as usize);
        }

        let mut g = Graph::new();
        let xn = g.constant(&Tensor::from_f64(&[n, d], batch)?);
        let logits = clf.net.forward_graph(&mut g, xn, "net")?;
        let lse = g.log_sum_exp_rows(logits)?;
        let picked = g.pick_per_row(logits, &ys)?;
        let lse_sum = g.sum(lse);
        let picked_sum = g.sum(picked);
        let diff = g.sub(lse_sum, picked_sum)?;
        let loss_node = g.scale(diff, 1.0 / n as f64);

        let loss = g.scalar(loss_node)?;
        if !loss.is_finite() {
            return Err(Error::numeric(
                format!("classifier loss at iteration {it}"),
                None,
            ));
        }

        // Batch accuracy from the logits already on the tape.
        let lv = g.value(logits);
        let mut correct = 0usize;
        for (r, &y) in ys.iter().enumerate() {
            let row = &lv[r * config.classes..(r + 1) * config.classes];
            if argmax(row) == y {
                correct += 1;
            }
        }
        trace.push(correct as f64 / n as f64);

        let grads = g.backward(loss_node)?;
        let mut params = alloc::collections::BTreeMap::new();
        clf.net.collect_params("net", &mut params);
        adam.step(&mut params, &grads)?;
        clf.net.set_params("net", &params)?;
    }

    let mut correct = 0usize;
    for i in 0..data.len() {
        let (label, _) = predict(&clf, &data.sample(i, crate::tensor::Precision::Double))?;
        if label == labels[i] as usize {
            correct += 1;
        }
    }
    let final_acc = correct as f64 / data.len() as f64;
    Ok((
        clf,
        AccuracyTrace {
            per_iteration: trace,
            final_train_accuracy: final_acc,
        },
    ))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Raw logits for one input.
pub fn logits(classifier: &Classifier, x: &Tensor) -> Result<Vec<f64>> {
    if x.shape() != [classifier.dim] {
        return Err(Error::dimension(
            "classifier input",
            x.shape(),
            &[classifier.dim],
        ));
    }
    Ok(classifier
        .net
        .infer(&x.cast(crate::tensor::Precision::Double))?
        .to_f64_vec())
}

/// Predicted label and the full softmax vector (stable, sums to 1).
pub fn predict(classifier: &Classifier, x: &Tensor) -> Result<(usize, Vec<f64>)> {
    let lg = logits(classifier, x)?;
    let m = lg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = lg.iter().map(|&v| math::exp(v - m)).collect();
    let total: f64 = exps.iter().sum();
    let softmax: Vec<f64> = exps.iter().map(|&e| e / total).collect();
    Ok((argmax(&lg), softmax))
}

/// Bottlenecked reconstruction model.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub dim: usize,
    pub bottleneck: usize,
}

impl Autoencoder {
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != [self.dim] {
            return Err(Error::dimension("autoencoder input", x.shape(), &[self.dim]));
        }
        let x = x.cast(crate::tensor::Precision::Double);
        let code = self.encoder.infer(&x)?;
        self.decoder.infer(&code)
    }
}

#[derive(Debug, Clone)]
pub struct AeConfig {
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    /// Code width; at most the data dimension (equality gives the linear
    /// identity-reachable setup used by diagnostics).
    pub bottleneck: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_activation: Activation,
    /// Output activation; sigmoid for unit-box data.
    pub final_activation: Activation,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            hidden: alloc::vec![32],
            bottleneck: 4,
            iterations: 800,
            batch_size: 64,
            learning_rate: 3e-3,
            hidden_activation: Activation::Tanh,
            final_activation: Activation::Sigmoid,
        }
    }
}

/// Mean-squared-error training of the autoencoder.
pub fn train_ae(
    data: &DatasetHandle,
    config: &AeConfig,
    rng: &DetRng,
) -> Result<(Autoencoder, Vec<f64>)> {
    let d = data.dim();
    if config.bottleneck == 0 || config.bottleneck > d {
        return Err(Error::config(format!(
            "bottleneck must lie in [1, {d}], got {}",
            config.bottleneck
        )));
    }
    let mut enc_widths = alloc::vec![d];
    enc_widths.extend_from_slice(&config.hidden);
    enc_widths.push(config.bottleneck);
    let mut dec_widths = alloc::vec![config.bottleneck];
    dec_widths.extend(config.hidden.iter().rev());
    dec_widths.push(d);

    let mut init_rng = rng.split("ae-init");
    let encoder = Mlp::new(
        &enc_widths,
        config.hidden_activation,
        Activation::Identity,
        Init::FanIn,
        &mut init_rng,
    );
    let decoder = Mlp::new(
        &dec_widths,
        config.hidden_activation,
        config.final_activation,
        Init::FanIn,
        &mut init_rng,
    );
    let mut ae = Autoencoder {
        encoder,
        decoder,
        dim: d,
        bottleneck: config.bottleneck,
    };

    let mut batch_rng = rng.split("ae-train/batches");
    let mut adam = AdamState::new(config.learning_rate);
    let n = config.batch_size.min(data.len()).max(1);
    let mut trace = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let mut batch = Vec::with_capacity(n * d);
        for _ in 0..n {
            let row = batch_rng.index(data.len());
            batch.extend_from_slice(&data.row_f64(row));
        }

        let mut g = Graph::new();
        let xn = g.constant(&Tensor::from_f64(&[n, d], batch)?);
        let code = ae.encoder.forward_graph(&mut g, xn, "enc")?;
        let recon = ae.decoder.forward_graph(&mut g, code, "dec")?;
        let diff = g.sub(recon, xn)?;
        let sq = g.mul(diff, diff)?;
        let total = g.sum(sq);
        let loss_node = g.scale(total, 1.0 / n as f64);

        let loss = g.scalar(loss_node)?;
        if !loss.is_finite() {
            return Err(Error::numeric(
                format!(
                    "autoencoder loss at iteration {it} (trace length {})",
                    trace.len()
                ),
                None,
            ));
        }
        trace.push(loss);

        let grads = g.backward(loss_node)?;
        let mut params = alloc::collections::BTreeMap::new();
        ae.encoder.collect_params("enc", &mut params);
        ae.decoder.collect_params("dec", &mut params);
        adam.step(&mut params, &grads)?;
        ae.encoder.set_params("enc", &params)?;
        ae.decoder.set_params("dec", &params)?;
    }
    Ok((ae, trace))
}

/// Mean reconstruction MSE of an autoencoder over a dataset.
pub fn reconstruction_mse(ae: &Autoencoder, data: &DatasetHandle) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.len() {
        let x = data.sample(i, crate::tensor::Precision::Double);
        let r = ae.reconstruct(&x)?;
        for j in 0..x.len() {
            let d = x.get(j) - r.get(j);
            total += d * d;
        }
    }
    Ok(total / data.len() as f64)
}
