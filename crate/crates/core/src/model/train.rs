use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::network::{forward, Sample};
use super::Model;
use crate::diffcore::{logistic, softmax, AdamState, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::evalmetrics::{accuracy, AccuracyReport};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
    /// Per-sample softmax over the class logits.
    pub softmax: Vec<Vec<f64>>,
    /// Per-sample independent logistic of each logit.
    pub sigmoid: Vec<Vec<f64>>,
    pub report: AccuracyReport,
}

struct SampleGrad {
    loss: f64,
    correct: bool,
    grads: Vec<Tensor>,
}

fn check_samples(model: &Model, samples: &[Sample]) -> Result<()> {
    let cfg = &model.config;
    let want = [cfg.seq_len, cfg.rows(), 3];
    for (i, s) in samples.iter().enumerate() {
        if s.input.shape() != want {
            return Err(Error::shape(
                "model input",
                format!("sample {i}: {:?}, expected {want:?}", s.input.shape()),
            ));
        }
        if s.label >= cfg.n_classes {
            return Err(Error::invalid(
                "model input",
                format!("sample {i}: label {} >= {} classes", s.label, cfg.n_classes),
            ));
        }
    }
    Ok(())
}

fn sample_gradient(model: &Model, sample: &Sample) -> Result<SampleGrad> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = model.params.iter().map(|p| tape.leaf(p.clone())).collect();
    let logits = forward(&mut tape, &model.config, &vars, &sample.input)?;
    let predicted = argmax(tape.value(logits).data());
    let loss = tape.softmax_cross_entropy(logits, sample.label)?;
    let loss_value = tape.value(loss).item();
    tape.backward(loss)?;
    Ok(SampleGrad {
        loss: loss_value,
        correct: predicted == sample.label,
        grads: vars.iter().map(|&v| tape.grad(v)).collect(),
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch Adam on `train_set`. The returned model carries the
/// parameters of the best epoch (earliest on ties): highest validation
/// accuracy when `val_set` is given, otherwise lowest mean training loss,
/// which guards against a late divergence undoing a good fit. The history
/// always covers every epoch.
pub fn train(mut model: Model, train_set: &[Sample], val_set: Option<&[Sample]>) -> Result<Model> {
    model.config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("train", "empty training set"));
    }
    check_samples(&model, train_set)?;
    if let Some(v) = val_set {
        check_samples(&model, v)?;
    }
    let cfg = model.config.clone();
    let names = model.names.clone();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut adam = AdamState::new(&model.params, cfg.lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let start_epoch = model.history.len();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<SampleGrad> = batch
                .par_iter()
                .map(|&i| sample_gradient(&model, &train_set[i]))
                .collect::<Result<_>>()?;
            let mut grads: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            for (r, &i) in results.iter().zip(batch) {
                if !r.loss.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss {} at epoch {}, batch {b} (sample {i})",
                        r.loss,
                        start_epoch + epoch + 1
                    )));
                }
                loss_sum += r.loss;
                correct += r.correct as usize;
                for (acc, g) in grads.iter_mut().zip(&r.grads) {
                    acc.add_assign(g);
                }
            }
            let mut scale = 1.0 / batch.len() as f64;
            if cfg.grad_clip > 0.0 {
                let norm = scale * grads.iter().map(|g| g.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
                if norm > cfg.grad_clip {
                    scale *= cfg.grad_clip / norm;
                }
            }
            let grads: Vec<Tensor> = grads.into_iter().map(|g| g.map(|x| x * scale)).collect();
            adam.step(&mut model.params, &grads, &name_refs).map_err(|e| {
                Error::Training(format!("epoch {}, batch {b}: {e}", start_epoch + epoch + 1))
            })?;
        }
        let val_acc = match val_set {
            Some(v) if !v.is_empty() => Some(evaluate(&model, v)?.report.overall),
            _ => None,
        };
        let loss = loss_sum / train_set.len() as f64;
        // higher is better for both criteria
        let score = val_acc.unwrap_or(-loss);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.params.clone()));
        }
        model.history.push(EpochRecord {
            epoch: start_epoch + epoch + 1,
            loss,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc,
        });
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(model)
}

/// Forward every sample (no gradients) and score the predictions.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<Evaluation> {
    check_samples(model, samples)?;
    let logits: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = model.params.iter().map(|p| tape.constant(p.clone())).collect();
            let out = forward(&mut tape, &model.config, &vars, &s.input)?;
            Ok(tape.value(out).data().to_vec())
        })
        .collect::<Result<_>>()?;
    let predictions: Vec<usize> = logits.iter().map(|l| argmax(l)).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let report = accuracy(&predictions, &labels, model.config.n_classes)?;
    Ok(Evaluation {
        softmax: logits.iter().map(|l| softmax(l)).collect(),
        sigmoid: logits.iter().map(|l| l.iter().map(|&x| logistic(x)).collect()).collect(),
        labels,
        predictions,
        report,
    })
}
