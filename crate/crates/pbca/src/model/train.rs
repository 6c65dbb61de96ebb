//! Loss, Adam updates, the training loop and validation-based selection.

use std::time::Instant;

use crate::autodiff::{Bindings, Evaluation, Tensor};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{ForecastModel, ForecastConfig, ModelGraph, ParamKind, Variant};
use crate::rng::SplitMix64;

/// Mean squared error over the horizon plus L2 over the regularized
/// parameters (weights only unless `regularize_all` is set).
pub fn loss(
    predictions: &[f64],
    targets: &[f64],
    model: &ForecastModel,
    l2: f64,
) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Contract("loss over an empty horizon".into()));
    }
    let mut mse = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        let d = p - t;
        mse += d * d;
    }
    mse /= predictions.len() as f64;

    let mut penalty = 0.0;
    if l2 > 0.0 {
        let regularize_all = model.config.regularize_all;
        model.visit_params(&mut |_, tensor, kind| {
            if regularize_all || kind == ParamKind::Weight {
                for v in tensor.values() {
                    penalty += v * v;
                }
            }
        });
        penalty *= l2;
    }
    Ok(mse + penalty)
}

/// Per-parameter Adam moments.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(model: &ForecastModel) -> Self {
        let mut first = Vec::new();
        model.visit_params(&mut |_, t, _| first.push(Tensor::zeros(t.dims().to_vec())));
        let second = first.clone();
        AdamState {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: first,
            second_moment: second,
        }
    }
}

/// One Adam update with bias correction, applied in registry order.
pub fn adam_step(
    model: &mut ForecastModel,
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Contract(format!("learning rate must be positive, got {lr}")));
    }
    if grads.len() != state.first_moment.len() {
        return Err(Error::Shape(format!(
            "{} gradients for {} parameters",
            grads.len(),
            state.first_moment.len()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);

    let mut idx = 0;
    let mut failure: Option<Error> = None;
    let first = &mut state.first_moment;
    let second = &mut state.second_moment;
    model.visit_params_mut(&mut |name, tensor, _| {
        if failure.is_some() {
            return;
        }
        let g = &grads[idx];
        if g.dims() != tensor.dims() {
            failure = Some(Error::Shape(format!(
                "gradient dims {:?} for parameter '{name}' with dims {:?}",
                g.dims(),
                tensor.dims()
            )));
            return;
        }
        if !g.all_finite() {
            failure = Some(Error::Numeric(format!(
                "non-finite gradient for parameter '{name}'"
            )));
            return;
        }
        let m = first[idx].values_mut();
        let v = second[idx].values_mut();
        for ((theta, gi), (mi, vi)) in tensor
            .values_mut()
            .iter_mut()
            .zip(g.values())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        idx += 1;
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_mse: f64,
}

/// Per-epoch history. Wall time is informational and excluded from
/// reproducibility comparisons.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// The numeric content compared by determinism checks.
    pub fn numeric_eq(&self, other: &TrainReport) -> bool {
        self.best_epoch == other.best_epoch && self.epochs == other.epochs
    }
}

fn check_dataset(config: &ForecastConfig, dataset: &WindowedDataset) -> Result<()> {
    if dataset.t != config.t || dataset.t_prime != config.t_prime {
        return Err(Error::Contract(format!(
            "dataset windows are {}x{} but config expects {}x{}",
            dataset.t, dataset.t_prime, config.t, config.t_prime
        )));
    }
    if dataset.variables != config.k {
        return Err(Error::Contract(format!(
            "dataset has {} variables but config.k = {}",
            dataset.variables, config.k
        )));
    }
    Ok(())
}

fn validation_mse(model: &ForecastModel, dataset: &WindowedDataset) -> Result<f64> {
    let examples = dataset.validation_examples()?;
    let preds = model.predict(examples)?;
    let truths: Vec<Vec<f64>> = examples.iter().map(|e| e.target.clone()).collect();
    metrics::mse(&preds, &truths)
}

/// Mini-batch training with teacher forcing (by default), free-running
/// validation after every epoch, and best-epoch selection by validation MSE
/// with early stopping after `patience` epochs without improvement.
pub fn train(
    config: &ForecastConfig,
    dataset: &WindowedDataset,
) -> Result<(ForecastModel, TrainReport)> {
    let started = Instant::now();
    config.validate()?;
    check_dataset(config, dataset)?;
    let train_examples = dataset.train_examples()?;
    if train_examples.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }

    let mut model = ForecastModel::new(config.clone())?;
    let mut report =
        TrainReport { epochs: Vec::new(), best_epoch: None, wall_time_secs: 0.0 };
    if config.max_epochs == 0 {
        report.wall_time_secs = started.elapsed().as_secs_f64();
        return Ok((model, report));
    }

    let graph = ModelGraph::build(&model, config.train_mode, true)?;
    let loss_node = graph.loss.expect("built with loss");
    let mut bindings = Bindings::for_graph(&graph.graph);
    let mut eval = Evaluation::new();
    let mut adam = AdamState::new(&model);
    let mut grad_acc: Vec<Tensor> = adam.first_moment.clone();
    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let mut shuffle_rng = SplitMix64::new(config.seed ^ 0x5DEE_CE66_D1CE_BA5E);

    let mut best: Option<(f64, ForecastModel, usize)> = None;

    for epoch in 0..config.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            for t in grad_acc.iter_mut() {
                for v in t.values_mut() {
                    *v = 0.0;
                }
            }
            graph.bind_params(&model, &mut bindings);
            for &idx in batch {
                let example = &train_examples[idx];
                graph.bind_example(&example.input, Some(&example.target), &mut bindings)?;
                graph.graph.evaluate_into(loss_node, &bindings, &mut eval)?;
                loss_sum += eval.value(loss_node).item()?;
                let grads = graph.graph.backward(loss_node, &eval)?;
                for (p, acc) in graph.params.iter().zip(grad_acc.iter_mut()) {
                    if let Some(g) = grads.adjoint(p.node) {
                        for (a, gv) in acc.values_mut().iter_mut().zip(g.values()) {
                            *a += gv;
                        }
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for t in grad_acc.iter_mut() {
                for v in t.values_mut() {
                    *v *= inv;
                }
            }
            if let Some(clip) = config.grad_clip {
                let mut norm_sq = 0.0;
                for t in &grad_acc {
                    for v in t.values() {
                        norm_sq += v * v;
                    }
                }
                let norm = norm_sq.sqrt();
                if norm > clip {
                    let scale = clip / norm;
                    for t in grad_acc.iter_mut() {
                        for v in t.values_mut() {
                            *v *= scale;
                        }
                    }
                }
            }
            adam_step(&mut model, &grad_acc, &mut adam, config.learning_rate)?;
        }

        let train_loss = loss_sum / train_examples.len() as f64;
        let val_mse = validation_mse(&model, dataset)?;
        report.epochs.push(EpochStats { train_loss, val_mse });

        let improved = best.as_ref().map_or(true, |(b, _, _)| val_mse < *b);
        if improved {
            best = Some((val_mse, model.clone(), epoch));
        } else if let Some((_, _, best_epoch)) = &best {
            if epoch - best_epoch >= config.patience {
                break;
            }
        }
    }

    if let Some((_, best_model, best_epoch)) = best {
        model = best_model;
        report.best_epoch = Some(best_epoch);
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Pick the candidate with the lowest free-running validation MSE; exact ties
/// go to the variant that sorts first (pi1 before pi2 before pi3).
pub fn select_pi(
    candidates: &[ForecastModel],
    dataset: &WindowedDataset,
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::Contract("no candidate models to select from".into()));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for model in candidates {
        check_dataset(&model.config, dataset)?;
        scores.push(validation_mse(model, dataset)?);
    }
    let mut winner = 0;
    for (idx, score) in scores.iter().enumerate().skip(1) {
        let best = scores[winner];
        let better = *score < best
            || (*score == best
                && variant_rank(candidates[idx].config.variant)
                    < variant_rank(candidates[winner].config.variant));
        if better {
            winner = idx;
        }
    }
    Ok((winner, scores))
}

fn variant_rank(v: Variant) -> usize {
    Variant::ALL.iter().position(|x| *x == v).expect("known variant")
}
