//! Minibatch SGD on softmax cross-entropy.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::LayerGraph;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// `v <- momentum * v + g`, `W <- W - lr * v`.
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate on the full training set and snapshot every this many steps
    /// (0: only at epoch ends).
    pub eval_every: usize,
    /// Stop at the end of the first epoch whose training accuracy reaches
    /// this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            eval_every: 0,
            stop_at_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    /// Minibatch loss and accuracy of every step, before its update.
    pub steps: Vec<StepRecord>,
    /// Full training-set evaluations.
    pub evals: Vec<StepRecord>,
    /// Snapshots at step 0, powers of two, every `eval_every` steps and the
    /// final step, in increasing step order.
    pub checkpoints: Vec<(usize, LayerGraph)>,
}

/// Mean `-log softmax(f_i)_{y_i}` with max subtraction.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    Ok(softmax_cross_entropy_grad(logits, labels)?.0)
}

/// Loss and its gradient with respect to the logits.
pub fn softmax_cross_entropy_grad(
    logits: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grad = Array2::zeros((n, c));
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        if y >= c {
            return Err(Error::OutOfRange { index: y, limit: c });
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        for (j, v) in row.iter().enumerate() {
            grad[[i, j]] = (v - log_z).exp() / n as f64;
        }
        grad[[i, y]] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Batch loss and exact weight gradients (one flat row-major vector per
/// affine map, in parameter order).
pub fn backward(
    net: &LayerGraph,
    x: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let tape = net.forward_tape(x)?;
    if tape.output.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network output"));
    }
    let (loss, g) = softmax_cross_entropy_grad(tape.output.view(), labels)?;
    Ok((loss, net.backward_tape(&tape, g)))
}

fn accuracy(logits: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let hits = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &y)| crate::network::OutputVector::new(r.to_vec()).argmax() == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Loss and accuracy over a whole dataset.
pub fn evaluate(net: &LayerGraph, data: &Dataset) -> Result<(f64, f64)> {
    const CHUNK: usize = 1024;
    let (mut loss, mut hits) = (0.0, 0.0);
    let n = data.len();
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let x = data.inputs().slice(ndarray::s![start..end, ..]);
        let y = &data.labels()[start..end];
        let out = net.forward_batch(x)?;
        let w = (end - start) as f64;
        loss += softmax_cross_entropy(out.view(), y)? * w;
        hits += accuracy(out.view(), y) * w;
    }
    Ok((loss / n as f64, hits / n as f64))
}

fn snapshot_due(step: usize, eval_every: usize) -> bool {
    step.is_power_of_two() || (eval_every > 0 && step % eval_every == 0)
}

/// Each epoch shuffles with its own seeded stream and
/// visits every sample once in batches of `batch_size` (the last batch may be
/// smaller). A non-finite loss or gradient stops training with
/// [`Error::Diverged`] carrying the weights before that step.
pub fn train(
    mut net: LayerGraph,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(LayerGraph, TrainLog)> {
    cfg.validate()?;
    if data.dim() != net.input_dim() {
        return Err(Error::Dimension {
            expected: net.input_dim(),
            got: data.dim(),
        });
    }
    if data.classes() > net.output_dim() {
        return Err(Error::InvalidArgument(format!(
            "{} classes but the network has {} outputs",
            data.classes(),
            net.output_dim()
        )));
    }
    let mut log = TrainLog::default();
    log.checkpoints.push((0, net.clone()));
    let mut velocity: Vec<Vec<f64>> = net.weights().iter().map(|w| vec![0.0; w.len()]).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(
            cfg.seed,
            rng::domain::SHUFFLE,
            epoch as u64,
        ));
        for batch in order.chunks(cfg.batch_size) {
            let bx = data.inputs().select(Axis(0), batch);
            let by: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
            let tape = net.forward_tape(bx.view());
            let diverged = |net: &LayerGraph| Error::Diverged {
                step,
                last_good: Box::new(net.clone()),
            };
            let tape = match tape {
                Ok(t) if t.output.iter().all(|v| v.is_finite()) => t,
                Ok(_) | Err(Error::NonFinite(_)) => return Err(diverged(&net)),
                Err(e) => return Err(e),
            };
            let (loss, g_out) = softmax_cross_entropy_grad(tape.output.view(), &by)?;
            let grads = net.backward_tape(&tape, g_out);
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(diverged(&net));
            }
            log.steps.push(StepRecord {
                step,
                epoch,
                loss,
                accuracy: accuracy(tape.output.view(), &by),
            });
            for (v, g) in velocity.iter_mut().zip(&grads) {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi = cfg.momentum * *vi + gi;
                }
            }
            let overflow = net.weights().iter().zip(&velocity).any(|(w, v)| {
                w.iter()
                    .zip(v)
                    .any(|(wi, vi)| !(wi - cfg.learning_rate * vi).is_finite())
            });
            if overflow {
                return Err(diverged(&net));
            }
            for (w, v) in net.weights_mut().into_iter().zip(&velocity) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= cfg.learning_rate * vi;
                }
            }
            step += 1;
            if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
                let (l, a) = evaluate(&net, data)?;
                log.evals.push(StepRecord {
                    step,
                    epoch,
                    loss: l,
                    accuracy: a,
                });
            }
            if snapshot_due(step, cfg.eval_every) {
                log.checkpoints.push((step, net.clone()));
            }
        }
        let reached = match cfg.stop_at_accuracy {
            Some(target) => {
                let (l, a) = match log.evals.last() {
                    Some(e) if e.step == step => (e.loss, e.accuracy),
                    _ => {
                        let (l, a) = evaluate(&net, data)?;
                        log.evals.push(StepRecord {
                            step,
                            epoch,
                            loss: l,
                            accuracy: a,
                        });
                        (l, a)
                    }
                };
                if !l.is_finite() {
                    return Err(Error::Diverged {
                        step,
                        last_good: Box::new(net.clone()),
                    });
                }
                a >= target
            }
            None => false,
        };
        if reached {
            break;
        }
    }
    if log.checkpoints.last().map(|c| c.0) != Some(step) {
        log.checkpoints.push((step, net.clone()));
    }
    Ok((net, log))
}
