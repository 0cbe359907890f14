//! Mini-batch training loop and evaluation.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PatchBag};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{argmax, ModelDims, ModelParams, TagSchema, Variant};
use crate::tensor::Tensor;
use crate::train::adam::{adam_step, AdamConfig, AdamState};
use crate::train::loss::bag_loss;
use crate::train::metrics::MetricsReport;

/// Optimiser, schedule and architecture settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Per-task loss weights; empty means 1 for every task.
    pub lambdas: Vec<f64>,
    pub epochs: usize,
    /// Bags per optimiser step.
    pub batch_size: usize,
    pub seed: u64,
    pub variant: Variant,
    pub heads: usize,
    pub head_hidden: usize,
    pub tag_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            lambdas: Vec::new(),
            epochs: 50,
            batch_size: 8,
            seed: 0,
            variant: Variant::Gated,
            heads: 3,
            head_hidden: 32,
            tag_hidden: 32,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn dims(&self, feature_dim: usize) -> ModelDims {
        ModelDims {
            feature_dim,
            head_hidden: self.head_hidden,
            tag_hidden: self.tag_hidden,
            heads: self.heads,
            variant: self.variant,
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.head_hidden == 0 || self.tag_hidden == 0 {
            return Err(Error::config("train.head_hidden", "hidden widths must be positive"));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::config("train.lambdas", "weights must be finite and >= 0"));
        }
        if !self.lambdas.is_empty() && self.lambdas.iter().all(|&l| l == 0.0) {
            return Err(Error::config("train.lambdas", "at least one weight must be positive"));
        }
        Ok(())
    }

    /// Loss weights resolved against a schema with `tasks` tasks.
    pub fn resolved_lambdas(&self, tasks: usize) -> Result<Vec<f64>> {
        if self.lambdas.is_empty() {
            return Ok(vec![1.0; tasks]);
        }
        if self.lambdas.len() != tasks {
            return Err(Error::config(
                "train.lambdas",
                format!("{} weights given for {tasks} tasks", self.lambdas.len()),
            ));
        }
        Ok(self.lambdas.clone())
    }
}

/// Parameter leaves and per-task probability nodes of one recorded sample.
#[derive(Debug, Clone)]
pub struct Traced {
    pub probs: Vec<NodeId>,
    /// Same order as [`Network::tensors`].
    pub params: Vec<NodeId>,
}

/// Anything the training loop can optimise: a set of tensors plus a way to
/// record a forward pass for one labelled sample.
pub trait Network: Clone + Send + Sync {
    type Sample: Send + Sync;

    fn schema(&self) -> &TagSchema;
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    fn labels(sample: &Self::Sample) -> &[usize];
    fn trace(&self, g: &mut Graph, sample: &Self::Sample, trainable: bool) -> Result<Traced>;

    /// Per-task class probabilities.
    fn predict(&self, sample: &Self::Sample) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let traced = self.trace(&mut g, sample, false)?;
        Ok(traced.probs.iter().map(|&p| g.value(p).data().to_vec()).collect())
    }
}

impl Network for ModelParams {
    type Sample = PatchBag;

    fn schema(&self) -> &TagSchema {
        ModelParams::schema(self)
    }

    fn tensors(&self) -> Vec<&Tensor> {
        ModelParams::tensors(self)
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        ModelParams::tensors_mut(self)
    }

    fn labels(sample: &PatchBag) -> &[usize] {
        &sample.labels
    }

    fn trace(&self, g: &mut Graph, sample: &PatchBag, trainable: bool) -> Result<Traced> {
        let v = g.constant(sample.features.clone());
        let t = ModelParams::trace(self, g, v, trainable)?;
        Ok(Traced {
            probs: t.probs,
            params: t.params,
        })
    }
}

/// One line of the training history. Epoch 0 describes the initial
/// parameters; later epochs report the mean loss seen during the epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Empty when there is no validation split.
    pub val_macro_f1: Vec<f64>,
    pub val_micro_f1: Vec<f64>,
}

impl EpochRecord {
    pub fn val_average_macro_f1(&self) -> Option<f64> {
        (!self.val_macro_f1.is_empty())
            .then(|| self.val_macro_f1.iter().sum::<f64>() / self.val_macro_f1.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<N> {
    /// Parameters of the epoch with the best average validation Macro F1
    /// (the last epoch when there is no validation split).
    pub best: N,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Loss and parameter gradients of one sample.
fn sample_gradients<N: Network>(net: &N, sample: &N::Sample, lambdas: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let traced = net.trace(&mut g, sample, true)?;
    let loss = bag_loss(&mut g, &traced.probs, N::labels(sample), lambdas)?;
    let value = g.value(loss).data()[0];
    g.backward(loss)?;
    let grads = traced
        .params
        .iter()
        .map(|&p| {
            g.take_grad(p)
                .ok_or_else(|| Error::Contract("parameter leaf lost its gradient".into()))
        })
        .collect::<Result<_>>()?;
    Ok((value, grads))
}

fn sample_loss<N: Network>(net: &N, sample: &N::Sample, lambdas: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    let traced = net.trace(&mut g, sample, false)?;
    let loss = bag_loss(&mut g, &traced.probs, N::labels(sample), lambdas)?;
    Ok(g.value(loss).data()[0])
}

/// Mean weighted loss over `samples`, evaluated in parallel.
pub fn mean_loss<N: Network>(net: &N, samples: &[N::Sample], lambdas: &[f64]) -> Result<f64> {
    let losses = samples
        .par_iter()
        .map(|s| sample_loss(net, s, lambdas))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Arg-max predictions and metrics over `samples`.
pub fn evaluate<N: Network>(net: &N, samples: &[N::Sample]) -> Result<MetricsReport> {
    let predicted = samples
        .par_iter()
        .map(|s| net.predict(s).map(|p| p.iter().map(|d| argmax(d)).collect()))
        .collect::<Result<Vec<Vec<usize>>>>()?;
    let truth: Vec<Vec<usize>> = samples.iter().map(|s| N::labels(s).to_vec()).collect();
    MetricsReport::from_predictions(net.schema(), &truth, &predicted)
}

pub fn evaluate_dataset(params: &ModelParams, dataset: &Dataset) -> Result<MetricsReport> {
    params.schema().ensure_matches(&dataset.schema)?;
    evaluate(params, &dataset.bags)
}

/// Trains `init` with Adam on mini-batches of `train`, selecting the best
/// epoch on `val`. Deterministic for a given config: shuffling is seeded and
/// gradients are reduced in sample order.
pub fn train<N: Network>(
    init: N,
    train: &[N::Sample],
    val: &[N::Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome<N>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::config("split.train", "training split is empty"));
    }
    let lambdas = config.resolved_lambdas(init.schema().num_tasks())?;
    let adam = config.adam();

    let mut net = init;
    let mut state = AdamState::new(&net.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let record = |net: &N, epoch: usize, train_loss: f64| -> Result<EpochRecord> {
        let (val_macro_f1, val_micro_f1) = if val.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let r = evaluate(net, val)?;
            (r.macro_f1(), r.micro_f1())
        };
        Ok(EpochRecord {
            epoch,
            train_loss,
            val_macro_f1,
            val_micro_f1,
        })
    };

    let first = record(&net, 0, mean_loss(&net, train, &lambdas)?)?;
    log::info!(
        "epoch 0: train loss {:.5}, val macro F1 {:?}",
        first.train_loss,
        first.val_average_macro_f1()
    );
    let mut best = (net.clone(), 0usize, first.val_average_macro_f1());
    let mut history = vec![first];

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| sample_gradients(&net, &train[i], &lambdas))
                .collect::<Result<Vec<_>>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut tensors = net.tensors_mut();
            for (p, tensor) in tensors.iter_mut().enumerate() {
                let mut sum = vec![0.0; tensor.numel()];
                for (_, grads) in &results {
                    for (s, g) in sum.iter_mut().zip(&grads[p]) {
                        *s += g;
                    }
                }
                sum.iter_mut().for_each(|s| *s *= scale);
                tensor.set_grad(sum)?;
            }
            adam_step(&mut tensors, &mut state, &adam)?;
            for t in tensors.iter_mut() {
                t.clear_grad();
            }
            loss_sum += results.iter().map(|(l, _)| l).sum::<f64>();
        }
        if net.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        let rec = record(&net, epoch, loss_sum / train.len() as f64)?;
        log::info!(
            "epoch {epoch}: train loss {:.5}, val macro F1 {:?}",
            rec.train_loss,
            rec.val_average_macro_f1()
        );
        let improved = match (rec.val_average_macro_f1(), best.2) {
            (Some(now), Some(prev)) => now > prev,
            (None, _) => true,
            (Some(_), None) => true,
        };
        if improved {
            best = (net.clone(), epoch, rec.val_average_macro_f1());
        }
        history.push(rec);
    }
    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        history,
    })
}

/// Initialises a model from the config and trains it on feature bags.
pub fn train_bags(train_set: &Dataset, val_set: &Dataset, config: &TrainConfig) -> Result<TrainOutcome<ModelParams>> {
    config.validate()?;
    train_set.schema.ensure_matches(&val_set.schema)?;
    if !val_set.is_empty() && val_set.feature_dim != train_set.feature_dim {
        return Err(Error::dim(
            "validation features",
            &[val_set.feature_dim],
            &[train_set.feature_dim],
        ));
    }
    let init = ModelParams::init(
        config.dims(train_set.feature_dim),
        train_set.schema.clone(),
        config.seed,
    )?;
    train(init, &train_set.bags, &val_set.bags, config)
}

/// Writes the history as CSV: `epoch, train_loss`, then validation Macro F1
/// and Micro F1 per task.
pub fn write_history(history: &[EpochRecord], schema: &TagSchema, path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["epoch".to_string(), "train_loss".to_string()];
    for t in schema.tasks() {
        header.push(format!("val_macro_f1_{}", t.name));
    }
    for t in schema.tasks() {
        header.push(format!("val_micro_f1_{}", t.name));
    }
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(&header).map_err(csv_err)?;
    for r in history {
        let mut row = vec![r.epoch.to_string(), r.train_loss.to_string()];
        for k in 0..schema.num_tasks() {
            row.push(r.val_macro_f1.get(k).map(f64::to_string).unwrap_or_default());
        }
        for k in 0..schema.num_tasks() {
            row.push(r.val_micro_f1.get(k).map(f64::to_string).unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(io)
}
