//! Seeded synthetic bags with planted per-task signal patches.
//!
//! Every (task, class) pair owns a fixed unit prototype. A bag samples one
//! class per task, then dedicates `ceil(signal_fraction · M)` patches to each
//! task (distinct patches, assigned round-robin and then shuffled). A signal
//! patch is its task's prototype plus isotropic gaussian noise; every other
//! patch is pure noise.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PatchBag};
use crate::error::{Error, Result};
use crate::model::TagSchema;

/// When a bag has `class_a` in `task_a`, force `class_b` in `task_b` with the
/// given probability. Rules apply in list order; later rules win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationRule {
    pub task_a: String,
    pub class_a: String,
    pub task_b: String,
    pub class_b: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub schema: TagSchema,
    pub feature_dim: usize,
    pub patches: usize,
    pub n_bags: usize,
    pub signal_fraction: f64,
    pub noise_std: f64,
    pub correlations: Vec<CorrelationRule>,
    /// Optional per-task class sampling weights; uniform when absent.
    pub class_weights: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            schema: TagSchema::histology(),
            feature_dim: 64,
            patches: 32,
            n_bags: 2000,
            signal_fraction: 0.25,
            noise_std: 0.25,
            correlations: Vec::new(),
            class_weights: None,
            seed: 7,
        }
    }
}

/// A resolved correlation rule in index form.
#[derive(Debug, Clone, Copy)]
struct Rule {
    task_a: usize,
    class_a: usize,
    task_b: usize,
    class_b: usize,
    probability: f64,
}

impl SynthConfig {
    pub fn signal_patches_per_task(&self) -> usize {
        (self.signal_fraction * self.patches as f64).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve_rules().map(|_| ())
    }

    fn resolve_rules(&self) -> Result<Vec<Rule>> {
        if self.feature_dim == 0 {
            return Err(Error::config("synth.feature_dim", "must be positive"));
        }
        if self.patches == 0 {
            return Err(Error::config("synth.patches", "must be positive"));
        }
        if self.n_bags == 0 {
            return Err(Error::config("synth.n_bags", "must be positive"));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return Err(Error::config(
                "synth.signal_fraction",
                format!("{} is outside (0, 1]", self.signal_fraction),
            ));
        }
        if self.signal_fraction * (self.patches as f64) < 1.0 {
            return Err(Error::config(
                "synth.signal_fraction",
                "signal_fraction · patches must be at least 1",
            ));
        }
        let needed = self.signal_patches_per_task() * self.schema.num_tasks();
        if needed > self.patches {
            return Err(Error::config(
                "synth.signal_fraction",
                format!(
                    "{needed} signal patches needed across tasks but bags hold {}",
                    self.patches
                ),
            ));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("synth.noise_std", "must be positive and finite"));
        }
        if let Some(weights) = &self.class_weights {
            let counts = self.schema.class_counts();
            if weights.len() != counts.len()
                || weights.iter().zip(&counts).any(|(w, &n)| w.len() != n)
            {
                return Err(Error::config(
                    "synth.class_weights",
                    "needs one weight per class of every task",
                ));
            }
            for w in weights {
                if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().sum::<f64>() <= 0.0
                {
                    return Err(Error::config(
                        "synth.class_weights",
                        "weights must be non-negative, finite and not all zero",
                    ));
                }
            }
        }
        let lookup = |task: &str, class: &str| -> Result<(usize, usize)> {
            let k = self.schema.task_index(task).ok_or_else(|| {
                Error::config("synth.correlations", format!("unknown task `{task}`"))
            })?;
            let c = self.schema.tasks()[k]
                .classes
                .iter()
                .position(|x| x == class)
                .ok_or_else(|| {
                    Error::config(
                        "synth.correlations",
                        format!("unknown class `{class}` in task `{task}`"),
                    )
                })?;
            Ok((k, c))
        };
        self.correlations
            .iter()
            .map(|r| {
                if !(0.0..=1.0).contains(&r.probability) {
                    return Err(Error::config(
                        "synth.correlations.probability",
                        format!("{} is outside [0, 1]", r.probability),
                    ));
                }
                let (task_a, class_a) = lookup(&r.task_a, &r.class_a)?;
                let (task_b, class_b) = lookup(&r.task_b, &r.class_b)?;
                Ok(Rule {
                    task_a,
                    class_a,
                    task_b,
                    class_b,
                    probability: r.probability,
                })
            })
            .collect()
    }
}

/// Generated bags plus the generative ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// `prototypes[task][class]` is a unit vector of length `feature_dim`.
    pub prototypes: Vec<Vec<Vec<f64>>>,
    /// Per bag, per patch: the task whose signal the patch carries.
    pub signal_owner: Vec<Vec<Option<usize>>>,
}

pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    generate_with_truth(config).map(|s| s.dataset)
}

pub fn generate_with_truth(config: &SynthConfig) -> Result<SyntheticData> {
    let rules = config.resolve_rules()?;
    let d = config.feature_dim;
    let counts = config.schema.class_counts();
    let noise = Normal::new(0.0, config.noise_std)
        .map_err(|e| Error::config("synth.noise_std", e.to_string()))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let prototypes: Vec<Vec<Vec<f64>>> = counts
        .iter()
        .map(|&n| {
            (0..n)
                .map(|_| loop {
                    let v: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        break v.into_iter().map(|x| x / norm).collect();
                    }
                })
                .collect()
        })
        .collect();

    let samplers: Vec<WeightedIndex<f64>> = match &config.class_weights {
        Some(w) => w
            .iter()
            .map(|w| WeightedIndex::new(w).expect("validated weights"))
            .collect(),
        None => counts
            .iter()
            .map(|&n| WeightedIndex::new(vec![1.0; n]).expect("uniform weights"))
            .collect(),
    };

    let n_signal = config.signal_patches_per_task();
    let k_tasks = counts.len();
    let m = config.patches;

    let bags: Vec<(PatchBag, Vec<Option<usize>>)> = (0..config.n_bags)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);

            let mut labels: Vec<usize> = samplers.iter().map(|s| s.sample(&mut rng)).collect();
            for rule in &rules {
                if labels[rule.task_a] == rule.class_a && rng.random::<f64>() < rule.probability {
                    labels[rule.task_b] = rule.class_b;
                }
            }

            let mut owners: Vec<Option<usize>> = (0..n_signal)
                .flat_map(|_| (0..k_tasks).map(Some))
                .collect();
            owners.resize(m, None);
            owners.shuffle(&mut rng);

            let mut features = Vec::with_capacity(m * d);
            for owner in &owners {
                let proto = owner.map(|k| &prototypes[k][labels[k]]);
                for j in 0..d {
                    let base = proto.map_or(0.0, |p| p[j]);
                    features.push(base + noise.sample(&mut rng));
                }
            }
            let bag = PatchBag::new(format!("bag-{i:05}"), m, d, features, labels)
                .expect("generated bag shape");
            (bag, owners)
        })
        .collect();

    let (bags, signal_owner): (Vec<_>, Vec<_>) = bags.into_iter().unzip();
    Ok(SyntheticData {
        dataset: Dataset::new(config.schema.clone(), d, bags)?,
        prototypes,
        signal_owner,
    })
}
