//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use patchbag::data::{PatchBag, SyntheticData};
use patchbag::model::{ModelDims, ModelParams, TagSchema, TagTask, Variant};
use patchbag::train::{multi_task_loss, Network};
use patchbag::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn schema(classes: &[usize]) -> TagSchema {
    TagSchema::new(
        classes
            .iter()
            .enumerate()
            .map(|(k, &n)| TagTask {
                name: format!("task{k}"),
                classes: (0..n).map(|c| format!("c{c}")).collect(),
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_bag(rng: &mut ChaCha8Rng, m: usize, d: usize, classes: &[usize]) -> PatchBag {
    let features = (0..m * d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let labels = classes.iter().map(|&c| rng.random_range(0..c)).collect();
    PatchBag::new("bag", m, d, features, labels).unwrap()
}

pub fn dims(d: usize, hidden: usize, heads: usize, variant: Variant) -> ModelDims {
    ModelDims {
        feature_dim: d,
        head_hidden: hidden,
        tag_hidden: hidden,
        heads,
        variant,
    }
}

/// Worst disagreement between tape gradients and central differences of
/// the full multi-task loss over every parameter entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    pub entries: usize,
    pub worst_rel: f64,
    pub failures: usize,
}

fn within(analytic: f64, numeric: f64) -> (bool, f64) {
    let diff = (analytic - numeric).abs();
    let rel = diff / analytic.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
    (diff <= 1e-8 || rel < 1e-4, if diff <= 1e-8 { 0.0 } else { rel })
}

pub fn grad_check<N: Network>(net: &N, sample: &N::Sample, lambdas: &[f64]) -> GradReport {
    let loss_of = |n: &N| {
        let probs = n.predict(sample).unwrap();
        multi_task_loss(&[probs], &[N::labels(sample).to_vec()], lambdas).unwrap()
    };

    let mut g = Graph::new();
    let traced = net.trace(&mut g, sample, true).unwrap();
    let loss = patchbag::train::bag_loss(&mut g, &traced.probs, N::labels(sample), lambdas).unwrap();
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = traced.params.iter().map(|&p| g.grad(p).unwrap().to_vec()).collect();

    let h = 1e-6;
    let mut report = GradReport::default();
    let mut probe = net.clone();
    for (t, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = probe.tensors()[t].data()[i];
            probe.tensors_mut()[t].data_mut()[i] = orig + h;
            let up = loss_of(&probe);
            probe.tensors_mut()[t].data_mut()[i] = orig - h;
            let down = loss_of(&probe);
            probe.tensors_mut()[t].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let (ok, rel) = within(a, numeric);
            report.entries += 1;
            report.worst_rel = report.worst_rel.max(rel);
            if !ok {
                if std::env::var_os("GRADCHECK_VERBOSE").is_some() {
                    eprintln!("tensor {t} entry {i}: analytic {a} numeric {numeric}");
                }
                report.failures += 1;
            }
        }
    }
    report
}

/// Gradient check of the full gated model at the reference small size
/// (D=6, D'=4, M=4, h=2, K=2).
pub fn small_model_grad_check(seed: u64, variant: Variant) -> GradReport {
    let classes = [3, 4];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(dims(6, 4, 2, variant), schema(&classes), seed).unwrap();
    let bag = random_bag(&mut rng, 4, 6, &classes);
    let lambdas = [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)];
    grad_check(&params, &bag, &lambdas)
}

/// Metrics computed straight from their definitions.
#[derive(Debug, Clone)]
pub struct OracleMetrics {
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub confusion: Vec<Vec<f64>>,
}

pub fn metric_oracle(classes: usize, truth: &[usize], pred: &[usize]) -> OracleMetrics {
    let n = truth.len();
    let mut per_class_f1 = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    for c in 0..classes {
        let tp = (0..n).filter(|&i| truth[i] == c && pred[i] == c).count();
        let fp = (0..n).filter(|&i| truth[i] != c && pred[i] == c).count();
        let fn_ = (0..n).filter(|&i| truth[i] == c && pred[i] != c).count();
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let denom = 2 * tp + fp + fn_;
        per_class_f1.push(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 });
    }
    let macro_f1 = per_class_f1.iter().sum::<f64>() / classes as f64;
    let micro_f1 = 2.0 * tp_all as f64 / (2 * tp_all + fp_all + fn_all) as f64;
    let correct = (0..n).filter(|&i| truth[i] == pred[i]).count();
    let confusion = (0..classes)
        .map(|t| {
            let row = (0..n).filter(|&i| truth[i] == t).count();
            (0..classes)
                .map(|p| {
                    let hits = (0..n).filter(|&i| truth[i] == t && pred[i] == p).count();
                    if row == 0 {
                        0.0
                    } else {
                        hits as f64 / row as f64
                    }
                })
                .collect()
        })
        .collect();
    OracleMetrics {
        per_class_f1,
        macro_f1,
        micro_f1,
        accuracy: correct as f64 / n as f64,
        confusion,
    }
}

/// Exhaustive Otsu: the cut maximising `n0·n1·(μ0 − μ1)²`, compared as exact
/// rationals `(N·s0 − n0·S)² / (n0·n1)`; the first maximum wins. Counts must
/// stay small enough for `u128` cross products (about 1000 per bin).
pub fn otsu_oracle(counts: &[u64; 256]) -> u8 {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    let sum: u128 = counts.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let mut best: Option<(usize, u128, u128)> = None;
    for t in 0..256 {
        let n0: u128 = counts[..=t].iter().map(|&c| c as u128).sum();
        let s0: u128 = counts[..=t].iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
        let n1 = total - n0;
        let (num, den) = if n0 == 0 || n1 == 0 {
            (0, 1)
        } else {
            let a = total * s0;
            let b = n0 * sum;
            let diff = a.abs_diff(b);
            (diff * diff, n0 * n1)
        };
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t, num, den));
        }
    }
    best.unwrap().0 as u8
}

/// Bag-level nearest-prototype accuracy per task, averaging each task's
/// known signal patches before matching.
pub fn nearest_prototype_accuracy(synth: &SyntheticData) -> Vec<f64> {
    let ds = &synth.dataset;
    let k_tasks = ds.schema.num_tasks();
    let d = ds.feature_dim;
    let mut correct = vec![0usize; k_tasks];
    for (b, bag) in ds.bags.iter().enumerate() {
        for (k, hits) in correct.iter_mut().enumerate() {
            let mut mean = vec![0.0; d];
            let rows: Vec<usize> = (0..bag.num_patches())
                .filter(|&m| synth.signal_owner[b][m] == Some(k))
                .collect();
            for &m in &rows {
                for (j, v) in mean.iter_mut().enumerate() {
                    *v += bag.features.at(m, j) / rows.len() as f64;
                }
            }
            if nearest(&mean, &synth.prototypes[k]) == bag.labels[k] {
                *hits += 1;
            }
        }
    }
    correct.iter().map(|&c| c as f64 / ds.len() as f64).collect()
}

/// Patch-level nearest-prototype accuracy over every signal patch.
pub fn patch_prototype_accuracy(synth: &SyntheticData) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for (b, bag) in synth.dataset.bags.iter().enumerate() {
        for m in 0..bag.num_patches() {
            if let Some(k) = synth.signal_owner[b][m] {
                total += 1;
                if nearest(bag.features.row(m), &synth.prototypes[k]) == bag.labels[k] {
                    hits += 1;
                }
            }
        }
    }
    hits as f64 / total as f64
}

fn nearest(x: &[f64], prototypes: &[Vec<f64>]) -> usize {
    let dist = |p: &Vec<f64>| x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..prototypes.len())
        .min_by(|&a, &b| dist(&prototypes[a]).total_cmp(&dist(&prototypes[b])))
        .unwrap()
}

pub fn column_mean(t: &Tensor) -> Vec<f64> {
    let (m, d) = (t.rows(), t.cols());
    (0..d).map(|j| (0..m).map(|i| t.at(i, j)).sum::<f64>() / m as f64).collect()
}
