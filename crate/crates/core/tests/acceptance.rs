//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::{column_mean, dims, metric_oracle, otsu_oracle, random_bag, schema, small_model_grad_check};
use patchbag::data::{generate, generate_with_truth, read_bags, split, write_bags, SplitRatios, SynthConfig, BLOB};
use patchbag::model::{checkpoint, layers, ModelParams, Variant};
use patchbag::preprocess::{otsu_threshold, GrayHistogram};
use patchbag::train::{evaluate_dataset, train_bags, write_history, ConfusionMatrix, TrainConfig};
use patchbag::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut failures, mut entries) = (0.0f64, 0, 0);
    for seed in 0..20 {
        let r = small_model_grad_check(seed, Variant::Gated);
        worst = worst.max(r.worst_rel);
        failures += r.failures;
        entries += r.entries;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < 30.0,
        format!("20 seeds, {entries} entries, {failures} outside tolerance, worst rel {worst:.2e}, {secs:.2}s"),
    )
}

fn attention_properties() -> Outcome {
    let classes = [3, 6, 4];
    let (mut norm_err, mut prob_err, mut perm_err) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = rng.random_range(1..40);
        let params = ModelParams::init(dims(12, 8, 3, Variant::Gated), schema(&classes), seed).unwrap();
        let bag = random_bag(&mut rng, m, 12, &classes);
        let a = params.forward(&bag).unwrap();
        for w in a.attention.head_weights.iter().chain(&a.attention.tag_weights) {
            norm_err = norm_err.max((w.iter().sum::<f64>() - 1.0).abs());
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let b = params.forward(&bag.permuted(&order).unwrap()).unwrap();
        for (pa, pb) in a.probs.iter().zip(&b.probs) {
            prob_err = prob_err.max(max_diff(pa, pb));
        }
        let pairs = a.attention.head_weights.iter().zip(&b.attention.head_weights);
        for (wa, wb) in pairs.chain(a.attention.tag_weights.iter().zip(&b.attention.tag_weights)) {
            let moved: Vec<f64> = order.iter().map(|&i| wa[i]).collect();
            perm_err = perm_err.max(max_diff(&moved, wb));
        }
    }
    outcome(
        norm_err <= 1e-9 && prob_err <= 1e-10 && perm_err <= 1e-10,
        format!("100 bags, |sum-1| {norm_err:.1e}, prob drift {prob_err:.1e}, attention drift {perm_err:.1e}"),
    )
}

fn degenerate_parameters() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m, d, h, hidden) = (9, 7, 3, 5);
    let v = Tensor::from_fn(m, d, |_, _| rng.random_range(-2.0..2.0));
    let mut g = Graph::new();
    let vn = g.constant(v.clone());
    let heads: Vec<_> = (0..h)
        .map(|_| {
            let u = g.constant(Tensor::from_fn(d, hidden, |_, _| rng.random_range(-1.0..1.0)));
            let w = g.constant(Tensor::from_fn(hidden, 1, |_, _| rng.random_range(-1.0..1.0)));
            (u, w)
        })
        .collect();
    let zero_w = g.constant(Tensor::zeros(&[h * d, d]));
    let (out, _) = layers::patch_transform(&mut g, vn, &heads, zero_w).unwrap();
    let relu: Vec<f64> = v.data().iter().map(|x| x.max(0.0)).collect();
    let exact = g.value(out).data().iter().zip(&relu).all(|(a, b)| a.to_bits() == b.to_bits() || (*a == 0.0 && *b == 0.0));

    let transformed = g.value(out).clone();
    let zero_u = g.constant(Tensor::zeros(&[d, hidden]));
    let score = g.constant(Tensor::from_fn(hidden, 1, |_, _| rng.random_range(-1.0..1.0)));
    let (pooled, _) = layers::tag_attention(&mut g, out, zero_u, score).unwrap();
    let mean_err = max_diff(g.value(pooled).data(), &column_mean(&transformed));
    outcome(
        exact && mean_err <= 1e-12,
        format!("zero mixing gives ReLU(V) exactly: {exact}, zero tag map gives the mean within {mean_err:.1e}"),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut micro_is_acc) = (0.0f64, true);
    for _ in 0..100 {
        let classes = rng.random_range(1..17);
        let n = rng.random_range(1..300);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let pred: Vec<usize> = (0..n)
            .map(|i| if rng.random_bool(0.6) { truth[i] } else { rng.random_range(0..classes) })
            .collect();
        let cm = ConfusionMatrix::from_pairs(classes, &truth, &pred).unwrap();
        let o = metric_oracle(classes, &truth, &pred);
        worst = worst
            .max((cm.macro_f1() - o.macro_f1).abs())
            .max((cm.micro_f1() - o.micro_f1).abs());
        for (row, orow) in cm.normalized().iter().zip(&o.confusion) {
            worst = worst.max(max_diff(row, orow));
        }
        micro_is_acc &= cm.micro_f1() == cm.accuracy();
    }
    outcome(
        worst <= 1e-12 && micro_is_acc,
        format!("100 sets, worst deviation {worst:.1e}, micro F1 equals accuracy: {micro_is_acc}"),
    )
}

fn otsu_exhaustive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hists = Vec::new();
    while hists.len() < 1000 {
        let density = rng.random_range(0.02..1.0);
        let mut h = [0u64; 256];
        for c in h.iter_mut() {
            if rng.random_bool(density) {
                *c = rng.random_range(1..1000);
            }
        }
        if h.iter().filter(|&&c| c > 0).count() >= 2 {
            hists.push(h);
        }
    }
    let start = Instant::now();
    let found: Vec<u8> = hists
        .iter()
        .map(|h| otsu_threshold(&GrayHistogram::new(*h)).unwrap().threshold)
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let mismatches = hists.iter().zip(&found).filter(|(h, t)| otsu_oracle(h) != **t).count();
    outcome(
        mismatches == 0 && secs < 5.0,
        format!("1000 histograms, {mismatches} mismatches, {secs:.3}s"),
    )
}

struct ArmRun {
    best_val: f64,
    test: f64,
}

fn run_arm(heads: usize, seed: u64) -> ArmRun {
    let ds = generate(&SynthConfig::default()).unwrap();
    let (tr, va, te) = split(&ds, SplitRatios::default(), 7).unwrap();
    let cfg = TrainConfig {
        lr: 3e-3,
        epochs: 50,
        heads,
        seed,
        ..TrainConfig::default()
    };
    let out = train_bags(&tr, &va, &cfg).unwrap();
    let best_val = out
        .history
        .iter()
        .filter_map(|r| r.val_average_macro_f1())
        .fold(0.0, f64::max);
    let test = evaluate_dataset(&out.best, &te).unwrap().average_macro_f1;
    ArmRun { best_val, test }
}

fn learnability(pt3_first: &ArmRun) -> Outcome {
    let oracle = generate_with_truth(&SynthConfig::default()).unwrap();
    let per_task = common::nearest_prototype_accuracy(&oracle);
    let oracle_ok = per_task.iter().all(|&a| a > 0.99);
    outcome(
        oracle_ok && pt3_first.best_val >= 0.90,
        format!(
            "oracle accuracy {per_task:.3?}, 3-head model best validation macro F1 {:.4} (need 0.90)",
            pt3_first.best_val
        ),
    )
}

fn ablation(pt3: &[ArmRun], pt1: &[ArmRun], mta: &[ArmRun]) -> Outcome {
    let mean = |r: &[ArmRun]| r.iter().map(|x| x.test).sum::<f64>() / r.len() as f64;
    let (a, b, c) = (mean(pt3), mean(pt1), mean(mta));
    outcome(
        a >= b && b >= c - 0.01,
        format!("test macro F1 over 3 seeds: 3 heads {a:.4}, 1 head {b:.4}, tag attention only {c:.4}"),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let synth = SynthConfig {
        n_bags: 60,
        patches: 16,
        feature_dim: 16,
        ..SynthConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        lr: 3e-3,
        seed: 4,
        ..TrainConfig::default()
    };
    let run = |root: &Path| {
        let ds = generate(&synth).unwrap();
        let (tr, va, te) = split(&ds, SplitRatios::default(), 7).unwrap();
        let out = train_bags(&tr, &va, &cfg).unwrap();
        checkpoint::save(&out.best, &root.join("ckpt")).unwrap();
        write_history(&out.history, &ds.schema, &root.join("history.csv")).unwrap();
        let report = evaluate_dataset(&out.best, &te).unwrap();
        fs::write(root.join("report.json"), serde_json::to_vec_pretty(&report).unwrap()).unwrap();
        let mut all = dir_bytes(root);
        all.extend(dir_bytes(&root.join("ckpt")));
        all
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (run(a.path()), run(b.path()));
    let files = ra.len();
    outcome(
        ra == rb && files > 3,
        format!("{files} files compared, identical: {}", ra == rb),
    )
}

fn round_trips() -> Outcome {
    let ds = generate(&SynthConfig {
        n_bags: 30,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bags(&ds, dir.path()).unwrap();
    let bags_ok = read_bags(dir.path()).unwrap() == ds;
    let blob = dir.path().join(BLOB);
    let mut bytes = fs::read(&blob).unwrap();
    bytes[4096] ^= 0x10;
    fs::write(&blob, &bytes).unwrap();
    let corruption_caught = read_bags(dir.path()).is_err();

    let params = ModelParams::init(dims(64, 32, 3, Variant::Gated), ds.schema.clone(), 2).unwrap();
    let ck = tempfile::tempdir().unwrap();
    checkpoint::save(&params, ck.path()).unwrap();
    let loaded = checkpoint::load(ck.path()).unwrap();
    let ckpt_ok = loaded == params && loaded.forward(&ds.bags[0]).unwrap() == params.forward(&ds.bags[0]).unwrap();
    let matrix = ck.path().join("tag0.classifier.bin");
    let truncated = fs::read(&matrix).map(|b| fs::write(&matrix, &b[..b.len() / 2]).is_ok()).unwrap_or(false);
    let ckpt_caught = truncated && checkpoint::load(ck.path()).is_err();
    outcome(
        bags_ok && corruption_caught && ckpt_ok && ckpt_caught,
        format!(
            "bags equal {bags_ok}, flipped byte caught {corruption_caught}, checkpoint equal {ckpt_ok}, truncated matrix caught {ckpt_caught}"
        ),
    )
}

fn report(n: usize, name: &str, o: &Outcome) {
    println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let mut all = true;
    let mut check = |n: usize, name: &str, o: Outcome| {
        report(n, name, &o);
        all &= o.pass;
    };
    check(1, "gradient check", gradient_check());
    check(2, "attention normalisation and permutation invariance", attention_properties());
    check(3, "degenerate parameters", degenerate_parameters());
    check(4, "metric oracles", metric_oracles());
    check(5, "otsu exhaustive search", otsu_exhaustive());

    let start = Instant::now();
    let seeds = [1u64, 2, 3];
    let pt3: Vec<ArmRun> = seeds.iter().map(|&s| run_arm(3, s)).collect();
    let pt1: Vec<ArmRun> = seeds.iter().map(|&s| run_arm(1, s)).collect();
    let mta: Vec<ArmRun> = seeds.iter().map(|&s| run_arm(0, s)).collect();
    eprintln!("ablation runs took {:.0}s", start.elapsed().as_secs_f64());
    check(6, "learnability", learnability(&pt3[0]));
    check(7, "ablation ordering", ablation(&pt3, &pt1, &mta));
    check(8, "reproducibility", reproducibility());
    check(9, "round trips", round_trips());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
