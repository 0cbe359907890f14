use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use patchbag::data::{self, Dataset, PatchBag};
use patchbag::model::{checkpoint, ModelParams, TagSchema, Variant};
use patchbag::preprocess::{extract_patches, Featurizer, Image};
use patchbag::train::{self, plot, ImageBag};
use patchbag::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Part, RunConfig};
use crate::Common;

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Loads the config file (or defaults), applies the thread cap and validates.
fn setup(common: &Common, apply: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    apply(&mut cfg);
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        // a second initialisation only happens in-process and is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    log::debug!("effective config: {cfg:?}");
    Ok(cfg)
}

fn required(value: Option<PathBuf>, field: &str) -> Result<PathBuf> {
    value.ok_or_else(|| config_error(field, format!("no --{field} flag and no `{field}` in the config")))
}

fn existing_dir(value: Option<PathBuf>, field: &str) -> Result<PathBuf> {
    let p = required(value, field)?;
    if !p.is_dir() {
        return Err(config_error(field, format!("{} is not a directory", p.display())));
    }
    Ok(p)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Integrity(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn select(dataset: &Dataset, cfg: &RunConfig, part: Part) -> Result<Dataset> {
    if part == Part::All {
        return Ok(dataset.clone());
    }
    let (tr, va, te) = data::split(dataset, cfg.split.ratios(), cfg.split.seed)?;
    Ok(match part {
        Part::Train => tr,
        Part::Val => va,
        Part::Test => te,
        Part::All => unreachable!(),
    })
}

pub fn synth(common: &Common, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let cfg = setup(common, |c| {
        if let Some(s) = seed {
            c.synth.seed = s;
        }
        if out.is_some() {
            c.out = out;
        }
    })?;
    let out = required(cfg.out.clone(), "out")?;
    let dataset = data::generate(&cfg.synth)?;
    data::write_bags(&dataset, &out)?;
    log::info!("wrote {} bags to {}", dataset.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct SplitIds<'a> {
    train: Vec<&'a str>,
    val: Vec<&'a str>,
    test: Vec<&'a str>,
}

pub fn train(
    common: &Common,
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    heads: Option<usize>,
    variant: Option<Variant>,
) -> Result<()> {
    let cfg = setup(common, |c| {
        if data_dir.is_some() {
            c.data = data_dir;
        }
        if out.is_some() {
            c.out = out;
        }
        if let Some(s) = seed {
            c.train.seed = s;
        }
        if let Some(h) = heads {
            c.train.heads = h;
        }
        if let Some(v) = variant {
            c.train.variant = v;
        }
    })?;
    let data_dir = existing_dir(cfg.data.clone(), "data")?;
    let out = required(cfg.out.clone(), "out")?;
    let dataset = data::read_bags(&data_dir)?;
    cfg.train.dims(dataset.feature_dim).validate()?;
    let (tr, va, te) = data::split(&dataset, cfg.split.ratios(), cfg.split.seed)?;
    log::info!(
        "training {} arm with {} heads on {}/{}/{} bags",
        cfg.train.variant,
        cfg.train.heads,
        tr.len(),
        va.len(),
        te.len()
    );
    let outcome = train::train_bags(&tr, &va, &cfg.train)?;

    create_dir(&out)?;
    checkpoint::save(&outcome.best, &out.join("checkpoint"))?;
    train::write_history(&outcome.history, &dataset.schema, &out.join("history.csv"))?;
    fn ids(d: &Dataset) -> Vec<&str> {
        d.bags.iter().map(|b| b.id.as_str()).collect()
    }
    let ids = SplitIds {
        train: ids(&tr),
        val: ids(&va),
        test: ids(&te),
    };
    write_json(&out.join("split.json"), &ids)?;
    write_json(&out.join("config.json"), &cfg)?;
    log::info!("best epoch {}", outcome.best_epoch);
    Ok(())
}

fn load_model_and_data(cfg: &RunConfig) -> Result<(ModelParams, Dataset)> {
    let ckpt = existing_dir(cfg.checkpoint.clone(), "checkpoint")?;
    let data_dir = existing_dir(cfg.data.clone(), "data")?;
    let params = checkpoint::load(&ckpt)?;
    let dataset = data::read_bags_expecting(&data_dir, params.schema())?;
    Ok((params, dataset))
}

pub fn eval(
    common: &Common,
    ckpt: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    split: Option<Part>,
) -> Result<()> {
    let cfg = setup(common, |c| {
        if ckpt.is_some() {
            c.checkpoint = ckpt;
        }
        if data_dir.is_some() {
            c.data = data_dir;
        }
        if out.is_some() {
            c.out = out;
        }
        if let Some(s) = split {
            c.eval.split = s;
        }
    })?;
    let out = required(cfg.out.clone(), "out")?;
    let (params, dataset) = load_model_and_data(&cfg)?;
    let part = select(&dataset, &cfg, cfg.eval.split)?;
    let report = train::evaluate_dataset(&params, &part)?;
    create_dir(&out)?;
    write_json(&out.join("report.json"), &report)?;
    for t in &report.tasks {
        let path = out.join(format!("confusion_{}.svg", t.task));
        let svg = plot::confusion_svg(&format!("{} (row-normalized)", t.task), &t.classes, &t.confusion);
        fs::write(&path, svg).map_err(|e| io_error(&path, e))?;
        if !t.undefined_f1.is_empty() {
            log::warn!("{}: classes never seen or predicted: {:?}", t.task, t.undefined_f1);
        }
    }
    println!(
        "average macro F1 {:.4}, average micro F1 {:.4}",
        report.average_macro_f1, report.average_micro_f1
    );
    Ok(())
}

pub fn export(
    common: &Common,
    ckpt: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    split: Option<Part>,
    no_svg: bool,
) -> Result<()> {
    let cfg = setup(common, |c| {
        if ckpt.is_some() {
            c.checkpoint = ckpt;
        }
        if data_dir.is_some() {
            c.data = data_dir;
        }
        if out.is_some() {
            c.out = out;
        }
        if let Some(s) = split {
            c.export.split = s;
        }
        if no_svg {
            c.export.svg = false;
        }
    })?;
    let out = required(cfg.out.clone(), "out")?;
    let (params, dataset) = load_model_and_data(&cfg)?;
    let part = select(&dataset, &cfg, cfg.export.split)?;
    let records = train::export_attention(&params, &part, &out, cfg.export.svg)?;
    log::info!("exported rankings for {} bags", records.len());
    Ok(())
}

type LabelFile = BTreeMap<String, BTreeMap<String, String>>;

fn resolve_labels(schema: &TagSchema, stem: &str, labels: &LabelFile) -> Result<Vec<usize>> {
    let Some(entry) = labels.get(stem) else {
        log::warn!("{stem}: no labels given, using the first class of every task");
        return Ok(vec![0; schema.num_tasks()]);
    };
    let mut out = vec![0; schema.num_tasks()];
    for (task, class) in entry {
        let k = schema
            .task_index(task)
            .ok_or_else(|| config_error("preprocess.labels", format!("{stem}: unknown task `{task}`")))?;
        out[k] = schema.tasks()[k]
            .classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| {
                config_error(
                    "preprocess.labels",
                    format!("{stem}: `{class}` is not a class of `{task}`"),
                )
            })?;
    }
    Ok(out)
}

pub fn preprocess(common: &Common, data_dir: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let cfg = setup(common, |c| {
        if data_dir.is_some() {
            c.data = data_dir;
        }
        if out.is_some() {
            c.out = out;
        }
        if let Some(s) = seed {
            c.preprocess.seed = s;
        }
    })?;
    let p = &cfg.preprocess;
    let input = existing_dir(cfg.data.clone(), "data")?;
    let out = required(cfg.out.clone(), "out")?;
    let labels: LabelFile = match &p.labels {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                file: path.clone(),
                field: "labels".into(),
                message: e.to_string(),
            })?
        }
        None => LabelFile::new(),
    };

    let mut images: Vec<PathBuf> = fs::read_dir(&input)
        .map_err(|e| io_error(&input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")))
        .collect();
    images.sort();
    if images.is_empty() {
        return Err(config_error("data", format!("no .ppm or .pgm files in {}", input.display())));
    }

    let featurizer = Featurizer::init(p.hidden, p.feature_dim, p.seed)?;
    let bags = images
        .par_iter()
        .enumerate()
        .map(|(i, path)| -> Result<PatchBag> {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let image = Image::read_pnm(path)?;
            let patches = extract_patches(&image, p.patches, p.window, p.seed.wrapping_add((i as u64) << 32))
                .inspect_err(|e| log::error!("{}: {e}", path.display()))?;
            let bag = ImageBag::from_patches(&stem, &patches, resolve_labels(&p.schema, &stem, &labels)?)?;
            Ok(PatchBag {
                features: featurizer.features(&bag.inputs)?,
                id: bag.id,
                labels: bag.labels,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(p.schema.clone(), p.feature_dim, bags)?;
    data::write_bags(&dataset, &out)?;
    log::info!("wrote {} bags of {} patches to {}", dataset.len(), p.patches, out.display());
    Ok(())
}
