//! Per-bag patch rankings by tag attention.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{AttentionRecord, ModelParams};
use crate::train::plot::attention_svg;

/// Patch indices sorted by weight, largest first; equal weights keep index
/// order.
pub fn rank_patches(weights: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx
}

/// One row of a ranking file.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPatch {
    pub task: String,
    pub rank: usize,
    pub patch: usize,
    pub weight: f64,
}

fn file_stem(bag_id: &str) -> String {
    bag_id
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect()
}

pub fn ranking_path(out_dir: &Path, bag_id: &str) -> PathBuf {
    out_dir.join(format!("{}.csv", file_stem(bag_id)))
}

/// Writes `task,rank,patch,weight` rows for every task of one record.
/// Weights use the shortest representation that reads back bit-exactly.
pub fn write_ranking(record: &AttentionRecord, task_names: &[String], path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["task", "rank", "patch", "weight"]).map_err(csv_err)?;
    for (name, weights) in task_names.iter().zip(&record.tag_weights) {
        for (rank, patch) in rank_patches(weights).into_iter().enumerate() {
            w.write_record([
                name.clone(),
                rank.to_string(),
                patch.to_string(),
                weights[patch].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ranking(path: &Path) -> Result<Vec<RankedPatch>> {
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize, name: &str| -> Result<&str> {
            rec.get(i).ok_or_else(|| {
                Error::parse(path, name, format!("row {} has no `{name}` column", line + 1))
            })
        };
        let bad = |name: &str, v: &str| Error::parse(path, name, format!("row {}: `{v}`", line + 1));
        let rank = field(1, "rank")?;
        let patch = field(2, "patch")?;
        let weight = field(3, "weight")?;
        out.push(RankedPatch {
            task: field(0, "task")?.to_string(),
            rank: rank.parse().map_err(|_| bad("rank", rank))?,
            patch: patch.parse().map_err(|_| bad("patch", patch))?,
            weight: weight.parse().map_err(|_| bad("weight", weight))?,
        });
    }
    Ok(out)
}

/// Runs the model on every bag and writes one ranking CSV per bag (and an
/// SVG bar chart when `svg` is set) into `out_dir`.
pub fn export_attention(params: &ModelParams, dataset: &Dataset, out_dir: &Path, svg: bool) -> Result<Vec<AttentionRecord>> {
    params.schema().ensure_matches(&dataset.schema)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let names: Vec<String> = params.schema().tasks().iter().map(|t| t.name.clone()).collect();
    dataset
        .bags
        .par_iter()
        .map(|bag| {
            let record = params.forward(bag)?.attention;
            write_ranking(&record, &names, &ranking_path(out_dir, &bag.id))?;
            if svg {
                let series: Vec<(String, Vec<f64>)> =
                    names.iter().cloned().zip(record.tag_weights.iter().cloned()).collect();
                let path = out_dir.join(format!("{}.svg", file_stem(&bag.id)));
                fs::write(&path, attention_svg(&bag.id, &series)).map_err(|e| Error::io(&path, e))?;
            }
            Ok(record)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_keep_natural_order() {
        assert_eq!(rank_patches(&[0.25; 4]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn one_hot_leads() {
        let mut w = vec![0.0; 10];
        w[7] = 1.0;
        let r = rank_patches(&w);
        assert_eq!(r[0], 7);
        assert_eq!(&r[1..], &[0, 1, 2, 3, 4, 5, 6, 8, 9]);
    }

    #[test]
    fn descending_with_ties_by_index() {
        assert_eq!(rank_patches(&[0.1, 0.3, 0.3, 0.2, 0.1]), vec![1, 2, 3, 0, 4]);
    }

    #[test]
    fn ranking_file_round_trip() {
        let record = AttentionRecord {
            bag_id: "b".into(),
            head_weights: vec![],
            tag_weights: vec![vec![0.1, 0.6, 0.3], vec![1.0 / 3.0; 3]],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        write_ranking(&record, &["s".into(), "o".into()], &path).unwrap();
        let rows = read_ranking(&path).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[0].patch, rows[0].weight), (1, 0.6));
        assert_eq!(rows[3].weight, 1.0 / 3.0);
    }
}
