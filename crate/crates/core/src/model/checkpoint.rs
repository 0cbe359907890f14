//! Checkpoint directories.
//!
//! A checkpoint is a directory holding a `manifest` text file and one
//! `<matrix-name>.bin` blob per parameter matrix, each a row-major run of
//! little-endian `f64`. The manifest records the format version, variant,
//! dimensions, seed, tag schema and the ordered matrix list.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::{decode_f64, encode_f64, Manifest, ManifestWriter};
use crate::model::{ModelDims, ModelParams, TagSchema, Variant};
use crate::tensor::Tensor;

pub const FORMAT: &str = "patchbag-checkpoint";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest";

pub fn save(params: &ModelParams, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dims = params.dims();
    let mut w = ManifestWriter::new();
    w.kv("format", FORMAT)
        .kv("format_version", FORMAT_VERSION)
        .kv("variant", dims.variant)
        .kv("feature_dim", dims.feature_dim)
        .kv("head_hidden", dims.head_hidden)
        .kv("tag_hidden", dims.tag_hidden)
        .kv("heads", dims.heads)
        .kv("seed", params.seed());
    params.schema().write_manifest(&mut w);
    for (name, t) in params.named_tensors() {
        let file = format!("{name}.bin");
        let mut bytes = Vec::new();
        encode_f64(t.data(), &mut bytes);
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
        w.line(
            "matrix",
            &[name, t.rows().to_string(), t.cols().to_string(), file],
        );
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, w.finish()).map_err(|e| Error::io(path, e))
}

pub fn load(dir: &Path) -> Result<ModelParams> {
    let m = Manifest::read(&dir.join(MANIFEST))?;
    if m.value("format")? != FORMAT {
        return Err(m.error("format", format!("expected `{FORMAT}`")));
    }
    let version: u32 = m.parse_value("format_version")?;
    if version != FORMAT_VERSION {
        return Err(m.error(
            "format_version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let variant: Variant = m
        .value("variant")?
        .parse()
        .map_err(|e: Error| m.error("variant", e.to_string()))?;
    let dims = ModelDims {
        feature_dim: m.parse_value("feature_dim")?,
        head_hidden: m.parse_value("head_hidden")?,
        tag_hidden: m.parse_value("tag_hidden")?,
        heads: m.parse_value("heads")?,
        variant,
    };
    let seed: u64 = m.parse_value("seed")?;
    let schema = TagSchema::from_manifest(&m)?;
    let mut params =
        ModelParams::zeros(dims, schema).map_err(|e| m.error("dims", e.to_string()))?;
    params.set_seed(seed);

    let layout: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let entries: Vec<_> = m.all("matrix").collect();
    if entries.len() != layout.len() {
        return Err(m.error(
            "matrix",
            format!("expected {} matrices, found {}", layout.len(), entries.len()),
        ));
    }
    for ((slot, (name, shape)), line) in params.tensors_mut().into_iter().zip(&layout).zip(entries) {
        let found_name = line.fields.first().map(String::as_str).unwrap_or("");
        let rows: usize = m.parse_field(line, 1, "matrix.rows")?;
        let cols: usize = m.parse_field(line, 2, "matrix.cols")?;
        let file: String = m.parse_field(line, 3, "matrix.file")?;
        if found_name != name || [rows, cols] != shape[..] {
            return Err(m.error(
                "matrix",
                format!(
                    "line {}: expected {name} {shape:?}, found {found_name} [{rows}, {cols}]",
                    line.number
                ),
            ));
        }
        if file.contains(['/', '\\']) {
            return Err(m.error("matrix.file", format!("`{file}` must be a plain file name")));
        }
        let path = dir.join(&file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let data = decode_f64(&bytes)
            .filter(|d| d.len() == rows * cols)
            .ok_or_else(|| {
                Error::Integrity(format!(
                    "matrix {name}: blob has {} bytes, expected {}",
                    bytes.len(),
                    rows * cols * 8
                ))
            })?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrity(format!("matrix {name}: non-finite values")));
        }
        *slot = Tensor::matrix(rows, cols, data)?;
    }
    Ok(params)
}
