//! Bag directories: a `manifest` text file plus one `features.bin` blob.
//!
//! The blob concatenates every bag's `M × D` features as row-major
//! little-endian `f64`. Each `bag` manifest line carries
//! `id, M, byte offset, labels, sha256` where labels are written as
//! `task=class_index` pairs separated by commas.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{Dataset, PatchBag};
use crate::error::{Error, Result};
use crate::manifest::{check_token, decode_f64, encode_f64, Manifest, ManifestWriter};
use crate::model::TagSchema;

pub const FORMAT: &str = "patchbag-bags";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest";
pub const BLOB: &str = "features.bin";

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_bags(dataset: &Dataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = ManifestWriter::new();
    w.kv("format", FORMAT)
        .kv("format_version", FORMAT_VERSION)
        .kv("feature_dim", dataset.feature_dim)
        .kv("bags", dataset.len());
    dataset.schema.write_manifest(&mut w);

    let mut blob = Vec::new();
    for bag in &dataset.bags {
        check_token("bag.id", &bag.id)?;
        let offset = blob.len();
        encode_f64(bag.features.data(), &mut blob);
        let labels: Vec<String> = dataset
            .schema
            .tasks()
            .iter()
            .zip(&bag.labels)
            .map(|(t, l)| format!("{}={l}", t.name))
            .collect();
        w.line(
            "bag",
            &[
                bag.id.clone(),
                bag.num_patches().to_string(),
                offset.to_string(),
                labels.join(","),
                digest(&blob[offset..]),
            ],
        );
    }
    let blob_path = dir.join(BLOB);
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, w.finish()).map_err(|e| Error::io(path, e))
}

pub fn read_bags(dir: &Path) -> Result<Dataset> {
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
    let feature_dim: usize = m.parse_value("feature_dim")?;
    if feature_dim == 0 {
        return Err(m.error("feature_dim", "must be positive"));
    }
    let declared: usize = m.parse_value("bags")?;
    let schema = TagSchema::from_manifest(&m)?;
    let counts = schema.class_counts();

    let blob_path = dir.join(BLOB);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;

    let mut bags = Vec::with_capacity(declared);
    let mut expected_end = 0usize;
    for line in m.all("bag") {
        let id: String = m.parse_field(line, 0, "bag.id")?;
        let patches: usize = m.parse_field(line, 1, "bag.patches")?;
        let offset: usize = m.parse_field(line, 2, "bag.offset")?;
        let raw_labels: String = m.parse_field(line, 3, "bag.labels")?;
        let checksum: String = m.parse_field(line, 4, "bag.sha256")?;
        if patches == 0 {
            return Err(m.error("bag.patches", format!("bag {id}: no patches")));
        }

        let mut labels = vec![None; counts.len()];
        for pair in raw_labels.split(',') {
            let (task, class) = pair.split_once('=').ok_or_else(|| {
                m.error("bag.labels", format!("bag {id}: `{pair}` is not task=index"))
            })?;
            let k = schema.task_index(task).ok_or_else(|| Error::SchemaMismatch {
                expected: schema.to_string(),
                found: format!("bag {id} labels unknown task `{task}`"),
            })?;
            let c: usize = class.parse().map_err(|_| {
                m.error("bag.labels", format!("bag {id}: bad class index `{class}`"))
            })?;
            if c >= counts[k] {
                return Err(m.error(
                    "bag.labels",
                    format!("bag {id}: class {c} out of range for task `{task}`"),
                ));
            }
            labels[k] = Some(c);
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                l.ok_or_else(|| {
                    m.error(
                        "bag.labels",
                        format!("bag {id}: no label for task `{}`", schema.tasks()[k].name),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let len = patches * feature_dim * 8;
        let end = offset + len;
        if offset != expected_end || end > blob.len() {
            return Err(Error::Integrity(format!(
                "bag {id}: bytes {offset}..{end} not available in {} byte blob",
                blob.len()
            )));
        }
        let bytes = &blob[offset..end];
        if digest(bytes) != checksum {
            return Err(Error::Integrity(format!("bag {id}: checksum mismatch")));
        }
        let features = decode_f64(bytes).expect("length is a multiple of 8");
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrity(format!("bag {id}: non-finite features")));
        }
        bags.push(PatchBag::new(id, patches, feature_dim, features, labels)?);
        expected_end = end;
    }
    if bags.len() != declared {
        return Err(m.error(
            "bags",
            format!("declares {declared} bags but lists {}", bags.len()),
        ));
    }
    if expected_end != blob.len() {
        return Err(Error::Integrity(format!(
            "blob has {} trailing bytes",
            blob.len() - expected_end
        )));
    }
    Dataset::new(schema, feature_dim, bags)
}

/// Reads a bag directory and checks its schema against `expected`.
pub fn read_bags_expecting(dir: &Path, expected: &TagSchema) -> Result<Dataset> {
    let ds = read_bags(dir)?;
    expected.ensure_matches(&ds.schema)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthConfig};

    fn dataset() -> Dataset {
        generate(&SynthConfig {
            n_bags: 6,
            patches: 5,
            feature_dim: 4,
            signal_fraction: 0.2,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset();
        write_bags(&ds, dir.path()).unwrap();
        assert_eq!(read_bags(dir.path()).unwrap(), ds);
    }

    #[test]
    fn truncated_blob_names_the_bag() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset();
        write_bags(&ds, dir.path()).unwrap();
        let path = dir.path().join(BLOB);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = read_bags(dir.path()).unwrap_err();
        let last = &ds.bags.last().unwrap().id;
        assert!(matches!(err, Error::Integrity(ref s) if s.contains(last.as_str())), "{err}");
    }

    #[test]
    fn flipped_byte_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset();
        write_bags(&ds, dir.path()).unwrap();
        let path = dir.path().join(BLOB);
        let mut bytes = fs::read(&path).unwrap();
        bytes[10] ^= 0x40;
        fs::write(&path, bytes).unwrap();
        let err = read_bags(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Integrity(ref s) if s.contains(&ds.bags[0].id)), "{err}");
    }

    #[test]
    fn unknown_task_in_labels_is_schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_bags(&dataset(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replacen(",species=", ",specimen=", 1)).unwrap();
        assert!(matches!(read_bags(dir.path()), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn missing_field_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        write_bags(&dataset(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("feature_dim\t4\n", "");
        fs::write(&path, text).unwrap();
        match read_bags(dir.path()) {
            Err(Error::Parse { field, file, .. }) => {
                assert_eq!(field, "feature_dim");
                assert!(file.ends_with(MANIFEST));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn expecting_other_schema_fails() {
        let dir = tempfile::tempdir().unwrap();
        write_bags(&dataset(), dir.path()).unwrap();
        let other = TagSchema::new(vec![crate::model::TagTask {
            name: "stain".into(),
            classes: vec!["a".into(), "b".into()],
        }])
        .unwrap();
        assert!(matches!(
            read_bags_expecting(dir.path(), &other),
            Err(Error::SchemaMismatch { .. })
        ));
    }
}
