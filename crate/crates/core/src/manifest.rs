//! Tab-separated key/value manifests shared by bag directories and
//! checkpoints.
//!
//! Each non-empty line is `key<TAB>field<TAB>field...`. Lines starting with
//! `#` are ignored. Field values may contain spaces but never tabs or
//! newlines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct ManifestWriter {
    text: String,
}

impl ManifestWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn line<S: AsRef<str>>(&mut self, key: &str, fields: &[S]) -> &mut Self {
        self.text.push_str(key);
        for f in fields {
            self.text.push('\t');
            self.text.push_str(f.as_ref());
        }
        self.text.push('\n');
        self
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.text, "{key}\t{value}");
        self
    }

    pub fn finish(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone)]
pub struct ManifestLine {
    pub number: usize,
    pub key: String,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    path: PathBuf,
    lines: Vec<ManifestLine>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(path, &text))
    }

    pub fn parse(path: &Path, text: &str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|(i, l)| {
                let mut parts = l.split('\t');
                let key = parts.next().unwrap_or_default().to_string();
                ManifestLine {
                    number: i + 1,
                    key,
                    fields: parts.map(str::to_string).collect(),
                }
            })
            .collect();
        Manifest {
            path: path.to_path_buf(),
            lines,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn lines(&self) -> &[ManifestLine] {
        &self.lines
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a ManifestLine> + 'a {
        self.lines.iter().filter(move |l| l.key == key)
    }

    pub fn error(&self, field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::parse(&self.path, field, message)
    }

    /// The single value stored under `key`.
    pub fn value(&self, key: &str) -> Result<&str> {
        let mut it = self.lines.iter().filter(|l| l.key == key);
        let line = it
            .next()
            .ok_or_else(|| self.error(key, "missing"))?;
        if it.next().is_some() {
            return Err(self.error(key, "appears more than once"));
        }
        match line.fields.as_slice() {
            [v] => Ok(v),
            _ => Err(self.error(
                key,
                format!("line {}: expected exactly one value", line.number),
            )),
        }
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.value(key)?;
        v.parse()
            .map_err(|e| self.error(key, format!("cannot parse `{v}`: {e}")))
    }

    pub fn parse_field<T: FromStr>(&self, line: &ManifestLine, idx: usize, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = line.fields.get(idx).ok_or_else(|| {
            self.error(name, format!("line {}: missing field", line.number))
        })?;
        raw.parse().map_err(|e| {
            self.error(name, format!("line {}: cannot parse `{raw}`: {e}", line.number))
        })
    }
}

/// Rejects characters the manifest format cannot carry.
pub fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r', '=', ',']) || s.starts_with('#') {
        return Err(Error::config(
            what,
            format!("`{s}` must be non-empty without tabs, newlines, `=`, `,` or a leading `#`"),
        ));
    }
    Ok(())
}

/// Little-endian encoding of a run of `f64`.
pub fn encode_f64(values: &[f64], out: &mut Vec<u8>) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Inverse of [`encode_f64`]; `None` when the length is not a multiple of 8.
pub fn decode_f64(bytes: &[u8]) -> Option<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    )
}
