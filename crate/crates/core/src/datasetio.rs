//! Dataset manifests: line-oriented JSON catalogs binding image paths to
//! labels and split tags, plus deterministic nested subset sampling.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seeding::item_rng;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate manifest path {path:?}")]
    DuplicatePath { path: String },
    #[error("requested subset of {requested} entries but the train split has only {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("manifest path {path:?} must be relative and stay inside the dataset directory")]
    UnsafePath { path: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}; expected train, val or test")),
        }
    }
}

/// One manifest line. Field order here is the serialized field order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub path: String,
    pub text: String,
    pub split: Split,
}

impl Entry {
    pub fn new(path: impl Into<String>, text: impl Into<String>, split: Split) -> Self {
        Self {
            path: path.into(),
            text: text.into(),
            split,
        }
    }
}

/// Ordered dataset catalog with unique paths.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<Entry>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<Entry>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.path.as_str()) {
                return Err(DatasetError::DuplicatePath {
                    path: e.path.clone(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Entry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Serialized form: one JSON object per line, LF-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries always serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses the JSONL form. `origin` is only used in error messages.
    pub fn parse_jsonl(text: &str, origin: &Path) -> Result<Self, DatasetError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: Entry = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if !seen.insert(entry.path.clone()) {
                return Err(DatasetError::Malformed {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("duplicate path {:?}", entry.path),
                });
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Manifest::parse_jsonl(&text, path)
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    file.write_all(manifest.to_jsonl().as_bytes())
        .and_then(|_| file.flush())
        .map_err(io_err(path))
}

/// Resolves an entry path against the directory containing the manifest.
pub fn resolve(manifest_path: &Path, entry_path: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(entry_path)
}

/// Where a derived image for `entry_path` goes under `out_dir`, always as PNG.
/// Absolute paths and `..` components are rejected.
pub fn output_path(out_dir: &Path, entry_path: &str) -> Result<(String, PathBuf), DatasetError> {
    use std::path::Component;
    let rel = Path::new(entry_path);
    let safe = rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if !safe || entry_path.is_empty() {
        return Err(DatasetError::UnsafePath {
            path: entry_path.to_string(),
        });
    }
    let rel = rel.with_extension("png");
    let rel_str = rel.to_string_lossy().replace('\\', "/");
    Ok((rel_str, out_dir.join(rel)))
}

/// Uniform sample without replacement of `size` train entries.
///
/// The train entries are ranked by a permutation drawn from `seed` and the
/// first `size` are kept, so equal seeds give nested samples. Selected entries
/// keep their original relative order; val and test entries pass through.
pub fn sample_subset(manifest: &Manifest, size: usize, seed: u64) -> Result<Manifest, DatasetError> {
    let train: Vec<usize> = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if size > train.len() {
        return Err(DatasetError::SubsetTooLarge {
            requested: size,
            available: train.len(),
        });
    }
    let mut ranked = train;
    ranked.shuffle(&mut item_rng(seed, &[]));
    let mut keep = vec![false; manifest.entries.len()];
    for &i in &ranked[..size] {
        keep[i] = true;
    }
    let entries = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(i, e)| e.split != Split::Train || keep[*i])
        .map(|(_, e)| e.clone())
        .collect();
    Ok(Manifest { entries })
}

/// Builds a manifest from a labels file whose lines are
/// `<relative image path><TAB><label>`; everything after the first tab is the
/// label. Paths are checked to exist relative to `image_dir`.
pub fn manifest_from_labels(
    image_dir: &Path,
    labels_file: &Path,
    split: Split,
) -> Result<Manifest, DatasetError> {
    let file = std::fs::File::open(labels_file).map_err(io_err(labels_file))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(labels_file))?;
        if line.trim().is_empty() {
            continue;
        }
        let (path, text) = line.split_once('\t').ok_or_else(|| DatasetError::Malformed {
            path: labels_file.to_path_buf(),
            line: i + 1,
            message: "expected <path>\\t<label>".into(),
        })?;
        if !image_dir.join(path).is_file() {
            return Err(DatasetError::Malformed {
                path: labels_file.to_path_buf(),
                line: i + 1,
                message: format!("image {path:?} not found under {}", image_dir.display()),
            });
        }
        entries.push(Entry::new(path, text, split));
    }
    Manifest::from_entries(entries)
}
