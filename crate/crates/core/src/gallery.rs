//! Labeled reference vectors with exact nearest-neighbor search.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{FeatureVector, FEATURE_DIM};

pub const FORMAT_NAME: &str = "gesture-gallery";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("vector has {got} components, gallery expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Optional provenance stored alongside a reference vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntryMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl EntryMeta {
    pub fn from_source(source_id: impl Into<String>) -> Self {
        Self {
            source_id: Some(source_id.into()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub id: u64,
    pub label: String,
    pub vector: FeatureVector,
    #[serde(default)]
    pub meta: EntryMeta,
}

/// One result of a nearest-neighbor query.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub label: String,
    pub distance: f64,
}

/// Storage backend for reference vectors.
pub trait VectorStore {
    fn dim(&self) -> usize;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn add(
        &mut self,
        label: &str,
        vector: FeatureVector,
        meta: EntryMeta,
    ) -> Result<u64, GalleryError>;

    /// The `k` closest entries by Euclidean distance, ascending, ties by id.
    fn nearest(&self, query: &FeatureVector, k: usize) -> Result<Vec<Neighbor>, GalleryError>;
}

/// In-memory flat index scanned exhaustively on every query.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    dim: usize,
    entries: Vec<GalleryEntry>,
}

impl Default for Gallery {
    fn default() -> Self {
        Self::new()
    }
}

/// `sqrt(Σ (a_i - b_i)^2)`, summed in index order.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
}

impl Gallery {
    pub fn new() -> Self {
        Self::with_dim(FEATURE_DIM)
    }

    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn get(&self, id: u64) -> Option<&GalleryEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Entry count per label, sorted by label.
    pub fn label_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.label.as_str()).or_insert(0) += 1;
        }
        counts
    }

    fn next_id(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.id + 1)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), GalleryError> {
        let header = Header {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            dim: self.dim,
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: Read>(input: R) -> Result<Self, GalleryError> {
        let mut lines = BufReader::new(input).lines();
        let header_line = match lines.next() {
            Some(line) => line?,
            None => return Err(format_error(1, "missing header record")),
        };
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| format_error(1, format!("invalid header: {e}")))?;
        if header.format != FORMAT_NAME {
            return Err(format_error(
                1,
                format!("unknown format {:?}", header.format),
            ));
        }
        if header.version != FORMAT_VERSION {
            return Err(format_error(
                1,
                format!("unsupported version {}", header.version),
            ));
        }
        if header.dim == 0 {
            return Err(format_error(1, "dim must be positive"));
        }

        let mut gallery = Gallery::with_dim(header.dim);
        for (index, line) in lines.enumerate() {
            let line_no = index + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: GalleryEntry =
                serde_json::from_str(&line).map_err(|e| format_error(line_no, e.to_string()))?;
            if entry.vector.len() != gallery.dim {
                return Err(format_error(
                    line_no,
                    format!(
                        "vector has {} values, expected {}",
                        entry.vector.len(),
                        gallery.dim
                    ),
                ));
            }
            if entry.label.is_empty() {
                return Err(format_error(line_no, "empty label"));
            }
            if let Some(last) = gallery.entries.last() {
                if entry.id <= last.id {
                    return Err(format_error(
                        line_no,
                        format!(
                            "id {} is not greater than previous id {}",
                            entry.id, last.id
                        ),
                    ));
                }
            }
            gallery.entries.push(entry);
        }
        Ok(gallery)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GalleryError> {
        let file = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GalleryError> {
        Self::read_jsonl(std::fs::File::open(path)?)
    }
}

fn format_error(line: usize, message: impl Into<String>) -> GalleryError {
    GalleryError::Format {
        line,
        message: message.into(),
    }
}

impl VectorStore for Gallery {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn add(
        &mut self,
        label: &str,
        vector: FeatureVector,
        meta: EntryMeta,
    ) -> Result<u64, GalleryError> {
        if vector.len() != self.dim {
            return Err(GalleryError::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if label.is_empty() {
            return Err(GalleryError::EmptyLabel);
        }
        let id = self.next_id();
        self.entries.push(GalleryEntry {
            id,
            label: label.to_string(),
            vector,
            meta,
        });
        Ok(id)
    }

    fn nearest(&self, query: &FeatureVector, k: usize) -> Result<Vec<Neighbor>, GalleryError> {
        if self.entries.is_empty() {
            return Err(GalleryError::EmptyGallery);
        }
        if k == 0 {
            return Err(GalleryError::ZeroK);
        }
        if query.len() != self.dim {
            return Err(GalleryError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let q = query.as_slice();
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (euclidean_distance(q, e.vector.as_slice()), i))
            .collect();
        // entries are stored in id order, so the index doubles as the tie key
        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_distance);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_distance);
        Ok(scored
            .into_iter()
            .map(|(distance, i)| {
                let e = &self.entries[i];
                Neighbor {
                    id: e.id,
                    label: e.label.clone(),
                    distance,
                }
            })
            .collect())
    }
}
