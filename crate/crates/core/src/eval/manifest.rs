use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use super::EvalError;
use crate::geometry::{HandLandmarks, Handedness, Point3, LANDMARK_COUNT};
use crate::record::{FrameRecord, RecordError};

/// Where a record's landmarks come from.
#[derive(Debug, Clone, PartialEq)]
pub enum LandmarkSource {
    /// A JSON frame record on disk.
    File(PathBuf),
    /// Points stored in the manifest; `None` means no hand was detected.
    Inline {
        landmarks: Option<Vec<Point3>>,
        handedness: Handedness,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub source_id: String,
    pub label: String,
    pub source: LandmarkSource,
}

impl ManifestRecord {
    pub fn inline(
        source_id: impl Into<String>,
        label: impl Into<String>,
        frame: &HandLandmarks,
    ) -> Self {
        Self {
            source_id: source_id.into(),
            label: label.into(),
            source: LandmarkSource::Inline {
                landmarks: Some(frame.points().to_vec()),
                handedness: frame.handedness(),
            },
        }
    }

    pub fn load_landmarks(&self) -> Result<HandLandmarks, RecordError> {
        match &self.source {
            LandmarkSource::File(path) => {
                let mut rec = FrameRecord::read_file(path)?;
                rec.source_id = Some(self.source_id.clone());
                rec.to_landmarks(&self.source_id)
            }
            LandmarkSource::Inline {
                landmarks,
                handedness,
            } => {
                let points = landmarks.as_deref().ok_or(RecordError::Missing)?;
                Ok(HandLandmarks::new(
                    points,
                    *handedness,
                    self.source_id.clone(),
                )?)
            }
        }
    }
}

fn present<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    T::deserialize(d).map(Some)
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    source_id: String,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landmarks_file: Option<PathBuf>,
    #[serde(
        default,
        deserialize_with = "present",
        skip_serializing_if = "Option::is_none"
    )]
    landmarks: Option<Option<Vec<Point3>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    handedness: Option<Handedness>,
}

/// An ordered, labeled list of landmark records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Source ids must be unique and labels nonempty.
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.label.is_empty() {
                return Err(EvalError::EmptyLabel(r.source_id.clone()));
            }
            if !seen.insert(r.source_id.as_str()) {
                return Err(EvalError::DuplicateSourceId(r.source_id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.label.as_str()).collect()
    }

    pub fn class_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.label.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Keeps only records whose label is in `classes`; every requested class
    /// must be present.
    pub fn filter_classes(&self, classes: &BTreeSet<String>) -> Result<Self, EvalError> {
        let present = self.classes();
        if let Some(missing) = classes.iter().find(|c| !present.contains(c.as_str())) {
            return Err(EvalError::UnknownClass(missing.clone()));
        }
        Ok(Self {
            records: self
                .records
                .iter()
                .filter(|r| classes.contains(&r.label))
                .cloned()
                .collect(),
        })
    }

    /// Records named by `ids`, in manifest order.
    pub fn select<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self, EvalError> {
        let wanted: HashSet<&str> = ids.iter().map(AsRef::as_ref).collect();
        let known: HashSet<&str> = self.records.iter().map(|r| r.source_id.as_str()).collect();
        if let Some(id) = wanted.iter().find(|id| !known.contains(*id)) {
            return Err(EvalError::UnknownSourceId(id.to_string()));
        }
        Ok(Self {
            records: self
                .records
                .iter()
                .filter(|r| wanted.contains(r.source_id.as_str()))
                .cloned()
                .collect(),
        })
    }

    /// Parses JSONL; relative `landmarks_file` paths resolve against `base_dir`.
    pub fn read_jsonl<R: Read>(input: R, base_dir: &Path) -> Result<Self, EvalError> {
        let mut records = Vec::new();
        for (index, line) in BufReader::new(input).lines().enumerate() {
            let line_no = index + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| EvalError::Manifest {
                line: line_no,
                message: e.to_string(),
            })?;
            let bad = |message: &str| EvalError::Manifest {
                line: line_no,
                message: message.to_string(),
            };
            let source = match (raw.landmarks_file, raw.landmarks) {
                (Some(_), Some(_)) => {
                    return Err(bad("record has both \"landmarks_file\" and \"landmarks\""))
                }
                (None, None) => {
                    return Err(bad("record needs \"landmarks_file\" or \"landmarks\""))
                }
                (Some(path), None) => LandmarkSource::File(if path.is_relative() {
                    base_dir.join(path)
                } else {
                    path
                }),
                (None, Some(landmarks)) => {
                    if let Some(points) = &landmarks {
                        if points.len() != LANDMARK_COUNT {
                            return Err(bad(&format!(
                                "expected {LANDMARK_COUNT} landmarks, got {}",
                                points.len()
                            )));
                        }
                    }
                    LandmarkSource::Inline {
                        landmarks,
                        handedness: raw.handedness.unwrap_or_default(),
                    }
                }
            };
            if raw.source_id.is_empty() {
                return Err(bad("empty source_id"));
            }
            records.push(ManifestRecord {
                source_id: raw.source_id,
                label: raw.label,
                source,
            });
        }
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::read_jsonl(file, base)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), EvalError> {
        for r in &self.records {
            let raw = match &r.source {
                LandmarkSource::File(path) => RawRecord {
                    source_id: r.source_id.clone(),
                    label: r.label.clone(),
                    landmarks_file: Some(path.clone()),
                    landmarks: None,
                    handedness: None,
                },
                LandmarkSource::Inline {
                    landmarks,
                    handedness,
                } => RawRecord {
                    source_id: r.source_id.clone(),
                    label: r.label.clone(),
                    landmarks_file: None,
                    landmarks: Some(landmarks.clone()),
                    handedness: Some(*handedness),
                },
            };
            serde_json::to_writer(&mut out, &raw).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let file = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }
}
