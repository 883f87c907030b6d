//! JSON wire form of a single landmark frame.
//!
//! The same object appears inline in dataset manifests, in standalone
//! landmark files and as one line of a frame stream:
//!
//! ```json
//! {"source_id": "clip3/0007", "landmarks": [[0.51, 0.74, 0.0], ...], "handedness": "Right", "timestamp_ms": 1400}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, HandLandmarks, Handedness, Point3};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("no landmarks (no hand detected)")]
    Missing,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// `None` when no hand was detected.
    #[serde(default)]
    pub landmarks: Option<Vec<Point3>>,
    #[serde(default)]
    pub handedness: Handedness,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<i64>,
}

impl FrameRecord {
    pub fn from_landmarks(frame: &HandLandmarks) -> Self {
        Self {
            source_id: Some(frame.source_id().to_string()),
            label: None,
            landmarks: Some(frame.points().to_vec()),
            handedness: frame.handedness(),
            timestamp_ms: None,
        }
    }

    /// Validates the points; `fallback_id` names frames without a source id.
    pub fn to_landmarks(&self, fallback_id: &str) -> Result<HandLandmarks, RecordError> {
        let points = self.landmarks.as_deref().ok_or(RecordError::Missing)?;
        let id = self.source_id.as_deref().unwrap_or(fallback_id);
        Ok(HandLandmarks::new(points, self.handedness, id)?)
    }

    pub fn read_file(path: &Path) -> Result<Self, RecordError> {
        let text = std::fs::read_to_string(path).map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| RecordError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}
