//! Hand-gesture classification from 3D hand landmarks.
//!
//! Frames of 21 landmarks are projected into a canonical coordinate system by
//! an affine map fitted to four anchor landmarks ([`geometry`]), stored as
//! labeled reference vectors ([`gallery`]) and classified by exact Euclidean
//! nearest neighbor with optional thresholding and window voting
//! ([`classifier`]). [`eval`] reproduces few-shot and fractional split
//! experiments over landmark datasets.

pub mod classifier;
pub mod eval;
pub mod gallery;
pub mod geometry;
mod linalg;
pub mod record;
pub mod synth;

pub use classifier::{
    classify, classify_vector, window_vote, ClassifierConfig, ClassifyError, Outcome, Prediction,
    RankedMatch, SmoothedPrediction, StreamState, Vote,
};
pub use gallery::{EntryMeta, Gallery, GalleryEntry, GalleryError, Neighbor, VectorStore};
pub use geometry::{
    compute_transform, default_reference_anchors, extract_anchors, normalize, AnchorSet,
    FeatureVector, GeometryError, HandLandmarks, Handedness, Point3, TransformMatrix,
};
pub use record::{FrameRecord, RecordError};
