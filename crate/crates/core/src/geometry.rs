//! Canonical-frame normalization of hand landmarks.
//!
//! A frame of 21 landmarks is mapped into a fixed coordinate system by the
//! unique affine transform that carries four anchor landmarks (wrist, thumb
//! base, index base, pinky base) onto a reference set of positions. Points are
//! treated as homogeneous row vectors `[x, y, z, 1]`, so the transform is a
//! 4×4 matrix `T` with `S_h · T = P_h`, where `S_h` holds the observed anchors
//! and `P_h` the reference anchors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Mat4};

/// Number of landmarks produced by the hand pose model.
pub const LANDMARK_COUNT: usize = 21;
/// Length of a flattened normalized frame.
pub const FEATURE_DIM: usize = LANDMARK_COUNT * 3;
/// Landmark indices of the wrist, thumb base, index base and pinky base.
pub const ANCHOR_INDICES: [usize; 4] = [0, 1, 5, 17];
/// Smallest accepted magnitude of the homogeneous anchor determinant.
pub const DEFAULT_DET_EPSILON: f64 = 1e-12;
/// Largest accepted per-component anchor residual of a solved transform.
pub const ANCHOR_RESIDUAL_TOLERANCE: f64 = 1e-6;

/// A 3D landmark coordinate `(x, y, z)`.
pub type Point3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("expected {LANDMARK_COUNT} landmarks, got {0}")]
    LandmarkCount(usize),
    #[error("landmark {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("anchor landmarks are degenerate (homogeneous determinant {det:e})")]
    AnchorDegenerate { det: f64 },
    #[error("anchor correspondence has no affine solution (residual {residual:e})")]
    SingularAnchors { residual: f64 },
    #[error("feature vector is empty")]
    EmptyFeature,
    #[error("feature vector component {0} is not finite")]
    NonFiniteFeature(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Handedness {
    Left,
    Right,
    #[default]
    Unknown,
}

/// One detected hand: 21 ordered landmarks in image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HandLandmarks {
    points: [Point3; LANDMARK_COUNT],
    handedness: Handedness,
    source_id: String,
}

impl HandLandmarks {
    pub fn new(
        points: &[Point3],
        handedness: Handedness,
        source_id: impl Into<String>,
    ) -> Result<Self, GeometryError> {
        let points: [Point3; LANDMARK_COUNT] = points
            .try_into()
            .map_err(|_| GeometryError::LandmarkCount(points.len()))?;
        if let Some(index) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite(index));
        }
        Ok(Self {
            points,
            handedness,
            source_id: source_id.into(),
        })
    }

    pub fn points(&self) -> &[Point3; LANDMARK_COUNT] {
        &self.points
    }

    pub fn handedness(&self) -> Handedness {
        self.handedness
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Applies `transform` to every landmark, keeping handedness and source id.
    pub fn transformed(&self, transform: &TransformMatrix) -> Result<Self, GeometryError> {
        let points: Vec<Point3> = self.points.iter().map(|p| transform.apply(p)).collect();
        Self::new(&points, self.handedness, self.source_id.clone())
    }
}

/// The four anchor landmarks of a hand, in the order of [`ANCHOR_INDICES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorSet {
    rows: [Point3; 4],
}

impl AnchorSet {
    /// Builds an anchor set, rejecting non-finite or affinely dependent points.
    pub fn new(rows: [Point3; 4]) -> Result<Self, GeometryError> {
        Self::with_epsilon(rows, DEFAULT_DET_EPSILON)
    }

    /// Like [`AnchorSet::new`] with a caller-chosen determinant threshold.
    pub fn with_epsilon(rows: [Point3; 4], epsilon: f64) -> Result<Self, GeometryError> {
        if let Some(index) = rows.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite(ANCHOR_INDICES[index]));
        }
        let det = linalg::determinant(&homogenize(&rows));
        if det.is_nan() || det.abs() < epsilon {
            return Err(GeometryError::AnchorDegenerate { det });
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Point3; 4] {
        &self.rows
    }

    /// Determinant of the 4×4 matrix whose rows are `[x, y, z, 1]`.
    pub fn homogeneous_determinant(&self) -> f64 {
        linalg::determinant(&homogenize(&self.rows))
    }
}

impl Default for AnchorSet {
    fn default() -> Self {
        default_reference_anchors()
    }
}

/// Reference anchor positions: wrist centered horizontally in the lower half
/// of the frame, thumb to the left.
pub fn default_reference_anchors() -> AnchorSet {
    AnchorSet {
        rows: [
            [0.5, 0.75, 0.0],
            [0.42, 0.7, -0.03],
            [0.4, 0.45, -0.01],
            [0.6, 0.5, -0.02],
        ],
    }
}

/// Affine map on homogeneous row vectors: `[x', y', z', 1] = [x, y, z, 1] · m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformMatrix {
    m: Mat4,
}

impl TransformMatrix {
    pub fn identity() -> Self {
        Self {
            m: linalg::identity(),
        }
    }

    /// `p' = p · linear + translation`, with `p` a row vector.
    pub fn from_affine(linear: [[f64; 3]; 3], translation: [f64; 3]) -> Self {
        let mut m = [[0.0; 4]; 4];
        for (row, lin) in m.iter_mut().zip(linear.iter()) {
            row[..3].copy_from_slice(lin);
        }
        m[3][..3].copy_from_slice(&translation);
        m[3][3] = 1.0;
        Self { m }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let m = &self.m;
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = p[0] * m[0][j] + p[1] * m[1][j] + p[2] * m[2][j] + m[3][j];
        }
        out
    }

    /// The map that applies `self` first and then `next`.
    pub fn then(&self, next: &TransformMatrix) -> TransformMatrix {
        TransformMatrix {
            m: linalg::mul(&self.m, &next.m),
        }
    }

    pub fn determinant(&self) -> f64 {
        linalg::determinant(&self.m)
    }

    pub fn max_abs_diff(&self, other: &TransformMatrix) -> f64 {
        linalg::max_abs_diff(&self.m, &other.m)
    }
}

/// Flattened normalized landmarks, compared by Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.is_empty() {
            return Err(GeometryError::EmptyFeature);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFiniteFeature(index));
        }
        Ok(Self(values))
    }

    /// Row-major flattening of a full landmark frame.
    pub fn from_points(points: &[Point3; LANDMARK_COUNT]) -> Self {
        Self(points.iter().flatten().copied().collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inverse of [`FeatureVector::from_points`]; `None` unless 63 values long.
    pub fn to_points(&self) -> Option<[Point3; LANDMARK_COUNT]> {
        if self.0.len() != FEATURE_DIM {
            return None;
        }
        let mut points = [[0.0; 3]; LANDMARK_COUNT];
        for (p, chunk) in points.iter_mut().zip(self.0.chunks_exact(3)) {
            p.copy_from_slice(chunk);
        }
        Some(points)
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = GeometryError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

fn homogenize(rows: &[Point3; 4]) -> Mat4 {
    let mut h = [[1.0; 4]; 4];
    for (dst, src) in h.iter_mut().zip(rows.iter()) {
        dst[..3].copy_from_slice(src);
    }
    h
}

/// Picks the wrist, thumb base, index base and pinky base out of a frame.
pub fn extract_anchors(frame: &HandLandmarks) -> Result<AnchorSet, GeometryError> {
    let rows = ANCHOR_INDICES.map(|i| frame.points[i]);
    AnchorSet::new(rows)
}

/// Solves `homogenize(source) · T = homogenize(reference)` for the affine `T`.
///
/// The direct route is partial-pivot elimination on the 4×4 system. When that
/// leaves an anchor residual above [`ANCHOR_RESIDUAL_TOLERANCE`] (near-singular
/// anchors), a least-squares solution is tried before giving up.
pub fn compute_transform(
    source: &AnchorSet,
    reference: &AnchorSet,
) -> Result<TransformMatrix, GeometryError> {
    let s_h = homogenize(&source.rows);
    let p_h = homogenize(&reference.rows);

    let mut residual = f64::INFINITY;
    if let Some(m) = linalg::solve(&s_h, &p_h) {
        let t = affine_part(m);
        residual = anchor_residual(&s_h, &p_h, &t);
        if residual <= ANCHOR_RESIDUAL_TOLERANCE {
            return Ok(t);
        }
    }

    if let Some(m) = linalg::least_squares(&s_h, &p_h) {
        let t = affine_part(m);
        let ls_residual = anchor_residual(&s_h, &p_h, &t);
        if ls_residual <= ANCHOR_RESIDUAL_TOLERANCE {
            return Ok(t);
        }
        residual = residual.min(ls_residual);
    }
    Err(GeometryError::SingularAnchors { residual })
}

// The last column of an affine solution is exactly (0, 0, 0, 1) because the
// last column of both homogeneous systems is all ones.
fn affine_part(mut m: Mat4) -> TransformMatrix {
    for (i, row) in m.iter_mut().enumerate() {
        row[3] = if i == 3 { 1.0 } else { 0.0 };
    }
    TransformMatrix { m }
}

fn anchor_residual(s_h: &Mat4, p_h: &Mat4, t: &TransformMatrix) -> f64 {
    linalg::max_abs_diff(&linalg::mul(s_h, &t.m), p_h)
}

/// Projects every landmark of `frame` into the frame defined by `reference`
/// and flattens the result row by row.
pub fn normalize(
    frame: &HandLandmarks,
    reference: &AnchorSet,
) -> Result<FeatureVector, GeometryError> {
    let source = extract_anchors(frame)?;
    let t = compute_transform(&source, reference)?;
    let values: Vec<f64> = frame.points.iter().flat_map(|p| t.apply(p)).collect();
    FeatureVector::new(values)
}
