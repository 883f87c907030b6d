//! Dataset manifests, reproducible splits and accuracy reports.

mod manifest;
mod report;
mod split;

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{classify_vector, ClassifierConfig, ClassifyError, Outcome};
use crate::gallery::{EntryMeta, Gallery, GalleryError, VectorStore};
use crate::geometry::{normalize, AnchorSet};

pub use manifest::{DatasetManifest, LandmarkSource, ManifestRecord};
pub use report::{render_report, ClassMetrics, EvalReport, ReportFormat, REJECTED_COLUMN};
pub use split::{make_split, read_id_list, Split, SplitMode, SplitSpec, DEFAULT_SEED};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("record {0} has an empty label")]
    EmptyLabel(String),
    #[error("duplicate source_id {0}")]
    DuplicateSourceId(String),
    #[error("unknown source_id {0}")]
    UnknownSourceId(String),
    #[error("class {0} is not in the manifest")]
    UnknownClass(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("class {class} has {available} samples, needs at least {required}")]
    InsufficientSamples {
        class: String,
        available: usize,
        required: usize,
    },
    #[error("training set has no usable records")]
    EmptyTrain,
    #[error("test set is empty")]
    EmptyTest,
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalConfig {
    pub reference: AnchorSet,
    pub classifier: ClassifierConfig,
    /// Recorded in the report; evaluation itself is not random.
    pub seed: Option<u64>,
}

/// Result of enrolling a manifest into a gallery.
#[derive(Debug, Clone, Default)]
pub struct Enrollment {
    pub gallery: Gallery,
    /// `(source_id, reason)` for records that could not be enrolled.
    pub rejected: Vec<(String, String)>,
}

/// Normalizes and stores every usable record of `manifest`.
pub fn enroll(manifest: &DatasetManifest, reference: &AnchorSet) -> Result<Enrollment, EvalError> {
    let mut out = Enrollment::default();
    for r in manifest.records() {
        let vector = r
            .load_landmarks()
            .map_err(|e| e.to_string())
            .and_then(|frame| normalize(&frame, reference).map_err(|e| e.to_string()));
        match vector {
            Ok(v) => {
                out.gallery
                    .add(&r.label, v, EntryMeta::from_source(r.source_id.clone()))?;
            }
            Err(reason) => out.rejected.push((r.source_id.clone(), reason)),
        }
    }
    Ok(out)
}

enum TestResult {
    Rejected,
    Predicted(Option<String>),
}

/// Enrolls `train`, classifies every record of `test` and tallies the results.
///
/// Test records without usable landmarks land in the rejected column and are
/// left out of the accuracy denominator.
pub fn evaluate(
    train: &DatasetManifest,
    test: &DatasetManifest,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    config.classifier.validate()?;
    if train.is_empty() {
        return Err(EvalError::EmptyTrain);
    }
    if test.is_empty() {
        return Err(EvalError::EmptyTest);
    }
    let enrollment = enroll(train, &config.reference)?;
    if enrollment.gallery.is_empty() {
        return Err(EvalError::EmptyTrain);
    }
    let gallery = &enrollment.gallery;

    let results: Vec<Result<TestResult, ClassifyError>> = test
        .records()
        .par_iter()
        .map(|r| {
            let frame = match r.load_landmarks() {
                Ok(f) => f,
                Err(_) => return Ok(TestResult::Rejected),
            };
            let vector = match normalize(&frame, &config.reference) {
                Ok(v) => v,
                Err(_) => return Ok(TestResult::Rejected),
            };
            let p = classify_vector(gallery, &r.source_id, &vector, &config.classifier)?;
            Ok(TestResult::Predicted(match p.outcome {
                Outcome::Match(label) => Some(label),
                _ => None,
            }))
        })
        .collect();

    let classes: Vec<String> = train
        .classes()
        .into_iter()
        .chain(test.classes())
        .map(String::from)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut tally = report::Tally::new(classes);
    for (r, result) in test.records().iter().zip(results) {
        match result? {
            TestResult::Rejected => tally.reject(&r.label, &r.source_id),
            TestResult::Predicted(predicted) => tally.record(&r.label, predicted.as_deref()),
        }
    }
    Ok(tally.finish(
        train.len(),
        test.len(),
        gallery.len(),
        enrollment.rejected.len(),
        config.seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        default_reference_anchors, HandLandmarks, Handedness, Point3, ANCHOR_INDICES,
    };

    fn frame(seed: f64) -> HandLandmarks {
        let r = default_reference_anchors();
        let points: Vec<Point3> = (0..21)
            .map(|i| match ANCHOR_INDICES.iter().position(|&a| a == i) {
                Some(k) => r.rows()[k],
                None => {
                    let f = i as f64 + seed * 7.0;
                    [
                        0.5 + 0.3 * f.sin(),
                        0.3 + 0.2 * (1.3 * f).cos(),
                        0.05 * (0.7 * f).sin(),
                    ]
                }
            })
            .collect();
        HandLandmarks::new(&points, Handedness::Right, "").unwrap()
    }

    fn one_shot_manifest(classes: usize) -> DatasetManifest {
        let records = (0..classes)
            .map(|c| {
                ManifestRecord::inline(format!("s{c}"), format!("class{c:02}"), &frame(c as f64))
            })
            .collect();
        DatasetManifest::new(records).unwrap()
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let m = one_shot_manifest(24);
        let report = evaluate(&m, &m, &EvalConfig::default()).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.scored, 24);
        assert_eq!(report.rejected, 0);
        assert_eq!(report.classes.len(), 24);
    }

    #[test]
    fn rejected_test_records_leave_the_denominator() {
        let train = one_shot_manifest(3);
        let mut records = train.records().to_vec();
        records.push(ManifestRecord {
            source_id: "nohand".into(),
            label: "class01".into(),
            source: LandmarkSource::Inline {
                landmarks: None,
                handedness: Handedness::Unknown,
            },
        });
        records.push(ManifestRecord::inline(
            "flat",
            "class02",
            &HandLandmarks::new(&[[0.2, 0.2, 0.0]; 21], Handedness::Unknown, "").unwrap(),
        ));
        let test = DatasetManifest::new(records).unwrap();
        let report = evaluate(&train, &test, &EvalConfig::default()).unwrap();
        assert_eq!(report.rejected, 2);
        assert_eq!(report.rejected_ids, ["nohand", "flat"]);
        assert_eq!(report.scored, 3);
        assert_eq!(report.accuracy, 1.0);
        let rej_col = report.classes.len();
        assert_eq!(report.confusion[1][rej_col], 1);
        assert_eq!(report.confusion[2][rej_col], 1);
    }

    #[test]
    fn empty_sides_are_errors() {
        let m = one_shot_manifest(2);
        let empty = DatasetManifest::default();
        assert!(matches!(
            evaluate(&empty, &m, &EvalConfig::default()),
            Err(EvalError::EmptyTrain)
        ));
        assert!(matches!(
            evaluate(&m, &empty, &EvalConfig::default()),
            Err(EvalError::EmptyTest)
        ));
    }

    #[test]
    fn enrollment_lists_rejections() {
        let mut records = one_shot_manifest(2).records().to_vec();
        records.push(ManifestRecord::inline(
            "bad",
            "class00",
            &HandLandmarks::new(&[[0.0; 3]; 21], Handedness::Unknown, "").unwrap(),
        ));
        let e = enroll(
            &DatasetManifest::new(records).unwrap(),
            &default_reference_anchors(),
        )
        .unwrap();
        assert_eq!(e.gallery.len(), 2);
        assert_eq!(e.rejected.len(), 1);
        assert_eq!(e.rejected[0].0, "bad");
    }
}
