//! Nearest-neighbor predictions: thresholding, top-N ranking and
//! sliding-window voting over frame streams.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::gallery::{GalleryError, VectorStore};
use crate::geometry::{normalize, AnchorSet, FeatureVector, GeometryError, HandLandmarks};

pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// Matches kept per frame.
    pub top_n: usize,
    /// Largest accepted distance; `f64::INFINITY` disables the cut.
    pub threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            top_n: 1,
            threshold: f64::INFINITY,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.top_n == 0 {
            return Err(ClassifyError::InvalidConfig(
                "top_n must be at least 1".into(),
            ));
        }
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(ClassifyError::InvalidConfig(format!(
                "threshold must be non-negative, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedMatch {
    pub id: u64,
    pub label: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Match(String),
    NoMatch,
    /// The frame could not be normalized; treated as no match.
    Rejected(GeometryError),
}

impl Outcome {
    pub fn label(&self) -> Option<&str> {
        match self {
            Outcome::Match(label) => Some(label),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub source_id: String,
    /// Matches within the threshold, nearest first.
    pub ranked: Vec<RankedMatch>,
    pub outcome: Outcome,
}

impl Prediction {
    fn rejected(source_id: &str, cause: GeometryError) -> Self {
        Self {
            source_id: source_id.to_string(),
            ranked: Vec::new(),
            outcome: Outcome::Rejected(cause),
        }
    }
}

/// Classifies an already-normalized vector.
pub fn classify_vector<S: VectorStore + ?Sized>(
    store: &S,
    source_id: &str,
    vector: &FeatureVector,
    config: &ClassifierConfig,
) -> Result<Prediction, ClassifyError> {
    config.validate()?;
    let ranked: Vec<RankedMatch> = store
        .nearest(vector, config.top_n)?
        .into_iter()
        .take_while(|n| n.distance <= config.threshold)
        .map(|n| RankedMatch {
            id: n.id,
            label: n.label,
            distance: n.distance,
        })
        .collect();
    let outcome = match ranked.first() {
        Some(best) => Outcome::Match(best.label.clone()),
        None => Outcome::NoMatch,
    };
    Ok(Prediction {
        source_id: source_id.to_string(),
        ranked,
        outcome,
    })
}

/// Normalizes `frame` against `reference` and classifies it.
///
/// Frames whose anchors cannot be solved come back as [`Outcome::Rejected`]
/// rather than an error.
pub fn classify<S: VectorStore + ?Sized>(
    store: &S,
    frame: &HandLandmarks,
    reference: &AnchorSet,
    config: &ClassifierConfig,
) -> Result<Prediction, ClassifyError> {
    config.validate()?;
    if store.is_empty() {
        return Err(GalleryError::EmptyGallery.into());
    }
    match normalize(frame, reference) {
        Ok(vector) => classify_vector(store, frame.source_id(), &vector, config),
        Err(cause) => Ok(Prediction::rejected(frame.source_id(), cause)),
    }
}

/// Winner of a window vote.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub label: String,
    pub count: usize,
    pub best_distance: f64,
}

/// Most frequent label over all windowed matches. Ties go to the label with
/// the smallest best distance, then to the lexicographically smallest label.
pub fn window_vote<'a, I>(frames: I) -> Option<Vote>
where
    I: IntoIterator<Item = &'a [RankedMatch]>,
{
    let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for m in frames.into_iter().flatten() {
        let slot = tally.entry(m.label.as_str()).or_insert((0, f64::INFINITY));
        slot.0 += 1;
        slot.1 = slot.1.min(m.distance);
    }
    // BTreeMap iterates labels in ascending order, so `min_by` keeps the
    // lexicographically first among full ties.
    tally
        .into_iter()
        .min_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.total_cmp(&b.1 .1)))
        .map(|(label, (count, best_distance))| Vote {
            label: label.to_string(),
            count,
            best_distance,
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPrediction {
    /// The stateless prediction for the newest frame.
    pub frame: Prediction,
    /// Window vote: `Match(mode)` or `NoMatch` when the window holds no labels.
    pub outcome: Outcome,
    pub votes: usize,
    pub window_len: usize,
}

/// Per-session sliding window over the last `W` frames' matches.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    capacity: usize,
    window: VecDeque<Vec<RankedMatch>>,
}

impl StreamState {
    pub fn new(window: usize) -> Result<Self, ClassifyError> {
        if window == 0 {
            return Err(ClassifyError::InvalidConfig(
                "window must be at least 1".into(),
            ));
        }
        Ok(Self {
            capacity: window,
            window: VecDeque::with_capacity(window),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Frames currently held, oldest first.
    pub fn frames(&self) -> impl Iterator<Item = &[RankedMatch]> {
        self.window.iter().map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }

    /// Pushes one frame's prediction and votes over the window. Rejected
    /// frames occupy a slot with no labels.
    pub fn push(&mut self, prediction: Prediction) -> SmoothedPrediction {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(prediction.ranked.clone());
        let vote = window_vote(self.frames());
        let (outcome, votes) = match vote {
            Some(v) => (Outcome::Match(v.label), v.count),
            None => (Outcome::NoMatch, 0),
        };
        SmoothedPrediction {
            frame: prediction,
            outcome,
            votes,
            window_len: self.window.len(),
        }
    }

    pub fn step<S: VectorStore + ?Sized>(
        &mut self,
        store: &S,
        frame: &HandLandmarks,
        reference: &AnchorSet,
        config: &ClassifierConfig,
    ) -> Result<SmoothedPrediction, ClassifyError> {
        let prediction = classify(store, frame, reference, config)?;
        Ok(self.push(prediction))
    }
}

impl Default for StreamState {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_WINDOW,
            window: VecDeque::with_capacity(DEFAULT_WINDOW),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{EntryMeta, Gallery};
    use crate::geometry::{default_reference_anchors, Handedness, Point3, ANCHOR_INDICES};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn m(label: &str, distance: f64) -> RankedMatch {
        RankedMatch {
            id: 0,
            label: label.into(),
            distance,
        }
    }

    fn pred(matches: Vec<RankedMatch>) -> Prediction {
        let outcome = match matches.first() {
            Some(b) => Outcome::Match(b.label.clone()),
            None => Outcome::NoMatch,
        };
        Prediction {
            source_id: "f".into(),
            ranked: matches,
            outcome,
        }
    }

    /// A frame whose anchors already sit on the reference, so its normalized
    /// vector is its own flattening.
    fn canonical_frame(rng: &mut ChaCha8Rng, id: &str) -> HandLandmarks {
        let reference = default_reference_anchors();
        let points: Vec<Point3> = (0..21)
            .map(|i| match ANCHOR_INDICES.iter().position(|&a| a == i) {
                Some(k) => reference.rows()[k],
                None => [
                    rng.gen_range(0.2..0.8),
                    rng.gen_range(0.0..0.5),
                    rng.gen_range(-0.1..0.1),
                ],
            })
            .collect();
        HandLandmarks::new(&points, Handedness::Right, id).unwrap()
    }

    fn three_class_gallery(rng: &mut ChaCha8Rng) -> (Gallery, Vec<HandLandmarks>) {
        let reference = default_reference_anchors();
        let mut g = Gallery::new();
        let mut protos = Vec::new();
        for label in ["Pataka", "Mudrakhya", "Kataka"] {
            let frame = canonical_frame(rng, label);
            let v = normalize(&frame, &reference).unwrap();
            g.add(label, v, EntryMeta::from_source(label)).unwrap();
            protos.push(frame);
        }
        (g, protos)
    }

    #[test]
    fn exact_duplicate_matches_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (g, protos) = three_class_gallery(&mut rng);
        let p = classify(
            &g,
            &protos[1],
            &default_reference_anchors(),
            &ClassifierConfig::default(),
        )
        .unwrap();
        assert_eq!(p.outcome, Outcome::Match("Mudrakhya".into()));
        assert_eq!(p.ranked[0].distance, 0.0);
    }

    #[test]
    fn zero_threshold_without_duplicate_is_no_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (g, _) = three_class_gallery(&mut rng);
        let query = canonical_frame(&mut rng, "q");
        let config = ClassifierConfig {
            top_n: 3,
            threshold: 0.0,
        };
        let p = classify(&g, &query, &default_reference_anchors(), &config).unwrap();
        assert_eq!(p.outcome, Outcome::NoMatch);
        assert!(p.ranked.is_empty());
    }

    #[test]
    fn perturbed_sample_matches_its_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (g, protos) = three_class_gallery(&mut rng);
        let reference = default_reference_anchors();
        let noise = Normal::new(0.0, 1.0).unwrap();
        let noisy: Vec<Point3> = protos[1]
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if ANCHOR_INDICES.contains(&i) {
                    *p
                } else {
                    p.map(|c| c + 0.01 * noise.sample(&mut rng))
                }
            })
            .collect();
        let query = HandLandmarks::new(&noisy, Handedness::Right, "noisy").unwrap();
        let qv = normalize(&query, &reference).unwrap();
        // exhaustive check: the noisy vector is nearest its own prototype
        let dists: Vec<f64> = g
            .entries()
            .iter()
            .map(|e| {
                e.vector
                    .as_slice()
                    .iter()
                    .zip(qv.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .collect();
        assert!(dists[1] < dists[0] && dists[1] < dists[2]);
        let p = classify(&g, &query, &reference, &ClassifierConfig::default()).unwrap();
        assert_eq!(p.outcome, Outcome::Match("Mudrakhya".into()));
    }

    #[test]
    fn degenerate_frame_is_rejected_not_fatal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (g, _) = three_class_gallery(&mut rng);
        let flat = HandLandmarks::new(&[[0.5, 0.5, 0.0]; 21], Handedness::Unknown, "flat").unwrap();
        let p = classify(
            &g,
            &flat,
            &default_reference_anchors(),
            &ClassifierConfig::default(),
        )
        .unwrap();
        assert!(matches!(
            p.outcome,
            Outcome::Rejected(GeometryError::AnchorDegenerate { .. })
        ));
        assert!(p.ranked.is_empty());
    }

    #[test]
    fn empty_gallery_and_bad_config_are_errors() {
        let frame = canonical_frame(&mut ChaCha8Rng::seed_from_u64(5), "x");
        let r = default_reference_anchors();
        assert!(matches!(
            classify(&Gallery::new(), &frame, &r, &ClassifierConfig::default()),
            Err(ClassifyError::Gallery(GalleryError::EmptyGallery))
        ));
        let bad = ClassifierConfig {
            top_n: 0,
            threshold: 1.0,
        };
        assert!(matches!(
            classify(&Gallery::new(), &frame, &r, &bad),
            Err(ClassifyError::InvalidConfig(_))
        ));
        assert!(StreamState::new(0).is_err());
    }

    #[test]
    fn majority_of_seven_to_three() {
        let mut s = StreamState::new(10).unwrap();
        let mut last = None;
        for label in ["A", "B", "A", "A", "B", "A", "A", "B", "A", "A"] {
            last = Some(s.push(pred(vec![m(label, 0.5)])));
        }
        let last = last.unwrap();
        assert_eq!(last.outcome, Outcome::Match("A".into()));
        assert_eq!(last.votes, 7);
    }

    #[test]
    fn alternating_tie_goes_to_closest_label() {
        let mut s = StreamState::new(10).unwrap();
        let mut out = Vec::new();
        for t in 0..10 {
            let p = if t % 2 == 0 {
                m("A", 0.4 + 0.01 * t as f64)
            } else {
                m("B", 0.3 + 0.02 * t as f64)
            };
            out.push(s.push(pred(vec![p])));
        }
        // 5 each; best distances A = 0.40, B = 0.32
        assert_eq!(out[9].votes, 5);
        assert_eq!(out[9].outcome, Outcome::Match("B".into()));

        let mut s = StreamState::new(2).unwrap();
        s.push(pred(vec![m("Z", 0.1)]));
        let o = s.push(pred(vec![m("Y", 0.1)]));
        assert_eq!(o.outcome, Outcome::Match("Y".into()));
    }

    #[test]
    fn window_evicts_oldest_first() {
        let mut s = StreamState::new(3).unwrap();
        for (t, label) in ["A", "B", "C", "D"].into_iter().enumerate() {
            let o = s.push(pred(vec![m(label, 1.0)]));
            assert_eq!(o.window_len, (t + 1).min(3));
        }
        let labels: Vec<&str> = s.frames().map(|f| f[0].label.as_str()).collect();
        assert_eq!(labels, ["B", "C", "D"]);
    }

    #[test]
    fn rejected_frames_age_out_stale_labels() {
        let mut s = StreamState::new(2).unwrap();
        s.push(pred(vec![m("A", 0.1)]));
        let reject = Prediction::rejected("r", GeometryError::AnchorDegenerate { det: 0.0 });
        assert_eq!(s.push(reject.clone()).outcome, Outcome::Match("A".into()));
        let o = s.push(reject);
        assert_eq!(o.outcome, Outcome::NoMatch);
        assert_eq!(o.window_len, 2);
    }

    #[test]
    fn constant_stream_matches_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (g, protos) = three_class_gallery(&mut rng);
        let r = default_reference_anchors();
        let mut s = StreamState::new(10).unwrap();
        for _ in 0..10 {
            let o = s
                .step(&g, &protos[2], &r, &ClassifierConfig::default())
                .unwrap();
            assert_eq!(o.outcome, Outcome::Match("Kataka".into()));
        }
    }

    #[test]
    fn raising_threshold_keeps_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (g, _) = three_class_gallery(&mut rng);
        let r = default_reference_anchors();
        for _ in 0..50 {
            let q = canonical_frame(&mut rng, "q");
            let mut matched = false;
            for threshold in [0.0, 0.1, 0.3, 0.5, 1.0, f64::INFINITY] {
                let cfg = ClassifierConfig {
                    top_n: 1,
                    threshold,
                };
                let is_match = classify(&g, &q, &r, &cfg)
                    .unwrap()
                    .outcome
                    .label()
                    .is_some();
                assert!(is_match || !matched);
                matched = is_match;
            }
        }
    }
}
