//! Synthetic hands and datasets for tests, benchmarks and demos.
//!
//! Prototypes are drawn in the canonical frame (anchors on the reference
//! positions), so a prototype normalizes to its own flattening. Samples add
//! Gaussian noise to the non-anchor landmarks and then place the hand in the
//! image with a random affine pose.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::eval::{DatasetManifest, ManifestRecord};
use crate::geometry::{
    AnchorSet, FeatureVector, HandLandmarks, Handedness, Point3, TransformMatrix, ANCHOR_INDICES,
    LANDMARK_COUNT,
};

/// Classes and per-class sample counts of the 24-class Kathakali mudra set.
pub const HASTA_MUDRA_CLASSES: [(&str, usize); 24] = [
    ("Pataka", 38),
    ("Mudrakhya", 39),
    ("Kataka", 37),
    ("Mushti", 38),
    ("Kartarimukha", 42),
    ("Sukatunda", 39),
    ("Kapittha", 38),
    ("Hamsapaksha", 40),
    ("Sikhara", 38),
    ("Hamsasya", 43),
    ("Anjali", 41),
    ("Ardhachandra", 42),
    ("Mukura", 40),
    ("Bhramara", 36),
    ("Suchimukha", 37),
    ("Pallava", 36),
    ("Tripataka", 40),
    ("Mrigasirsha", 39),
    ("Sarpasiras", 39),
    ("Vardhamanaka", 38),
    ("Arala", 39),
    ("Urnanabha", 33),
    ("Mukula", 38),
    ("Katakamukha", 38),
];

/// The ten mudras with clearly distinct hand shapes.
pub const TEN_CLASS_SUBSET: [&str; 10] = [
    "Pataka",
    "Mudrakhya",
    "Sukatunda",
    "Hamsapaksha",
    "Sikhara",
    "Ardhachandra",
    "Mukura",
    "Arala",
    "Mukula",
    "Katakamukha",
];

/// A hand whose anchors sit exactly on `reference` and whose other landmarks
/// are uniform in a box around the palm.
pub fn canonical_hand<R: Rng + ?Sized>(
    rng: &mut R,
    reference: &AnchorSet,
    source_id: &str,
) -> HandLandmarks {
    let points: Vec<Point3> = (0..LANDMARK_COUNT)
        .map(|i| match ANCHOR_INDICES.iter().position(|&a| a == i) {
            Some(k) => reference.rows()[k],
            None => [
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.05..0.55),
                rng.gen_range(-0.1..0.1),
            ],
        })
        .collect();
    HandLandmarks::new(&points, Handedness::Right, source_id).expect("finite points")
}

/// Random rotation, uniform scale in [0.5, 2], translation in [-0.5, 0.5]³,
/// mirrored with probability ½.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R) -> (TransformMatrix, bool) {
    // uniform random rotation from a unit quaternion
    let q: [f64; 4] = loop {
        let v = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n: f64 = v.iter().map(|c: &f64| c * c).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            break v.map(|c| c / n);
        }
    };
    let [w, x, y, z] = q;
    let rot = [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ];
    let scale = rng.gen_range(0.5..2.0);
    let mirror = rng.gen_bool(0.5);
    let mut linear = rot.map(|row| row.map(|c| c * scale));
    if mirror {
        linear[0] = linear[0].map(|c| -c);
    }
    let t = [
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
    ];
    (TransformMatrix::from_affine(linear, t), mirror)
}

/// Noisy copy of `prototype` (anchors untouched) in a random pose.
pub fn noisy_sample<R: Rng + ?Sized>(
    rng: &mut R,
    prototype: &HandLandmarks,
    sigma: f64,
    source_id: &str,
) -> HandLandmarks {
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let points: Vec<Point3> = prototype
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if ANCHOR_INDICES.contains(&i) {
                *p
            } else {
                p.map(|c| c + noise.sample(rng))
            }
        })
        .collect();
    let (pose, mirrored) = random_pose(rng);
    let handedness = if mirrored {
        Handedness::Left
    } else {
        Handedness::Right
    };
    let posed: Vec<Point3> = points.iter().map(|p| pose.apply(p)).collect();
    HandLandmarks::new(&posed, handedness, source_id).expect("finite points")
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub labels: Vec<String>,
    /// Canonical-frame prototype per label.
    pub prototypes: Vec<HandLandmarks>,
    pub manifest: DatasetManifest,
}

/// Draws one prototype per class, at least `min_separation` apart in
/// normalized feature space, and `count` noisy posed samples of each.
pub fn dataset<R: Rng + ?Sized>(
    rng: &mut R,
    classes: &[(&str, usize)],
    sigma: f64,
    min_separation: f64,
    reference: &AnchorSet,
) -> SyntheticDataset {
    let mut prototypes: Vec<HandLandmarks> = Vec::with_capacity(classes.len());
    let mut flats: Vec<FeatureVector> = Vec::with_capacity(classes.len());
    for (label, _) in classes {
        let (proto, flat) = loop {
            let p = canonical_hand(rng, reference, label);
            let f = FeatureVector::from_points(p.points());
            let far = flats.iter().all(|g| {
                crate::gallery::euclidean_distance(f.as_slice(), g.as_slice()) >= min_separation
            });
            if far {
                break (p, f);
            }
        };
        prototypes.push(proto);
        flats.push(flat);
    }

    let mut records = Vec::new();
    for ((label, count), proto) in classes.iter().zip(&prototypes) {
        for i in 0..*count {
            let id = format!("{label}_{i:03}");
            let sample = noisy_sample(rng, proto, sigma, &id);
            records.push(ManifestRecord::inline(id, *label, &sample));
        }
    }
    SyntheticDataset {
        labels: classes.iter().map(|(l, _)| l.to_string()).collect(),
        prototypes,
        manifest: DatasetManifest::new(records).expect("generated ids are unique"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_reference_anchors, normalize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_counts_total() {
        let total: usize = HASTA_MUDRA_CLASSES.iter().map(|(_, n)| n).sum();
        assert_eq!(total, 928);
        let ten: usize = HASTA_MUDRA_CLASSES
            .iter()
            .filter(|(l, _)| TEN_CLASS_SUBSET.contains(l))
            .map(|(_, n)| n)
            .sum();
        assert_eq!(ten, 391);
    }

    #[test]
    fn noiseless_sample_normalizes_to_prototype() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = default_reference_anchors();
        let proto = canonical_hand(&mut rng, &r, "p");
        for _ in 0..20 {
            let s = noisy_sample(&mut rng, &proto, 0.0, "s");
            let v = normalize(&s, &r).unwrap();
            let d = crate::gallery::euclidean_distance(
                v.as_slice(),
                FeatureVector::from_points(proto.points()).as_slice(),
            );
            assert!(d < 1e-9, "{d}");
        }
    }

    #[test]
    fn dataset_has_requested_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = dataset(
            &mut rng,
            &[("A", 3), ("B", 5)],
            0.01,
            0.5,
            &default_reference_anchors(),
        );
        assert_eq!(d.manifest.len(), 8);
        assert_eq!(d.manifest.class_counts()["B"], 5);
        assert_eq!(d.prototypes.len(), 2);
    }
}
