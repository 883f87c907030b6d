use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use super::EvalError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Exactly `k` training records per class.
    PerClassK(usize),
    /// Stratified train fraction in (0, 1).
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub seed: u64,
    pub class_filter: Option<BTreeSet<String>>,
}

impl SplitSpec {
    pub fn per_class(k: usize) -> Self {
        Self {
            mode: SplitMode::PerClassK(k),
            seed: DEFAULT_SEED,
            class_filter: None,
        }
    }

    pub fn fraction(train_fraction: f64) -> Self {
        Self {
            mode: SplitMode::Fraction(train_fraction),
            seed: DEFAULT_SEED,
            class_filter: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_classes<I, S>(mut self, classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.class_filter = Some(classes.into_iter().map(Into::into).collect());
        self
    }

    fn validate(&self) -> Result<(), EvalError> {
        match self.mode {
            SplitMode::PerClassK(0) => Err(EvalError::InvalidSplit("k must be at least 1".into())),
            SplitMode::Fraction(f) if !(f > 0.0 && f < 1.0) => Err(EvalError::InvalidSplit(
                format!("train fraction must lie in (0, 1), got {f}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: DatasetManifest,
    pub test: DatasetManifest,
}

impl Split {
    /// Writes `train.txt` and `test.txt`, one source id per line.
    pub fn write_id_lists(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        for (name, side) in [("train.txt", &self.train), ("test.txt", &self.test)] {
            let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            for r in side.records() {
                writeln!(out, "{}", r.source_id)?;
            }
            out.flush()?;
        }
        Ok(())
    }
}

/// Reads a split side written by [`Split::write_id_lists`].
pub fn read_id_list(path: &Path) -> Result<Vec<String>, EvalError> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

// Hamilton apportionment of round(f * total) training slots across classes.
fn fraction_quotas(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&n| fraction * n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = quotas.iter().sum();
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    // every class keeps at least one record on each side
    for (q, &n) in quotas.iter_mut().zip(sizes) {
        *q = (*q).clamp(1, n - 1);
    }
    quotas
}

/// Splits `manifest` into disjoint train and test sides, stratified by class.
///
/// Each class's records are shuffled with a ChaCha8 stream seeded from
/// `spec.seed` (classes visited in sorted order), and the first records of the
/// shuffle go to training. Both sides keep manifest order.
pub fn make_split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<Split, EvalError> {
    spec.validate()?;
    let filtered = match &spec.class_filter {
        Some(classes) => manifest.filter_classes(classes)?,
        None => manifest.clone(),
    };

    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in filtered.records().iter().enumerate() {
        by_class.entry(r.label.as_str()).or_default().push(i);
    }

    let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
    for ((class, members), &n) in by_class.iter().zip(&sizes) {
        let required = match spec.mode {
            SplitMode::PerClassK(k) => k + 1,
            SplitMode::Fraction(_) => 2,
        };
        if n < required {
            return Err(EvalError::InsufficientSamples {
                class: class.to_string(),
                available: members.len(),
                required,
            });
        }
    }
    let quotas = match spec.mode {
        SplitMode::PerClassK(k) => vec![k; sizes.len()],
        SplitMode::Fraction(f) => fraction_quotas(&sizes, f),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_train = vec![false; filtered.len()];
    for (members, &quota) in by_class.values().zip(&quotas) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..quota] {
            in_train[i] = true;
        }
    }

    let (train, test): (Vec<_>, Vec<_>) = filtered
        .records()
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    Ok(Split {
        train: DatasetManifest::new(train.into_iter().map(|(r, _)| r).collect())?,
        test: DatasetManifest::new(test.into_iter().map(|(r, _)| r).collect())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::manifest::{LandmarkSource, ManifestRecord};
    use crate::geometry::Handedness;

    fn manifest(counts: &[(&str, usize)]) -> DatasetManifest {
        let mut records = Vec::new();
        for (label, n) in counts {
            for i in 0..*n {
                records.push(ManifestRecord {
                    source_id: format!("{label}_{i}"),
                    label: label.to_string(),
                    source: LandmarkSource::Inline {
                        landmarks: None,
                        handedness: Handedness::Unknown,
                    },
                });
            }
        }
        DatasetManifest::new(records).unwrap()
    }

    fn ids(m: &DatasetManifest) -> Vec<String> {
        m.records().iter().map(|r| r.source_id.clone()).collect()
    }

    #[test]
    fn per_class_k_takes_k_from_each_class() {
        let m = manifest(&[("A", 5), ("B", 7), ("C", 3)]);
        let s = make_split(&m, &SplitSpec::per_class(2)).unwrap();
        assert_eq!(s.train.len(), 6);
        assert_eq!(s.test.len(), 9);
        assert!(s.train.class_counts().values().all(|&c| c == 2));
    }

    #[test]
    fn sides_partition_the_manifest() {
        let m = manifest(&[("A", 9), ("B", 4)]);
        let s = make_split(&m, &SplitSpec::fraction(0.75).with_seed(9)).unwrap();
        let mut all: Vec<String> = ids(&s.train).into_iter().chain(ids(&s.test)).collect();
        all.sort();
        let mut expected = ids(&m);
        expected.sort();
        assert_eq!(all, expected);
        assert!(ids(&s.train).iter().all(|id| !ids(&s.test).contains(id)));
    }

    #[test]
    fn same_seed_same_split_different_seed_differs() {
        let m = manifest(&[("A", 30), ("B", 30)]);
        let a = make_split(&m, &SplitSpec::per_class(3).with_seed(1)).unwrap();
        let b = make_split(&m, &SplitSpec::per_class(3).with_seed(1)).unwrap();
        let c = make_split(&m, &SplitSpec::per_class(3).with_seed(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(ids(&a.train), ids(&c.train));
    }

    #[test]
    fn fraction_apportions_round_total() {
        assert_eq!(fraction_quotas(&[10, 10], 0.8), vec![8, 8]);
        // 0.8 * 15 = 12: exact quotas 3.2, 4.0, 4.8 -> 3, 4, 5
        assert_eq!(fraction_quotas(&[4, 5, 6], 0.8), vec![3, 4, 5]);
        assert_eq!(fraction_quotas(&[2, 2], 0.99), vec![1, 1]);
    }

    #[test]
    fn insufficient_class_is_named() {
        let m = manifest(&[("A", 5), ("Thin", 1)]);
        match make_split(&m, &SplitSpec::per_class(1)) {
            Err(EvalError::InsufficientSamples {
                class,
                available,
                required,
            }) => {
                assert_eq!((class.as_str(), available, required), ("Thin", 1, 2));
            }
            other => panic!("{other:?}"),
        }
        // k train + at least one test
        let m = manifest(&[("A", 5)]);
        assert!(make_split(&m, &SplitSpec::per_class(5)).is_err());
        assert!(make_split(&m, &SplitSpec::per_class(4)).is_ok());
    }

    #[test]
    fn invalid_specs() {
        let m = manifest(&[("A", 5)]);
        assert!(matches!(
            make_split(&m, &SplitSpec::per_class(0)),
            Err(EvalError::InvalidSplit(_))
        ));
        for f in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(matches!(
                make_split(&m, &SplitSpec::fraction(f)),
                Err(EvalError::InvalidSplit(_))
            ));
        }
    }

    #[test]
    fn class_filter_restricts_both_sides() {
        let m = manifest(&[("A", 5), ("B", 5), ("C", 5)]);
        let s = make_split(&m, &SplitSpec::per_class(1).with_classes(["A", "C"])).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (2, 8));
        assert!(!s.test.classes().contains("B"));
    }

    #[test]
    fn id_lists_round_trip() {
        let m = manifest(&[("A", 4), ("B", 4)]);
        let s = make_split(&m, &SplitSpec::per_class(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write_id_lists(dir.path()).unwrap();
        let train = read_id_list(&dir.path().join("train.txt")).unwrap();
        assert_eq!(m.select(&train).unwrap(), s.train);
    }
}
