use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

/// Header of the confusion-matrix column counting unclassified test records.
pub const REJECTED_COLUMN: &str = "rejected";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    /// Test records of this class, rejected ones included.
    pub support: u64,
    /// `None` when nothing was predicted as this class.
    pub precision: Option<f64>,
    /// `None` when every test record of this class was rejected.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted class names; row and column order of `confusion`.
    pub classes: Vec<String>,
    /// Rows are true classes, columns predicted classes plus a final
    /// rejected column.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub correct: u64,
    /// Test records that reached the classifier.
    pub scored: u64,
    /// Test records without usable landmarks.
    pub rejected: u64,
    pub rejected_ids: Vec<String>,
    /// Scored records that fell outside the distance threshold.
    pub unmatched: u64,
    pub per_class: Vec<ClassMetrics>,
    pub train_size: usize,
    pub test_size: usize,
    pub enrolled: usize,
    pub train_rejected: usize,
    pub seed: Option<u64>,
}

pub(super) struct Tally {
    classes: Vec<String>,
    index: HashMap<String, usize>,
    confusion: Vec<Vec<u64>>,
    rejected_ids: Vec<String>,
    rejected_per_class: Vec<u64>,
    unmatched: u64,
}

impl Tally {
    pub(super) fn new(classes: Vec<String>) -> Self {
        let index = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        let n = classes.len();
        Self {
            classes,
            index,
            confusion: vec![vec![0; n + 1]; n],
            rejected_ids: Vec::new(),
            rejected_per_class: vec![0; n],
            unmatched: 0,
        }
    }

    pub(super) fn reject(&mut self, truth: &str, source_id: &str) {
        let row = self.index[truth];
        let col = self.classes.len();
        self.confusion[row][col] += 1;
        self.rejected_per_class[row] += 1;
        self.rejected_ids.push(source_id.to_string());
    }

    pub(super) fn record(&mut self, truth: &str, predicted: Option<&str>) {
        let row = self.index[truth];
        let col = match predicted {
            Some(label) => self.index[label],
            None => {
                self.unmatched += 1;
                self.classes.len()
            }
        };
        self.confusion[row][col] += 1;
    }

    pub(super) fn finish(
        self,
        train_size: usize,
        test_size: usize,
        enrolled: usize,
        train_rejected: usize,
        seed: Option<u64>,
    ) -> EvalReport {
        let n = self.classes.len();
        let rejected = self.rejected_ids.len() as u64;
        let total: u64 = self.confusion.iter().flatten().sum();
        let scored = total - rejected;
        let correct: u64 = (0..n).map(|i| self.confusion[i][i]).sum();
        let accuracy = if scored == 0 {
            0.0
        } else {
            correct as f64 / scored as f64
        };
        let per_class = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let row = &self.confusion[i];
                let support: u64 = row.iter().sum();
                let predicted: u64 = (0..n).map(|r| self.confusion[r][i]).sum();
                let scored = support - self.rejected_per_class[i];
                ClassMetrics {
                    label: label.clone(),
                    support,
                    precision: (predicted > 0).then(|| row[i] as f64 / predicted as f64),
                    recall: (scored > 0).then(|| row[i] as f64 / scored as f64),
                }
            })
            .collect();
        EvalReport {
            classes: self.classes,
            confusion: self.confusion,
            accuracy,
            correct,
            scored,
            rejected,
            rejected_ids: self.rejected_ids,
            unmatched: self.unmatched,
            per_class,
            train_size,
            test_size,
            enrolled,
            train_rejected,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}%", 100.0 * v))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("true\\predicted");
            for c in report
                .classes
                .iter()
                .map(String::as_str)
                .chain([REJECTED_COLUMN])
            {
                s.push(',');
                s.push_str(&csv_field(c));
            }
            s.push('\n');
            for (label, row) in report.classes.iter().zip(&report.confusion) {
                s.push_str(&csv_field(label));
                for v in row {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
            s
        }
        ReportFormat::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "accuracy: {} ({}/{} scored, {} rejected)",
                pct(Some(report.accuracy)),
                report.correct,
                report.scored,
                report.rejected
            );
            let seed = report
                .seed
                .map_or_else(|| "-".to_string(), |s| s.to_string());
            let _ = writeln!(
                s,
                "train: {} ({} enrolled, {} rejected)  test: {}  seed: {}",
                report.train_size, report.enrolled, report.train_rejected, report.test_size, seed
            );
            if report.unmatched > 0 {
                let _ = writeln!(s, "unmatched (beyond threshold): {}", report.unmatched);
            }
            let width = report
                .classes
                .iter()
                .map(|c| c.chars().count())
                .chain([5])
                .max()
                .unwrap_or(5);
            let _ = writeln!(
                s,
                "\n{:<width$}  {:>7}  {:>9}  {:>7}",
                "class", "support", "precision", "recall"
            );
            for m in &report.per_class {
                let _ = writeln!(
                    s,
                    "{:<width$}  {:>7}  {:>9}  {:>7}",
                    m.label,
                    m.support,
                    pct(m.precision),
                    pct(m.recall)
                );
            }
            if !report.rejected_ids.is_empty() {
                let _ = writeln!(s, "\nrejected: {}", report.rejected_ids.join(", "));
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_report(n: usize) -> EvalReport {
        let classes: Vec<String> = (0..n).map(|i| format!("c{i:02}")).collect();
        let mut t = Tally::new(classes.clone());
        for c in &classes {
            t.record(c, Some(c));
            t.record(c, Some(c));
        }
        t.finish(n, 2 * n, n, 0, Some(42))
    }

    #[test]
    fn identity_matrix_reports_full_accuracy() {
        let r = identity_report(3);
        assert_eq!(r.accuracy, 1.0);
        let text = render_report(&r, ReportFormat::Text);
        assert!(
            text.starts_with("accuracy: 100.00% (6/6 scored, 0 rejected)"),
            "{text}"
        );
        assert!(text.contains("seed: 42"));
    }

    #[test]
    fn csv_has_class_and_rejected_columns() {
        let r = identity_report(24);
        let csv = render_report(&r, ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 25);
        for line in &lines {
            assert_eq!(line.split(',').count() - 1, 25);
        }
        assert!(lines[0].ends_with(",rejected"));
        assert_eq!(lines[1], format!("c00,2{}", ",0".repeat(24)));
    }

    #[test]
    fn json_round_trips() {
        let classes = vec![
            "Arala".to_string(),
            "Mukula".to_string(),
            "Pataka".to_string(),
        ];
        let mut t = Tally::new(classes);
        t.record("Arala", Some("Arala"));
        t.record("Arala", Some("Mukula"));
        t.record("Mukula", None);
        t.reject("Pataka", "p_7");
        t.record("Pataka", Some("Pataka"));
        let r = t.finish(3, 5, 3, 0, None);
        assert_eq!(r.accuracy, 2.0 / 4.0);
        assert_eq!(r.per_class[0].recall, Some(0.5));
        assert_eq!(r.per_class[1].precision, Some(0.0));
        assert_eq!(r.per_class[1].recall, Some(0.0));
        let back: EvalReport =
            serde_json::from_str(&render_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn row_sums_match_support() {
        let mut t = Tally::new(vec!["a".into(), "b".into()]);
        t.record("a", Some("b"));
        t.reject("a", "x");
        t.record("b", Some("b"));
        let r = t.finish(2, 3, 2, 0, None);
        for (m, row) in r.per_class.iter().zip(&r.confusion) {
            assert_eq!(m.support, row.iter().sum::<u64>());
        }
        assert_eq!(r.scored + r.rejected, 3);
        assert_eq!(r.per_class[0].precision, None);
    }

    #[test]
    fn csv_quotes_awkward_labels() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
