//! Confusion matrices and the per-class / macro statistics reported in the
//! result tables: precision, recall, F1, one-vs-rest accuracy, and an
//! "Overall" row of macro means plus plain multiclass accuracy.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `counts[true * n + predicted]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let n = class_names.len();
        Self {
            class_names,
            counts: vec![0; n * n],
        }
    }

    /// Matrix with classes named `0..n`.
    pub fn with_classes(n: usize) -> Self {
        Self::new((0..n).map(|i| i.to_string()).collect())
    }

    pub fn from_counts(class_names: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        let n = class_names.len();
        if counts.len() != n * n {
            return Err(Error::Shape(format!(
                "{} counts for {n} classes",
                counts.len()
            )));
        }
        Ok(Self {
            class_names,
            counts,
        })
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut cm = Self::with_classes(n);
        for &(t, p) in pairs {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) -> Result<()> {
        let n = self.num_classes();
        if true_class >= n || predicted >= n {
            return Err(Error::Data(format!(
                "class pair ({true_class}, {predicted}) outside 0..{n}"
            )));
        }
        self.counts[true_class * n + predicted] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.num_classes() + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.num_classes()).map(|p| self.get(c, p)).sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.num_classes()).map(|t| self.get(t, c)).sum()
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            total => self.trace() as f64 / total as f64,
        }
    }

    /// Rows = true class, columns = predicted class, comma separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (t, name) in self.class_names.iter().enumerate() {
            out.push_str(name);
            for p in 0..self.num_classes() {
                let _ = write!(out, ",{}", self.get(t, p));
            }
            out.push('\n');
        }
        out
    }
}

/// One row of the table; every field is a fraction in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-rest accuracy `(TP + TN) / total`.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub per_class: Vec<ClassStats>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Multiclass accuracy `trace / total`.
    pub accuracy: f64,
}

impl ClassMetrics {
    /// Assembles metrics from already-computed rows, e.g. values copied from a
    /// published table (as fractions).
    pub fn from_rows(per_class: Vec<ClassStats>, overall: ClassStats) -> Self {
        Self {
            per_class,
            macro_precision: overall.precision,
            macro_recall: overall.recall,
            macro_f1: overall.f1,
            accuracy: overall.accuracy,
        }
    }

    pub fn overall(&self) -> ClassStats {
        ClassStats {
            precision: self.macro_precision,
            recall: self.macro_recall,
            f1: self.macro_f1,
            accuracy: self.accuracy,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("empty confusion matrix".into()));
    }
    let n = cm.num_classes();
    let per_class: Vec<ClassStats> = (0..n)
        .map(|c| {
            let tp = cm.get(c, c);
            let fp = cm.col_sum(c) - tp;
            let fn_ = cm.row_sum(c) - tp;
            let tn = total - tp - fp - fn_;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            ClassStats {
                precision,
                recall,
                f1: f1_score(precision, recall),
                accuracy: ratio(tp + tn, total),
            }
        })
        .collect();
    let mean = |f: fn(&ClassStats) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    Ok(ClassMetrics {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        accuracy: cm.accuracy(),
        per_class,
    })
}

/// Table rounding tolerance: half a unit in the second decimal of a percentage.
pub const OVERALL_TOLERANCE: f64 = 0.005 / 100.0;

/// True iff the macro fields equal the unweighted per-class means within
/// [`OVERALL_TOLERANCE`] (the multiclass accuracy is not a macro mean).
pub fn verify_overall_consistency(metrics: &ClassMetrics) -> bool {
    let n = metrics.per_class.len();
    if n == 0 {
        return false;
    }
    let mean = |f: fn(&ClassStats) -> f64| metrics.per_class.iter().map(f).sum::<f64>() / n as f64;
    // The bound is inclusive; the slack absorbs binary error in decimal table values.
    let within = |a: f64, b: f64| (a - b).abs() <= OVERALL_TOLERANCE + 1e-12;
    within(mean(|s| s.precision), metrics.macro_precision)
        && within(mean(|s| s.recall), metrics.macro_recall)
        && within(mean(|s| s.f1), metrics.macro_f1)
}

/// A fraction as a percentage with two decimals, rounding half away from zero.
pub fn format_percent(fraction: f64) -> String {
    // The nudge absorbs binary representation error of decimal ties such as 0.90915.
    let scaled = fraction * 10_000.0;
    let rounded = (scaled.abs() + 0.5 + 1e-7).floor().copysign(scaled);
    let cents = rounded as i64;
    let sign = if cents < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", cents.abs() / 100, cents.abs() % 100)
}

pub const TABLE_COLUMNS: [&str; 5] = ["Classes", "Precision (%)", "Recall (%)", "F1 (%)", "Accuracy (%)"];

/// Plain-text table: one row per class and a final `Overall` row.
pub fn render_table(metrics: &ClassMetrics, class_names: &[String]) -> Result<String> {
    check_names(metrics, class_names)?;
    let width = class_names
        .iter()
        .map(String::len)
        .chain([TABLE_COLUMNS[0].len(), "Overall".len()])
        .max()
        .unwrap_or(7);
    let mut out = format!("{:<width$}", TABLE_COLUMNS[0]);
    for col in &TABLE_COLUMNS[1..] {
        let _ = write!(out, "  {col:>13}");
    }
    out.push('\n');
    let mut row = |name: &str, s: &ClassStats| {
        let _ = write!(out, "{name:<width$}");
        for v in [s.precision, s.recall, s.f1, s.accuracy] {
            let _ = write!(out, "  {:>13}", format_percent(v));
        }
        out.push('\n');
    };
    for (name, s) in class_names.iter().zip(&metrics.per_class) {
        row(name, s);
    }
    row("Overall", &metrics.overall());
    Ok(out)
}

/// Same content as [`render_table`], comma separated.
pub fn render_csv(metrics: &ClassMetrics, class_names: &[String]) -> Result<String> {
    check_names(metrics, class_names)?;
    let mut out = TABLE_COLUMNS.join(",");
    out.push('\n');
    let rows = class_names
        .iter()
        .map(String::as_str)
        .zip(metrics.per_class.iter().copied())
        .chain([("Overall", metrics.overall())]);
    for (name, s) in rows {
        let _ = writeln!(
            out,
            "{name},{},{},{},{}",
            format_percent(s.precision),
            format_percent(s.recall),
            format_percent(s.f1),
            format_percent(s.accuracy)
        );
    }
    Ok(out)
}

fn check_names(metrics: &ClassMetrics, class_names: &[String]) -> Result<()> {
    if class_names.len() != metrics.per_class.len() {
        return Err(Error::Data(format!(
            "{} class names for {} classes",
            class_names.len(),
            metrics.per_class.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn perfect_two_class() {
        let cm = ConfusionMatrix::from_counts(vec!["a".into(), "b".into()], vec![5, 0, 0, 5]).unwrap();
        let m = per_class_metrics(&cm).unwrap();
        for s in &m.per_class {
            assert_eq!((s.precision, s.recall, s.f1, s.accuracy), (1.0, 1.0, 1.0, 1.0));
        }
        assert_eq!(m.accuracy, 1.0);
        assert!(verify_overall_consistency(&m));
    }

    #[test]
    fn hand_counted_two_class() {
        let cm = ConfusionMatrix::from_counts(vec!["a".into(), "b".into()], vec![3, 1, 2, 4]).unwrap();
        let m = per_class_metrics(&cm).unwrap();
        let s = m.per_class[0];
        assert!(close(s.precision, 0.6));
        assert!(close(s.recall, 0.75));
        assert!(close(s.f1, 2.0 * 0.6 * 0.75 / 1.35));
        assert!(close(s.accuracy, 0.7));
        assert!(close(m.accuracy, 0.7));
    }

    #[test]
    fn zero_denominators_are_zero() {
        // Class 1 is never predicted and never true.
        let cm = ConfusionMatrix::from_counts(vec!["a".into(), "b".into()], vec![4, 0, 0, 0]).unwrap();
        let m = per_class_metrics(&cm).unwrap();
        assert_eq!(m.per_class[1].precision, 0.0);
        assert_eq!(m.per_class[1].recall, 0.0);
        assert_eq!(m.per_class[1].f1, 0.0);
        assert_eq!(m.per_class[1].accuracy, 1.0);
    }

    #[test]
    fn empty_matrix_errors() {
        assert!(per_class_metrics(&ConfusionMatrix::with_classes(3)).is_err());
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(format_percent(0.90915), "90.92");
        assert_eq!(format_percent(1.0), "100.00");
        assert_eq!(format_percent(0.0), "0.00");
        assert_eq!(format_percent(0.123449), "12.34");
        assert_eq!(format_percent(0.00005), "0.01");
        assert_eq!(format_percent(0.92695), "92.70");
    }

    #[test]
    fn perfect_nine_class_table() {
        let names: Vec<String> = (1..=9).map(|i| format!("Class {i}")).collect();
        let mut cm = ConfusionMatrix::new(names.clone());
        for c in 0..9 {
            cm.record(c, c).unwrap();
        }
        let m = per_class_metrics(&cm).unwrap();
        let table = render_table(&m, &names).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 1 + 10);
        for line in &lines[1..] {
            assert_eq!(line.matches("100.00").count(), 4, "{line}");
        }
        assert!(lines[10].starts_with("Overall"));
        let csv = render_csv(&m, &names).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "Classes,Precision (%),Recall (%),F1 (%),Accuracy (%)");
        assert_eq!(csv.lines().count(), 11);
        assert!(render_table(&m, &names[..8]).is_err());
    }

    #[test]
    fn perturbed_row_breaks_consistency() {
        let cm = ConfusionMatrix::from_counts(
            vec!["a".into(), "b".into(), "c".into()],
            vec![5, 1, 0, 2, 6, 1, 0, 1, 7],
        )
        .unwrap();
        let mut m = per_class_metrics(&cm).unwrap();
        assert!(verify_overall_consistency(&m));
        m.per_class[1].precision += 0.01;
        assert!(!verify_overall_consistency(&m));
    }

    #[test]
    fn confusion_csv_layout() {
        let cm = ConfusionMatrix::from_pairs(2, &[(0, 0), (0, 1), (1, 1)]).unwrap();
        assert_eq!(cm.to_csv(), "true\\predicted,0,1\n0,1,1\n1,0,1\n");
        assert!(ConfusionMatrix::from_pairs(2, &[(2, 0)]).is_err());
    }
}
