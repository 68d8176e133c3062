//! Confusion matrices and the per-class / overall evaluation metrics.
//!
//! Per class i (with counts[i][j] = instances of true class i predicted as
//! class j): TP = counts[i][i], FP = column i − TP, FN = row i − TP,
//! TN = total − TP − FP − FN. Every 0/0 ratio evaluates to 0 and sets a
//! `zero_division` flag, since degenerate classes carry no signal.
//!
//! Macro F1 is computed from the macro aggregates —
//! 2·MacroP·MacroR/(MacroP+MacroR) — and is the primary figure; the mean of
//! per-class F1 scores is reported alongside as a secondary value.

use crate::{Error, Result};

/// Class-by-class prediction tally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    /// `counts[i][j]`: instances of true class i predicted as class j.
    counts: Vec<Vec<u64>>,
}

/// Per-class precision, recall, F1, and accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// True when any of the four ratios hit the 0/0 → 0 convention.
    pub zero_division: bool,
}

/// Overall classifier performance over one confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Primary macro F1: harmonic mean of the macro aggregates.
    pub macro_f1: f64,
    /// Secondary macro F1: unweighted mean of per-class F1 scores.
    pub macro_f1_mean_per_class: f64,
    /// Mean of per-class accuracies.
    pub average_accuracy: f64,
    /// Mean of per-class (FP+FN)/total.
    pub error_rate: f64,
    pub zero_division: bool,
}

impl ConfusionMatrix {
    /// Tallies predictions against ground truth over a fixed class list.
    pub fn from_labels(
        truths: &[String],
        predictions: &[String],
        classes: &[String],
    ) -> Result<Self> {
        if truths.len() != predictions.len() {
            return Err(Error::LengthMismatch {
                truths: truths.len(),
                predictions: predictions.len(),
            });
        }
        let index_of = |label: &String| -> Result<usize> {
            classes
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| Error::UnknownLabel(label.clone()))
        };
        let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
        for (truth, prediction) in truths.iter().zip(predictions.iter()) {
            counts[index_of(truth)?][index_of(prediction)?] += 1;
        }
        Ok(Self {
            classes: classes.to_vec(),
            counts,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, i: usize) -> u64 {
        self.counts[i][i]
    }

    pub fn false_positives(&self, i: usize) -> u64 {
        self.counts.iter().map(|row| row[i]).sum::<u64>() - self.counts[i][i]
    }

    pub fn false_negatives(&self, i: usize) -> u64 {
        self.counts[i].iter().sum::<u64>() - self.counts[i][i]
    }

    pub fn true_negatives(&self, i: usize) -> u64 {
        self.total() - self.true_positives(i) - self.false_positives(i) - self.false_negatives(i)
    }
}

/// 0/0 → 0, flagging the fallback.
fn ratio(numerator: f64, denominator: f64, flag: &mut bool) -> f64 {
    if denominator == 0.0 {
        *flag = true;
        0.0
    } else {
        numerator / denominator
    }
}

/// Computes precision, recall, F1, and accuracy for one class.
pub fn per_class_metrics(cm: &ConfusionMatrix, class: usize) -> PerClassMetrics {
    let tp = cm.true_positives(class) as f64;
    let fp = cm.false_positives(class) as f64;
    let fn_ = cm.false_negatives(class) as f64;
    let tn = cm.true_negatives(class) as f64;
    let mut flag = false;
    let precision = ratio(tp, tp + fp, &mut flag);
    let recall = ratio(tp, tp + fn_, &mut flag);
    let f1 = ratio(2.0 * precision * recall, precision + recall, &mut flag);
    let accuracy = ratio(tp + tn, tp + fp + fn_ + tn, &mut flag);
    PerClassMetrics {
        precision,
        recall,
        f1,
        accuracy,
        zero_division: flag,
    }
}

/// Computes the overall report: micro aggregates, macro aggregates, average
/// accuracy, and error rate.
pub fn overall_metrics(cm: &ConfusionMatrix) -> Report {
    let n = cm.classes.len();
    let total = cm.total() as f64;
    let mut flag = false;

    let mut tp_sum = 0.0;
    let mut fp_sum = 0.0;
    let mut fn_sum = 0.0;
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut accuracy_sum = 0.0;
    let mut error_sum = 0.0;
    for i in 0..n {
        let per = per_class_metrics(cm, i);
        flag |= per.zero_division;
        precision_sum += per.precision;
        recall_sum += per.recall;
        f1_sum += per.f1;
        accuracy_sum += per.accuracy;
        tp_sum += cm.true_positives(i) as f64;
        fp_sum += cm.false_positives(i) as f64;
        fn_sum += cm.false_negatives(i) as f64;
        let errors = (cm.false_positives(i) + cm.false_negatives(i)) as f64;
        error_sum += ratio(errors, total, &mut flag);
    }

    let micro_precision = ratio(tp_sum, tp_sum + fp_sum, &mut flag);
    let micro_recall = ratio(tp_sum, tp_sum + fn_sum, &mut flag);
    let micro_f1 = ratio(
        2.0 * micro_precision * micro_recall,
        micro_precision + micro_recall,
        &mut flag,
    );
    let classes = n as f64;
    let macro_precision = ratio(precision_sum, classes, &mut flag);
    let macro_recall = ratio(recall_sum, classes, &mut flag);
    let macro_f1 = ratio(
        2.0 * macro_precision * macro_recall,
        macro_precision + macro_recall,
        &mut flag,
    );
    Report {
        micro_precision,
        micro_recall,
        micro_f1,
        macro_precision,
        macro_recall,
        macro_f1,
        macro_f1_mean_per_class: ratio(f1_sum, classes, &mut flag),
        average_accuracy: ratio(accuracy_sum, classes, &mut flag),
        error_rate: ratio(error_sum, classes, &mut flag),
        zero_division: flag,
    }
}

/// Renders one per-class table spanning several classifiers, one column
/// group of PR. / REC. / F1 / ACC. per classifier — the layout used for
/// per-class results tables.
///
/// Every matrix must share the same class list.
pub fn render_per_class_table(groups: &[(String, &ConfusionMatrix)]) -> String {
    assert!(!groups.is_empty(), "table needs at least one classifier");
    let classes = groups[0].1.classes();
    for (_, cm) in groups {
        assert_eq!(
            cm.classes(),
            classes,
            "all classifiers must share one class list"
        );
    }
    let name_width = classes
        .iter()
        .map(|c| c.len())
        .chain(std::iter::once("APP".len()))
        .max()
        .unwrap();
    const CELL: usize = 7; // "0.9836 " — four decimals plus separator
    let group_width = 4 * CELL - 1;

    let mut out = String::new();
    out.push_str(&format!("{:name_width$}", ""));
    for (name, _) in groups {
        out.push_str(&format!(" | {name:^group_width$}"));
    }
    out.push('\n');
    out.push_str(&format!("{:name_width$}", "APP"));
    for _ in groups {
        out.push_str(&format!(
            " | {:<6} {:<6} {:<6} {:<6}",
            "PR.", "REC.", "F1", "ACC."
        ));
    }
    out.push('\n');
    let line_len = name_width + groups.len() * (3 + group_width);
    out.push_str(&"-".repeat(line_len));
    out.push('\n');
    for (i, class) in classes.iter().enumerate() {
        out.push_str(&format!("{class:name_width$}"));
        for (_, cm) in groups {
            let m = per_class_metrics(cm, i);
            out.push_str(&format!(
                " | {:<6.4} {:<6.4} {:<6.4} {:<6.4}",
                m.precision, m.recall, m.f1, m.accuracy
            ));
        }
        out.push('\n');
    }
    out
}

/// The overall metrics as ordered key–value pairs, for machine-readable
/// output. Values use the shortest exact decimal form, so files built from
/// them are byte-deterministic and parse back to the same floats.
pub fn report_key_values(report: &Report) -> Vec<(&'static str, String)> {
    vec![
        ("micro_precision", report.micro_precision.to_string()),
        ("micro_recall", report.micro_recall.to_string()),
        ("micro_f1", report.micro_f1.to_string()),
        ("macro_precision", report.macro_precision.to_string()),
        ("macro_recall", report.macro_recall.to_string()),
        ("macro_f1", report.macro_f1.to_string()),
        (
            "macro_f1_mean_per_class",
            report.macro_f1_mean_per_class.to_string(),
        ),
        ("average_accuracy", report.average_accuracy.to_string()),
        ("error_rate", report.error_rate.to_string()),
        ("zero_division", report.zero_division.to_string()),
    ]
}

/// Renders the overall block of one report as aligned `name value` lines.
pub fn render_overall(report: &Report) -> String {
    let mut out = String::new();
    let rows = [
        ("Micro Precision", report.micro_precision),
        ("Micro Recall", report.micro_recall),
        ("Micro F1", report.micro_f1),
        ("Macro Precision", report.macro_precision),
        ("Macro Recall", report.macro_recall),
        ("Macro F1", report.macro_f1),
        ("Macro F1 (mean per-class)", report.macro_f1_mean_per_class),
        ("Average Accuracy", report.average_accuracy),
        ("Error Rate", report.error_rate),
    ];
    for (name, value) in rows {
        out.push_str(&format!("{name:<26} {value:.4}\n"));
    }
    if report.zero_division {
        out.push_str("note: at least one 0/0 ratio was reported as 0\n");
    }
    out
}
