//! Confusion matrix, per-class precision/recall/F1 with macro averages,
//! accuracy, one-vs-rest macro AUC, and report rendering/parsing.

use crate::error::{Error, Result};

/// C x C count grid; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<usize>,
    classes: usize,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: usize, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Input(format!(
                "{} counts for a {classes}x{classes} matrix",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { counts, classes })
    }

    pub fn from_labels(true_labels: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if true_labels.len() != predicted.len() {
            return Err(Error::Input(format!(
                "label length mismatch: {} true vs {} predicted",
                true_labels.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![0usize; classes * classes];
        for (&t, &p) in true_labels.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::Input(format!(
                    "label ({t}, {p}) out of range for {classes} classes"
                )));
            }
            counts[t * classes + p] += 1;
        }
        Ok(ConfusionMatrix { counts, classes })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes).map(|i| self.count(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.classes)
            .map(|i| (0..self.classes).map(|j| self.count(i, j)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        (0..self.classes)
            .map(|j| (0..self.classes).map(|i| self.count(i, j)).sum())
            .collect()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Input("accuracy of an empty confusion matrix".into()));
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// Plain-text rendering in the row=true / column=predicted orientation.
    pub fn render(&self, class_names: &[String]) -> String {
        let width = class_names
            .iter()
            .map(|n| n.len())
            .chain(std::iter::once(9))
            .max()
            .unwrap_or(9)
            .max(6);
        let mut out = String::new();
        out.push_str(&format!("{:width$}", "true/pred"));
        for name in class_names {
            out.push_str(&format!(" {name:>width$}"));
        }
        out.push('\n');
        for (i, name) in class_names.iter().enumerate() {
            out.push_str(&format!("{name:width$}"));
            for j in 0..self.classes {
                out.push_str(&format!(" {:>width$}", self.count(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// One-vs-rest macro AUC; absent when only hard labels are available.
    pub auc: Option<f64>,
    pub samples: usize,
    /// Classes with an empty row and column (no support at all); their
    /// metrics are reported as 0 by convention.
    pub empty_classes: Vec<usize>,
}

/// Per-class precision/recall/F1 and unweighted macro averages.
///
/// Conventions for degenerate cases: an empty predicted column gives
/// precision 0, an empty true row gives recall 0, and F1 is 0 whenever
/// precision + recall is 0. Classes empty in both directions are flagged.
pub fn precision_recall_f1(cm: &ConfusionMatrix, class_names: &[String]) -> Result<MetricsReport> {
    if class_names.len() != cm.classes() {
        return Err(Error::Input(format!(
            "{} class names for {} classes",
            class_names.len(),
            cm.classes()
        )));
    }
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let mut classes = Vec::with_capacity(cm.classes());
    let mut empty = Vec::new();
    for c in 0..cm.classes() {
        let tp = cm.count(c, c) as f64;
        let precision = if cols[c] > 0 { tp / cols[c] as f64 } else { 0.0 };
        let recall = if rows[c] > 0 { tp / rows[c] as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if rows[c] == 0 && cols[c] == 0 {
            empty.push(c);
        }
        classes.push(ClassMetrics {
            name: class_names[c].clone(),
            precision,
            recall,
            f1,
        });
    }
    let n = cm.classes() as f64;
    Ok(MetricsReport {
        macro_precision: classes.iter().map(|m| m.precision).sum::<f64>() / n,
        macro_recall: classes.iter().map(|m| m.recall).sum::<f64>() / n,
        macro_f1: classes.iter().map(|m| m.f1).sum::<f64>() / n,
        accuracy: cm.accuracy()?,
        auc: None,
        samples: cm.total(),
        empty_classes: empty,
        classes,
    })
}

/// Outcome of the one-vs-rest macro AUC: classes lacking both a positive and
/// a negative example are excluded from the mean and listed.
#[derive(Debug, Clone, PartialEq)]
pub struct AucSummary {
    pub macro_auc: f64,
    pub excluded_classes: Vec<usize>,
}

/// Rank-based (Mann-Whitney) binary AUC with half credit for ties.
fn binary_auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positives[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-rest macro AUC over probability rows `[N, C]` (flat, row-major).
/// Errors when no class has both positives and negatives.
pub fn auc_ovr_macro(probs: &[f64], num_classes: usize, labels: &[usize]) -> Result<AucSummary> {
    if num_classes == 0 || probs.len() != labels.len() * num_classes {
        return Err(Error::Input(format!(
            "probs length {} does not match {} labels x {num_classes} classes",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Input(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    let mut aucs = Vec::new();
    let mut excluded = Vec::new();
    for c in 0..num_classes {
        let scores: Vec<f64> = labels
            .iter()
            .enumerate()
            .map(|(i, _)| probs[i * num_classes + c])
            .collect();
        let positives: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        match binary_auc(&scores, &positives) {
            Some(a) => aucs.push(a),
            None => excluded.push(c),
        }
    }
    if aucs.is_empty() {
        return Err(Error::Input(
            "AUC undefined: no class has both positive and negative examples".into(),
        ));
    }
    Ok(AucSummary {
        macro_auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
        excluded_classes: excluded,
    })
}

/// Round to two decimals with ties going to the even digit (table rendering
/// granularity).
pub fn round_half_even2(v: f64) -> f64 {
    (v * 100.0).round_ties_even() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Human-readable per-class blocks plus the macro average.
    Table,
    /// Single machine-parseable record that round-trips via `parse_report`.
    Structured,
}

/// Deterministic text rendering of a report.
pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => {
            let mut out = String::new();
            out.push_str(&format!("{:<16} {:>8}\n", "Class/Metric", "Value"));
            for m in &report.classes {
                out.push_str(&format!("{}\n", m.name));
                out.push_str(&format!("  {:<14} {:>8.2}\n", "F1", round_half_even2(m.f1)));
                out.push_str(&format!(
                    "  {:<14} {:>8.2}\n",
                    "Precision",
                    round_half_even2(m.precision)
                ));
                out.push_str(&format!(
                    "  {:<14} {:>8.2}\n",
                    "Recall",
                    round_half_even2(m.recall)
                ));
            }
            out.push_str("Macro avg.\n");
            out.push_str(&format!(
                "  {:<14} {:>8.2}\n",
                "F1",
                round_half_even2(report.macro_f1)
            ));
            out.push_str(&format!(
                "  {:<14} {:>8.2}\n",
                "Precision",
                round_half_even2(report.macro_precision)
            ));
            out.push_str(&format!(
                "  {:<14} {:>8.2}\n",
                "Recall",
                round_half_even2(report.macro_recall)
            ));
            out.push_str(&format!(
                "Accuracy {:.4}  AUC {}  Samples {}\n",
                report.accuracy,
                report
                    .auc
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_else(|| "n/a".into()),
                report.samples
            ));
            if !report.empty_classes.is_empty() {
                out.push_str(&format!(
                    "warning: classes with no support: {:?}\n",
                    report.empty_classes
                ));
            }
            out
        }
        ReportFormat::Structured => {
            // Full-precision floats (shortest round-trip representation).
            let mut fields = vec![
                format!("samples={}", report.samples),
                format!("accuracy={}", report.accuracy),
                format!(
                    "auc={}",
                    report.auc.map(|a| a.to_string()).unwrap_or_else(|| "na".into())
                ),
                format!("macro_precision={}", report.macro_precision),
                format!("macro_recall={}", report.macro_recall),
                format!("macro_f1={}", report.macro_f1),
                format!(
                    "empty_classes={}",
                    if report.empty_classes.is_empty() {
                        "none".to_string()
                    } else {
                        report
                            .empty_classes
                            .iter()
                            .map(|c| c.to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    }
                ),
            ];
            for (i, m) in report.classes.iter().enumerate() {
                fields.push(format!("class{i}.name={}", m.name));
                fields.push(format!("class{i}.precision={}", m.precision));
                fields.push(format!("class{i}.recall={}", m.recall));
                fields.push(format!("class{i}.f1={}", m.f1));
            }
            format!("metrics {}\n", fields.join(" "))
        }
    }
}

/// Parse a structured record back into an equal `MetricsReport`.
pub fn parse_report(text: &str) -> Result<MetricsReport> {
    let line = text
        .lines()
        .find(|l| l.starts_with("metrics "))
        .ok_or_else(|| Error::Format("no structured metrics record found".into()))?;
    let mut kv = std::collections::BTreeMap::new();
    for field in line.trim_start_matches("metrics ").split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad field '{field}'")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<String> {
        kv.get(k)
            .cloned()
            .ok_or_else(|| Error::Format(format!("missing field {k}")))
    };
    let parse_f = |k: &str| -> Result<f64> {
        get(k)?
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("bad float in field {k}")))
    };
    let mut classes = Vec::new();
    let mut i = 0;
    while kv.contains_key(&format!("class{i}.name")) {
        classes.push(ClassMetrics {
            name: get(&format!("class{i}.name"))?,
            precision: parse_f(&format!("class{i}.precision"))?,
            recall: parse_f(&format!("class{i}.recall"))?,
            f1: parse_f(&format!("class{i}.f1"))?,
        });
        i += 1;
    }
    let auc_raw = get("auc")?;
    let empty_raw = get("empty_classes")?;
    Ok(MetricsReport {
        classes,
        macro_precision: parse_f("macro_precision")?,
        macro_recall: parse_f("macro_recall")?,
        macro_f1: parse_f("macro_f1")?,
        accuracy: parse_f("accuracy")?,
        auc: if auc_raw == "na" {
            None
        } else {
            Some(
                auc_raw
                    .parse::<f64>()
                    .map_err(|_| Error::Format("bad float in field auc".into()))?,
            )
        },
        samples: get("samples")?
            .parse::<usize>()
            .map_err(|_| Error::Format("bad integer in field samples".into()))?,
        empty_classes: if empty_raw == "none" {
            Vec::new()
        } else {
            empty_raw
                .split(',')
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|_| Error::Format("bad class index in empty_classes".into()))
                })
                .collect::<Result<Vec<_>>>()?
        },
    })
}
