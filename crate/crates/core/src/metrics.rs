//! Confusion matrices, class-wise reports and the k-fold splitter.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// `K × K` counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("confusion matrix", format!("need at least 2 classes, got {k}")));
        }
        Ok(Self {
            k,
            counts: vec![0; k * k],
        })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        let mut cm = Self::new(k)?;
        for (t, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::invalid("confusion matrix", format!("row {t} has {} entries, expected {k}", row.len())));
            }
            cm.counts[t * k..(t + 1) * k].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn from_predictions(k: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = Self::new(k)?;
        for (t, p) in pairs {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.k || predicted >= self.k {
            return Err(Error::invalid(
                "confusion matrix",
                format!("class pair ({truth}, {predicted}) outside 0..{}", self.k),
            ));
        }
        self.counts[truth * self.k + predicted] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn row_sum(&self, t: usize) -> u64 {
        (0..self.k).map(|p| self.get(t, p)).sum()
    }

    pub fn col_sum(&self, p: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, p)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Relabels classes: old class `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.k).collect::<Vec<_>>() {
            return Err(Error::invalid("confusion matrix", "not a permutation of the class indices"));
        }
        let mut out = Self::new(self.k)?;
        for t in 0..self.k {
            for p in 0..self.k {
                out.counts[perm[t] * self.k + perm[p]] = self.get(t, p);
            }
        }
        Ok(out)
    }

    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut s = String::from("true\\predicted");
        for l in labels {
            let _ = write!(s, ",{}", csv_field(l));
        }
        s.push('\n');
        for t in 0..self.k {
            s.push_str(&csv_field(labels.get(t).map(String::as_str).unwrap_or("?")));
            for p in 0..self.k {
                let _ = write!(s, ",{}", self.get(t, p));
            }
            s.push('\n');
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    /// Percentages in `[0, 100]`.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when no sample was predicted as this class.
    pub precision_undefined: bool,
    /// Set when the class has no samples.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub total: u64,
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class precision, recall and F1, their unweighted means, and accuracy.
/// Zero denominators give 0 and set the matching flag.
pub fn metrics(cm: &ConfusionMatrix, labels: &[String]) -> Result<ClassReport> {
    let k = cm.num_classes();
    if labels.len() != k {
        return Err(Error::invalid("metrics", format!("{} labels for {k} classes", labels.len())));
    }
    let classes: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = percent(tp, cm.col_sum(c));
            let recall = percent(tp, cm.row_sum(c));
            if precision.is_none() {
                log::warn!("class `{}` was never predicted; precision set to 0", labels[c]);
            }
            if recall.is_none() {
                log::warn!("class `{}` has no samples; recall set to 0", labels[c]);
            }
            let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
            ClassMetrics {
                label: labels[c].clone(),
                precision: p,
                recall: r,
                f1: harmonic(p, r),
                support: cm.row_sum(c),
                precision_undefined: precision.is_none(),
                recall_undefined: recall.is_none(),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / k as f64;
    Ok(ClassReport {
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        accuracy: percent(cm.trace(), cm.total()).unwrap_or(0.0),
        total: cm.total(),
        classes,
    })
}

impl ClassReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,precision,recall,f1,support\n");
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{},{:.2},{:.2},{:.2},{}",
                csv_field(&c.label),
                c.precision,
                c.recall,
                c.f1,
                c.support
            );
        }
        let _ = writeln!(
            s,
            "macro avg,{:.2},{:.2},{:.2},{}",
            self.macro_precision, self.macro_recall, self.macro_f1, self.total
        );
        let _ = writeln!(s, "accuracy,,,{:.2},{}", self.accuracy, self.total);
        s
    }

    pub fn to_text(&self) -> String {
        let width = self.classes.iter().map(|c| c.label.len()).max().unwrap_or(5).max(9);
        let mut s = format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}\n",
            "", "precision", "recall", "f1", "support"
        );
        for c in &self.classes {
            let flag = match (c.precision_undefined, c.recall_undefined) {
                (false, false) => "",
                (true, false) => "  (never predicted)",
                (false, true) => "  (no samples)",
                (true, true) => "  (no samples, never predicted)",
            };
            let _ = writeln!(
                s,
                "{:<width$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>7}{flag}",
                c.label, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(
            s,
            "\n{:<width$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>7}",
            "macro avg", self.macro_precision, self.macro_recall, self.macro_f1, self.total
        );
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>9}  {:>9.2}  {:>7}", "accuracy", "", "", self.accuracy, self.total);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    /// One split per class; indices are positions within that class.
    pub classes: Vec<ClassSplit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub class_counts: Vec<usize>,
    pub folds: Vec<Fold>,
}

/// Deterministic stratified k-fold plan.
///
/// Each class is shuffled with its own SplitMix64 stream (split from `seed`
/// in class order) and cut into `folds` chunks of `count / folds`. Fold `f`
/// tests on chunk `f`, validates on chunk `f + 1` (cyclically) and trains on
/// everything else, so leftover samples always land in training.
pub fn kfold_split(class_counts: &[usize], folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 3 {
        return Err(Error::invalid("kfold_split", format!("need at least 3 folds, got {folds}")));
    }
    if class_counts.is_empty() {
        return Err(Error::invalid("kfold_split", "no classes"));
    }
    let mut root = SplitMix64::new(seed);
    let shuffled: Vec<Vec<usize>> = class_counts
        .iter()
        .map(|&n| {
            let mut idx: Vec<usize> = (0..n).collect();
            root.split().shuffle(&mut idx);
            idx
        })
        .collect();

    let plan = (0..folds)
        .map(|f| Fold {
            classes: shuffled
                .iter()
                .map(|idx| {
                    let q = idx.len() / folds;
                    let chunk = |c: usize| c * q..(c + 1) * q;
                    let (test, val) = (chunk(f), chunk((f + 1) % folds));
                    let train = (0..idx.len())
                        .filter(|i| !test.contains(i) && !val.contains(i))
                        .map(|i| idx[i])
                        .collect();
                    ClassSplit {
                        train,
                        val: idx[val].to_vec(),
                        test: idx[test].to_vec(),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(FoldPlan {
        seed,
        class_counts: class_counts.to_vec(),
        folds: plan,
    })
}
