//! Confusion matrix and accuracy / precision / recall / F1.

use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::train::argmax;

/// Binary tallies against one positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same predictions scored with the other class as positive.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, tn: self.tp, fn_: self.fp }
    }
}

impl Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// One-vs-rest tally of `predictions` against `truths`.
pub fn confusion_matrix(predictions: &[usize], truths: &[usize], positive: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::Data(format!("{} predictions for {} ground-truth labels", predictions.len(), truths.len())));
    }
    if predictions.is_empty() {
        return Err(Error::Data("confusion matrix needs at least one prediction".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p == positive, t == positive) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Which ratios had a zero denominator and were reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Degenerate {
    /// No positive predictions.
    pub precision: bool,
    /// No actual positives.
    pub recall: bool,
    /// Precision and recall both 0.
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores {
    pub label: Label,
    /// Samples whose true label is this class.
    pub support: u64,
    /// Samples predicted as this class.
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub cm: ConfusionMatrix,
    pub degenerate: Degenerate,
    /// Scores with each class in turn as the positive class (Healthy, Diseased).
    pub per_class: [ClassScores; 2],
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) }
}

/// `(precision, recall, f1, degenerate)` for one positive class.
fn prf(cm: &ConfusionMatrix) -> (f64, f64, f64, Degenerate) {
    let (precision, dp) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, dr) = ratio(cm.tp, cm.tp + cm.fn_);
    let df = precision + recall == 0.0;
    let f1 = if df { 0.0 } else { f1_score(precision, recall) };
    (precision, recall, f1, Degenerate { precision: dp, recall: dr, f1: df })
}

/// Harmonic mean `2PR / (P + R)`; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) }
}

/// Metrics for `cm`, whose positive class is Diseased.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("no samples were evaluated".into()));
    }
    let accuracy = (cm.tp + cm.tn) as f64 / total as f64;
    let (precision, recall, f1, degenerate) = prf(cm);
    let scores = |label: Label, c: &ConfusionMatrix| {
        let (precision, recall, f1, _) = prf(c);
        ClassScores { label, support: c.tp + c.fn_, predicted: c.tp + c.fp, precision, recall, f1 }
    };
    Ok(MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        cm: *cm,
        degenerate,
        per_class: [scores(Label::Healthy, &cm.swapped()), scores(Label::Diseased, cm)],
    })
}

/// Mean of per-class F1 over `classes` classes, each scored one-vs-rest.
pub fn macro_f1(predictions: &[usize], truths: &[usize], classes: usize) -> Result<f64> {
    let mut sum = 0.0;
    for k in 0..classes {
        sum += prf(&confusion_matrix(predictions, truths, k)?).2;
    }
    Ok(sum / classes as f64)
}

/// Runs `model` over `data` in batches and scores it with Diseased positive.
/// Returns the report and the per-sample predictions.
pub fn evaluate_model(
    model: &dyn Classifier,
    data: &dyn Dataset,
    batch_size: usize,
) -> Result<(MetricsReport, Vec<usize>)> {
    if data.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut predictions = Vec::with_capacity(data.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let x = data.batch(chunk, None, crate::exec::Execution::default())?;
        let probs = model.predict_proba(&x)?;
        predictions.extend(probs.data().chunks(model.classes()).map(argmax));
    }
    let truths: Vec<usize> = indices.iter().map(|&i| data.label(i).index()).collect();
    let cm = confusion_matrix(&predictions, &truths, Label::Diseased.index())?;
    Ok((compute_metrics(&cm)?, predictions))
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let c = &self.cm;
        let mut out = String::from("metric,value\n");
        for (name, v) in
            [("accuracy", self.accuracy), ("precision", self.precision), ("recall", self.recall), ("f1", self.f1)]
        {
            writeln!(out, "{name},{v:.4}").unwrap();
        }
        for (name, v) in [("tp", c.tp), ("fp", c.fp), ("tn", c.tn), ("fn", c.fn_)] {
            writeln!(out, "{name},{v}").unwrap();
        }
        for s in &self.per_class {
            let l = s.label.as_str().to_lowercase();
            writeln!(out, "{l}_support,{}", s.support).unwrap();
            writeln!(out, "{l}_predicted,{}", s.predicted).unwrap();
            writeln!(out, "{l}_precision,{:.4}", s.precision).unwrap();
            writeln!(out, "{l}_recall,{:.4}", s.recall).unwrap();
            writeln!(out, "{l}_f1,{:.4}", s.f1).unwrap();
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.cm;
        writeln!(f, "accuracy  {:.4}", self.accuracy)?;
        writeln!(f, "precision {:.4}", self.precision)?;
        writeln!(f, "recall    {:.4}", self.recall)?;
        writeln!(f, "f1        {:.4}", self.f1)?;
        if self.degenerate.any() {
            writeln!(f, "note: zero denominators reported as 0 ({:?})", self.degenerate)?;
        }
        writeln!(f)?;
        writeln!(f, "confusion matrix (positive = Diseased)")?;
        writeln!(f, "{:<16}{:>10}{:>10}", "", "pred H", "pred D")?;
        writeln!(f, "{:<16}{:>10}{:>10}", "true Healthy", c.tn, c.fp)?;
        writeln!(f, "{:<16}{:>10}{:>10}", "true Diseased", c.fn_, c.tp)?;
        writeln!(f)?;
        writeln!(f, "{:<10}{:>9}{:>11}{:>11}{:>9}{:>8}", "class", "support", "predicted", "precision", "recall", "f1")?;
        for s in &self.per_class {
            writeln!(
                f,
                "{:<10}{:>9}{:>11}{:>11.4}{:>9.4}{:>8.4}",
                s.label, s.support, s.predicted, s.precision, s.recall, s.f1
            )?;
        }
        Ok(())
    }
}
