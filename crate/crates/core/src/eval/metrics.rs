use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Counts with rows = truth, columns = prediction, in a fixed label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: &[String]) -> Self {
        Self {
            labels: labels.to_vec(),
            counts: vec![vec![0; labels.len()]; labels.len()],
        }
    }

    /// Builds a matrix from class indices into `labels`.
    pub fn from_indices(truth: &[usize], pred: &[usize], labels: &[String]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!(
                "{} truth labels vs {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut cm = Self::zeros(labels);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= labels.len() || p >= labels.len() {
                return Err(Error::Label(format!("class index {} outside {} labels", t.max(p), labels.len())));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Classes with no truth rows.
    pub fn empty_classes(&self) -> Vec<&str> {
        (0..self.labels.len())
            .filter(|&i| self.support(i) == 0)
            .map(|i| self.labels[i].as_str())
            .collect()
    }

    pub fn recall(&self, class: usize) -> Option<f64> {
        let s = self.support(class);
        (s > 0).then(|| self.counts[class][class] as f64 / s as f64)
    }

    /// Tab-separated matrix with a `truth\pred` corner cell.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("truth\\pred");
        for l in &self.labels {
            let _ = write!(out, "\t{l}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                let _ = write!(out, "\t{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Tallies `truth` against `pred` using `label_order` for rows and columns.
pub fn confusion<S: AsRef<str>>(truth: &[S], pred: &[S], label_order: &[String]) -> Result<ConfusionMatrix> {
    let index = |s: &S| {
        label_order
            .iter()
            .position(|l| l == s.as_ref())
            .ok_or_else(|| Error::Label(format!("`{}` is not one of {label_order:?}", s.as_ref())))
    };
    let t = truth.iter().map(index).collect::<Result<Vec<_>>>()?;
    let p = pred.iter().map(index).collect::<Result<Vec<_>>>()?;
    ConfusionMatrix::from_indices(&t, &p, label_order)
}

/// Mean per-class recall; every class needs support.
pub fn uar(cm: &ConfusionMatrix) -> Result<f64> {
    if let Some(empty) = cm.empty_classes().first() {
        return Err(Error::UndefinedClass(format!("class `{empty}` has no samples; recall is undefined")));
    }
    let n = cm.labels.len();
    Ok((0..n).filter_map(|i| cm.recall(i)).sum::<f64>() / n as f64)
}

/// Mean recall over the classes that have support.
pub fn uar_present(cm: &ConfusionMatrix) -> Result<f64> {
    let recalls: Vec<f64> = (0..cm.labels.len()).filter_map(|i| cm.recall(i)).collect();
    if recalls.is_empty() {
        return Err(Error::Precondition("confusion matrix is empty".into()));
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Precondition("confusion matrix is empty".into()));
    }
    let trace: u64 = (0..cm.labels.len()).map(|i| cm.counts[i][i]).sum();
    Ok(trace as f64 / total as f64)
}
