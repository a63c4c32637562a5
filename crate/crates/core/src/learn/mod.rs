//! Feature normalization and kernel extreme learning machine training.

mod kelm;
pub mod linalg;
mod protocol;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub use kelm::{argmax, target_matrix, train_kelm, KelmModel, MODEL_MAGIC, MODEL_VERSION};
pub use protocol::{grid_search, refit_and_test, GridReport, GridRow, ProbeLedger, TestReport};

use crate::error::{Error, Result};
use crate::functionals::{ChunkRef, FeatureVector};

/// Feature normalization variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormMode {
    /// Per-feature z-scores.
    Zn,
    /// Z-scores followed by unit Euclidean length per vector.
    ZnL2,
}

impl NormMode {
    pub fn applies_l2(self) -> bool {
        matches!(self, NormMode::ZnL2)
    }

    /// Regularization grid searched by default for this mode.
    pub fn default_grid(self) -> Vec<f64> {
        let exps = match self {
            NormMode::Zn => -6..=1,
            NormMode::ZnL2 => -1..=6,
        };
        exps.map(decade).collect()
    }
}

/// `10^k` as the nearest double to the decimal literal `1ek`.
pub fn decade(k: i32) -> f64 {
    format!("1e{k}").parse().expect("valid float literal")
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::Zn => "zn",
            NormMode::ZnL2 => "zn+l2",
        })
    }
}

impl FromStr for NormMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zn" => Ok(NormMode::Zn),
            "zn+l2" | "zn-l2" | "znl2" => Ok(NormMode::ZnL2),
            other => Err(Error::Config(format!("unknown normalization `{other}` (expected zn or zn+l2)"))),
        }
    }
}

/// Training-set feature statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    /// Features whose deviation is zero relative to their mean; they map to 0.
    pub degenerate: Vec<bool>,
    pub apply_l2: bool,
}

/// Fits per-feature mean and standard deviation on the rows of `train`.
pub fn fit_norm(train: ArrayView2<f64>, apply_l2: bool) -> Result<NormStats> {
    let n = train.nrows();
    if n < 2 {
        return Err(Error::Precondition(format!("normalization needs at least 2 vectors, got {n}")));
    }
    let mean = train.mean_axis(Axis(0)).expect("non-empty");
    let mut var = Array1::<f64>::zeros(train.ncols());
    for row in train.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    let degenerate = std.iter().zip(&mean).map(|(s, m)| *s == 0.0 || *s <= 1e-12 * m.abs()).collect();
    Ok(NormStats {
        mean: mean.to_vec(),
        std,
        degenerate,
        apply_l2,
    })
}

impl NormStats {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.dims() {
            return Err(Error::Shape(format!("vector has {} features, stats cover {}", x.len(), self.dims())));
        }
        let mut z: Array1<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| if self.degenerate[i] { 0.0 } else { (v - self.mean[i]) / self.std[i] })
            .collect();
        if self.apply_l2 {
            let norm = z.dot(&z).sqrt();
            if norm > 0.0 {
                z.mapv_inplace(|v| v / norm);
            }
        }
        Ok(z)
    }

    pub fn apply_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(x.raw_dim());
        for (src, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
            dst.assign(&self.apply(src)?);
        }
        Ok(out)
    }
}

/// Linear kernel matrix `K[i][j] = <A_i, B_j>`.
pub fn gram(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "gram of {}-dim rows with {}-dim rows",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(a.dot(&b.t()))
}

/// Feature rows with class indices into a shared label list.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub chunks: Vec<Option<ChunkRef>>,
}

impl LabeledSet {
    pub fn from_features(features: &[FeatureVector], classes: &[String]) -> Result<Self> {
        let dims = features.first().map_or(0, |f| f.values.len());
        let mut x = Array2::zeros((features.len(), dims));
        let mut y = Vec::with_capacity(features.len());
        for (i, fv) in features.iter().enumerate() {
            if fv.values.len() != dims {
                return Err(Error::Shape(format!("row {} has {} features, expected {dims}", i + 1, fv.values.len())));
            }
            let label = fv
                .label
                .as_deref()
                .ok_or_else(|| Error::Label(format!("row {} has no label", i + 1)))?;
            let class = classes
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| Error::Label(format!("row {}: `{label}` is not one of {classes:?}", i + 1)))?;
            x.row_mut(i).assign(&ArrayView1::from(&fv.values));
            y.push(class);
        }
        Ok(Self {
            x,
            y,
            chunks: features.iter().map(|f| f.chunk_ref.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &LabeledSet) -> Result<LabeledSet> {
        let x = ndarray::concatenate(Axis(0), &[self.x.view(), other.x.view()])
            .map_err(|e| Error::Shape(format!("cannot stack feature sets: {e}")))?;
        Ok(LabeledSet {
            x,
            y: self.y.iter().chain(&other.y).copied().collect(),
            chunks: self.chunks.iter().chain(&other.chunks).cloned().collect(),
        })
    }
}

/// Sorted distinct labels of `features`.
pub fn classes_of(features: &[FeatureVector]) -> Vec<String> {
    let mut out: Vec<String> = features.iter().filter_map(|f| f.label.clone()).collect();
    out.sort();
    out.dedup();
    out
}

/// Fails when any chunk of `a` overlaps a chunk of `b` on the same recording.
///
/// Rows without a chunk reference cannot be checked and are skipped.
pub fn ensure_disjoint(a: &LabeledSet, b: &LabeledSet, what: &str) -> Result<()> {
    let mut by_source: HashMap<&str, Vec<&ChunkRef>> = HashMap::new();
    for c in a.chunks.iter().flatten() {
        by_source.entry(&c.source_id).or_default().push(c);
    }
    for c in b.chunks.iter().flatten() {
        if let Some(hit) = by_source
            .get(c.source_id.as_str())
            .and_then(|v| v.iter().find(|o| o.interval.overlaps(&c.interval)))
        {
            return Err(Error::Protocol(format!("{what} share audio: {hit} overlaps {c}")));
        }
    }
    Ok(())
}
