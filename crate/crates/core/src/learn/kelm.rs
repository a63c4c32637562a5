use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::linalg::solve_spd;
use super::{gram, NormStats};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::functionals::FeatureVector;

pub const MODEL_MAGIC: &[u8; 4] = b"KELM";
pub const MODEL_VERSION: u32 = 1;

/// Relative bound on `max |(I/C + K) beta - T|`.
const RESIDUAL_TOL: f64 = 1e-8;

/// Trained kernel ELM with its training rows and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct KelmModel {
    /// Normalized training rows, N x d.
    pub train_matrix: Array2<f64>,
    /// N x L output weights.
    pub beta: Array2<f64>,
    pub c: f64,
    pub norm: NormStats,
    pub labels: Vec<String>,
}

/// `+1` for the true class and `-1` elsewhere.
pub fn target_matrix(y: &[usize], classes: usize) -> Array2<f64> {
    Array2::from_shape_fn((y.len(), classes), |(i, j)| if y[i] == j { 1.0 } else { -1.0 })
}

/// Index of the largest score; the first wins ties.
pub fn argmax(scores: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Solves `(I/C + K) beta = T` for normalized training rows.
pub fn train_kelm(train: ArrayView2<f64>, y: &[usize], labels: &[String], c: f64, norm: NormStats) -> Result<KelmModel> {
    let k = gram(train, train)?;
    train_with_gram(train.to_owned(), &k, y, labels, c, norm)
}

pub(crate) fn train_with_gram(
    train: Array2<f64>,
    k: &Array2<f64>,
    y: &[usize],
    labels: &[String],
    c: f64,
    norm: NormStats,
) -> Result<KelmModel> {
    let (n, l) = (train.nrows(), labels.len());
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("C = {c} must be positive and finite")));
    }
    if l < 2 || n < l {
        return Err(Error::Precondition(format!("need N >= L >= 2, got N = {n}, L = {l}")));
    }
    if y.len() != n || k.dim() != (n, n) {
        return Err(Error::Shape(format!("{n} rows, {} labels, kernel {:?}", y.len(), k.dim())));
    }
    if train.ncols() != norm.dims() {
        return Err(Error::Shape(format!(
            "{} features, normalization covers {}",
            train.ncols(),
            norm.dims()
        )));
    }
    if let Some(bad) = y.iter().find(|&&c| c >= l) {
        return Err(Error::Label(format!("class index {bad} outside {l} labels")));
    }
    let t = target_matrix(y, l);
    let mut a = k.clone();
    for i in 0..n {
        a[[i, i]] += 1.0 / c;
    }
    let t_inf = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sol = solve_spd(a.view(), t.view(), RESIDUAL_TOL * t_inf.max(1.0)).map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("C = {c:e}: {m}")),
        other => other,
    })?;
    log::debug!(
        "trained C = {c:e}: residual {:e}, {} refinement step(s){}",
        sol.residual,
        sol.refinements,
        if sol.jittered { ", jittered" } else { "" }
    );
    Ok(KelmModel {
        train_matrix: train,
        beta: sol.x,
        c,
        norm,
        labels: labels.to_vec(),
    })
}

impl KelmModel {
    /// Scores for normalized rows: `gram(x, train) beta`.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(gram(x, self.train_matrix.view())?.dot(&self.beta))
    }

    /// Scores and class index for each normalized row.
    pub fn predict_rows(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
        let s = self.scores(x)?;
        let labels = s.rows().into_iter().map(argmax).collect();
        Ok((s, labels))
    }

    /// Scores and class index for one normalized vector.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, usize)> {
        let s = self.scores(x.insert_axis(Axis(0)))?.row(0).to_owned();
        let label = argmax(s.view());
        Ok((s, label))
    }

    /// Normalizes raw feature vectors with the model's statistics and predicts labels.
    pub fn predict_features(&self, features: &[FeatureVector]) -> Result<Vec<(Array1<f64>, String)>> {
        features
            .iter()
            .map(|f| {
                let z = self.norm.apply(ArrayView1::from(&f.values))?;
                let (s, i) = self.predict(z.view())?;
                Ok((s, self.labels[i].clone()))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, |w| self.write_to(w).map_err(|e| Error::io(path, e)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn write_to(&self, w: &mut dyn Write) -> std::io::Result<()> {
        let (n, d) = self.train_matrix.dim();
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LittleEndian>(MODEL_VERSION)?;
        w.write_u32::<LittleEndian>(self.labels.len() as u32)?;
        for l in &self.labels {
            w.write_u32::<LittleEndian>(l.len() as u32)?;
            w.write_all(l.as_bytes())?;
        }
        w.write_f64::<LittleEndian>(self.c)?;
        w.write_u8(self.norm.apply_l2 as u8)?;
        w.write_u32::<LittleEndian>(d as u32)?;
        for v in self.norm.mean.iter().chain(&self.norm.std) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        for &flag in &self.norm.degenerate {
            w.write_u8(flag as u8)?;
        }
        w.write_u32::<LittleEndian>(n as u32)?;
        for v in self.train_matrix.iter().chain(self.beta.iter()) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    fn read_from(r: &mut dyn Read) -> Result<Self> {
        let bad = |what: &str| Error::Format(format!("model file: {what}"));
        let io = |e: std::io::Error| Error::Format(format!("model file truncated or unreadable: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MODEL_MAGIC {
            return Err(bad("bad magic, not a model file"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != MODEL_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let l = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut labels = Vec::with_capacity(l.min(1024));
        for _ in 0..l {
            let len = r.read_u32::<LittleEndian>().map_err(io)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(io)?;
            labels.push(String::from_utf8(buf).map_err(|_| bad("label is not UTF-8"))?);
        }
        let c = r.read_f64::<LittleEndian>().map_err(io)?;
        let apply_l2 = match r.read_u8().map_err(io)? {
            0 => false,
            1 => true,
            _ => return Err(bad("bad normalization flag")),
        };
        let d = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut read_vec = |count: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; count];
            r.read_f64_into::<LittleEndian>(&mut v).map_err(io)?;
            Ok(v)
        };
        let mean = read_vec(d)?;
        let std = read_vec(d)?;
        let mut flags = vec![0u8; d];
        r.read_exact(&mut flags).map_err(io)?;
        let n = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut values = vec![0.0; n * d];
        r.read_f64_into::<LittleEndian>(&mut values).map_err(io)?;
        let mut beta = vec![0.0; n * l];
        r.read_f64_into::<LittleEndian>(&mut beta).map_err(io)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(io)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(KelmModel {
            train_matrix: Array2::from_shape_vec((n, d), values).expect("sized"),
            beta: Array2::from_shape_vec((n, l), beta).expect("sized"),
            c,
            norm: NormStats {
                mean,
                std,
                degenerate: flags.iter().map(|&f| f != 0).collect(),
                apply_l2,
            },
            labels,
        })
    }
}
