//! Chunk-level summaries of LLD contours.
//!
//! Each of the 114 LLD columns is reduced by ten functionals, giving a
//! 1140-dimensional vector laid out LLD-major: index `lld * 10 + functional`.

use std::io::Read;
use std::path::Path;

use crate::audio_io::TimeInterval;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::lld::{LldMatrix, LLD_DIMS};

pub const N_FUNCTIONALS: usize = 10;
pub const FEATURE_DIMS: usize = LLD_DIMS * N_FUNCTIONALS;

/// Functional names in output order.
pub const FUNCTIONAL_NAMES: [&str; N_FUNCTIONALS] = [
    "mean",
    "stddev",
    "slope",
    "offset",
    "curvature",
    "min",
    "relpos_min",
    "max",
    "relpos_max",
    "zcr",
];

/// The recording span a feature vector was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRef {
    pub source_id: String,
    pub interval: TimeInterval,
}

impl std::fmt::Display for ChunkRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}:{}", self.source_id, self.interval.begin_s, self.interval.end_s)
    }
}

impl std::str::FromStr for ChunkRef {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("chunk reference `{s}` is not `source@begin:end`"));
        let (source, span) = s.rsplit_once('@').ok_or_else(bad)?;
        let (b, e) = span.split_once(':').ok_or_else(bad)?;
        let interval = TimeInterval::new(b.parse().map_err(|_| bad())?, e.parse().map_err(|_| bad())?)?;
        Ok(ChunkRef {
            source_id: source.to_string(),
            interval,
        })
    }
}

/// Fixed-length suprasegmental feature vector for one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<String>,
    pub chunk_ref: Option<ChunkRef>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, label: Option<String>, chunk_ref: Option<ChunkRef>) -> Result<Self> {
        if values.len() != FEATURE_DIMS {
            return Err(Error::Shape(format!(
                "feature vector has {} values, expected {FEATURE_DIMS}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("feature {} is not finite", feature_names()[i])));
        }
        Ok(Self {
            values,
            label,
            chunk_ref,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_chunk(mut self, chunk: ChunkRef) -> Self {
        self.chunk_ref = Some(chunk);
        self
    }
}

/// `lld{i}_{functional}` for all 1140 features.
pub fn feature_names() -> Vec<String> {
    (0..LLD_DIMS)
        .flat_map(|i| FUNCTIONAL_NAMES.iter().map(move |f| format!("lld{i}_{f}")))
        .collect()
}

/// Index of the first minimum and first maximum.
fn arg_extrema(x: &[f64]) -> (usize, usize) {
    let (mut lo, mut hi) = (0, 0);
    for (i, &v) in x.iter().enumerate() {
        if v < x[lo] {
            lo = i;
        }
        if v > x[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// Sign changes per transition after mapping the contour onto [-1, 1].
///
/// A normalized value of exactly zero takes the sign of the next nonzero
/// value (trailing zeros take the previous one).
fn normalized_zcr(x: &[f64], min: f64, max: f64) -> f64 {
    let n = x.len();
    if n < 2 || max <= min {
        return 0.0;
    }
    let range = max - min;
    let raw: Vec<i8> = x
        .iter()
        .map(|&v| {
            let z = 2.0 * (v - min) / range - 1.0;
            if z > 0.0 {
                1
            } else if z < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect();
    let mut signs = raw.clone();
    let mut next = 0i8;
    for s in signs.iter_mut().rev() {
        if *s == 0 {
            *s = next;
        } else {
            next = *s;
        }
    }
    let mut prev = 0i8;
    for s in signs.iter_mut() {
        if *s == 0 {
            *s = prev;
        } else {
            prev = *s;
        }
    }
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    changes as f64 / (n - 1) as f64
}

/// The ten functionals of one contour.
pub fn contour_functionals(x: &[f64]) -> [f64; N_FUNCTIONALS] {
    let n = x.len();
    assert!(n > 0, "empty contour");
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
    let (imin, imax) = arg_extrema(x);
    let (min, max) = (x[imin], x[imax]);

    let (mut slope, mut offset, mut curvature) = (0.0, mean, 0.0);
    let (mut relpos_min, mut relpos_max) = (0.0, 0.0);
    if n >= 2 {
        let step = 1.0 / (n - 1) as f64;
        let centred: Vec<f64> = (0..n).map(|i| i as f64 * step - 0.5).collect();
        let sxx: f64 = centred.iter().map(|t| t * t).sum();
        let sxy: f64 = centred.iter().zip(x).map(|(t, v)| t * (v - mean)).sum();
        slope = sxy / sxx;
        offset = mean - slope * 0.5;
        relpos_min = imin as f64 / (n - 1) as f64;
        relpos_max = imax as f64 / (n - 1) as f64;
        if n >= 3 {
            // Quadratic orthogonal to 1 and t on the symmetric grid: its
            // projection coefficient is the leading coefficient of the LS fit.
            let m2 = sxx / nf;
            let q: Vec<f64> = centred.iter().map(|t| t * t - m2).collect();
            let qq: f64 = q.iter().map(|v| v * v).sum();
            curvature = q.iter().zip(x).map(|(a, b)| a * (b - mean)).sum::<f64>() / qq;
        }
    }
    let zcr = normalized_zcr(x, min, max);
    [mean, std, slope, offset, curvature, min, relpos_min, max, relpos_max, zcr]
}

/// Summarizes every LLD column; the result carries no label or chunk reference.
pub fn summarize(lld: &LldMatrix) -> Result<FeatureVector> {
    if lld.frames() == 0 {
        return Err(Error::TooShort("LLD matrix has no frames".into()));
    }
    let mut values = Vec::with_capacity(FEATURE_DIMS);
    let mut column = Vec::with_capacity(lld.frames());
    for c in lld.values().columns() {
        column.clear();
        column.extend(c.iter().copied());
        values.extend_from_slice(&contour_functionals(&column));
    }
    FeatureVector::new(values, None, None)
}

/// Writes feature vectors as CSV: 1140 named columns, then `label` and `chunk_ref`.
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so a read after write is bit-exact.
pub fn write_features_csv(path: &Path, features: &[FeatureVector]) -> Result<()> {
    fsutil::write_atomic(path, |w| {
        let err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = feature_names();
        header.push("label".into());
        header.push("chunk_ref".into());
        wtr.write_record(&header).map_err(err)?;
        for fv in features {
            let mut rec: Vec<String> = fv.values.iter().map(|v| v.to_string()).collect();
            rec.push(fv.label.clone().unwrap_or_default());
            rec.push(fv.chunk_ref.as_ref().map(|c| c.to_string()).unwrap_or_default());
            wtr.write_record(&rec).map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    })
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(file, &path.display().to_string())
}

/// Parses feature CSV from any reader; `origin` names the source in errors.
pub fn read_features<R: Read>(reader: R, origin: &str) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let err = |e: csv::Error| Error::Format(format!("{origin}: {e}"));
    let headers = rdr.headers().map_err(err)?.clone();
    let names = feature_names();
    if headers.len() != FEATURE_DIMS + 2
        || headers.iter().take(FEATURE_DIMS).zip(&names).any(|(h, n)| h != n)
        || &headers[FEATURE_DIMS] != "label"
        || &headers[FEATURE_DIMS + 1] != "chunk_ref"
    {
        return Err(Error::Schema(format!("{origin}: header does not match the feature layout")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(err)?;
        let values = rec
            .iter()
            .take(FEATURE_DIMS)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Row {
                row,
                message: format!("bad feature value: {e}"),
            })?;
        let label = Some(rec[FEATURE_DIMS].to_string()).filter(|s| !s.is_empty());
        let chunk = match &rec[FEATURE_DIMS + 1] {
            "" => None,
            s => Some(s.parse().map_err(|e: Error| Error::Row {
                row,
                message: e.to_string(),
            })?),
        };
        out.push(FeatureVector::new(values, label, chunk).map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
