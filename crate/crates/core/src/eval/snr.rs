use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::audio_io::{common_rate, AudioClip};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::lld::{frame_signal, FrameSpec, SpectrumPlan};

const POWER_FLOOR: f64 = 1e-12;

/// How per-frame bin powers are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DbAveraging {
    /// Average the dB values.
    #[default]
    MeanOfDb,
    /// Average the powers, then convert.
    DbOfMean,
}

impl fmt::Display for DbAveraging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DbAveraging::MeanOfDb => "mean-of-db",
            DbAveraging::DbOfMean => "db-of-mean",
        })
    }
}

impl FromStr for DbAveraging {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-of-db" => Ok(DbAveraging::MeanOfDb),
            "db-of-mean" => Ok(DbAveraging::DbOfMean),
            other => Err(Error::Config(format!("unknown averaging `{other}` (mean-of-db or db-of-mean)"))),
        }
    }
}

/// Per-bin mean level of signal and background chunks and their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrProfile {
    pub bin_hz: Vec<f64>,
    pub signal_db: Vec<f64>,
    pub background_db: Vec<f64>,
    pub diff_db: Vec<f64>,
}

impl SnrProfile {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            let err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
            wtr.write_record(["bin_hz", "signal_db", "background_db", "diff_db"]).map_err(err)?;
            for i in 0..self.bin_hz.len() {
                wtr.write_record([self.bin_hz[i], self.signal_db[i], self.background_db[i], self.diff_db[i]].map(|v| v.to_string()))
                    .map_err(err)?;
            }
            wtr.flush().map_err(|e| Error::io(path, e))
        })
    }
}

/// Sum over frames of per-bin level (dB or power) for the first `bins` bins.
fn accumulate(clips: &[AudioClip], spec: &FrameSpec, bins: usize, mode: DbAveraging) -> Result<(Vec<f64>, usize)> {
    let plan = SpectrumPlan::new(spec.fft_size);
    let parts: Vec<Option<(Vec<f64>, usize)>> = clips
        .par_iter()
        .map(|clip| {
            let frames = match frame_signal(clip, spec) {
                Ok(f) => f,
                Err(Error::TooShort(m)) => {
                    log::warn!("skipping chunk: {m}");
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            let ps = plan.compute(&frames)?;
            let scale = ps.power_scale();
            let mut sum = vec![0.0; bins];
            for row in ps.values.rows() {
                for (s, p) in sum.iter_mut().zip(row) {
                    let power = scale * p;
                    *s += match mode {
                        DbAveraging::MeanOfDb => 10.0 * (power + POWER_FLOOR).log10(),
                        DbAveraging::DbOfMean => power,
                    };
                }
            }
            Ok(Some((sum, ps.frames())))
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; bins];
    let mut frames = 0;
    for (sum, n) in parts.into_iter().flatten() {
        for (t, s) in total.iter_mut().zip(&sum) {
            *t += s;
        }
        frames += n;
    }
    Ok((total, frames))
}

/// Averages per-bin levels over all frames of each group and subtracts them.
///
/// Bins run from 0 Hz up to `max_hz` (capped at Nyquist).
pub fn snr_profile(
    signal: &[AudioClip],
    background: &[AudioClip],
    max_hz: f64,
    spec: &FrameSpec,
    mode: DbAveraging,
) -> Result<SnrProfile> {
    if signal.is_empty() || background.is_empty() {
        return Err(Error::Precondition("SNR profile needs signal and background chunks".into()));
    }
    let rate = common_rate(signal.iter().chain(background))?;
    spec.validate(rate)?;
    if !(max_hz >= 0.0) {
        return Err(Error::Config(format!("max_hz = {max_hz} must be >= 0")));
    }
    let bin_hz = rate as f64 / spec.fft_size as f64;
    let bins = ((max_hz / bin_hz).floor() as usize + 1).min(spec.fft_size / 2 + 1);
    let level = |clips: &[AudioClip], what: &str| -> Result<Vec<f64>> {
        let (sum, frames) = accumulate(clips, spec, bins, mode)?;
        if frames == 0 {
            return Err(Error::TooShort(format!("no {what} chunk is long enough for one frame")));
        }
        Ok(sum
            .iter()
            .map(|s| match mode {
                DbAveraging::MeanOfDb => s / frames as f64,
                DbAveraging::DbOfMean => 10.0 * (s / frames as f64 + POWER_FLOOR).log10(),
            })
            .collect())
    };
    let signal_db = level(signal, "signal")?;
    let background_db = level(background, "background")?;
    let diff_db = signal_db.iter().zip(&background_db).map(|(s, b)| s - b).collect();
    Ok(SnrProfile {
        bin_hz: (0..bins).map(|k| k as f64 * bin_hz).collect(),
        signal_db,
        background_db,
        diff_db,
    })
}
