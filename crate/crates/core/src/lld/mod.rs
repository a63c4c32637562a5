//! Frame-level acoustic descriptors.
//!
//! Every frame yields 114 values laid out as
//! `[mfcc0..24 | plpcc0..12 | Δ of those 38 | ΔΔ of those 38]`.

mod delta;
mod frame;
mod mfcc;
mod plp;
mod spectrum;

use std::path::Path;

use ndarray::{concatenate, Array2, Axis};

pub use delta::deltas;
pub use frame::{frame_signal, FrameSpec, Frames, WindowKind};
pub use mfcc::{dct2_matrix, hz_to_mel, mel_filterbank, mel_to_hz, mfcc, MfccBank};
pub use plp::{
    autocorrelation_from_spectrum, bark_band_count, bark_filterbank, bark_to_hz, equal_loudness, hz_to_bark,
    levinson_durbin, lpc_to_cepstrum, rasta_filter, rasta_plp, rasta_response, LpcFit, PlpBank, RASTA_NUMERATOR,
    RASTA_TAPS,
};
pub use spectrum::{power_spectrum, PowerSpectrogram, SpectrumPlan};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::fsutil;

pub const N_MFCC: usize = 25;
pub const PLP_ORDER: usize = 12;
pub const N_PLP: usize = PLP_ORDER + 1;
pub const N_STATIC: usize = N_MFCC + N_PLP;
pub const LLD_DIMS: usize = 3 * N_STATIC;

/// Feature extraction settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LldConfig {
    pub frame: FrameSpec,
    pub n_mels: usize,
    pub mel_low_hz: f64,
    /// Upper mel edge; Nyquist when unset.
    pub mel_high_hz: Option<f64>,
    pub log_floor: f64,
    pub delta_window: usize,
    pub rasta_pole: f64,
}

impl Default for LldConfig {
    fn default() -> Self {
        Self {
            frame: FrameSpec::default(),
            n_mels: 26,
            mel_low_hz: 0.0,
            mel_high_hz: None,
            log_floor: 1e-10,
            delta_window: 2,
            rasta_pole: 0.94,
        }
    }
}

/// Canonical column names in layout order.
pub fn lld_column_names() -> Vec<String> {
    let statics: Vec<String> = (0..N_MFCC)
        .map(|i| format!("mfcc{i}"))
        .chain((0..N_PLP).map(|i| format!("plpcc{i}")))
        .collect();
    statics
        .iter()
        .cloned()
        .chain(statics.iter().map(|s| format!("{s}_d")))
        .chain(statics.iter().map(|s| format!("{s}_dd")))
        .collect()
}

/// Frames × 114 descriptor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LldMatrix(Array2<f64>);

impl LldMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.ncols() != LLD_DIMS {
            return Err(Error::Shape(format!("LLD matrix has {} columns, expected {LLD_DIMS}", values.ncols())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite LLD value at frame {}, column {}",
                pos / LLD_DIMS,
                pos % LLD_DIMS
            )));
        }
        Ok(Self(values.as_standard_layout().into_owned()))
    }

    pub fn frames(&self) -> usize {
        self.0.nrows()
    }

    pub fn dims(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    /// Writes `frames × 114` CSV with a header of canonical column names.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            let err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
            wtr.write_record(lld_column_names()).map_err(err)?;
            for row in self.0.rows() {
                wtr.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
            }
            wtr.flush().map_err(|e| Error::io(path, e))
        })
    }
}

/// Extraction pipeline prepared for one sample rate.
#[derive(Debug, Clone)]
pub struct LldExtractor {
    config: LldConfig,
    sample_rate: u32,
    plan: SpectrumPlan,
    mfcc: MfccBank,
    plp: PlpBank,
}

impl LldExtractor {
    pub fn new(config: &LldConfig, sample_rate: u32) -> Result<Self> {
        config.frame.validate(sample_rate)?;
        let nyquist = sample_rate as f64 / 2.0;
        let fft = config.frame.fft_size;
        let mfcc = MfccBank::new(
            config.n_mels,
            N_MFCC,
            fft,
            sample_rate,
            config.mel_low_hz,
            config.mel_high_hz.unwrap_or(nyquist),
            config.log_floor,
        )?;
        let plp = PlpBank::new(fft, sample_rate, PLP_ORDER, config.rasta_pole, config.log_floor)?;
        Ok(Self {
            config: config.clone(),
            sample_rate,
            plan: SpectrumPlan::new(fft),
            mfcc,
            plp,
        })
    }

    pub fn config(&self) -> &LldConfig {
        &self.config
    }

    /// Minimum number of samples a clip needs for extraction.
    pub fn min_samples(&self) -> usize {
        let f = &self.config.frame;
        f.frame_len(self.sample_rate) + (RASTA_TAPS - 1) * f.hop(self.sample_rate)
    }

    pub fn spectrogram(&self, clip: &AudioClip) -> Result<PowerSpectrogram> {
        let frames = frame_signal(clip, &self.config.frame)?;
        self.plan.compute(&frames)
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<LldMatrix> {
        if clip.sample_rate() != self.sample_rate {
            return Err(Error::Precondition(format!(
                "extractor prepared for {} Hz, clip `{}` is {} Hz",
                self.sample_rate,
                clip.source_id,
                clip.sample_rate()
            )));
        }
        let pspec = self.spectrogram(clip)?;
        let mfcc = self.mfcc.apply(&pspec)?;
        let plp = self.plp.apply(&pspec).map_err(|e| match e {
            Error::TooShort(m) => Error::TooShort(format!("`{}`: {m}", clip.source_id)),
            Error::Numerical(m) => Error::Numerical(format!("`{}`: {m}", clip.source_id)),
            other => other,
        })?;
        let statics = concatenate![Axis(1), mfcc, plp];
        let d = deltas(statics.view(), self.config.delta_window);
        let dd = deltas(d.view(), self.config.delta_window);
        let all = concatenate![Axis(1), statics, d, dd];
        debug_assert_eq!(N_STATIC * 3, LLD_DIMS);
        LldMatrix::new(all)
    }
}

/// Convenience wrapper building an [`LldExtractor`] for the clip's rate.
pub fn extract_lld(clip: &AudioClip, config: &LldConfig) -> Result<LldMatrix> {
    LldExtractor::new(config, clip.sample_rate())?.extract(clip)
}
