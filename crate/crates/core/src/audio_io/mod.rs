//! Audio clips, annotation records and corpus manifests, plus their file
//! formats (WAVE, Raven-style selection tables, the plain-text manifest).

mod manifest;
mod selection;
mod wave;

pub use manifest::{CorpusManifest, Recording};
pub use selection::{read_annotations, write_annotations, SelectionFormat};
pub use wave::{read_wave, wave_info, write_wave, WaveInfo, WriteReport};

use crate::error::{Error, Result};

/// Label reserved for sampled non-vocalisation chunks.
pub const BACKGROUND_LABEL: &str = "background";

/// Mono PCM audio with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    pub source_id: String,
    /// Seconds from the start of the source file.
    pub source_offset: f64,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Precondition("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
            source_offset: 0.0,
        })
    }

    pub fn with_offset(mut self, offset_s: f64) -> Self {
        self.source_offset = offset_s;
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sample index nearest to `t` seconds (clip-relative).
    pub fn sample_index(&self, t: f64) -> usize {
        (t * self.sample_rate as f64).round().max(0.0) as usize
    }

    /// Cuts `interval` (clip-relative seconds) out of the clip.
    pub fn slice(&self, interval: TimeInterval) -> Result<AudioClip> {
        let start = self.sample_index(interval.begin_s);
        let end = self.sample_index(interval.end_s);
        if end > self.samples.len() || start >= end {
            return Err(Error::Bounds(format!(
                "interval [{}, {}) s outside `{}` ({:.3} s)",
                interval.begin_s,
                interval.end_s,
                self.source_id,
                self.duration_s()
            )));
        }
        Ok(AudioClip {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
            source_offset: self.source_offset + start as f64 / self.sample_rate as f64,
        })
    }
}

/// Checks that all clips share one sample rate and returns it.
pub fn common_rate<'a>(clips: impl IntoIterator<Item = &'a AudioClip>) -> Result<u32> {
    let mut rate = None;
    for clip in clips {
        match rate {
            None => rate = Some(clip.sample_rate),
            Some(r) if r != clip.sample_rate => {
                return Err(Error::Precondition(format!(
                    "mixed sample rates: {} Hz and {} Hz (`{}`)",
                    r, clip.sample_rate, clip.source_id
                )))
            }
            _ => {}
        }
    }
    rate.ok_or_else(|| Error::Precondition("no clips supplied".into()))
}

/// Half-open time span in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeInterval {
    pub begin_s: f64,
    pub end_s: f64,
}

impl TimeInterval {
    pub fn new(begin_s: f64, end_s: f64) -> Result<Self> {
        if !(begin_s.is_finite() && end_s.is_finite()) || begin_s >= end_s {
            return Err(Error::Precondition(format!(
                "invalid interval [{begin_s}, {end_s})"
            )));
        }
        Ok(Self { begin_s, end_s })
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.begin_s
    }

    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        self.begin_s < other.end_s && other.begin_s < self.end_s
    }

    /// Length of the intersection with `other` (0 when disjoint).
    pub fn overlap_len(&self, other: &TimeInterval) -> f64 {
        (self.end_s.min(other.end_s) - self.begin_s.max(other.begin_s)).max(0.0)
    }
}

/// Labeled time interval on a named recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub source_id: String,
    pub interval: TimeInterval,
    pub label: String,
    pub low_freq_hz: Option<f64>,
    pub high_freq_hz: Option<f64>,
}

impl Annotation {
    pub fn new(source_id: impl Into<String>, interval: TimeInterval, label: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            interval,
            label: label.into(),
            low_freq_hz: None,
            high_freq_hz: None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.interval.duration()
    }
}
