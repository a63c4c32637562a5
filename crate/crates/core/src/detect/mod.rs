//! Vocalisation detection on long recordings.
//!
//! A frame is active when its in-band loudness exceeds a threshold or when the
//! spectral shape of the surrounding window departs from the corpus-wide
//! profile. Active runs become padded, merged events.

mod condense;
mod optimize;

use std::collections::VecDeque;
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;

pub use condense::{condense, lift_annotations, project_annotations, CondensedIndex, IndexEntry};
pub use optimize::{optimize_thresholds, score_events, OptimizationReport, DEVIATION_OFF};

use crate::audio_io::{common_rate, AudioClip, TimeInterval};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::lld::{frame_signal, FrameSpec, SpectrumPlan, WindowKind};

/// Frames processed per FFT block; bounds memory on long recordings.
const BLOCK_FRAMES: usize = 2048;
/// Sliding window sums are recomputed from scratch this often.
const RESUM_EVERY: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub loudness_db_threshold: f64,
    /// Sup-norm distance threshold in [0, 1].
    pub deviation_threshold: f64,
    pub local_window_s: f64,
    pub min_event_s: f64,
    pub merge_gap_s: f64,
    pub pad_s: f64,
    /// Power floor added before taking logs.
    pub eps: f64,
    pub frame: FrameSpec,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            band_low_hz: 0.0,
            band_high_hz: 2000.0,
            loudness_db_threshold: -40.0,
            deviation_threshold: 0.3,
            local_window_s: 1.0,
            min_event_s: 0.1,
            merge_gap_s: 0.5,
            pad_s: 0.2,
            eps: 1e-12,
            frame: FrameSpec {
                frame_len_s: 0.025,
                hop_s: 0.010,
                window: WindowKind::Hamming,
                fft_size: 2048,
                preemphasis: 0.0,
            },
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        self.frame.validate(sample_rate)?;
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0 <= self.band_low_hz && self.band_low_hz < self.band_high_hz && self.band_high_hz <= nyquist) {
            return Err(Error::Config(format!(
                "band [{}, {}] Hz must satisfy 0 <= low < high <= {nyquist}",
                self.band_low_hz, self.band_high_hz
            )));
        }
        if !(self.local_window_s > 0.0 && self.local_window_s.is_finite()) {
            return Err(Error::Config(format!("local window {} s must be positive", self.local_window_s)));
        }
        if !self.loudness_db_threshold.is_finite() || !(0.0..=1.0).contains(&self.deviation_threshold) {
            return Err(Error::Config(format!(
                "thresholds must be finite with deviation in [0, 1] (got {} dB, {})",
                self.loudness_db_threshold, self.deviation_threshold
            )));
        }
        for (name, v) in [("min_event_s", self.min_event_s), ("merge_gap_s", self.merge_gap_s), ("pad_s", self.pad_s)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps = {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// Streams in-band power spectra of a clip frame by frame.
struct BandScanner {
    plan: SpectrumPlan,
    spec: FrameSpec,
    band: RangeInclusive<usize>,
    /// Maps raw `|X|^2` sums to mean-square power.
    scale: f64,
    hop: usize,
    len: usize,
}

impl BandScanner {
    fn new(config: &DetectorConfig, sample_rate: u32) -> Result<Self> {
        config.validate(sample_rate)?;
        let spec = config.frame;
        let fft = spec.fft_size;
        let bin_hz = sample_rate as f64 / fft as f64;
        let lo = (config.band_low_hz / bin_hz).ceil() as usize;
        let hi = ((config.band_high_hz / bin_hz).floor() as usize).min(fft / 2);
        if lo > hi {
            return Err(Error::Config(format!(
                "band [{}, {}] Hz contains no FFT bin at {bin_hz:.2} Hz resolution",
                config.band_low_hz, config.band_high_hz
            )));
        }
        let len = spec.frame_len(sample_rate);
        let window_power: f64 = spec.window.coefficients(len).iter().map(|w| w * w).sum();
        Ok(Self {
            plan: SpectrumPlan::new(fft),
            spec,
            band: lo..=hi,
            scale: 2.0 / (fft as f64 * window_power),
            hop: spec.hop(sample_rate),
            len,
        })
    }

    fn bins(&self) -> usize {
        self.band.end() - self.band.start() + 1
    }

    /// Calls `f` with each frame's in-band power (unscaled), in frame order.
    fn scan(&self, clip: &AudioClip, mut f: impl FnMut(&[f64])) -> Result<usize> {
        let total = self.spec.frame_count(clip.len(), clip.sample_rate());
        if total == 0 {
            return Err(Error::TooShort(format!(
                "`{}` is shorter than one analysis frame",
                clip.source_id
            )));
        }
        let x = clip.samples();
        let mut start = 0;
        while start < total {
            let n = BLOCK_FRAMES.min(total - start);
            let first = start * self.hop;
            let last = first + (n - 1) * self.hop + self.len;
            let block = AudioClip::new(x[first..last].to_vec(), clip.sample_rate(), clip.source_id.clone())?;
            let pspec = self.plan.compute(&frame_signal(&block, &self.spec)?)?;
            for row in pspec.values.rows() {
                let band = row.slice(ndarray::s![self.band.clone()]);
                f(band.as_slice().expect("contiguous row"));
            }
            start += n;
        }
        Ok(total)
    }
}

/// Corpus-wide in-band spectral shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSpectralProfile {
    /// Mean scaled power per in-band bin.
    pub mean_power: Vec<f64>,
    /// Normalized cumulative distribution over the in-band bins, ending at 1.
    pub cdf: Vec<f64>,
    pub sample_rate: u32,
    pub first_bin: usize,
    pub frames: usize,
}

fn cumulative(power: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = power.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = power
        .iter()
        .map(|p| {
            acc += p;
            acc / total
        })
        .collect();
    *cdf.last_mut().expect("non-empty band") = 1.0;
    Some(cdf)
}

/// Estimates the mean in-band spectrum over every frame of `recordings`.
///
/// Per-recording sums run in parallel and are added in `source_id` order, so
/// the result does not depend on the thread count. A silent corpus gets the
/// uniform distribution.
pub fn build_global_profile(recordings: &[AudioClip], config: &DetectorConfig) -> Result<GlobalSpectralProfile> {
    let rate = common_rate(recordings)?;
    let scanner = BandScanner::new(config, rate)?;
    let mut partial: Vec<(&str, Vec<f64>, usize)> = recordings
        .par_iter()
        .map(|clip| {
            let mut sum = vec![0.0; scanner.bins()];
            let frames = scanner.scan(clip, |band| {
                for (s, p) in sum.iter_mut().zip(band) {
                    *s += p;
                }
            })?;
            Ok((clip.source_id.as_str(), sum, frames))
        })
        .collect::<Result<_>>()?;
    partial.sort_by(|a, b| a.0.cmp(b.0));
    let mut sum = vec![0.0; scanner.bins()];
    let mut frames = 0;
    for (_, s, n) in &partial {
        for (acc, v) in sum.iter_mut().zip(s) {
            *acc += v;
        }
        frames += n;
    }
    let mean_power: Vec<f64> = sum.iter().map(|s| s * scanner.scale / frames as f64).collect();
    let bins = mean_power.len();
    let cdf = cumulative(&mean_power).unwrap_or_else(|| (1..=bins).map(|k| k as f64 / bins as f64).collect());
    Ok(GlobalSpectralProfile {
        mean_power,
        cdf,
        sample_rate: rate,
        first_bin: *scanner.band.start(),
        frames,
    })
}

/// Per-frame detector inputs of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTracks {
    pub source_id: String,
    /// In-band power in dB.
    pub envelope: Vec<f64>,
    /// Sup-norm distance of the local cumulative distribution to the global one.
    pub deviation: Vec<f64>,
    pub hop_s: f64,
    pub frame_len_s: f64,
    pub duration_s: f64,
}

fn sup_distance(window_sum: &[f64], global: &[f64]) -> f64 {
    let total: f64 = window_sum.iter().map(|v| v.max(0.0)).sum();
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for (v, g) in window_sum.iter().zip(global) {
        acc += v.max(0.0);
        worst = worst.max((acc / total - g).abs());
    }
    worst
}

/// Running per-bin sum over a window of consecutive frames.
struct SlidingSum {
    frames: VecDeque<Vec<f64>>,
    sum: Vec<f64>,
    /// Frames pushed so far; the front of `frames` has index `pushed - frames.len()`.
    pushed: usize,
    updates: usize,
}

impl SlidingSum {
    fn new(bins: usize) -> Self {
        Self {
            frames: VecDeque::new(),
            sum: vec![0.0; bins],
            pushed: 0,
            updates: 0,
        }
    }

    fn push(&mut self, band: &[f64]) {
        for (s, v) in self.sum.iter_mut().zip(band) {
            *s += v;
        }
        self.frames.push_back(band.to_vec());
        self.pushed += 1;
        self.tick();
    }

    fn drop_before(&mut self, first: usize) {
        while self.pushed - self.frames.len() < first {
            let old = self.frames.pop_front().expect("window holds the frame");
            for (s, v) in self.sum.iter_mut().zip(&old) {
                *s -= v;
            }
            self.tick();
        }
    }

    /// Periodically rebuilds the sum so rounding drift stays bounded.
    fn tick(&mut self) {
        self.updates += 1;
        if self.updates >= RESUM_EVERY {
            self.updates = 0;
            self.sum.iter_mut().for_each(|s| *s = 0.0);
            for frame in &self.frames {
                for (s, v) in self.sum.iter_mut().zip(frame) {
                    *s += v;
                }
            }
        }
    }
}

/// Computes the loudness envelope and deviation track for one clip.
pub fn frame_tracks(clip: &AudioClip, profile: &GlobalSpectralProfile, config: &DetectorConfig) -> Result<FrameTracks> {
    let rate = clip.sample_rate();
    let scanner = BandScanner::new(config, rate)?;
    if rate != profile.sample_rate || *scanner.band.start() != profile.first_bin || scanner.bins() != profile.cdf.len() {
        return Err(Error::Precondition(format!(
            "profile ({} Hz, {} bins) does not match `{}` under this band ({rate} Hz, {} bins)",
            profile.sample_rate,
            profile.cdf.len(),
            clip.source_id,
            scanner.bins()
        )));
    }
    let half = (config.local_window_s / config.frame.hop_s).round() as usize / 2;
    let mut envelope = Vec::new();
    let mut deviation = Vec::new();
    let mut window = SlidingSum::new(scanner.bins());
    let silent_total = config.eps / scanner.scale;
    let distance = |w: &SlidingSum| {
        let total: f64 = w.sum.iter().map(|v| v.max(0.0)).sum();
        if total <= silent_total * w.frames.len() as f64 {
            0.0
        } else {
            sup_distance(&w.sum, &profile.cdf)
        }
    };

    scanner.scan(clip, |band| {
        envelope.push(10.0 * (scanner.scale * band.iter().sum::<f64>() + config.eps).log10());
        window.push(band);
        // the frame `half` steps back now has its complete right half
        if let Some(t) = window.pushed.checked_sub(half + 1) {
            window.drop_before(t.saturating_sub(half));
            deviation.push(distance(&window));
        }
    })?;
    let total = envelope.len();
    for t in deviation.len()..total {
        window.drop_before(t.saturating_sub(half));
        deviation.push(distance(&window));
    }
    Ok(FrameTracks {
        source_id: clip.source_id.clone(),
        envelope,
        deviation,
        hop_s: scanner.hop as f64 / rate as f64,
        frame_len_s: scanner.len as f64 / rate as f64,
        duration_s: clip.duration_s(),
    })
}

/// In-band power per frame in dB: `10 log10(scale * sum_band |X|^2 + eps)`.
pub fn band_power_envelope(clip: &AudioClip, config: &DetectorConfig) -> Result<Vec<f64>> {
    let scanner = BandScanner::new(config, clip.sample_rate())?;
    let mut out = Vec::new();
    scanner.scan(clip, |band| {
        out.push(10.0 * (scanner.scale * band.iter().sum::<f64>() + config.eps).log10());
    })?;
    Ok(out)
}

/// Thresholds the tracks and turns active runs into padded, merged events.
///
/// Frame `t` stands for the hop-long span centred on the frame centre.
pub fn events_from_tracks(tracks: &FrameTracks, loudness_db: f64, deviation: f64, config: &DetectorConfig) -> Vec<TimeInterval> {
    let centre_offset = (tracks.frame_len_s - tracks.hop_s) / 2.0;
    let mut raw: Vec<(f64, f64)> = Vec::new();
    let mut run: Option<usize> = None;
    let n = tracks.envelope.len();
    for t in 0..=n {
        let active = t < n && (tracks.envelope[t] > loudness_db || tracks.deviation[t] > deviation);
        match (active, run) {
            (true, None) => run = Some(t),
            (false, Some(a)) => {
                let begin = a as f64 * tracks.hop_s + centre_offset;
                let end = t as f64 * tracks.hop_s + centre_offset;
                raw.push((
                    (begin - config.pad_s).max(0.0),
                    (end + config.pad_s).min(tracks.duration_s),
                ));
                run = None;
            }
            _ => {}
        }
    }
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (b, e) in raw {
        match merged.last_mut() {
            Some(last) if b - last.1 < config.merge_gap_s => last.1 = last.1.max(e),
            _ => merged.push((b, e)),
        }
    }
    merged
        .into_iter()
        .filter(|(b, e)| e - b >= config.min_event_s && e > b)
        .map(|(begin_s, end_s)| TimeInterval { begin_s, end_s })
        .collect()
}

/// Runs the detector with the thresholds in `config`.
pub fn detect_events(clip: &AudioClip, profile: &GlobalSpectralProfile, config: &DetectorConfig) -> Result<Vec<TimeInterval>> {
    let tracks = frame_tracks(clip, profile, config)?;
    Ok(events_from_tracks(
        &tracks,
        config.loudness_db_threshold,
        config.deviation_threshold,
        config,
    ))
}

/// Detected events of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingEvents {
    pub source_id: String,
    pub events: Vec<TimeInterval>,
}

/// Writes events as TSV with columns `source_id`, `begin_s`, `end_s`.
pub fn write_events(path: &Path, events: &[RecordingEvents]) -> Result<()> {
    fsutil::write_atomic(path, |w| {
        writeln!(w, "source_id\tbegin_s\tend_s").map_err(|e| Error::io(path, e))?;
        for rec in events {
            for ev in &rec.events {
                writeln!(w, "{}\t{}\t{}", rec.source_id, ev.begin_s, ev.end_s).map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(())
    })
}

/// Reads an events TSV, grouping rows by recording in first-seen order.
pub fn read_events(path: &Path) -> Result<Vec<RecordingEvents>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if headers.iter().collect::<Vec<_>>() != ["source_id", "begin_s", "end_s"] {
        return Err(Error::Schema(format!(
            "{}: expected columns source_id, begin_s, end_s",
            path.display()
        )));
    }
    let mut out: Vec<RecordingEvents> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let num = |k: usize| {
            rec[k].trim().parse::<f64>().map_err(|e| Error::Row {
                row,
                message: format!("bad time `{}`: {e}", &rec[k]),
            })
        };
        let interval = TimeInterval::new(num(1)?, num(2)?).map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let id = &rec[0];
        match out.iter_mut().find(|r| r.source_id == id) {
            Some(r) => r.events.push(interval),
            None => out.push(RecordingEvents {
                source_id: id.to_string(),
                events: vec![interval],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
