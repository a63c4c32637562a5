use std::f64::consts::PI;

use ndarray::Array2;

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hamming,
    Hann,
}

impl WindowKind {
    /// Symmetric window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let c = (2.0 * PI * i as f64 / denom).cos();
                match self {
                    WindowKind::Hamming => 0.54 - 0.46 * c,
                    WindowKind::Hann => 0.5 - 0.5 * c,
                }
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Hamming => "hamming",
            WindowKind::Hann => "hann",
        }
    }
}

impl std::str::FromStr for WindowKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hamming" => Ok(WindowKind::Hamming),
            "hann" | "hanning" => Ok(WindowKind::Hann),
            other => Err(Error::Config(format!("unknown window `{other}`"))),
        }
    }
}

/// Short-time analysis parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSpec {
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub window: WindowKind,
    /// Zero-padded DFT length in samples, a power of two.
    pub fft_size: usize,
    /// Per-frame pre-emphasis `y[n] = x[n] - a*x[n-1]`; the first sample of each frame is kept.
    pub preemphasis: f64,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            frame_len_s: 0.025,
            hop_s: 0.010,
            window: WindowKind::Hamming,
            fft_size: 2048,
            preemphasis: 0.97,
        }
    }
}

impl FrameSpec {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_len_s * sample_rate as f64).round() as usize
    }

    pub fn hop(&self, sample_rate: u32) -> usize {
        (self.hop_s * sample_rate as f64).round() as usize
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let (len, hop) = (self.frame_len(sample_rate), self.hop(sample_rate));
        if !(self.hop_s > 0.0 && self.frame_len_s >= self.hop_s) || hop == 0 || len < hop {
            return Err(Error::Config(format!(
                "frame length {} s must be >= hop {} s > 0",
                self.frame_len_s, self.hop_s
            )));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < len {
            return Err(Error::Config(format!(
                "fft_size {} must be a power of two >= frame length {len} samples",
                self.fft_size
            )));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(Error::Config(format!("pre-emphasis {} outside [0, 1)", self.preemphasis)));
        }
        Ok(())
    }

    /// Number of whole frames in `n` samples, or 0 when `n` is shorter than one frame.
    pub fn frame_count(&self, n: usize, sample_rate: u32) -> usize {
        let (len, hop) = (self.frame_len(sample_rate), self.hop(sample_rate));
        if n < len {
            0
        } else {
            1 + (n - len) / hop
        }
    }
}

/// Windowed analysis frames, one per row.
#[derive(Debug, Clone)]
pub struct Frames {
    pub data: Array2<f64>,
    pub sample_rate: u32,
    /// Sum of squared window coefficients.
    pub window_power: f64,
}

impl Frames {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

/// Splits a clip into pre-emphasised, windowed frames.
pub fn frame_signal(clip: &AudioClip, spec: &FrameSpec) -> Result<Frames> {
    let rate = clip.sample_rate();
    spec.validate(rate)?;
    let (len, hop) = (spec.frame_len(rate), spec.hop(rate));
    let count = spec.frame_count(clip.len(), rate);
    if count == 0 {
        return Err(Error::TooShort(format!(
            "`{}` has {} samples, one frame needs {len}",
            clip.source_id,
            clip.len()
        )));
    }
    let window = spec.window.coefficients(len);
    let x = clip.samples();
    let mut data = Array2::zeros((count, len));
    for (t, mut row) in data.rows_mut().into_iter().enumerate() {
        let seg = &x[t * hop..t * hop + len];
        for n in 0..len {
            let y = if n == 0 { seg[0] } else { seg[n] - spec.preemphasis * seg[n - 1] };
            row[n] = y * window[n];
        }
    }
    Ok(Frames {
        data,
        sample_rate: rate,
        window_power: window.iter().map(|w| w * w).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_samples(len: usize, hop: usize, rate: u32) -> FrameSpec {
        FrameSpec {
            frame_len_s: len as f64 / rate as f64,
            hop_s: hop as f64 / rate as f64,
            window: WindowKind::Hamming,
            fft_size: len.next_power_of_two(),
            preemphasis: 0.97,
        }
    }

    #[test]
    fn frame_counts_follow_formula() {
        let spec = spec_samples(400, 160, 16000);
        for (n, want) in [(400, 1), (720, 3), (559, 1), (560, 2)] {
            let clip = AudioClip::new(vec![0.1; n], 16000, "c").unwrap();
            assert_eq!(frame_signal(&clip, &spec).unwrap().len(), want, "n={n}");
        }
    }

    #[test]
    fn short_clip_rejected() {
        let spec = spec_samples(400, 160, 16000);
        let clip = AudioClip::new(vec![0.1; 399], 16000, "c").unwrap();
        assert!(matches!(frame_signal(&clip, &spec), Err(Error::TooShort(_))));
    }

    #[test]
    fn preemphasis_of_constant() {
        // 5-sample frames with a rectangular-equivalent check: divide out the window.
        let spec = spec_samples(5, 5, 1000);
        let c = 0.8;
        let clip = AudioClip::new(vec![c; 5], 1000, "c").unwrap();
        let frames = frame_signal(&clip, &spec).unwrap();
        let w = WindowKind::Hamming.coefficients(5);
        let expected = [c, c - 0.97 * c, c - 0.97 * c, c - 0.97 * c, c - 0.97 * c];
        for n in 0..5 {
            let unwindowed = frames.data[[0, n]] / w[n];
            assert!((unwindowed - expected[n]).abs() < 1e-12);
        }
        assert!((expected[1] - (1.0 - 0.97) * c).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        let mut s = FrameSpec::default();
        assert!(s.validate(48000).is_ok());
        s.fft_size = 1024; // 25 ms at 48 kHz = 1200 samples
        assert!(s.validate(48000).is_err());
        s = FrameSpec { hop_s: 0.03, ..FrameSpec::default() };
        assert!(s.validate(48000).is_err());
        s = FrameSpec { fft_size: 2000, ..FrameSpec::default() };
        assert!(s.validate(16000).is_err());
    }

    #[test]
    fn windows_are_symmetric() {
        for kind in [WindowKind::Hamming, WindowKind::Hann] {
            let w = kind.coefficients(11);
            for i in 0..11 {
                assert!((w[i] - w[10 - i]).abs() < 1e-15);
            }
            assert!((w[5] - 1.0).abs() < 1e-15);
        }
    }
}
