use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::frame::Frames;
use crate::error::{Error, Result};

/// One-sided power spectra, one row per frame (`fft_size / 2 + 1` bins).
#[derive(Debug, Clone)]
pub struct PowerSpectrogram {
    pub values: Array2<f64>,
    pub bin_hz: f64,
    pub fft_size: usize,
    pub sample_rate: u32,
    /// Sum of squared window coefficients of the frames this came from.
    pub window_power: f64,
}

impl PowerSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    /// Factor mapping `|X_k|^2` to mean-square signal power, so that a sine of
    /// amplitude `A` integrates to about `A^2 / 2` across its bins.
    pub fn power_scale(&self) -> f64 {
        2.0 / (self.fft_size as f64 * self.window_power)
    }

    /// Inclusive bin range covering `[low_hz, high_hz]`.
    pub fn bin_range(&self, low_hz: f64, high_hz: f64) -> Option<std::ops::RangeInclusive<usize>> {
        let lo = (low_hz / self.bin_hz).ceil().max(0.0) as usize;
        let hi = ((high_hz / self.bin_hz).floor() as usize).min(self.bins() - 1);
        (lo <= hi && high_hz >= low_hz).then_some(lo..=hi)
    }
}

/// Reusable FFT plan for one transform length.
#[derive(Clone)]
pub struct SpectrumPlan {
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
}

impl std::fmt::Debug for SpectrumPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumPlan").field("fft_size", &self.fft_size).finish()
    }
}

impl SpectrumPlan {
    pub fn new(fft_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Self { fft, fft_size }
    }

    pub fn compute(&self, frames: &Frames) -> Result<PowerSpectrogram> {
        let n = self.fft_size;
        if frames.data.ncols() > n {
            return Err(Error::Precondition(format!(
                "frame length {} exceeds fft_size {n}",
                frames.data.ncols()
            )));
        }
        let bins = n / 2 + 1;
        let mut values = Array2::zeros((frames.len(), bins));
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for (frame, mut out) in frames.data.rows().into_iter().zip(values.rows_mut()) {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (b, &x) in buf.iter_mut().zip(frame.iter()) {
                b.re = x;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, c) in out.iter_mut().zip(&buf[..bins]) {
                *o = c.norm_sqr();
            }
        }
        Ok(PowerSpectrogram {
            values,
            bin_hz: frames.sample_rate as f64 / n as f64,
            fft_size: n,
            sample_rate: frames.sample_rate,
            window_power: frames.window_power,
        })
    }
}

/// `|DFT|^2` of each zero-padded frame.
pub fn power_spectrum(frames: &Frames, fft_size: usize) -> Result<PowerSpectrogram> {
    SpectrumPlan::new(fft_size).compute(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::AudioClip;
    use crate::lld::frame::{frame_signal, FrameSpec, WindowKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn frames_of(rows: Vec<Vec<f64>>, rate: u32) -> Frames {
        let cols = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Frames {
            data: Array2::from_shape_vec((flat.len() / cols, cols), flat).unwrap(),
            sample_rate: rate,
            window_power: cols as f64,
        }
    }

    #[test]
    fn tone_peaks_at_analytic_bin() {
        let rate = 48000;
        let spec = FrameSpec {
            frame_len_s: 1024.0 / 48000.0,
            hop_s: 512.0 / 48000.0,
            window: WindowKind::Hann,
            fft_size: 1024,
            preemphasis: 0.0,
        };
        let x: Vec<f64> = (0..4096).map(|n| (2.0 * PI * 1000.0 * n as f64 / rate as f64).sin()).collect();
        let clip = AudioClip::new(x, rate, "tone").unwrap();
        let ps = power_spectrum(&frame_signal(&clip, &spec).unwrap(), 1024).unwrap();
        let expected = (1000.0f64 * 1024.0 / 48000.0).round() as usize;
        assert_eq!(expected, 21);
        for row in ps.values.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, expected);
        }
        assert!((ps.bin_hz - 46.875).abs() < 1e-12);
    }

    #[test]
    fn zero_frame_gives_zero_row() {
        let ps = power_spectrum(&frames_of(vec![vec![0.0; 100]], 8000), 128).unwrap();
        assert!(ps.values.iter().all(|&v| v == 0.0));
        assert_eq!(ps.bins(), 65);
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..300).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let frames = frames_of(rows.clone(), 16000);
        let n = 512;
        let ps = power_spectrum(&frames, n).unwrap();
        for (row, spec) in rows.iter().zip(ps.values.rows()) {
            let time_energy: f64 = row.iter().map(|x| x * x).sum();
            // one-sided spectrum: interior bins stand for two conjugate bins
            let freq_energy: f64 = spec
                .iter()
                .enumerate()
                .map(|(k, &p)| if k == 0 || k == n / 2 { p } else { 2.0 * p })
                .sum::<f64>()
                / n as f64;
            assert!(((freq_energy - time_energy) / time_energy).abs() <= 1e-6);
        }
    }

    #[test]
    fn frame_longer_than_fft_rejected() {
        assert!(power_spectrum(&frames_of(vec![vec![1.0; 300]], 8000), 256).is_err());
    }

    #[test]
    fn power_scale_maps_sine_to_half_square_amplitude() {
        let rate = 16000;
        let spec = FrameSpec { fft_size: 1024, preemphasis: 0.0, ..FrameSpec::default() };
        let amp = 0.3;
        let x: Vec<f64> = (0..8000).map(|n| amp * (2.0 * PI * 700.0 * n as f64 / rate as f64).sin()).collect();
        let clip = AudioClip::new(x, rate, "s").unwrap();
        let ps = power_spectrum(&frame_signal(&clip, &spec).unwrap(), 1024).unwrap();
        let total: f64 = ps.values.row(3).sum() * ps.power_scale();
        assert!((total / (amp * amp / 2.0) - 1.0).abs() < 0.02, "{total}");
    }

    #[test]
    fn bin_range_bounds() {
        let ps = power_spectrum(&frames_of(vec![vec![0.0; 100]], 16000), 128).unwrap();
        assert_eq!(ps.bin_range(0.0, 2000.0), Some(0..=16));
        assert_eq!(ps.bin_range(100.0, 120.0), None);
        assert_eq!(ps.bin_range(0.0, 1e9), Some(0..=64));
    }
}
