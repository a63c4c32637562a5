use std::f64::consts::PI;

use ndarray::Array2;

use super::spectrum::PowerSpectrogram;
use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the one-sided spectrum, `n_mels × (fft_size/2+1)`.
///
/// Filter edges are equally spaced on the HTK mel scale between `low_hz` and
/// `high_hz`; weights peak at 1 on the centre frequency.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: u32, low_hz: f64, high_hz: f64) -> Array2<f64> {
    let bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f > left && f <= centre {
                (f - left) / (centre - left)
            } else if f > centre && f < right {
                (right - f) / (right - centre)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

/// Orthonormal DCT-II basis, `n_out × n_in`.
pub fn dct2_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let scale0 = (1.0 / n_in as f64).sqrt();
    let scale = (2.0 / n_in as f64).sqrt();
    Array2::from_shape_fn((n_out, n_in), |(k, m)| {
        let s = if k == 0 { scale0 } else { scale };
        s * (PI * k as f64 * (m as f64 + 0.5) / n_in as f64).cos()
    })
}

/// Precomputed mel filterbank + DCT for a fixed spectrum geometry.
#[derive(Debug, Clone)]
pub struct MfccBank {
    filterbank: Array2<f64>,
    dct: Array2<f64>,
    log_floor: f64,
}

impl MfccBank {
    pub fn new(
        n_mels: usize,
        n_coeffs: usize,
        fft_size: usize,
        sample_rate: u32,
        low_hz: f64,
        high_hz: f64,
        log_floor: f64,
    ) -> Result<Self> {
        if n_coeffs > n_mels {
            return Err(Error::Config(format!("{n_coeffs} cepstra need at least as many mel filters, got {n_mels}")));
        }
        if !(0.0 <= low_hz && low_hz < high_hz && high_hz <= sample_rate as f64 / 2.0) {
            return Err(Error::Config(format!("mel range [{low_hz}, {high_hz}] Hz invalid")));
        }
        if log_floor <= 0.0 {
            return Err(Error::Config("log floor must be positive".into()));
        }
        Ok(Self {
            filterbank: mel_filterbank(n_mels, fft_size, sample_rate, low_hz, high_hz),
            dct: dct2_matrix(n_coeffs, n_mels),
            log_floor,
        })
    }

    pub fn filterbank(&self) -> &Array2<f64> {
        &self.filterbank
    }

    /// Frames × coefficients: DCT of floored log mel energies.
    pub fn apply(&self, pspec: &PowerSpectrogram) -> Result<Array2<f64>> {
        if pspec.bins() != self.filterbank.ncols() {
            return Err(Error::Shape(format!(
                "spectrum has {} bins, filterbank expects {}",
                pspec.bins(),
                self.filterbank.ncols()
            )));
        }
        let mut logmel = pspec.values.dot(&self.filterbank.t());
        logmel.mapv_inplace(|e| e.max(self.log_floor).ln());
        Ok(logmel.dot(&self.dct.t()))
    }
}

/// MFCCs 0..n_coeffs over a mel filterbank spanning 0 Hz to Nyquist.
pub fn mfcc(pspec: &PowerSpectrogram, n_mels: usize, n_coeffs: usize, log_floor: f64) -> Result<Array2<f64>> {
    MfccBank::new(
        n_mels,
        n_coeffs,
        pspec.fft_size,
        pspec.sample_rate,
        0.0,
        pspec.sample_rate as f64 / 2.0,
        log_floor,
    )?
    .apply(pspec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrogram(values: Array2<f64>, fft_size: usize, rate: u32) -> PowerSpectrogram {
        PowerSpectrogram {
            values,
            bin_hz: rate as f64 / fft_size as f64,
            fft_size,
            sample_rate: rate,
            window_power: 1.0,
        }
    }

    #[test]
    fn mel_scale_roundtrip() {
        for hz in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.9855).abs() < 1e-3);
    }

    #[test]
    fn zero_spectrum_gives_scaled_log_floor() {
        let (n_mels, floor) = (26, 1e-10);
        let ps = spectrogram(Array2::zeros((3, 1025)), 2048, 48000);
        let c = mfcc(&ps, n_mels, 25, floor).unwrap();
        assert_eq!(c.ncols(), 25);
        for row in c.rows() {
            assert!((row[0] - (n_mels as f64).sqrt() * floor.ln()).abs() < 1e-9);
            assert!(row.iter().skip(1).all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn too_many_coefficients_rejected() {
        let ps = spectrogram(Array2::zeros((1, 257)), 512, 16000);
        assert!(mfcc(&ps, 20, 25, 1e-10).is_err());
    }

    #[test]
    fn filters_peak_at_one_and_cover_range() {
        let fb = mel_filterbank(26, 2048, 16000, 0.0, 8000.0);
        for row in fb.rows() {
            let peak = row.iter().cloned().fold(0.0, f64::max);
            assert!(peak > 0.9 && peak <= 1.0, "{peak}");
        }
        // every interior bin is covered by some filter
        for k in 1..1024 {
            assert!(fb.column(k).sum() > 0.0, "bin {k}");
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let d = dct2_matrix(26, 26);
        let eye = d.dot(&d.t());
        for i in 0..26 {
            for j in 0..26 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - want).abs() < 1e-12);
            }
        }
    }
}
