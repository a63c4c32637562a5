//! RASTA-PLP cepstra.
//!
//! Critical-band integration on the Bark scale, RASTA band-pass filtering of
//! the log band energies along time, equal-loudness pre-emphasis, cube-root
//! intensity-to-loudness compression, an all-pole model fitted by
//! Levinson-Durbin recursion and conversion of that model to cepstra.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};

use super::spectrum::PowerSpectrogram;
use crate::error::{Error, Result};

/// Frames consumed by the RASTA numerator before the first output.
pub const RASTA_TAPS: usize = 5;

/// RASTA numerator `0.1 * (2 + z^-1 - z^-3 - 2 z^-4)`.
pub const RASTA_NUMERATOR: [f64; RASTA_TAPS] = [0.2, 0.1, 0.0, -0.1, -0.2];

pub fn hz_to_bark(hz: f64) -> f64 {
    6.0 * (hz / 600.0).asinh()
}

pub fn bark_to_hz(bark: f64) -> f64 {
    600.0 * (bark / 6.0).sinh()
}

/// Number of Bark bands for a given Nyquist frequency.
pub fn bark_band_count(nyquist_hz: f64) -> usize {
    hz_to_bark(nyquist_hz).ceil() as usize + 1
}

/// Band centres in Bark, equally spaced from 0 to the Nyquist Bark value.
fn bark_centres(nyquist_hz: f64) -> Vec<f64> {
    let n = bark_band_count(nyquist_hz);
    let step = hz_to_bark(nyquist_hz) / (n - 1) as f64;
    (0..n).map(|i| i as f64 * step).collect()
}

/// Critical-band weights, `bands × (fft_size/2+1)`, with the trapezoidal
/// skirt: -25 dB/Bark below the centre, -10 dB/Bark above, 1 Bark flat top.
pub fn bark_filterbank(fft_size: usize, sample_rate: u32) -> Array2<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let centres = bark_centres(nyquist);
    let bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    Array2::from_shape_fn((centres.len(), bins), |(i, k)| {
        let b = hz_to_bark(k as f64 * bin_hz) - centres[i];
        let lo = b - 0.5;
        let hi = b + 0.5;
        10f64.powf(hi.min(-2.5 * lo).min(0.0))
    })
}

/// Equal-loudness weight for a band centred at `hz`.
pub fn equal_loudness(hz: f64) -> f64 {
    let fsq = hz * hz;
    let ftmp = fsq + 1.6e5;
    (fsq / ftmp).powi(2) * ((fsq + 1.44e6) / (fsq + 9.61e6))
}

/// RASTA filter `H(z) = 0.1 (2 + z^-1 - z^-3 - 2z^-4) / (1 - pole z^-1)` applied along one trajectory.
///
/// The first four outputs are zero; from frame 4 on the numerator sees real
/// history and the feedback starts from a zero state.
pub fn rasta_filter(x: ArrayView1<f64>, pole: f64) -> Vec<f64> {
    let n = x.len();
    let mut y = vec![0.0; n];
    let mut prev = 0.0;
    for t in RASTA_TAPS - 1..n {
        let fir: f64 = RASTA_NUMERATOR
            .iter()
            .enumerate()
            .map(|(k, b)| b * x[t - k])
            .sum();
        prev = fir + pole * prev;
        y[t] = prev;
    }
    y
}

/// Complex frequency response of the RASTA filter at normalized angular frequency `omega`.
pub fn rasta_response(omega: f64, pole: f64) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    for (k, b) in RASTA_NUMERATOR.iter().enumerate() {
        re += b * (omega * k as f64).cos();
        im -= b * (omega * k as f64).sin();
    }
    let (dre, dim) = (1.0 - pole * omega.cos(), pole * omega.sin());
    let d = dre * dre + dim * dim;
    ((re * dre + im * dim) / d, (im * dre - re * dim) / d)
}

/// Result of the Levinson-Durbin recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcFit {
    /// Predictor polynomial `1 + a1 z^-1 + ... + ap z^-p` (a[0] = 1).
    pub a: Vec<f64>,
    /// Final prediction error power.
    pub error: f64,
    pub reflection: Vec<f64>,
}

/// Solves the normal equations for an order-`order` predictor from `r[0..=order]`.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcFit> {
    if r.len() <= order {
        return Err(Error::Precondition(format!("need {} autocorrelation lags, got {}", order + 1, r.len())));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if !(err > 0.0) {
        return Err(Error::Numerical(format!("zero-lag autocorrelation {err} is not positive")));
    }
    let mut reflection = Vec::with_capacity(order);
    let mut prev = a.clone();
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        prev[..i].copy_from_slice(&a[..i]);
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        reflection.push(k);
        if !(err > 0.0) {
            return Err(Error::Numerical(format!("prediction error {err} not positive at order {i}")));
        }
    }
    Ok(LpcFit { a, error: err, reflection })
}

/// Cepstrum of the all-pole model `gain / A(z)`, coefficients 0..=order.
///
/// `c0 = ln(gain)`; higher terms follow the standard recursion for `-ln A(z)`.
pub fn lpc_to_cepstrum(a: &[f64], gain: f64) -> Vec<f64> {
    let p = a.len() - 1;
    let mut c = vec![0.0; p + 1];
    c[0] = gain.ln();
    for n in 1..=p {
        let acc: f64 = (1..n).map(|m| (n - m) as f64 * a[m] * c[n - m]).sum();
        c[n] = -(a[n] + acc / n as f64);
    }
    c
}

/// Autocorrelation lags `0..=order` of a power spectrum sampled from DC to
/// Nyquist, via the inverse DFT of its even extension.
pub fn autocorrelation_from_spectrum(spec: &[f64], order: usize) -> Vec<f64> {
    let m = spec.len();
    let len = 2 * (m - 1);
    (0..=order)
        .map(|k| {
            let mut acc = 0.0;
            for n in 0..len {
                let v = if n < m { spec[n] } else { spec[len - n] };
                acc += v * (2.0 * PI * (k * n) as f64 / len as f64).cos();
            }
            acc / len as f64
        })
        .collect()
}

/// Precomputed Bark weights and loudness curve for one spectrum geometry.
#[derive(Debug, Clone)]
pub struct PlpBank {
    bark: Array2<f64>,
    loudness: Vec<f64>,
    lp_order: usize,
    pole: f64,
    log_floor: f64,
}

impl PlpBank {
    pub fn new(fft_size: usize, sample_rate: u32, lp_order: usize, pole: f64, log_floor: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&pole) {
            return Err(Error::Config(format!("RASTA pole {pole} must lie in [0, 1)")));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let loudness: Vec<f64> = bark_centres(nyquist).into_iter().map(|b| equal_loudness(bark_to_hz(b))).collect();
        if 2 * (loudness.len() - 1) <= lp_order {
            return Err(Error::Config(format!(
                "{} Bark bands cannot support LP order {lp_order}",
                loudness.len()
            )));
        }
        Ok(Self {
            bark: bark_filterbank(fft_size, sample_rate),
            loudness,
            lp_order,
            pole,
            log_floor,
        })
    }

    pub fn bands(&self) -> usize {
        self.loudness.len()
    }

    /// Frames × (lp_order + 1) cepstra.
    pub fn apply(&self, pspec: &PowerSpectrogram) -> Result<Array2<f64>> {
        let frames = pspec.frames();
        if frames < RASTA_TAPS {
            return Err(Error::TooShort(format!(
                "RASTA filtering needs at least {RASTA_TAPS} frames, got {frames}"
            )));
        }
        if pspec.bins() != self.bark.ncols() {
            return Err(Error::Shape(format!(
                "spectrum has {} bins, Bark filterbank expects {}",
                pspec.bins(),
                self.bark.ncols()
            )));
        }
        let bands = self.bands();
        let mut aud = pspec.values.dot(&self.bark.t());
        aud.mapv_inplace(|e| e.max(self.log_floor).ln());
        for b in 0..bands {
            let y = rasta_filter(aud.column(b), self.pole);
            aud.column_mut(b).iter_mut().zip(y).for_each(|(v, f)| *v = f);
        }

        let mut out = Array2::zeros((frames, self.lp_order + 1));
        let mut band = vec![0.0; bands];
        for t in 0..frames {
            for b in 0..bands {
                band[b] = (aud[[t, b]].exp() * self.loudness[b]).cbrt();
            }
            band[0] = band[1];
            band[bands - 1] = band[bands - 2];
            let r = autocorrelation_from_spectrum(&band, self.lp_order);
            let fit = levinson_durbin(&r, self.lp_order).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("frame {t}: {m}")),
                other => other,
            })?;
            let cep = lpc_to_cepstrum(&fit.a, fit.error);
            out.row_mut(t).iter_mut().zip(cep).for_each(|(o, c)| *o = c);
        }
        Ok(out)
    }
}

/// RASTA-PLP cepstra c0..c_order for every frame.
pub fn rasta_plp(pspec: &PowerSpectrogram, lp_order: usize, pole: f64, log_floor: f64) -> Result<Array2<f64>> {
    PlpBank::new(pspec.fft_size, pspec.sample_rate, lp_order, pole, log_floor)?.apply(pspec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bark_scale_roundtrip_and_band_count() {
        for hz in [0.0, 250.0, 4000.0, 24000.0] {
            assert!((bark_to_hz(hz_to_bark(hz)) - hz).abs() < 1e-9);
        }
        // 24 kHz Nyquist: 6*asinh(40) = 26.3 -> 27 + 1 bands
        assert_eq!(bark_band_count(24000.0), 28);
        assert_eq!(bark_band_count(8000.0), 21);
    }

    #[test]
    fn rasta_dc_gain_is_zero() {
        let (re, im) = rasta_response(0.0, 0.94);
        assert!(re.abs() < 1e-9 && im.abs() < 1e-9);
        assert!(RASTA_NUMERATOR.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn rasta_peak_in_modulation_band() {
        // 100 frames/s: scan 0.1..50 Hz modulation frequency
        let frame_rate = 100.0;
        let (mut best_f, mut best_g) = (0.0, 0.0);
        let mut f = 0.1;
        while f < 50.0 {
            let (re, im) = rasta_response(2.0 * PI * f / frame_rate, 0.94);
            let g = (re * re + im * im).sqrt();
            if g > best_g {
                best_g = g;
                best_f = f;
            }
            f += 0.1;
        }
        assert!((1.0..=16.0).contains(&best_f), "peak at {best_f} Hz");
    }

    #[test]
    fn constant_trajectory_filtered_to_zero() {
        let x = Array1::from_elem(300, -3.7);
        let y = rasta_filter(x.view(), 0.94);
        assert!(y[200..].iter().all(|v| v.abs() <= 1e-6));
        assert!(y.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn rasta_filter_matches_difference_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Array1<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = rasta_filter(x.view(), 0.94);
        for t in 0..4 {
            assert_eq!(y[t], 0.0);
        }
        let mut prev = 0.0;
        for t in 4..40 {
            let want = 0.2 * x[t] + 0.1 * x[t - 1] - 0.1 * x[t - 3] - 0.2 * x[t - 4] + 0.94 * prev;
            assert!((y[t] - want).abs() < 1e-14);
            prev = want;
        }
    }

    #[test]
    fn levinson_matches_direct_toeplitz_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sig: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let order = 12;
        let r: Vec<f64> = (0..=order)
            .map(|k| sig.iter().zip(&sig[k..]).map(|(a, b)| a * b).sum())
            .collect();
        let fit = levinson_durbin(&r, order).unwrap();
        let toeplitz = DMatrix::from_fn(order, order, |i, j| r[i.abs_diff(j)]);
        let rhs = DVector::from_fn(order, |i, _| -r[i + 1]);
        let direct = toeplitz.lu().solve(&rhs).unwrap();
        for i in 0..order {
            assert!((fit.a[i + 1] - direct[i]).abs() < 1e-10);
        }
        let err: f64 = (0..=order).map(|j| fit.a[j] * r[j]).sum();
        assert!((fit.error - err).abs() < 1e-9 * r[0]);
    }

    #[test]
    fn white_noise_reflections_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let sig: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..=12)
                .map(|k| sig.iter().zip(&sig[k..]).map(|(a, b)| a * b).sum())
                .collect();
            let fit = levinson_durbin(&r, 12).unwrap();
            assert!(fit.reflection.iter().all(|k| k.abs() < 1.0));
        }
    }

    #[test]
    fn degenerate_autocorrelation_reported() {
        assert!(matches!(levinson_durbin(&[0.0, 0.0, 0.0], 2), Err(Error::Numerical(_))));
        // perfectly predictable: r = [1, 1, 1] gives k1 = -1 and zero error
        assert!(matches!(levinson_durbin(&[1.0, 1.0, 1.0], 2), Err(Error::Numerical(_))));
    }

    #[test]
    fn cepstrum_recursion_matches_log_spectrum() {
        // stable predictor from a random autocorrelation
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sig: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let smooth: Vec<f64> = sig.windows(3).map(|w| w[0] + 0.8 * w[1] + 0.3 * w[2]).collect();
        let r: Vec<f64> = (0..=6)
            .map(|k| smooth.iter().zip(&smooth[k..]).map(|(a, b)| a * b).sum())
            .collect();
        let fit = levinson_durbin(&r, 6).unwrap();
        let c = lpc_to_cepstrum(&fit.a, 2.5);
        assert!((c[0] - 2.5f64.ln()).abs() < 1e-15);
        // oracle: c_n = 2/N sum_k -ln|A(w_k)| cos(w_k n) for a minimum-phase A
        let n_fft = 8192;
        for n in 1..=6 {
            let mut acc = 0.0;
            for k in 0..n_fft {
                let w = 2.0 * PI * k as f64 / n_fft as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for (j, aj) in fit.a.iter().enumerate() {
                    re += aj * (w * j as f64).cos();
                    im -= aj * (w * j as f64).sin();
                }
                acc += -0.5 * (re * re + im * im).ln() * (w * n as f64).cos();
            }
            let oracle = 2.0 * acc / n_fft as f64;
            assert!((c[n] - oracle).abs() < 1e-9, "n={n}: {} vs {oracle}", c[n]);
        }
    }

    #[test]
    fn autocorrelation_of_flat_spectrum_is_impulse() {
        let r = autocorrelation_from_spectrum(&vec![2.0; 21], 12);
        assert!((r[0] - 2.0).abs() < 1e-12);
        assert!(r[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn too_few_frames_rejected() {
        let ps = PowerSpectrogram {
            values: Array2::from_elem((4, 257), 1.0),
            bin_hz: 31.25,
            fft_size: 512,
            sample_rate: 16000,
            window_power: 1.0,
        };
        assert!(matches!(rasta_plp(&ps, 12, 0.94, 1e-10), Err(Error::TooShort(_))));
    }

    #[test]
    fn output_width_is_order_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ps = PowerSpectrogram {
            values: Array2::from_shape_fn((30, 1025), |_| rng.random_range(0.0..1.0)),
            bin_hz: 16000.0 / 2048.0,
            fft_size: 2048,
            sample_rate: 16000,
            window_power: 1.0,
        };
        let c = rasta_plp(&ps, 12, 0.94, 1e-10).unwrap();
        assert_eq!(c.dim(), (30, 13));
        assert!(c.iter().all(|v| v.is_finite()));
    }
}
