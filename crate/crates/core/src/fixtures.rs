//! Synthetic four-species corpus for tests and demos.
//!
//! Every recording is a white-noise bed with planted calls of one species:
//!
//! | species    | call archetype                         |
//! |------------|----------------------------------------|
//! | chimpanzee | harmonic tone, f0 280-420 Hz, 3 partials |
//! | mandrill   | noise burst, 150-500 Hz                |
//! | mangabey   | linear up-chirp, about 500 to 1500 Hz  |
//! | guenon     | linear down-chirp, about 1800 to 900 Hz |
//!
//! Call SNR is the ratio of call power to full-band bed power. The first
//! chimpanzee session also has a second, paired recorder that hears the same
//! calls at lower gain over independent noise.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio_io::{
    write_annotations, write_wave, Annotation, AudioClip, CorpusManifest, Recording, SelectionFormat, TimeInterval,
};
use crate::error::{Error, Result};

pub const SPECIES: [&str; 4] = ["chimpanzee", "mandrill", "mangabey", "guenon"];

/// File names written by [`write_fixtures`], relative to the output directory.
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ANNOTATION_FILE: &str = "annotations.tsv";

/// Gain of the paired chimpanzee recorder relative to the primary one.
const PAIRED_GAIN: f64 = 0.6;
const EPOCH_DAY: i64 = 18262; // 2020-01-01

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub sample_rate: u32,
    pub sessions_per_species: usize,
    pub session_s: f64,
    pub calls_per_session: usize,
    pub call_min_s: f64,
    pub call_max_s: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub bed_rms: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            sessions_per_species: 6,
            session_s: 60.0,
            calls_per_session: 9,
            call_min_s: 0.4,
            call_max_s: 1.5,
            snr_min_db: -5.0,
            snr_max_db: 20.0,
            bed_rms: 0.02,
            seed: 1,
        }
    }
}

impl FixtureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate < 8000 {
            return bad(format!("fixture sample rate {} Hz is below 8000", self.sample_rate));
        }
        if self.sessions_per_species == 0 || self.calls_per_session == 0 {
            return bad("fixtures need at least one session and one call per session".into());
        }
        if !(0.0 < self.call_min_s && self.call_min_s <= self.call_max_s) {
            return bad(format!("call durations {}..{} s are not increasing and positive", self.call_min_s, self.call_max_s));
        }
        // each call gets its own slot with a one-second margin on both sides
        let slot = self.session_s / self.calls_per_session as f64;
        if slot < self.call_max_s + 2.0 {
            return bad(format!(
                "{} calls of up to {} s do not fit a {} s session",
                self.calls_per_session, self.call_max_s, self.session_s
            ));
        }
        if !(self.snr_min_db <= self.snr_max_db) || !(self.bed_rms > 0.0) {
            return bad("SNR range must be ordered and bed_rms positive".into());
        }
        Ok(())
    }
}

/// A generated corpus held in memory.
#[derive(Debug, Clone)]
pub struct FixtureCorpus {
    pub manifest: CorpusManifest,
    /// One clip per manifest recording, same order.
    pub clips: Vec<AudioClip>,
    pub annotations: Vec<Annotation>,
    /// Planted SNR of each annotation, same order.
    pub snr_db: Vec<f64>,
}

fn band_of(species: &str) -> (f64, f64) {
    match species {
        "chimpanzee" => (280.0, 1300.0),
        "mandrill" => (150.0, 500.0),
        "mangabey" => (450.0, 1650.0),
        _ => (810.0, 1980.0),
    }
}

/// Unit-RMS call waveform.
fn call_waveform(species: &str, n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = |i: usize| i as f64 / rate;
    let dur = n as f64 / rate;
    let mut x: Vec<f64> = match species {
        "chimpanzee" => {
            let f0 = rng.random_range(280.0..420.0);
            let vib = rng.random_range(3.0..6.0);
            let mut phase = 0.0;
            (0..n)
                .map(|i| {
                    phase += 2.0 * PI * f0 * (1.0 + 0.02 * (2.0 * PI * vib * t(i)).sin()) / rate;
                    phase.sin() + 0.5 * (2.0 * phase).sin() + 0.25 * (3.0 * phase).sin()
                })
                .collect()
        }
        "mandrill" => {
            let parts: Vec<(f64, f64)> = (0..48)
                .map(|_| (rng.random_range(150.0..500.0), rng.random_range(0.0..2.0 * PI)))
                .collect();
            (0..n)
                .map(|i| parts.iter().map(|(f, p)| (2.0 * PI * f * t(i) + p).sin()).sum())
                .collect()
        }
        _ => {
            let (f_start, f_end) = if species == "mangabey" { (500.0, 1500.0) } else { (1800.0, 900.0) };
            let k = rng.random_range(0.9..1.1);
            let (a, b) = (f_start * k, f_end * k);
            (0..n)
                .map(|i| (2.0 * PI * (a * t(i) + 0.5 * (b - a) / dur * t(i) * t(i))).sin())
                .collect()
        }
    };
    // Tukey taper, 10 % per side
    let taper = ((0.1 * n as f64) as usize).max(1);
    for i in 0..taper.min(n) {
        let w = 0.5 * (1.0 - (PI * i as f64 / taper as f64).cos());
        x[i] *= w;
        x[n - 1 - i] *= w;
    }
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    x.iter_mut().for_each(|v| *v /= rms);
    x
}

fn noise_bed(n: usize, rms: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, rms).expect("positive rms");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn timestamp(species_idx: usize, session: usize) -> (String, f64) {
    let secs = (EPOCH_DAY + session as i64) * 86_400 + (6 + 2 * species_idx as i64) * 3600;
    let dt = chrono::DateTime::from_timestamp(secs, 0).expect("in range").naive_utc();
    (dt.format("%Y-%m-%dT%H:%M:%S").to_string(), secs as f64)
}

/// Generates the corpus in memory; identical configs give identical corpora.
pub fn synthesize(config: &FixtureConfig) -> Result<FixtureCorpus> {
    config.validate()?;
    let rate = config.sample_rate as f64;
    let n = (config.session_s * rate).round() as usize;
    let slot = config.session_s / config.calls_per_session as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut recordings = Vec::new();
    let mut clips = Vec::new();
    let mut annotations = Vec::new();
    let mut snr_db = Vec::new();
    let mut pairing = Vec::new();
    for (si, species) in SPECIES.iter().enumerate() {
        for session in 0..config.sessions_per_species {
            let id = format!("{species}_{session:02}");
            let paired = si == 0 && session == 0;
            let mut x = noise_bed(n, config.bed_rms, &mut rng);
            let mut twin = paired.then(|| noise_bed(n, config.bed_rms, &mut rng));
            let (low, high) = band_of(species);
            for k in 0..config.calls_per_session {
                let dur = rng.random_range(config.call_min_s..=config.call_max_s);
                let begin = k as f64 * slot + rng.random_range(1.0..=slot - 1.0 - dur);
                let b = (begin * rate).round() as usize;
                let len = (dur * rate).round() as usize;
                let snr = rng.random_range(config.snr_min_db..=config.snr_max_db);
                let amp = config.bed_rms * 10f64.powf(snr / 20.0);
                let call = call_waveform(species, len, rate, &mut rng);
                for (j, c) in call.iter().enumerate() {
                    x[b + j] += amp * c;
                    if let Some(t) = twin.as_mut() {
                        t[b + j] += PAIRED_GAIN * amp * c;
                    }
                }
                let interval = TimeInterval::new(b as f64 / rate, (b + len) as f64 / rate)?;
                let mut targets = vec![id.clone()];
                if paired {
                    targets.push(format!("{id}b"));
                }
                for (ti, target) in targets.into_iter().enumerate() {
                    let mut a = Annotation::new(target, interval, *species);
                    a.low_freq_hz = Some(low);
                    a.high_freq_hz = Some(high);
                    annotations.push(a);
                    snr_db.push(if ti == 0 { snr } else { snr + 20.0 * PAIRED_GAIN.log10() });
                }
            }
            let (start, start_s) = timestamp(si, session);
            let mut push = |sid: String, recorder: &str, samples: Vec<f64>| -> Result<()> {
                clips.push(AudioClip::new(samples, config.sample_rate, sid.clone())?);
                recordings.push(Recording {
                    path: PathBuf::from(format!("audio/{sid}.wav")),
                    source_id: sid,
                    start: start.clone(),
                    start_s,
                    recorder: recorder.into(),
                    enclosure: species.to_string(),
                });
                Ok(())
            };
            push(id.clone(), &format!("am{:02}", 2 * si + 1), x)?;
            if let Some(t) = twin {
                push(format!("{id}b"), &format!("am{:02}", 2 * si + 2), t)?;
                pairing.push(vec![id.clone(), format!("{id}b")]);
            }
        }
    }
    let manifest = CorpusManifest::new(recordings, SPECIES.iter().map(|s| s.to_string()).collect(), pairing)?;
    Ok(FixtureCorpus {
        manifest,
        clips,
        annotations,
        snr_db,
    })
}

/// Writes the corpus below `dir`: `audio/*.wav`, the manifest and one selection table.
///
/// Returns the corpus as written, with recording paths resolved against `dir`.
pub fn write_fixtures(dir: &Path, config: &FixtureConfig) -> Result<FixtureCorpus> {
    let mut corpus = synthesize(config)?;
    let audio = dir.join("audio");
    std::fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    for (rec, clip) in corpus.manifest.recordings.iter_mut().zip(&corpus.clips) {
        rec.path = dir.join(&rec.path);
        write_wave(clip, &rec.path)?;
    }
    corpus.manifest = CorpusManifest::new(
        corpus.manifest.recordings.clone(),
        corpus.manifest.label_set.clone(),
        corpus.manifest.pairing.clone(),
    )?;
    corpus.manifest.write(&dir.join(MANIFEST_FILE))?;
    write_annotations(&dir.join(ANNOTATION_FILE), &corpus.annotations, &SelectionFormat::default())?;
    Ok(corpus)
}
