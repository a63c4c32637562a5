use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::fsutil;

/// 16-bit sample `s` maps to `s / 32768`.
const PCM16_SCALE: f64 = 32768.0;

/// Outcome of [`write_wave`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteReport {
    /// Samples outside [-1, 1] that were clamped.
    pub clamped: usize,
}

/// Header facts for a WAVE file, without decoding its payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub frames: u32,
}

impl WaveInfo {
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate as f64
    }
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(msg) => Error::Format(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported => Error::Unsupported(format!(
            "{}: {}",
            path.display(),
            describe_fmt_chunk(path).unwrap_or_else(|| "unrecognised format".into())
        )),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Names the encoding declared in the fmt chunk, for error messages.
fn describe_fmt_chunk(path: &Path) -> Option<String> {
    let mut bytes = Vec::new();
    File::open(path).ok()?.take(1 << 16).read_to_end(&mut bytes).ok()?;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        if id == b"fmt " && pos + 24 <= bytes.len() {
            let tag = u16::from_le_bytes([bytes[pos + 8], bytes[pos + 9]]);
            let bits = u16::from_le_bytes([bytes[pos + 22], bytes[pos + 23]]);
            let name = match tag {
                0x0001 => "PCM",
                0x0002 => "MS ADPCM",
                0x0003 => "IEEE float",
                0x0006 => "A-law",
                0x0007 => "mu-law",
                0x0011 => "IMA ADPCM",
                0xFFFE => "extensible",
                _ => "unknown",
            };
            return Some(format!("format tag 0x{tag:04X} ({name}), {bits}-bit"));
        }
        pos += 8 + len + (len & 1);
    }
    None
}

fn check_encoding(path: &Path, spec: &WavSpec) -> Result<()> {
    let ok = matches!(
        (spec.sample_format, spec.bits_per_sample),
        (SampleFormat::Int, 16) | (SampleFormat::Float, 32)
    );
    if !ok {
        let kind = match spec.sample_format {
            SampleFormat::Int => "PCM",
            SampleFormat::Float => "IEEE float",
        };
        return Err(Error::Unsupported(format!(
            "{}: {kind} {}-bit (need PCM 16-bit or IEEE float 32-bit)",
            path.display(),
            spec.bits_per_sample
        )));
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(Error::Unsupported(format!(
            "{}: {} channels (need 1 or 2)",
            path.display(),
            spec.channels
        )));
    }
    Ok(())
}

/// Reads header information only.
pub fn wave_info(path: &Path) -> Result<WaveInfo> {
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    check_encoding(path, &spec)?;
    Ok(WaveInfo {
        sample_rate: spec.sample_rate,
        channels: spec.channels,
        frames: reader.duration(),
    })
}

/// Decodes a 16-bit PCM or 32-bit float WAVE file to a mono clip.
///
/// Stereo input is mixed down by averaging the two channels. The clip's
/// `source_id` is the file stem.
pub fn read_wave(path: &Path) -> Result<AudioClip> {
    let mut reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    check_encoding(path, &spec)?;

    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Int => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>(),
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
    }
    .map_err(|e| map_hound(path, e))?;

    let channels = spec.channels as usize;
    let samples: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|f| f.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    if samples.is_empty() {
        return Err(Error::Format(format!("{}: no audio frames", path.display())));
    }
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, spec.sample_rate, source_id)
}

fn quantize(x: f64) -> (i16, bool) {
    let out_of_range = !(-1.0..=1.0).contains(&x);
    let q = (x * PCM16_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64);
    (q as i16, out_of_range)
}

/// Writes a clip as 16-bit PCM mono. Out-of-range samples are clamped and counted.
pub fn write_wave(clip: &AudioClip, path: &Path) -> Result<WriteReport> {
    if clip.is_empty() {
        return Err(Error::Precondition("cannot write an empty clip".into()));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut tmp = fsutil::temp_beside(path)?;
    let mut report = WriteReport::default();
    {
        let writer = BufWriter::new(tmp.as_file_mut());
        let mut wav = WavWriter::new(writer, spec).map_err(|e| map_hound(path, e))?;
        for &x in clip.samples() {
            let (q, clamped) = quantize(x);
            report.clamped += clamped as usize;
            wav.write_sample(q).map_err(|e| map_hound(path, e))?;
        }
        wav.finalize().map_err(|e| map_hound(path, e))?;
    }
    if report.clamped > 0 {
        log::warn!("{}: clamped {} sample(s) to [-1, 1]", path.display(), report.clamped);
    }
    fsutil::commit(tmp, path)?;
    Ok(report)
}

/// Opens a WAVE file for raw verification in tests.
#[cfg(test)]
fn read_raw_i16(path: &Path) -> Vec<i16> {
    let r = WavReader::new(std::io::BufReader::new(File::open(path).unwrap())).unwrap();
    r.into_samples::<i16>().map(|s| s.unwrap()).collect()
}
