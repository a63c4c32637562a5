//! Pipeline configuration file.
//!
//! Plain text, one `key = value` per line, `#` starts a comment line, blank
//! lines are ignored, every key at most once per file. Relative paths are
//! resolved against the directory of the file that names them. See
//! `--print-config` for every key with its default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use callsift::detect::DetectorConfig;
use callsift::eval::DbAveraging;
use callsift::learn::{decade, NormMode};
use callsift::lld::{FrameSpec, LldConfig, WindowKind};

/// Keys settable per species as `detect.<species>.<field>`.
const DETECT_FIELDS: [&str; 13] = [
    "band_low_hz",
    "band_high_hz",
    "loudness_db",
    "deviation",
    "local_window_s",
    "min_event_s",
    "merge_gap_s",
    "pad_s",
    "eps",
    "frame_length_s",
    "hop_s",
    "window",
    "fft_size",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub lld: LldConfig,
    pub detector: DetectorConfig,
    /// Species-specific overrides of `detector`.
    pub species_detector: BTreeMap<String, DetectorConfig>,
    pub norm: NormMode,
    pub grid_zn: Vec<f64>,
    pub grid_zn_l2: Vec<f64>,
    pub split_ratios: [f64; 3],
    pub seed: Option<u64>,
    pub snr_max_hz: f64,
    pub snr_averaging: DbAveraging,
    pub label_column: String,
    pub source_column: String,
    pub run_log: PathBuf,
    pub jobs: Option<usize>,
    /// Raw per-species lines, replayed over the base detector after parsing.
    overrides: Vec<(String, String, String)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lld: LldConfig::default(),
            detector: DetectorConfig::default(),
            species_detector: BTreeMap::new(),
            norm: NormMode::ZnL2,
            grid_zn: NormMode::Zn.default_grid(),
            grid_zn_l2: NormMode::ZnL2.default_grid(),
            split_ratios: [3.0, 1.0, 1.0],
            seed: None,
            snr_max_hz: 2000.0,
            snr_averaging: DbAveraging::MeanOfDb,
            label_column: "Species".into(),
            source_column: "Source".into(),
            run_log: PathBuf::from("callsift-runs.log"),
            jobs: None,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{origin}:{line}: {message}")]
pub struct ConfigError {
    pub origin: String,
    pub line: usize,
    pub message: String,
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("`{v}` is not a valid number"))
}

/// Parses a C grid: a comma list, or `A..B by decade` with A and B powers of ten.
pub fn parse_grid(v: &str) -> Result<Vec<f64>, String> {
    let grid: Vec<f64> = if let Some((range, step)) = v.split_once(" by ") {
        if step.trim() != "decade" {
            return Err(format!("unknown grid step `{}` (only `decade`)", step.trim()));
        }
        let (a, b) = range
            .split_once("..")
            .ok_or_else(|| format!("expected `A..B by decade`, got `{v}`"))?;
        let exp = |s: &str| -> Result<i32, String> {
            let x: f64 = parse_num(s.trim())?;
            let k = x.log10().round();
            if !(x > 0.0) || decade(k as i32) != x {
                return Err(format!("grid bound `{}` is not a power of ten", s.trim()));
            }
            Ok(k as i32)
        };
        let (lo, hi) = (exp(a)?, exp(b)?);
        if lo > hi {
            return Err(format!("grid `{v}` is empty"));
        }
        (lo..=hi).map(decade).collect()
    } else {
        v.split(',').map(|s| parse_num(s.trim())).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(format!("C grid `{v}` must list positive finite values"));
    }
    Ok(grid)
}

fn fmt_grid(g: &[f64]) -> String {
    g.iter().map(|c| format!("{c:e}")).collect::<Vec<_>>().join(", ")
}

fn set_detect_field(d: &mut DetectorConfig, field: &str, v: &str) -> Result<(), String> {
    match field {
        "band_low_hz" => d.band_low_hz = parse_num(v)?,
        "band_high_hz" => d.band_high_hz = parse_num(v)?,
        "loudness_db" => d.loudness_db_threshold = parse_num(v)?,
        "deviation" => d.deviation_threshold = parse_num(v)?,
        "local_window_s" => d.local_window_s = parse_num(v)?,
        "min_event_s" => d.min_event_s = parse_num(v)?,
        "merge_gap_s" => d.merge_gap_s = parse_num(v)?,
        "pad_s" => d.pad_s = parse_num(v)?,
        "eps" => d.eps = parse_num(v)?,
        "frame_length_s" => d.frame.frame_len_s = parse_num(v)?,
        "hop_s" => d.frame.hop_s = parse_num(v)?,
        "window" => d.frame.window = v.parse().map_err(|e: callsift::Error| e.to_string())?,
        "fft_size" => d.frame.fft_size = parse_num(v)?,
        other => return Err(format!("unknown key `detect.{other}`")),
    }
    Ok(())
}

fn detect_fields(d: &DetectorConfig) -> Vec<String> {
    vec![
        d.band_low_hz.to_string(),
        d.band_high_hz.to_string(),
        d.loudness_db_threshold.to_string(),
        d.deviation_threshold.to_string(),
        d.local_window_s.to_string(),
        d.min_event_s.to_string(),
        d.merge_gap_s.to_string(),
        d.pad_s.to_string(),
        format!("{:e}", d.eps),
        d.frame.frame_len_s.to_string(),
        d.frame.hop_s.to_string(),
        d.frame.window.name().to_string(),
        d.frame.fft_size.to_string(),
    ]
}

fn validate_frame(f: &FrameSpec) -> Result<(), String> {
    if !(f.frame_len_s > 0.0 && f.hop_s > 0.0) || !f.fft_size.is_power_of_two() {
        return Err("frame length and hop must be positive and fft_size a power of two".into());
    }
    if !(0.0..1.0).contains(&f.preemphasis) {
        return Err(format!("preemphasis {} outside [0, 1)", f.preemphasis));
    }
    Ok(())
}

impl PipelineConfig {
    /// Loads and validates a config file over the defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    /// Reads `path` and applies its keys over the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.apply_text(&text, base, &path.display().to_string())
    }

    pub fn apply_text(&mut self, text: &str, base: &Path, origin: &str) -> Result<(), ConfigError> {
        let err = |line: usize, message: String| ConfigError {
            origin: origin.to_string(),
            line,
            message,
        };
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (key, value) = l
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, got `{l}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(err(line, format!("key `{key}` already set on line {prev}")));
            }
            self.set(key, value, base).map_err(|m| err(line, m))?;
        }
        self.finish().map_err(|m| err(0, m))
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<(), String> {
        let f = &mut self.lld.frame;
        match key {
            "frame.length_s" => f.frame_len_s = parse_num(v)?,
            "frame.hop_s" => f.hop_s = parse_num(v)?,
            "frame.window" => f.window = v.parse::<WindowKind>().map_err(|e| e.to_string())?,
            "frame.fft_size" => f.fft_size = parse_num(v)?,
            "frame.preemphasis" => f.preemphasis = parse_num(v)?,
            "lld.n_mels" => self.lld.n_mels = parse_num(v)?,
            "lld.mel_low_hz" => self.lld.mel_low_hz = parse_num(v)?,
            "lld.mel_high_hz" => {
                self.lld.mel_high_hz = if v == "nyquist" { None } else { Some(parse_num(v)?) }
            }
            "lld.log_floor" => self.lld.log_floor = parse_num(v)?,
            "lld.delta_window" => self.lld.delta_window = parse_num(v)?,
            "lld.rasta_pole" => self.lld.rasta_pole = parse_num(v)?,
            "norm" => self.norm = v.parse().map_err(|e: callsift::Error| e.to_string())?,
            "grid.zn" => self.grid_zn = parse_grid(v)?,
            "grid.zn+l2" => self.grid_zn_l2 = parse_grid(v)?,
            "split.ratios" => {
                let r: Vec<f64> = v.split(',').map(|s| parse_num(s.trim())).collect::<Result<_, _>>()?;
                if r.len() != 3 || r.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(format!("split.ratios needs three positive numbers, got `{v}`"));
                }
                self.split_ratios = [r[0], r[1], r[2]];
            }
            "seed" => self.seed = Some(parse_num(v)?),
            "snr.max_hz" => self.snr_max_hz = parse_num(v)?,
            "snr.averaging" => self.snr_averaging = v.parse().map_err(|e: callsift::Error| e.to_string())?,
            "annotations.label_column" => self.label_column = v.to_string(),
            "annotations.source_column" => self.source_column = v.to_string(),
            "run_log" => self.run_log = base.join(v),
            "jobs" => self.jobs = Some(parse_num(v)?),
            _ => {
                let rest = key.strip_prefix("detect.").ok_or_else(|| format!("unknown key `{key}`"))?;
                match rest.split_once('.') {
                    Some((species, field)) if DETECT_FIELDS.contains(&field) && !species.is_empty() => {
                        self.overrides.push((species.into(), field.into(), v.into()));
                    }
                    Some(_) => return Err(format!("unknown key `{key}`")),
                    None => set_detect_field(&mut self.detector, rest, v)?,
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<(), String> {
        validate_frame(&self.lld.frame)?;
        validate_frame(&self.detector.frame)?;
        if self.lld.n_mels == 0 || self.lld.delta_window == 0 {
            return Err("lld.n_mels and lld.delta_window must be positive".into());
        }
        if !(self.snr_max_hz >= 0.0) {
            return Err("snr.max_hz must be >= 0".into());
        }
        if self.jobs == Some(0) {
            return Err("jobs must be positive".into());
        }
        self.species_detector.clear();
        for (species, field, v) in &self.overrides {
            let d = self
                .species_detector
                .entry(species.clone())
                .or_insert_with(|| self.detector.clone());
            set_detect_field(d, field, v).map_err(|m| format!("detect.{species}.{field}: {m}"))?;
        }
        Ok(())
    }

    /// Detector settings for `species`.
    pub fn detector_for(&self, species: &str) -> &DetectorConfig {
        self.species_detector.get(species).unwrap_or(&self.detector)
    }

    pub fn grid(&self, mode: NormMode) -> &[f64] {
        match mode {
            NormMode::Zn => &self.grid_zn,
            NormMode::ZnL2 => &self.grid_zn_l2,
        }
    }

    /// Every key with its value, in a form [`PipelineConfig::apply_text`] accepts.
    pub fn render(&self) -> String {
        let f = &self.lld.frame;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("frame.length_s", f.frame_len_s.to_string());
        kv("frame.hop_s", f.hop_s.to_string());
        kv("frame.window", f.window.name().into());
        kv("frame.fft_size", f.fft_size.to_string());
        kv("frame.preemphasis", f.preemphasis.to_string());
        kv("lld.n_mels", self.lld.n_mels.to_string());
        kv("lld.mel_low_hz", self.lld.mel_low_hz.to_string());
        kv(
            "lld.mel_high_hz",
            self.lld.mel_high_hz.map_or("nyquist".into(), |h| h.to_string()),
        );
        kv("lld.log_floor", format!("{:e}", self.lld.log_floor));
        kv("lld.delta_window", self.lld.delta_window.to_string());
        kv("lld.rasta_pole", self.lld.rasta_pole.to_string());
        for (name, v) in DETECT_FIELDS.iter().zip(detect_fields(&self.detector)) {
            kv(&format!("detect.{name}"), v);
        }
        for (species, d) in &self.species_detector {
            for (name, v) in DETECT_FIELDS.iter().zip(detect_fields(d)) {
                kv(&format!("detect.{species}.{name}"), v);
            }
        }
        kv("norm", self.norm.to_string());
        kv("grid.zn", fmt_grid(&self.grid_zn));
        kv("grid.zn+l2", fmt_grid(&self.grid_zn_l2));
        kv("split.ratios", self.split_ratios.map(|r| r.to_string()).join(", "));
        if let Some(s) = self.seed {
            kv("seed", s.to_string());
        }
        kv("snr.max_hz", self.snr_max_hz.to_string());
        kv("snr.averaging", self.snr_averaging.to_string());
        kv("annotations.label_column", self.label_column.clone());
        kv("annotations.source_column", self.source_column.clone());
        kv("run_log", self.run_log.display().to_string());
        if let Some(j) = self.jobs {
            kv("jobs", j.to_string());
        }
        out
    }
}
