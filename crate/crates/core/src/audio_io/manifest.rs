//! Corpus manifest: recordings, label set and simultaneous-recorder pairing.
//!
//! Grammar (UTF-8, `#` starts a comment line, blank lines ignored):
//!
//! ```text
//! labels = chimpanzee, mandrill, mangabey, guenon
//! pair = chimp_a1, chimp_a2
//!
//! [recordings]
//! source_id   path                start                recorder  enclosure
//! chimp_a1    audio/chimp_a1.wav  2019-12-01T06:00:00  am01      chimpanzee
//! ```
//!
//! Before `[recordings]` only `labels` (exactly once) and `pair` (any number)
//! keys are allowed. Recording rows are tab-separated, or whitespace-separated
//! when the line has no tab. A row whose first field is `source_id` is a
//! header and skipped. Paths are relative to the manifest's directory. Start
//! timestamps are `YYYY-MM-DDTHH:MM:SS[.fff]`, interpreted as UTC.
//!
//! Annotation times are always relative to the start of their recording file;
//! the manifest start timestamp converts them to absolute time.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::BACKGROUND_LABEL;
use crate::error::{Error, Result};
use crate::fsutil;

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub source_id: String,
    /// Resolved path (manifest directory joined with the listed path).
    pub path: PathBuf,
    /// Start timestamp as written in the manifest.
    pub start: String,
    /// Start timestamp in seconds since the Unix epoch.
    pub start_s: f64,
    pub recorder: String,
    /// Species whose enclosure the recorder was placed at.
    pub enclosure: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub recordings: Vec<Recording>,
    pub label_set: Vec<String>,
    pub pairing: Vec<Vec<String>>,
    by_id: HashMap<String, usize>,
}

pub(crate) fn parse_timestamp(text: &str) -> Option<f64> {
    let t = NaiveDateTime::parse_from_str(text.trim(), TIME_FORMAT).ok()?;
    let utc = t.and_utc();
    Some(utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9)
}

impl CorpusManifest {
    pub fn new(recordings: Vec<Recording>, label_set: Vec<String>, pairing: Vec<Vec<String>>) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (i, r) in recordings.iter().enumerate() {
            if by_id.insert(r.source_id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate source_id `{}`", r.source_id)));
            }
        }
        if label_set.is_empty() {
            return Err(Error::Config("empty label set".into()));
        }
        let mut seen_labels = HashSet::new();
        for l in &label_set {
            if !seen_labels.insert(l) || l == BACKGROUND_LABEL {
                return Err(Error::Config(format!("label `{l}` duplicated or reserved")));
            }
        }
        let mut paired = HashSet::new();
        for group in &pairing {
            for id in group {
                if !by_id.contains_key(id) {
                    return Err(Error::Reference(format!("paired recording `{id}` not in manifest")));
                }
                if !paired.insert(id.clone()) {
                    return Err(Error::Config(format!("recording `{id}` appears in two pairing groups")));
                }
            }
        }
        Ok(Self {
            recordings,
            label_set,
            pairing,
            by_id,
        })
    }

    pub fn recording(&self, source_id: &str) -> Option<&Recording> {
        self.by_id.get(source_id).map(|&i| &self.recordings[i])
    }

    /// True for labels in the label set and for the background label.
    pub fn accepts_label(&self, label: &str) -> bool {
        label == BACKGROUND_LABEL || self.label_set.iter().any(|l| l == label)
    }

    /// Recordings placed at `species`' enclosure, in manifest order.
    pub fn recordings_of<'a>(&'a self, species: &'a str) -> impl Iterator<Item = &'a Recording> + 'a {
        self.recordings.iter().filter(move |r| r.enclosure == species)
    }

    /// Recordings sorted chronologically (ties by source_id).
    pub fn chronological(&self) -> Vec<&Recording> {
        let mut v: Vec<&Recording> = self.recordings.iter().collect();
        v.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then_with(|| a.source_id.cmp(&b.source_id)));
        v
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    /// Parses manifest text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path, origin: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Format(format!("{origin}:{line}: {msg}"));
        let mut labels: Option<Vec<String>> = None;
        let mut pairing = Vec::new();
        let mut recordings = Vec::new();
        let mut in_table = false;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[recordings]" {
                in_table = true;
                continue;
            }
            if !in_table {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
                let items: Vec<String> = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                match key.trim() {
                    "labels" => {
                        if labels.replace(items).is_some() {
                            return Err(err(line_no, "`labels` given twice".into()));
                        }
                    }
                    "pair" => {
                        if items.len() < 2 {
                            return Err(err(line_no, "a pairing group needs at least two recordings".into()));
                        }
                        pairing.push(items);
                    }
                    other => return Err(err(line_no, format!("unknown key `{other}`"))),
                }
                continue;
            }
            let fields: Vec<&str> = if raw.contains('\t') {
                raw.split('\t').map(str::trim).collect()
            } else {
                line.split_whitespace().collect()
            };
            if fields.first() == Some(&"source_id") {
                continue;
            }
            if fields.len() != 5 {
                return Err(err(line_no, format!("expected 5 fields, found {}", fields.len())));
            }
            let start_s = parse_timestamp(fields[2])
                .ok_or_else(|| err(line_no, format!("bad timestamp `{}`", fields[2])))?;
            recordings.push(Recording {
                source_id: fields[0].to_string(),
                path: base.join(fields[1]),
                start: fields[2].to_string(),
                start_s,
                recorder: fields[3].to_string(),
                enclosure: fields[4].to_string(),
            });
        }
        let labels = labels.ok_or_else(|| Error::Format(format!("{origin}: missing `labels`")))?;
        Self::new(recordings, labels, pairing)
    }

    /// Writes the manifest; recording paths are made relative to the manifest directory when possible.
    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new("."));
        fsutil::write_atomic(path, |w| {
            let io = |e| Error::io(path, e);
            writeln!(w, "labels = {}", self.label_set.join(", ")).map_err(io)?;
            for group in &self.pairing {
                writeln!(w, "pair = {}", group.join(", ")).map_err(io)?;
            }
            writeln!(w, "\n[recordings]").map_err(io)?;
            writeln!(w, "source_id\tpath\tstart\trecorder\tenclosure").map_err(io)?;
            for r in &self.recordings {
                let rel = r.path.strip_prefix(base).unwrap_or(&r.path);
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}",
                    r.source_id,
                    rel.display(),
                    r.start,
                    r.recorder,
                    r.enclosure
                )
                .map_err(io)?;
            }
            Ok(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# corpus\nlabels = chimpanzee, mandrill\npair = a1, a2\n\n[recordings]\n\
        source_id\tpath\tstart\trecorder\tenclosure\n\
        a1\taudio/a1.wav\t2019-12-01T06:00:00\tam01\tchimpanzee\n\
        a2\taudio/a2.wav\t2019-12-01T06:00:00\tam02\tchimpanzee\n\
        m1 audio/m1.wav 2019-12-03T07:30:00.5 am03 mandrill\n";

    #[test]
    fn parses_sample() {
        let m = CorpusManifest::parse(SAMPLE, Path::new("/data"), "m").unwrap();
        assert_eq!(m.recordings.len(), 3);
        assert_eq!(m.label_set, vec!["chimpanzee", "mandrill"]);
        assert_eq!(m.pairing, vec![vec!["a1".to_string(), "a2".to_string()]]);
        let m1 = m.recording("m1").unwrap();
        assert_eq!(m1.path, Path::new("/data/audio/m1.wav"));
        assert_eq!(m1.start_s - m.recording("a1").unwrap().start_s, 2.0 * 86400.0 + 5400.5);
        assert_eq!(m.recordings_of("chimpanzee").count(), 2);
        assert!(m.accepts_label("background"));
        assert!(!m.accepts_label("gorilla"));
    }

    #[test]
    fn errors_cite_lines() {
        let bad = "labels = a\n[recordings]\nr1 x.wav notatime rec a\n";
        let e = CorpusManifest::parse(bad, Path::new("."), "m").unwrap_err().to_string();
        assert!(e.contains("m:3"), "{e}");
        let unknown = "labels = a\ncolour = red\n";
        let e = CorpusManifest::parse(unknown, Path::new("."), "m").unwrap_err().to_string();
        assert!(e.contains("m:2") && e.contains("colour"), "{e}");
    }

    #[test]
    fn duplicate_ids_and_overlapping_pairs_rejected() {
        let dup = "labels = a\n[recordings]\nr1 x.wav 2020-01-01T00:00:00 rec a\nr1 y.wav 2020-01-01T00:00:00 rec a\n";
        assert!(CorpusManifest::parse(dup, Path::new("."), "m").is_err());
        let pairs = "labels = a\npair = r1, r2\npair = r2, r3\n[recordings]\n\
            r1 x.wav 2020-01-01T00:00:00 rec a\nr2 y.wav 2020-01-01T00:00:00 rec a\nr3 z.wav 2020-01-01T00:00:00 rec a\n";
        assert!(CorpusManifest::parse(pairs, Path::new("."), "m").is_err());
        let dangling = "labels = a\npair = r1, r9\n[recordings]\nr1 x.wav 2020-01-01T00:00:00 rec a\n";
        assert!(matches!(
            CorpusManifest::parse(dangling, Path::new("."), "m"),
            Err(Error::Reference(_))
        ));
    }

    #[test]
    fn write_then_load_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let m = CorpusManifest::parse(SAMPLE, dir.path(), "m").unwrap();
        let p = dir.path().join("manifest.txt");
        m.write(&p).unwrap();
        let back = CorpusManifest::load(&p).unwrap();
        assert_eq!(back, m);
    }
}
