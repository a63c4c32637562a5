//! Bundling detected fragments into one dense clip, and mapping times and
//! annotations between the condensed clip and the source recordings.

use std::path::Path;

use crate::audio_io::{common_rate, Annotation, AudioClip, TimeInterval};
use crate::error::{Error, Result};
use crate::fsutil;

/// Slack for comparing times that went through sample rounding.
const TIME_TOL: f64 = 1e-9;

const INDEX_COLUMNS: [&str; 5] = [
    "condensed_begin_s",
    "condensed_end_s",
    "source_id",
    "source_begin_s",
    "source_end_s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub condensed: TimeInterval,
    pub source_id: String,
    pub source: TimeInterval,
}

/// Piecewise map from condensed time to source time.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedIndex {
    pub entries: Vec<IndexEntry>,
    pub total_condensed_s: f64,
    pub total_source_s: f64,
}

impl CondensedIndex {
    /// Source recording and time for a condensed instant in `[0, total]`.
    pub fn map_to_source(&self, t: f64) -> Option<(&str, f64)> {
        if !(0.0..=self.total_condensed_s).contains(&t) {
            return None;
        }
        let i = self.entries.partition_point(|e| e.condensed.end_s <= t);
        let e = self.entries.get(i).or(self.entries.last())?;
        Some((&e.source_id, e.source.begin_s + (t - e.condensed.begin_s)))
    }

    /// Condensed instant for a source time that falls inside a fragment.
    pub fn map_to_condensed(&self, source_id: &str, t: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.source_id == source_id && e.source.begin_s <= t && t <= e.source.end_s)
            .map(|e| e.condensed.begin_s + (t - e.source.begin_s))
    }

    /// Writes the index as TSV preceded by `#` comment lines holding the totals.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, |w| {
            let io = |e| Error::io(path, e);
            writeln!(w, "# total_condensed_s={}", self.total_condensed_s).map_err(io)?;
            writeln!(w, "# total_source_s={}", self.total_source_s).map_err(io)?;
            writeln!(w, "{}", INDEX_COLUMNS.join("\t")).map_err(io)?;
            for e in &self.entries {
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}",
                    e.condensed.begin_s, e.condensed.end_s, e.source_id, e.source.begin_s, e.source.end_s
                )
                .map_err(io)?;
            }
            Ok(())
        })
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let origin = path.display().to_string();
        let (mut condensed_total, mut source_total) = (None, None);
        for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
            if let Some((k, v)) = line.split_once('=') {
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("{origin}: bad total in `#{line}`")))?;
                match k.trim() {
                    "total_condensed_s" => condensed_total = Some(v),
                    "total_source_s" => source_total = Some(v),
                    _ => {}
                }
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::Format(format!("{origin}: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != INDEX_COLUMNS {
            return Err(Error::Schema(format!("{origin}: expected columns {}", INDEX_COLUMNS.join(", "))));
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Row { row, message: e.to_string() })?;
            let num = |k: usize| {
                rec[k].parse::<f64>().map_err(|e| Error::Row {
                    row,
                    message: format!("{}: {e}", INDEX_COLUMNS[k]),
                })
            };
            let wrap = |e: Error| Error::Row { row, message: e.to_string() };
            entries.push(IndexEntry {
                condensed: TimeInterval::new(num(0)?, num(1)?).map_err(wrap)?,
                source_id: rec[2].to_string(),
                source: TimeInterval::new(num(3)?, num(4)?).map_err(wrap)?,
            });
        }
        let total_condensed_s = condensed_total
            .or_else(|| entries.last().map(|e| e.condensed.end_s))
            .unwrap_or(0.0);
        let total_source_s =
            source_total.ok_or_else(|| Error::Format(format!("{origin}: missing `# total_source_s=` line")))?;
        Ok(Self {
            entries,
            total_condensed_s,
            total_source_s,
        })
    }
}

/// Concatenates the event fragments of each recording, in the given order.
///
/// Event bounds are rounded to whole samples, so condensed audio is a
/// bit-exact copy of the source samples.
pub fn condense(recordings: &[(&AudioClip, &[TimeInterval])], condensed_id: &str) -> Result<(AudioClip, CondensedIndex)> {
    let rate = common_rate(recordings.iter().map(|(c, _)| *c))?;
    let sr = rate as f64;
    let mut samples = Vec::new();
    let mut entries = Vec::new();
    let mut total_source_s = 0.0;
    for (clip, events) in recordings {
        total_source_s += clip.duration_s();
        let mut sorted: Vec<TimeInterval> = events.to_vec();
        sorted.sort_by(|a, b| a.begin_s.total_cmp(&b.begin_s));
        let mut prev_end = 0;
        for ev in sorted {
            let (b, e) = (clip.sample_index(ev.begin_s), clip.sample_index(ev.end_s));
            if e > clip.len() || ev.begin_s < 0.0 {
                return Err(Error::Bounds(format!(
                    "event [{}, {}) s lies beyond the end of `{}` ({} s)",
                    ev.begin_s,
                    ev.end_s,
                    clip.source_id,
                    clip.duration_s()
                )));
            }
            if b < prev_end {
                return Err(Error::Precondition(format!(
                    "overlapping events on `{}` near {} s",
                    clip.source_id, ev.begin_s
                )));
            }
            prev_end = e;
            if e == b {
                continue;
            }
            let c = samples.len();
            samples.extend_from_slice(&clip.samples()[b..e]);
            entries.push(IndexEntry {
                condensed: TimeInterval {
                    begin_s: c as f64 / sr,
                    end_s: (c + e - b) as f64 / sr,
                },
                source_id: clip.source_id.clone(),
                source: TimeInterval {
                    begin_s: clip.source_offset + b as f64 / sr,
                    end_s: clip.source_offset + e as f64 / sr,
                },
            });
        }
    }
    let total_condensed_s = samples.len() as f64 / sr;
    let clip = AudioClip::new(samples, rate, condensed_id)?;
    Ok((
        clip,
        CondensedIndex {
            entries,
            total_condensed_s,
            total_source_s,
        },
    ))
}

/// Maps annotations made on the condensed clip back to source time,
/// splitting any that straddle a fragment boundary.
pub fn lift_annotations(annotations: &[Annotation], index: &CondensedIndex) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for a in annotations {
        let iv = a.interval;
        if iv.begin_s < -TIME_TOL || iv.end_s > index.total_condensed_s + TIME_TOL {
            return Err(Error::Bounds(format!(
                "annotation [{}, {}) s outside condensed duration {} s",
                iv.begin_s, iv.end_s, index.total_condensed_s
            )));
        }
        for e in index.entries.iter().filter(|e| e.condensed.overlap_len(&iv) > 0.0) {
            let begin = iv.begin_s.max(e.condensed.begin_s) - e.condensed.begin_s + e.source.begin_s;
            let end = iv.end_s.min(e.condensed.end_s) - e.condensed.begin_s + e.source.begin_s;
            out.push(Annotation {
                source_id: e.source_id.clone(),
                interval: TimeInterval { begin_s: begin, end_s: end },
                ..a.clone()
            });
        }
    }
    Ok(out)
}

/// Maps source-time annotations onto the condensed clip; each must lie
/// within a single fragment.
pub fn project_annotations(annotations: &[Annotation], index: &CondensedIndex, condensed_id: &str) -> Result<Vec<Annotation>> {
    annotations
        .iter()
        .map(|a| {
            let e = index
                .entries
                .iter()
                .find(|e| {
                    e.source_id == a.source_id
                        && e.source.begin_s <= a.interval.begin_s + TIME_TOL
                        && a.interval.end_s <= e.source.end_s + TIME_TOL
                })
                .ok_or_else(|| {
                    Error::Bounds(format!(
                        "annotation [{}, {}) s on `{}` is not inside one condensed fragment",
                        a.interval.begin_s, a.interval.end_s, a.source_id
                    ))
                })?;
            let shift = e.condensed.begin_s - e.source.begin_s;
            Ok(Annotation {
                source_id: condensed_id.to_string(),
                interval: TimeInterval {
                    begin_s: a.interval.begin_s + shift,
                    end_s: a.interval.end_s + shift,
                },
                ..a.clone()
            })
        })
        .collect()
}
