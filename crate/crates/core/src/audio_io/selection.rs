//! Raven-style selection tables: tab-separated, UTF-8, header row, `.` decimals.

use std::collections::HashMap;
use std::path::Path;

use super::{Annotation, CorpusManifest, TimeInterval};
use crate::error::{Error, Result};
use crate::fsutil;

const COL_SELECTION: &str = "Selection";
const COL_BEGIN: &str = "Begin Time (s)";
const COL_END: &str = "End Time (s)";
const COL_LOW: &str = "Low Freq (Hz)";
const COL_HIGH: &str = "High Freq (Hz)";
const COL_BEGIN_FILE: &str = "Begin File";

/// Column naming for selection tables.
#[derive(Debug, Clone)]
pub struct SelectionFormat {
    pub label_column: String,
    pub source_column: String,
    /// Recording used for rows when the table has no source column.
    pub default_source: Option<String>,
}

impl Default for SelectionFormat {
    fn default() -> Self {
        Self {
            label_column: "Species".into(),
            source_column: "Source".into(),
            default_source: None,
        }
    }
}

fn parse_f64(row: usize, column: &str, cell: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Row {
        row,
        message: format!("`{column}` value `{cell}` is not a number"),
    })
}

fn parse_opt_f64(row: usize, column: &str, cell: Option<&str>) -> Result<Option<f64>> {
    match cell.map(str::trim) {
        None | Some("") => Ok(None),
        Some(c) => parse_f64(row, column, c).map(Some),
    }
}

/// Parses a selection table into annotations, in file order.
///
/// Row numbers in errors count data rows from 1. The source recording is taken
/// from the source column, else from `Begin File` (extension stripped), else
/// from `format.default_source`, else from the table's file stem.
pub fn read_annotations(
    path: &Path,
    manifest: &CorpusManifest,
    format: &SelectionFormat,
) -> Result<Vec<Annotation>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();

    let required = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
    };
    required(COL_SELECTION)?;
    let begin_col = required(COL_BEGIN)?;
    let end_col = required(COL_END)?;
    let label_col = required(&format.label_column)?;
    let low_col = index.get(COL_LOW).copied();
    let high_col = index.get(COL_HIGH).copied();
    let source_col = index.get(format.source_column.as_str()).copied();
    let begin_file_col = index.get(COL_BEGIN_FILE).copied();
    let fallback_source = format.default_source.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        let cell = |col: usize| record.get(col).unwrap_or("");

        let begin = parse_f64(row, COL_BEGIN, cell(begin_col))?;
        let end = parse_f64(row, COL_END, cell(end_col))?;
        if !(begin >= 0.0 && end > begin && end.is_finite()) {
            return Err(Error::Row {
                row,
                message: format!("interval [{begin}, {end}) is empty or negative"),
            });
        }
        let label = cell(label_col).trim().to_string();
        if !manifest.accepts_label(&label) {
            return Err(Error::Row {
                row,
                message: format!("label `{label}` not in the manifest label set"),
            });
        }
        let source_id = if let Some(c) = source_col.filter(|&c| !cell(c).trim().is_empty()) {
            cell(c).trim().to_string()
        } else if let Some(c) = begin_file_col.filter(|&c| !cell(c).trim().is_empty()) {
            Path::new(cell(c).trim())
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        } else {
            fallback_source.clone()
        };
        if manifest.recording(&source_id).is_none() {
            return Err(Error::Reference(format!(
                "{} row {row}: recording `{source_id}` not in manifest",
                path.display()
            )));
        }
        out.push(Annotation {
            source_id,
            interval: TimeInterval { begin_s: begin, end_s: end },
            label,
            low_freq_hz: parse_opt_f64(row, COL_LOW, low_col.map(cell))?,
            high_freq_hz: parse_opt_f64(row, COL_HIGH, high_col.map(cell))?,
        });
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes annotations as a selection table in the same dialect `read_annotations` accepts.
pub fn write_annotations(path: &Path, annotations: &[Annotation], format: &SelectionFormat) -> Result<()> {
    fsutil::write_atomic(path, |w| {
        let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
        let header = [
            COL_SELECTION,
            format.source_column.as_str(),
            COL_BEGIN,
            COL_END,
            COL_LOW,
            COL_HIGH,
            format.label_column.as_str(),
        ];
        wtr.write_record(header).map_err(|e| csv_err(path, e))?;
        for (i, a) in annotations.iter().enumerate() {
            wtr.write_record([
                (i + 1).to_string(),
                a.source_id.clone(),
                a.interval.begin_s.to_string(),
                a.interval.end_s.to_string(),
                fmt_opt(a.low_freq_hz),
                fmt_opt(a.high_freq_hz),
                a.label.clone(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::Recording;
    use proptest::prelude::*;

    fn manifest() -> CorpusManifest {
        let rec = |id: &str| Recording {
            source_id: id.into(),
            path: format!("{id}.wav").into(),
            start: "2020-01-01T00:00:00".into(),
            start_s: 0.0,
            recorder: "r".into(),
            enclosure: "chimpanzee".into(),
        };
        CorpusManifest::new(
            vec![rec("rec1"), rec("rec2")],
            vec!["chimpanzee".into(), "mandrill".into()],
            vec![],
        )
        .unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_rows_in_order_with_extra_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.txt",
            "Selection\tView\tBegin Time (s)\tEnd Time (s)\tSource\tSpecies\tNotes\n\
             1\tSpectrogram 1\t0.5\t1.5\trec1\tchimpanzee\tloud\n\
             2\tSpectrogram 1\t2.0\t2.25\trec2\tmandrill\t\n\
             3\tSpectrogram 1\t3\t4\trec1\tchimpanzee\tx\n",
        );
        let anns = read_annotations(&p, &manifest(), &SelectionFormat::default()).unwrap();
        assert_eq!(anns.len(), 3);
        assert_eq!(anns[0].interval, TimeInterval { begin_s: 0.5, end_s: 1.5 });
        assert_eq!(anns[1].source_id, "rec2");
        assert_eq!(anns[1].label, "mandrill");
        assert_eq!(anns[2].interval.begin_s, 3.0);
        assert_eq!(anns[0].low_freq_hz, None);
    }

    #[test]
    fn zero_duration_row_cites_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "rec1.txt",
            "Selection\tBegin Time (s)\tEnd Time (s)\tSpecies\n1\t1\t2\tchimpanzee\n2\t5.0\t5.0\tchimpanzee\n",
        );
        match read_annotations(&p, &manifest(), &SelectionFormat::default()) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "rec1.txt", "Selection\tBegin Time (s)\tSpecies\n1\t1\tchimpanzee\n");
        assert!(matches!(
            read_annotations(&p, &manifest(), &SelectionFormat::default()),
            Err(Error::Schema(m)) if m.contains("End Time (s)")
        ));
    }

    #[test]
    fn unknown_source_is_reference_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.txt",
            "Selection\tBegin Time (s)\tEnd Time (s)\tSource\tSpecies\n1\t1\t2\trec9\tchimpanzee\n",
        );
        assert!(matches!(
            read_annotations(&p, &manifest(), &SelectionFormat::default()),
            Err(Error::Reference(_))
        ));
    }

    #[test]
    fn source_falls_back_to_begin_file_then_stem() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "rec1.Table.1.selections.txt",
            "Selection\tBegin File\tBegin Time (s)\tEnd Time (s)\tCall\n1\trec2.wav\t1\t2\tmandrill\n2\t\t3\t4\tmandrill\n",
        );
        let fmt = SelectionFormat {
            label_column: "Call".into(),
            default_source: Some("rec1".into()),
            ..Default::default()
        };
        let anns = read_annotations(&p, &manifest(), &fmt).unwrap();
        assert_eq!(anns[0].source_id, "rec2");
        assert_eq!(anns[1].source_id, "rec1");
    }

    #[test]
    fn unknown_label_rejected_background_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "rec1.txt",
            "Selection\tBegin Time (s)\tEnd Time (s)\tSpecies\n1\t1\t2\tbackground\n2\t3\t4\tgorilla\n",
        );
        assert!(matches!(
            read_annotations(&p, &manifest(), &SelectionFormat::default()),
            Err(Error::Row { row: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn written_tables_read_back_in_order(
            rows in prop::collection::vec((0.0f64..100.0, 0.001f64..10.0, any::<bool>(), any::<bool>()), 0..40)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let anns: Vec<Annotation> = rows
                .iter()
                .map(|&(b, d, second, chimp)| {
                    let mut a = Annotation::new(
                        if second { "rec2" } else { "rec1" },
                        TimeInterval { begin_s: b, end_s: b + d },
                        if chimp { "chimpanzee" } else { "mandrill" },
                    );
                    if chimp {
                        a.low_freq_hz = Some(100.5);
                        a.high_freq_hz = Some(2000.0);
                    }
                    a
                })
                .collect();
            let p = dir.path().join("out.txt");
            write_annotations(&p, &anns, &SelectionFormat::default()).unwrap();
            let back = read_annotations(&p, &manifest(), &SelectionFormat::default()).unwrap();
            prop_assert_eq!(back, anns);
        }
    }
}
