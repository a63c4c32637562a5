use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::audio_io::{Annotation, CorpusManifest, TimeInterval};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split `{other}`"))),
        }
    }
}

/// Duration bookkeeping for one stratum (one enclosure).
#[derive(Debug, Clone, PartialEq)]
pub struct StratumReport {
    pub name: String,
    pub groups: usize,
    /// Annotated seconds in train, valid and test.
    pub durations: [f64; 3],
}

impl StratumReport {
    /// Achieved shares of annotated duration per split.
    pub fn achieved_ratio(&self) -> [f64; 3] {
        let total: f64 = self.durations.iter().sum();
        self.durations.map(|d| d / total)
    }
}

/// Split assignment, parallel to the chunk list it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub assignment: Vec<Split>,
    pub strata: Vec<StratumReport>,
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let next = self.0[i];
            self.0[i] = r;
            i = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Index of the boundary in `lo..=hi` whose cumulative value is nearest `target`.
fn nearest_boundary(cum: &[f64], lo: usize, hi: usize, target: f64) -> usize {
    (lo..=hi)
        .min_by(|&a, &b| (cum[a] - target).abs().total_cmp(&(cum[b] - target).abs()))
        .expect("non-empty range")
}

/// Assigns chunks to train/valid/test in chronological order per enclosure.
///
/// Recordings that are paired, or whose annotated spans overlap in absolute
/// time, form one session group and always share a split. Groups are ordered
/// by time and cut at the group boundaries closest to the cumulative-duration
/// quantiles implied by `ratios`.
pub fn chronological_split(chunks: &[Annotation], manifest: &CorpusManifest, ratios: [f64; 3]) -> Result<SplitSpec> {
    if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
    }
    let rsum: f64 = ratios.iter().sum();
    let (q1, q2) = (ratios[0] / rsum, (ratios[0] + ratios[1]) / rsum);

    // absolute extent of the annotated material on each recording
    let mut ids: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut extent: Vec<(f64, f64, f64)> = Vec::new(); // begin, end, annotated seconds
    let mut chunk_rec = Vec::with_capacity(chunks.len());
    for a in chunks {
        let rec = manifest.recording(&a.source_id).ok_or_else(|| {
            Error::Protocol(format!("no start timestamp for `{}`: recording not in manifest", a.source_id))
        })?;
        let i = *index.entry(rec.source_id.as_str()).or_insert_with(|| {
            ids.push(rec.source_id.as_str());
            extent.push((f64::INFINITY, f64::NEG_INFINITY, 0.0));
            ids.len() - 1
        });
        let e = &mut extent[i];
        e.0 = e.0.min(rec.start_s + a.interval.begin_s);
        e.1 = e.1.max(rec.start_s + a.interval.end_s);
        e.2 += a.duration();
        chunk_rec.push(i);
    }
    let n = ids.len();
    let enclosure = |i: usize| manifest.recording(ids[i]).expect("resolved").enclosure.as_str();

    let mut sets = DisjointSets::new(n);
    for group in &manifest.pairing {
        let members: Vec<usize> = group.iter().filter_map(|id| index.get(id.as_str()).copied()).collect();
        for w in members.windows(2) {
            if enclosure(w[0]) != enclosure(w[1]) {
                return Err(Error::Protocol(format!(
                    "paired recordings `{}` and `{}` belong to different enclosures",
                    ids[w[0]], ids[w[1]]
                )));
            }
            sets.union(w[0], w[1]);
        }
    }
    // merge temporally overlapping recordings of one enclosure
    let mut by_enclosure: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        by_enclosure.entry(enclosure(i)).or_default().push(i);
    }
    for members in by_enclosure.values() {
        let mut order = members.clone();
        order.sort_by(|&a, &b| extent[a].0.total_cmp(&extent[b].0));
        // extents of groups can grow through pairing, so sweep until stable
        loop {
            let mut changed = false;
            let mut spans: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for &i in &order {
                let r = sets.find(i);
                let s = spans.entry(r).or_insert((f64::INFINITY, f64::NEG_INFINITY));
                s.0 = s.0.min(extent[i].0);
                s.1 = s.1.max(extent[i].1);
            }
            let mut sorted: Vec<(usize, (f64, f64))> = spans.into_iter().collect();
            sorted.sort_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
            for w in sorted.windows(2) {
                if w[1].1 .0 < w[0].1 .1 {
                    sets.union(w[0].0, w[1].0);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    let mut rec_split = vec![Split::Train; n];
    let mut strata = Vec::new();
    for (name, members) in &by_enclosure {
        let mut groups: BTreeMap<usize, (f64, f64, Vec<usize>)> = BTreeMap::new();
        for &i in members {
            let g = groups.entry(sets.find(i)).or_insert((f64::INFINITY, 0.0, Vec::new()));
            g.0 = g.0.min(extent[i].0);
            g.1 += extent[i].2;
            g.2.push(i);
        }
        let mut groups: Vec<(f64, f64, Vec<usize>)> = groups.into_values().collect();
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        let count = groups.len();
        if count < 3 {
            return Err(Error::Precondition(format!(
                "enclosure `{name}` has {count} session group(s); a three-way split needs at least 3"
            )));
        }
        let mut cum = vec![0.0];
        for g in &groups {
            cum.push(cum.last().unwrap() + g.1);
        }
        let total = cum[count];
        let b1 = nearest_boundary(&cum, 1, count - 2, q1 * total);
        let b2 = nearest_boundary(&cum, b1 + 1, count - 1, q2 * total);
        let mut durations = [0.0; 3];
        for (k, g) in groups.iter().enumerate() {
            let split = if k < b1 {
                Split::Train
            } else if k < b2 {
                Split::Valid
            } else {
                Split::Test
            };
            durations[split as usize] += g.1;
            for &i in &g.2 {
                rec_split[i] = split;
            }
        }
        let report = StratumReport {
            name: name.to_string(),
            groups: count,
            durations,
        };
        let r = report.achieved_ratio();
        log::info!(
            "split `{name}`: {count} session groups, achieved {:.3}/{:.3}/{:.3}",
            r[0],
            r[1],
            r[2]
        );
        strata.push(report);
    }
    Ok(SplitSpec {
        assignment: chunk_rec.iter().map(|&i| rec_split[i]).collect(),
        strata,
    })
}

/// Writes `source_id, begin_s, end_s, label, split` rows.
pub fn write_split(path: &Path, chunks: &[Annotation], spec: &SplitSpec) -> Result<()> {
    if chunks.len() != spec.assignment.len() {
        return Err(Error::Shape(format!(
            "{} chunks vs {} assignments",
            chunks.len(),
            spec.assignment.len()
        )));
    }
    fsutil::write_atomic(path, |w| {
        let io = |e| Error::io(path, e);
        writeln!(w, "source_id\tbegin_s\tend_s\tlabel\tsplit").map_err(io)?;
        for (a, s) in chunks.iter().zip(&spec.assignment) {
            writeln!(w, "{}\t{}\t{}\t{}\t{s}", a.source_id, a.interval.begin_s, a.interval.end_s, a.label).map_err(io)?;
        }
        Ok(())
    })
}

pub fn read_split(path: &Path) -> Result<Vec<(Annotation, Split)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if headers.iter().collect::<Vec<_>>() != ["source_id", "begin_s", "end_s", "label", "split"] {
        return Err(Error::Schema(format!(
            "{}: expected columns source_id, begin_s, end_s, label, split",
            path.display()
        )));
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            let wrap = |m: String| Error::Row { row, message: m };
            let rec = rec.map_err(|e| wrap(e.to_string()))?;
            let t = |k: usize| rec[k].parse::<f64>().map_err(|e| wrap(format!("bad time `{}`: {e}", &rec[k])));
            let interval = TimeInterval::new(t(1)?, t(2)?).map_err(|e| wrap(e.to_string()))?;
            let split = rec[4].parse().map_err(|e: Error| wrap(e.to_string()))?;
            Ok((Annotation::new(&rec[0], interval, &rec[3]), split))
        })
        .collect()
}
