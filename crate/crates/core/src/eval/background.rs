use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{Annotation, CorpusManifest, TimeInterval, BACKGROUND_LABEL};
use crate::error::{Error, Result};

/// Placement attempts per background chunk before giving up.
pub const MAX_TRIES: usize = 10_000;

/// Draws one unannotated chunk of identical duration for every annotated chunk.
///
/// Chunks for a species come from that species' recordings (its enclosure),
/// avoid every annotation in the corpus and each other, and are placed
/// uniformly over the recordings' total duration by rejection sampling.
/// Species are processed in name order, so the result depends only on `seed`.
pub fn sample_background(
    annotations: &[Annotation],
    manifest: &CorpusManifest,
    durations: &HashMap<String, f64>,
    seed: u64,
) -> Result<Vec<Annotation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: HashMap<&str, Vec<TimeInterval>> = HashMap::new();
    for a in annotations {
        taken.entry(a.source_id.as_str()).or_default().push(a.interval);
    }
    let mut by_species: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for a in annotations.iter().filter(|a| a.label != BACKGROUND_LABEL) {
        by_species.entry(a.label.as_str()).or_default().push(a);
    }

    let mut out = Vec::new();
    for (species, chunks) in by_species {
        let pool: Vec<(&str, f64)> = manifest
            .recordings_of(species)
            .filter_map(|r| durations.get(&r.source_id).map(|&d| (r.source_id.as_str(), d)))
            .collect();
        let total: f64 = pool.iter().map(|p| p.1).sum();
        let mut missing = 0usize;
        let mut missing_s = 0.0;
        for a in chunks {
            let d = a.duration();
            let mut placed = None;
            if total > 0.0 {
                for _ in 0..MAX_TRIES {
                    // uniform over the concatenated recordings
                    let mut u = rng.random_range(0.0..total);
                    let (id, len) = *pool
                        .iter()
                        .find(|(_, len)| {
                            let hit = u < *len;
                            if !hit {
                                u -= len;
                            }
                            hit
                        })
                        .unwrap_or(pool.last().expect("non-empty pool"));
                    if len < d {
                        continue;
                    }
                    let begin = rng.random_range(0.0..=len - d);
                    let candidate = TimeInterval {
                        begin_s: begin,
                        end_s: begin + d,
                    };
                    let clash = taken
                        .get(id)
                        .is_some_and(|v| v.iter().any(|t| t.overlaps(&candidate)));
                    if !clash {
                        placed = Some((id, candidate));
                        break;
                    }
                }
            }
            match placed {
                Some((id, iv)) => {
                    taken.entry(id).or_default().push(iv);
                    out.push(Annotation {
                        source_id: id.to_string(),
                        interval: iv,
                        label: BACKGROUND_LABEL.to_string(),
                        low_freq_hz: None,
                        high_freq_hz: None,
                    });
                }
                None => {
                    missing += 1;
                    missing_s += d;
                }
            }
        }
        if missing > 0 {
            return Err(Error::Exhausted {
                label: species.to_string(),
                missing_chunks: missing,
                missing_s,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::Recording;
    use std::path::PathBuf;

    fn corpus() -> (CorpusManifest, HashMap<String, f64>, Vec<Annotation>) {
        let recs: Vec<Recording> = ["m1", "m2", "g1"]
            .iter()
            .enumerate()
            .map(|(i, id)| Recording {
                source_id: id.to_string(),
                path: PathBuf::from(format!("{id}.wav")),
                start: String::new(),
                start_s: i as f64,
                recorder: "r".into(),
                enclosure: if id.starts_with('m') { "mandrill" } else { "guenon" }.into(),
            })
            .collect();
        let m = CorpusManifest::new(recs, vec!["guenon".into(), "mandrill".into()], vec![]).unwrap();
        let durations: HashMap<String, f64> = [("m1", 60.0), ("m2", 40.0), ("g1", 30.0)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let mut anns = Vec::new();
        for k in 0..8 {
            let b = 5.0 * k as f64 + 0.3;
            anns.push(Annotation::new("m1", TimeInterval::new(b, b + 0.4 + 0.1 * k as f64).unwrap(), "mandrill"));
        }
        for k in 0..5 {
            let b = 4.0 * k as f64 + 1.0;
            anns.push(Annotation::new("g1", TimeInterval::new(b, b + 1.25).unwrap(), "guenon"));
        }
        (m, durations, anns)
    }

    fn sorted_durations<'a>(it: impl Iterator<Item = &'a Annotation>) -> Vec<f64> {
        let mut v: Vec<f64> = it.map(|a| a.duration()).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn durations_match_per_species_and_nothing_overlaps() {
        let (m, durations, anns) = corpus();
        let bg = sample_background(&anns, &m, &durations, 7).unwrap();
        assert_eq!(bg.len(), anns.len());
        for species in ["mandrill", "guenon"] {
            let recs: Vec<&str> = m.recordings_of(species).map(|r| r.source_id.as_str()).collect();
            let want = sorted_durations(anns.iter().filter(|a| a.label == species));
            let got = sorted_durations(bg.iter().filter(|b| recs.contains(&b.source_id.as_str())));
            assert_eq!(want.len(), got.len());
            for (w, g) in want.iter().zip(&got) {
                assert!((w - g).abs() < 1e-9);
            }
        }
        // brute force: no background chunk touches an annotation or another chunk
        for (i, b) in bg.iter().enumerate() {
            assert_eq!(b.label, BACKGROUND_LABEL);
            assert!(b.interval.begin_s >= 0.0 && b.interval.end_s <= durations[&b.source_id]);
            for a in anns.iter().chain(bg.iter().skip(i + 1)) {
                let overlap = a.source_id == b.source_id
                    && a.interval.begin_s < b.interval.end_s
                    && b.interval.begin_s < a.interval.end_s;
                assert!(!overlap, "{b:?} overlaps {a:?}");
            }
        }
    }

    #[test]
    fn no_annotations_no_background() {
        let (m, durations, _) = corpus();
        assert!(sample_background(&[], &m, &durations, 1).unwrap().is_empty());
    }

    #[test]
    fn deterministic_per_seed_and_varies_across_seeds() {
        let (m, durations, anns) = corpus();
        let a = sample_background(&anns, &m, &durations, 42).unwrap();
        assert_eq!(a, sample_background(&anns, &m, &durations, 42).unwrap());
        let differs = (0..10).any(|s| sample_background(&anns, &m, &durations, 100 + s).unwrap() != a);
        assert!(differs);
    }

    #[test]
    fn exhaustion_reports_shortfall() {
        let (m, mut durations, mut anns) = corpus();
        durations.insert("g1".into(), 21.0);
        anns.push(Annotation::new("g1", TimeInterval::new(19.5, 21.0).unwrap(), "guenon"));
        anns.push(Annotation::new("g1", TimeInterval::new(0.0, 1.0).unwrap(), "guenon"));
        match sample_background(&anns, &m, &durations, 3) {
            Err(Error::Exhausted { label, missing_chunks, missing_s }) => {
                assert_eq!(label, "guenon");
                assert!(missing_chunks >= 1 && missing_s > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
