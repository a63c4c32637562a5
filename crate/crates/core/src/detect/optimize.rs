use std::collections::HashMap;

use rayon::prelude::*;

use super::{build_global_profile, events_from_tracks, frame_tracks, DetectorConfig, FrameTracks, RecordingEvents};
use crate::audio_io::{Annotation, AudioClip, TimeInterval};
use crate::error::{Error, Result};

/// Share of seed annotations that must be recalled.
pub const RECALL_TARGET: f64 = 0.95;
/// An annotation counts as recalled when this share of it is covered.
pub const MIN_COVERAGE: f64 = 0.5;
/// Below this many seeds the search result is flagged as unreliable.
pub const MIN_RELIABLE_SEEDS: usize = 20;

const LOUDNESS_STEP_DB: f64 = 2.0;
const DEVIATION_STEP: f64 = 0.02;
const DEVIATION_STEPS: usize = 25;
/// Deviation threshold that can never be exceeded, which switches the change trigger off.
pub const DEVIATION_OFF: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub recall: f64,
    /// Detected duration over total recording duration.
    pub retained_fraction: f64,
    pub target_met: bool,
    pub seed_count: usize,
    pub settings_evaluated: usize,
}

/// Recall of `seeds` and the retained fraction of `total_duration_s` under `events`.
///
/// Seeds on recordings absent from `events` count as missed.
pub fn score_events(events: &[RecordingEvents], seeds: &[Annotation], total_duration_s: f64) -> (f64, f64) {
    let by_source: HashMap<&str, &[TimeInterval]> =
        events.iter().map(|r| (r.source_id.as_str(), r.events.as_slice())).collect();
    let recalled = seeds
        .iter()
        .filter(|a| {
            let covered: f64 = by_source
                .get(a.source_id.as_str())
                .map(|evs| evs.iter().map(|e| e.overlap_len(&a.interval)).sum())
                .unwrap_or(0.0);
            covered >= MIN_COVERAGE * a.duration()
        })
        .count();
    let retained: f64 = events.iter().flat_map(|r| &r.events).map(|e| e.duration()).sum();
    let recall = if seeds.is_empty() { 0.0 } else { recalled as f64 / seeds.len() as f64 };
    (recall, retained / total_duration_s)
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Loudness thresholds in 2 dB steps from P10 to P99.9 of the pooled envelope.
pub(crate) fn loudness_grid(tracks: &[FrameTracks]) -> Vec<f64> {
    let mut pooled: Vec<f64> = tracks.iter().flat_map(|t| t.envelope.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    let (lo, hi) = (percentile(&pooled, 10.0), percentile(&pooled, 99.9));
    let steps = ((hi - lo) / LOUDNESS_STEP_DB).floor() as usize;
    (0..=steps).map(|i| lo + i as f64 * LOUDNESS_STEP_DB).collect()
}

/// Deviation thresholds 0, 0.02, ..., 0.5, then [`DEVIATION_OFF`].
pub(crate) fn deviation_grid() -> Vec<f64> {
    (0..=DEVIATION_STEPS)
        .map(|i| i as f64 * DEVIATION_STEP)
        .chain(std::iter::once(DEVIATION_OFF))
        .collect()
}

/// Grid search over both thresholds against seed annotations.
///
/// Among settings recalling more than 95% of the seeds, the one retaining the
/// least audio wins (first in grid order on ties). When none qualifies the
/// best-recall setting is returned with `target_met = false`.
pub fn optimize_thresholds(
    recordings: &[AudioClip],
    seeds: &[Annotation],
    template: &DetectorConfig,
) -> Result<(DetectorConfig, OptimizationReport)> {
    if let Some(a) = seeds.iter().find(|a| !recordings.iter().any(|c| c.source_id == a.source_id)) {
        return Err(Error::Reference(format!(
            "seed annotation on `{}` has no matching recording",
            a.source_id
        )));
    }
    if seeds.len() < MIN_RELIABLE_SEEDS {
        log::warn!(
            "only {} seed annotations (< {MIN_RELIABLE_SEEDS}); threshold optimization is unreliable",
            seeds.len()
        );
    }
    let profile = build_global_profile(recordings, template)?;
    let tracks: Vec<FrameTracks> = recordings
        .par_iter()
        .map(|clip| frame_tracks(clip, &profile, template))
        .collect::<Result<_>>()?;
    let total: f64 = recordings.iter().map(|c| c.duration_s()).sum();

    let settings: Vec<(f64, f64)> = loudness_grid(&tracks)
        .into_iter()
        .flat_map(|l| deviation_grid().into_iter().map(move |d| (l, d)))
        .collect();
    let scored: Vec<(f64, f64)> = settings
        .par_iter()
        .map(|&(l, d)| {
            let events: Vec<RecordingEvents> = tracks
                .iter()
                .map(|t| RecordingEvents {
                    source_id: t.source_id.clone(),
                    events: events_from_tracks(t, l, d, template),
                })
                .collect();
            score_events(&events, seeds, total)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, &(recall, retained)) in scored.iter().enumerate() {
        if recall > RECALL_TARGET && best.is_none_or(|b| retained < scored[b].1) {
            best = Some(i);
        }
    }
    let target_met = best.is_some();
    let chosen = best.unwrap_or_else(|| {
        let mut b = 0;
        for (i, s) in scored.iter().enumerate() {
            if s.0 > scored[b].0 || (s.0 == scored[b].0 && s.1 < scored[b].1) {
                b = i;
            }
        }
        b
    });
    let (loudness, deviation) = settings[chosen];
    let (recall, retained_fraction) = scored[chosen];
    if !target_met {
        log::warn!("no threshold setting recalls more than {RECALL_TARGET} of the seeds; best recall {recall:.3}");
    }
    let config = DetectorConfig {
        loudness_db_threshold: loudness,
        deviation_threshold: deviation,
        ..template.clone()
    };
    Ok((
        config,
        OptimizationReport {
            recall,
            retained_fraction,
            target_met,
            seed_count: seeds.len(),
            settings_evaluated: settings.len(),
        },
    ))
}
