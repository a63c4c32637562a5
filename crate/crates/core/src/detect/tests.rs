use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::optimize::{deviation_grid, loudness_grid};
use super::*;
use crate::audio_io::Annotation;

const RATE: u32 = 16000;

fn noise(secs: f64, rms: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, rms).unwrap();
    (0..(secs * RATE as f64) as usize).map(|_| n.sample(&mut rng)).collect()
}

/// Adds a sine of mean-square power `power` on `[begin, end)` seconds.
fn add_tone(x: &mut [f64], freq: f64, power: f64, begin: f64, end: f64) {
    let amp = (2.0 * power).sqrt();
    let (b, e) = ((begin * RATE as f64) as usize, (end * RATE as f64) as usize);
    for (i, v) in x[b..e].iter_mut().enumerate() {
        *v += amp * (2.0 * PI * freq * i as f64 / RATE as f64).sin();
    }
}

fn clip(x: Vec<f64>, id: &str) -> AudioClip {
    AudioClip::new(x, RATE, id).unwrap()
}

fn db(p: f64) -> f64 {
    10.0 * p.log10()
}

fn loudness_only(threshold: f64) -> DetectorConfig {
    DetectorConfig {
        loudness_db_threshold: threshold,
        deviation_threshold: 1.0,
        ..DetectorConfig::default()
    }
}

#[test]
fn silent_frame_sits_at_the_floor() {
    let cfg = DetectorConfig::default();
    let env = band_power_envelope(&clip(vec![0.0; 4000], "s"), &cfg).unwrap();
    assert!(env.iter().all(|&v| v == 10.0 * cfg.eps.log10()));
}

#[test]
fn out_of_band_tone_is_at_least_20_db_lower() {
    let cfg = DetectorConfig::default();
    let mut inside = vec![0.0; 8000];
    add_tone(&mut inside, 800.0, 0.01, 0.0, 0.5);
    let mut outside = vec![0.0; 8000];
    add_tone(&mut outside, 5000.0, 0.01, 0.0, 0.5);
    let a = band_power_envelope(&clip(inside, "in"), &cfg).unwrap();
    let b = band_power_envelope(&clip(outside, "out"), &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x - y >= 20.0, "{x} vs {y}");
    }
    // in-band power is the tone's mean square
    assert!((a[10] - db(0.01)).abs() < 0.2, "{}", a[10]);
}

#[test]
fn doubling_amplitude_adds_6_db() {
    let cfg = DetectorConfig::default();
    let x = noise(1.0, 0.1, 5);
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let a = band_power_envelope(&clip(x, "a"), &cfg).unwrap();
    let b = band_power_envelope(&clip(y, "b"), &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((y - x - 6.02).abs() <= 0.1);
    }
}

#[test]
fn empty_band_is_a_config_error() {
    let cfg = DetectorConfig {
        band_low_hz: 100.0,
        band_high_hz: 101.0,
        ..DetectorConfig::default()
    };
    assert!(matches!(band_power_envelope(&clip(vec![0.0; 4000], "s"), &cfg), Err(Error::Config(_))));
}

#[test]
fn white_noise_profile_is_uniform() {
    let cfg = DetectorConfig::default();
    let p = build_global_profile(&[clip(noise(60.0, 0.1, 9), "n")], &cfg).unwrap();
    let n = p.cdf.len();
    let ks = p
        .cdf
        .iter()
        .enumerate()
        .map(|(k, c)| (c - (k + 1) as f64 / n as f64).abs())
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "KS distance {ks}");
    assert_eq!(*p.cdf.last().unwrap(), 1.0);
    assert!(p.cdf.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn profile_ignores_gain_and_covers_only_given_clips() {
    let cfg = DetectorConfig::default();
    let mut x = noise(5.0, 0.05, 2);
    add_tone(&mut x, 600.0, 0.01, 1.0, 2.0);
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let a = build_global_profile(&[clip(x.clone(), "a")], &cfg).unwrap();
    let b = build_global_profile(&[clip(y, "a")], &cfg).unwrap();
    assert_eq!(a.cdf, b.cdf);
    assert_eq!(a.frames, cfg.frame.frame_count(x.len(), RATE));
    let other = build_global_profile(&[clip(noise(5.0, 0.05, 3), "b")], &cfg).unwrap();
    assert_ne!(a.cdf, other.cdf);
}

#[test]
fn profile_is_independent_of_clip_order() {
    let cfg = DetectorConfig::default();
    let (a, b) = (clip(noise(3.0, 0.1, 1), "a"), clip(noise(2.0, 0.3, 2), "b"));
    let p1 = build_global_profile(&[a.clone(), b.clone()], &cfg).unwrap();
    let p2 = build_global_profile(&[b, a], &cfg).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn silence_gives_no_events() {
    let cfg = DetectorConfig::default();
    let c = clip(vec![0.0; 5 * RATE as usize], "s");
    let p = build_global_profile(std::slice::from_ref(&c), &cfg).unwrap();
    assert!(detect_events(&c, &p, &cfg).unwrap().is_empty());
}

#[test]
fn loud_burst_yields_one_event_around_it() {
    // noise bed at -40 dB mean square, 2 s in-band tone at -10 dB
    let mut x = noise(60.0, 0.01, 11);
    add_tone(&mut x, 700.0, 0.1, 30.0, 32.0);
    let c = clip(x, "bed");
    let cfg = loudness_only(-25.0);
    let p = build_global_profile(std::slice::from_ref(&c), &cfg).unwrap();
    let events = detect_events(&c, &p, &cfg).unwrap();
    assert_eq!(events.len(), 1, "{events:?}");
    let tol = cfg.pad_s + 2.0 * cfg.frame.hop_s;
    let ev = events[0];
    assert!(ev.begin_s <= 30.0 && ev.begin_s >= 30.0 - tol, "{ev:?}");
    assert!(ev.end_s >= 32.0 && ev.end_s <= 32.0 + tol, "{ev:?}");
}

#[test]
fn spectral_change_alone_triggers_detection() {
    // same loudness throughout; a narrowband stretch changes only the shape
    let mut x = noise(30.0, 0.05, 12);
    for v in &mut x[(12 * RATE) as usize..(14 * RATE) as usize] {
        *v = 0.0;
    }
    add_tone(&mut x, 900.0, 0.05f64.powi(2) / 4.0, 12.0, 14.0);
    let c = clip(x, "shape");
    let cfg = DetectorConfig {
        loudness_db_threshold: 0.0,
        deviation_threshold: 0.2,
        ..DetectorConfig::default()
    };
    let p = build_global_profile(std::slice::from_ref(&c), &cfg).unwrap();
    let events = detect_events(&c, &p, &cfg).unwrap();
    assert_eq!(events.len(), 1, "{events:?}");
    let reach = cfg.local_window_s / 2.0 + cfg.pad_s + 2.0 * cfg.frame.hop_s;
    assert!(events[0].begin_s <= 12.5 && events[0].begin_s >= 12.0 - reach, "{:?}", events[0]);
    assert!(events[0].end_s >= 13.5 && events[0].end_s <= 14.0 + reach, "{:?}", events[0]);
}

#[test]
fn bursts_closer_than_merge_gap_merge() {
    let mut x = noise(10.0, 0.01, 4);
    add_tone(&mut x, 700.0, 0.1, 3.0, 4.0);
    add_tone(&mut x, 700.0, 0.1, 4.3, 5.0);
    add_tone(&mut x, 700.0, 0.1, 7.0, 8.0);
    let c = clip(x, "m");
    let cfg = DetectorConfig {
        pad_s: 0.0,
        ..loudness_only(-25.0)
    };
    let p = build_global_profile(std::slice::from_ref(&c), &cfg).unwrap();
    let events = detect_events(&c, &p, &cfg).unwrap();
    assert_eq!(events.len(), 2, "{events:?}");
    assert!(events[0].begin_s < 3.05 && events[0].end_s > 4.95);
}

#[test]
fn gain_shifts_envelope_and_preserves_events() {
    let mut x = noise(20.0, 0.02, 21);
    add_tone(&mut x, 500.0, 0.02, 4.0, 5.5);
    add_tone(&mut x, 1500.0, 0.005, 11.0, 11.6);
    let cfg = DetectorConfig {
        loudness_db_threshold: -30.0,
        deviation_threshold: 0.1,
        ..DetectorConfig::default()
    };
    let base = clip(x.clone(), "g");
    let p = build_global_profile(std::slice::from_ref(&base), &cfg).unwrap();
    let reference = detect_events(&base, &p, &cfg).unwrap();
    assert!(!reference.is_empty());
    for gain in [2.0, 0.5, 4.0] {
        let scaled = clip(x.iter().map(|v| gain * v).collect(), "g");
        let offset = 20.0 * f64::log10(gain);
        let ea = band_power_envelope(&base, &cfg).unwrap();
        let eb = band_power_envelope(&scaled, &cfg).unwrap();
        for (a, b) in ea.iter().zip(&eb) {
            assert!((b - a - offset).abs() < 1e-6);
        }
        let ps = build_global_profile(std::slice::from_ref(&scaled), &cfg).unwrap();
        let shifted = DetectorConfig {
            loudness_db_threshold: cfg.loudness_db_threshold + offset,
            ..cfg.clone()
        };
        assert_eq!(detect_events(&scaled, &ps, &shifted).unwrap(), reference, "gain {gain}");
    }
}

fn random_tracks(env: Vec<f64>, dev: Vec<f64>) -> FrameTracks {
    let n = env.len();
    FrameTracks {
        source_id: "t".into(),
        envelope: env,
        deviation: dev,
        hop_s: 0.01,
        frame_len_s: 0.025,
        duration_s: n as f64 * 0.01 + 0.015,
    }
}

fn total(events: &[TimeInterval]) -> f64 {
    events.iter().map(|e| e.duration()).sum()
}

proptest! {
    #[test]
    fn events_are_sorted_disjoint_and_long_enough(
        env in prop::collection::vec(-60.0f64..0.0, 1..400),
        seed in 0u64..1000,
        pad in 0.0f64..0.3,
        gap in 0.0f64..0.6,
        min in 0.0f64..0.4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dev: Vec<f64> = env.iter().map(|_| rng.random_range(0.0..0.5)).collect();
        let cfg = DetectorConfig { pad_s: pad, merge_gap_s: gap, min_event_s: min, ..DetectorConfig::default() };
        let ev = events_from_tracks(&random_tracks(env, dev), -30.0, 0.3, &cfg);
        for e in &ev {
            prop_assert!(e.duration() >= min && e.begin_s >= 0.0);
        }
        for w in ev.windows(2) {
            prop_assert!(w[0].end_s <= w[1].begin_s);
        }
    }

    #[test]
    fn raising_loudness_never_adds_duration(
        env in prop::collection::vec(-60.0f64..0.0, 1..400),
        lo in -60.0f64..0.0,
        step in 0.0f64..20.0,
        min in 0.0f64..0.4,
    ) {
        let dev = vec![0.0; env.len()];
        let cfg = DetectorConfig { min_event_s: min, ..DetectorConfig::default() };
        let t = random_tracks(env, dev);
        let a = total(&events_from_tracks(&t, lo, 0.3, &cfg));
        let b = total(&events_from_tracks(&t, lo + step, 0.3, &cfg));
        prop_assert!(b <= a + 1e-12, "{} > {}", b, a);
    }
}

/// Noise recordings with planted calls; returns clips and ground-truth annotations.
fn planted_corpus(recordings: usize, calls: usize, seed: u64) -> (Vec<AudioClip>, Vec<Annotation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips = Vec::new();
    let mut anns = Vec::new();
    for r in 0..recordings {
        let id = format!("rec{r}");
        let mut x = noise(60.0, 0.01, seed * 100 + r as u64);
        let slot = 60.0 / calls as f64;
        for k in 0..calls {
            let dur = rng.random_range(0.4..1.0);
            let begin = k as f64 * slot + rng.random_range(0.5..slot - dur - 0.5);
            let freq = rng.random_range(300.0..1800.0);
            let snr_db: f64 = rng.random_range(5.0..20.0);
            // noise in-band power is a quarter of its total at 16 kHz
            add_tone(&mut x, freq, 1e-4 / 4.0 * 10f64.powf(snr_db / 10.0), begin, begin + dur);
            anns.push(Annotation::new(&id, TimeInterval::new(begin, begin + dur).unwrap(), "call"));
        }
        clips.push(clip(x, &id));
    }
    (clips, anns)
}

#[test]
fn optimizer_recovers_planted_calls() {
    let (clips, anns) = planted_corpus(5, 10, 3);
    let (cfg, report) = optimize_thresholds(&clips, &anns, &DetectorConfig::default()).unwrap();
    assert!(report.target_met);
    assert!(report.recall > 0.95, "{report:?}");
    assert!(report.retained_fraction < 0.3, "{report:?}");

    // re-score the chosen configuration from scratch
    let profile = build_global_profile(&clips, &cfg).unwrap();
    let mut recalled = 0;
    let mut kept = 0.0;
    for c in &clips {
        let events = detect_events(c, &profile, &cfg).unwrap();
        kept += events.iter().map(|e| e.end_s - e.begin_s).sum::<f64>();
        for a in anns.iter().filter(|a| a.source_id == c.source_id) {
            let mut covered = 0.0;
            for e in &events {
                let lo = e.begin_s.max(a.interval.begin_s);
                let hi = e.end_s.min(a.interval.end_s);
                if hi > lo {
                    covered += hi - lo;
                }
            }
            if covered >= 0.5 * (a.interval.end_s - a.interval.begin_s) {
                recalled += 1;
            }
        }
    }
    assert_eq!(recalled as f64 / anns.len() as f64, report.recall);
    let total: f64 = clips.iter().map(|c| c.duration_s()).sum();
    assert!((kept / total - report.retained_fraction).abs() < 1e-12);
}

#[test]
fn seeds_from_a_grid_point_are_fully_recalled() {
    let (clips, _) = planted_corpus(2, 12, 8);
    let template = DetectorConfig::default();
    let profile = build_global_profile(&clips, &template).unwrap();
    let tracks: Vec<FrameTracks> = clips.iter().map(|c| frame_tracks(c, &profile, &template).unwrap()).collect();
    let grid = loudness_grid(&tracks);
    let (l, d) = (grid[grid.len() / 2], *deviation_grid().last().unwrap());
    let point = DetectorConfig {
        loudness_db_threshold: l,
        deviation_threshold: d,
        ..template.clone()
    };
    let mut seeds = Vec::new();
    let mut retained_at_point = 0.0;
    for c in &clips {
        for e in detect_events(c, &profile, &point).unwrap() {
            retained_at_point += e.duration();
            seeds.push(Annotation::new(&c.source_id, e, "call"));
        }
    }
    assert!(seeds.len() >= 5);
    let (chosen, report) = optimize_thresholds(&clips, &seeds, &template).unwrap();
    assert!(report.target_met);
    let total: f64 = clips.iter().map(|c| c.duration_s()).sum();
    assert!(report.retained_fraction <= retained_at_point / total + 1e-12);
    if chosen == point {
        assert_eq!(report.recall, 1.0);
    } else {
        assert!(report.recall > 0.95);
    }
}

#[test]
fn silent_corpus_misses_target() {
    let clips = vec![clip(vec![0.0; 10 * RATE as usize], "quiet")];
    let seeds: Vec<Annotation> = (0..5)
        .map(|i| Annotation::new("quiet", TimeInterval::new(i as f64, i as f64 + 0.5).unwrap(), "call"))
        .collect();
    let (_, report) = optimize_thresholds(&clips, &seeds, &DetectorConfig::default()).unwrap();
    assert!(!report.target_met);
    assert_eq!(report.recall, 0.0);
}

#[test]
fn seed_on_unknown_recording_is_rejected() {
    let clips = vec![clip(vec![0.0; RATE as usize], "a")];
    let seeds = vec![Annotation::new("b", TimeInterval::new(0.0, 0.5).unwrap(), "call")];
    assert!(matches!(
        optimize_thresholds(&clips, &seeds, &DetectorConfig::default()),
        Err(Error::Reference(_))
    ));
}

fn ramp_clip(secs: f64, rate: u32, id: &str) -> AudioClip {
    let n = (secs * rate as f64) as usize;
    AudioClip::new((0..n).map(|i| (i as f64 * 1e-4).sin()).collect(), rate, id).unwrap()
}

#[test]
fn single_event_condenses_and_maps() {
    let c = ramp_clip(10.0, 8000, "r");
    let ev = [TimeInterval::new(2.0, 3.0).unwrap()];
    let (out, idx) = condense(&[(&c, &ev[..])], "condensed").unwrap();
    assert_eq!(out.duration_s(), 1.0);
    let (id, t) = idx.map_to_source(0.4).unwrap();
    assert_eq!(id, "r");
    assert!((t - 2.4).abs() < 1e-12);
    assert_eq!(out.samples(), &c.samples()[16000..24000]);
}

#[test]
fn condensed_bookkeeping_totals() {
    let rate = 1000;
    let c = ramp_clip(600.0, rate, "long");
    let events: Vec<TimeInterval> = (0..37).map(|k| TimeInterval::new(k as f64 * 15.0, k as f64 * 15.0 + 1.0).unwrap()).collect();
    let (out, idx) = condense(&[(&c, &events[..])], "c").unwrap();
    assert!((out.duration_s() - 37.0).abs() < 1e-12);
    assert!((idx.total_condensed_s - 37.0).abs() < 1e-12);
    assert_eq!(idx.total_source_s, 600.0);
    let mut t = 0.0;
    for e in &idx.entries {
        assert_eq!(e.condensed.begin_s, t);
        assert!((e.condensed.duration() - e.source.duration()).abs() < 1e-9);
        t = e.condensed.end_s;
    }
}

#[test]
fn event_beyond_end_names_interval() {
    let c = ramp_clip(5.0, 8000, "short");
    let ev = [TimeInterval::new(4.5, 5.5).unwrap()];
    let err = condense(&[(&c, &ev[..])], "c").unwrap_err();
    assert!(matches!(err, Error::Bounds(ref m) if m.contains("4.5") && m.contains("5.5")), "{err}");
}

fn random_events(rng: &mut ChaCha8Rng, dur: f64) -> Vec<TimeInterval> {
    let mut t = rng.random_range(0.0..1.0);
    let mut out = Vec::new();
    while t + 0.2 < dur {
        let len = rng.random_range(0.05..1.5f64).min(dur - t);
        out.push(TimeInterval::new(t, t + len).unwrap());
        t += len + rng.random_range(0.01..2.0);
    }
    out
}

#[test]
fn random_events_roundtrip_through_index_and_keep_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rate = 8000;
    let clips = [ramp_clip(30.0, rate, "a"), ramp_clip(20.0, rate, "b")];
    let evs: Vec<Vec<TimeInterval>> = clips.iter().map(|c| random_events(&mut rng, c.duration_s())).collect();
    let pairs: Vec<(&AudioClip, &[TimeInterval])> = clips.iter().zip(&evs).map(|(c, e)| (c, e.as_slice())).collect();
    let (out, idx) = condense(&pairs, "c").unwrap();
    let one_sample = 1.0 / rate as f64;
    for _ in 0..100 {
        let t = rng.random_range(0.0..idx.total_condensed_s);
        let (id, s) = idx.map_to_source(t).unwrap();
        let back = idx.map_to_condensed(id, s).unwrap();
        assert!((back - t).abs() <= one_sample, "{t} -> {s} -> {back}");
        // brute force: the sample at t in the output is the sample at s in the source
        let src = clips.iter().find(|c| c.source_id == id).unwrap();
        let (i, j) = ((t * rate as f64).floor() as usize, (s * rate as f64).floor() as usize);
        let near = (j.saturating_sub(1)..=j + 1).any(|k| src.samples().get(k) == out.samples().get(i));
        assert!(near);
    }
    for e in &idx.entries {
        let src = clips.iter().find(|c| c.source_id == e.source_id).unwrap();
        let (cb, sb) = (out.sample_index(e.condensed.begin_s), src.sample_index(e.source.begin_s));
        let n = out.sample_index(e.condensed.end_s) - cb;
        assert_eq!(&out.samples()[cb..cb + n], &src.samples()[sb..sb + n]);
    }
}

fn two_fragment_index() -> CondensedIndex {
    let c = ramp_clip(10.0, 8000, "r");
    let ev = [TimeInterval::new(1.0, 2.0).unwrap(), TimeInterval::new(5.0, 7.0).unwrap()];
    condense(&[(&c, &ev[..])], "c").unwrap().1
}

#[test]
fn lift_inside_one_fragment() {
    let idx = two_fragment_index();
    let a = Annotation::new("c", TimeInterval::new(1.2, 1.7).unwrap(), "mandrill");
    let lifted = lift_annotations(&[a], &idx).unwrap();
    assert_eq!(lifted.len(), 1);
    assert!((lifted[0].interval.begin_s - 5.2).abs() < 1e-12);
    assert!((lifted[0].duration() - 0.5).abs() < 1e-12);
    assert_eq!(lifted[0].source_id, "r");
}

#[test]
fn lift_splits_across_fragments() {
    let idx = two_fragment_index();
    let a = Annotation::new("c", TimeInterval::new(0.6, 1.5).unwrap(), "guenon");
    let lifted = lift_annotations(&[a], &idx).unwrap();
    assert_eq!(lifted.len(), 2);
    assert!((lifted[0].interval.begin_s - 1.6).abs() < 1e-12 && (lifted[0].interval.end_s - 2.0).abs() < 1e-12);
    assert!((lifted[1].interval.begin_s - 5.0).abs() < 1e-12);
    assert!((lifted.iter().map(|a| a.duration()).sum::<f64>() - 0.9).abs() < 1e-12);
    assert!(lifted.iter().all(|a| a.label == "guenon"));
}

#[test]
fn lift_out_of_range_is_bounds_error() {
    let idx = two_fragment_index();
    let a = Annotation::new("c", TimeInterval::new(2.5, 3.5).unwrap(), "x");
    assert!(matches!(lift_annotations(&[a], &idx), Err(Error::Bounds(_))));
}

#[test]
fn lift_inverts_project() {
    let idx = two_fragment_index();
    let src = vec![
        Annotation::new("r", TimeInterval::new(1.1, 1.9).unwrap(), "a"),
        Annotation::new("r", TimeInterval::new(5.0, 7.0).unwrap(), "b"),
        Annotation::new("r", TimeInterval::new(6.25, 6.5).unwrap(), "c"),
    ];
    let lifted = lift_annotations(&project_annotations(&src, &idx, "c").unwrap(), &idx).unwrap();
    assert_eq!(lifted.len(), src.len());
    for (a, b) in src.iter().zip(&lifted) {
        assert_eq!((a.source_id.as_str(), a.label.as_str()), (b.source_id.as_str(), b.label.as_str()));
        assert!((a.interval.begin_s - b.interval.begin_s).abs() < 1e-9);
        assert!((a.interval.end_s - b.interval.end_s).abs() < 1e-9);
    }
    let outside = [Annotation::new("r", TimeInterval::new(2.5, 3.0).unwrap(), "x")];
    assert!(project_annotations(&outside, &idx, "c").is_err());
}

#[test]
fn index_and_events_tsv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let idx = two_fragment_index();
    let p = dir.path().join("index.tsv");
    idx.write_tsv(&p).unwrap();
    assert_eq!(CondensedIndex::read_tsv(&p).unwrap(), idx);

    let events = vec![
        RecordingEvents {
            source_id: "a".into(),
            events: vec![TimeInterval::new(0.1, 0.35).unwrap(), TimeInterval::new(2.0, 3.0).unwrap()],
        },
        RecordingEvents {
            source_id: "b".into(),
            events: vec![TimeInterval::new(1.0 / 3.0, 0.5).unwrap()],
        },
    ];
    let q = dir.path().join("events.tsv");
    write_events(&q, &events).unwrap();
    assert_eq!(read_events(&q).unwrap(), events);
}
