use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use callsift::audio_io::{
    read_annotations, read_wave, wave_info, write_annotations, write_wave, Annotation, AudioClip, CorpusManifest,
    Recording, SelectionFormat, BACKGROUND_LABEL,
};
use callsift::detect::{
    build_global_profile, condense, detect_events, lift_annotations, optimize_thresholds, project_annotations,
    read_events, write_events, CondensedIndex, RecordingEvents,
};
use callsift::eval::{chronological_split, read_split, sample_background, snr_profile, write_split, Split};
use callsift::fixtures::{write_fixtures, FixtureConfig};
use callsift::functionals::{read_features_csv, summarize, write_features_csv, ChunkRef, FeatureVector};
use callsift::learn::{
    classes_of, fit_norm, grid_search, refit_and_test, train_kelm, KelmModel, LabeledSet, NormMode, ProbeLedger,
};
use callsift::lld::LldExtractor;
use callsift::{write_atomic, Error};

use crate::config::PipelineConfig;
use crate::{CliError, Command, TaskArgs};

type Result<T> = std::result::Result<T, CliError>;

const INDEX_SUFFIX: &str = ".index.tsv";

pub fn run(command: &Command, cfg: &PipelineConfig) -> Result<()> {
    match command {
        Command::Detect { corpus, thresholds, out } => {
            let mut cfg = cfg.clone();
            if let Some(t) = thresholds {
                cfg.apply_file(t)?;
            }
            detect(&CorpusManifest::load(&corpus.manifest)?, &cfg, out)
        }
        Command::OptimizeThresholds { corpus, annotations, out } => {
            let manifest = CorpusManifest::load(&corpus.manifest)?;
            let anns = read_annotations(annotations, &manifest, &selection_format(cfg))?;
            optimize(&manifest, &anns, cfg, out)
        }
        Command::Condense {
            corpus,
            events,
            annotations,
            out_dir,
        } => {
            let manifest = CorpusManifest::load(&corpus.manifest)?;
            let anns = match annotations {
                Some(a) => Some(read_annotations(a, &manifest, &selection_format(cfg))?),
                None => None,
            };
            condense_cmd(&manifest, &read_events(events)?, anns.as_deref(), cfg, out_dir)
        }
        Command::Lift {
            corpus,
            index,
            annotations,
            out,
        } => lift(&CorpusManifest::load(&corpus.manifest)?, index, annotations, cfg, out),
        Command::ExtractFeatures {
            corpus,
            annotations,
            out,
        } => {
            let manifest = CorpusManifest::load(&corpus.manifest)?;
            let anns = read_all(annotations, &manifest, cfg)?;
            let features = extract_features(&manifest, &anns, cfg)?;
            write_features_csv(out, &features)?;
            println!("{} feature vectors from {} chunks", features.len(), anns.len());
            Ok(())
        }
        Command::Split {
            corpus,
            annotations,
            out,
        } => {
            let manifest = CorpusManifest::load(&corpus.manifest)?;
            let anns = read_all(annotations, &manifest, cfg)?;
            let spec = chronological_split(&anns, &manifest, cfg.split_ratios)?;
            write_split(out, &anns, &spec)?;
            for s in &spec.strata {
                let r = s.achieved_ratio();
                println!(
                    "{}\tgroups={}\ttrain={:.3}\tvalid={:.3}\ttest={:.3}",
                    s.name, s.groups, r[0], r[1], r[2]
                );
            }
            Ok(())
        }
        Command::SampleBackground {
            corpus,
            annotations,
            out,
        } => {
            let seed = cfg
                .seed
                .ok_or_else(|| CliError::Usage("sample-background needs a seed (--seed or `seed =` in the config)".into()))?;
            let manifest = CorpusManifest::load(&corpus.manifest)?;
            let anns = read_annotations(annotations, &manifest, &selection_format(cfg))?;
            let durations = manifest
                .recordings
                .iter()
                .map(|r| Ok((r.source_id.clone(), wave_info(&r.path)?.duration_s())))
                .collect::<callsift::Result<HashMap<_, _>>>()?;
            let bg = sample_background(&anns, &manifest, &durations, seed)?;
            write_annotations(out, &bg, &selection_format(cfg))?;
            println!("{} background chunks", bg.len());
            Ok(())
        }
        Command::Train {
            task,
            c,
            norm,
            train_only,
            out,
        } => {
            let mode = norm_mode(norm.as_deref(), cfg)?;
            let data = TaskData::load(task)?;
            let set = if *train_only {
                data.sets[0].clone()
            } else {
                data.sets[0].concat(&data.sets[1])?
            };
            let stats = fit_norm(set.x.view(), mode.applies_l2())?;
            let z = stats.apply_rows(set.x.view())?;
            let model = train_kelm(z.view(), &set.y, &data.classes, *c, stats)?;
            model.save(out)?;
            println!("trained {mode} model on {} chunks, {} classes", set.len(), data.classes.len());
            Ok(())
        }
        Command::GridSearch {
            task,
            norm,
            all_norms,
            out,
        } => {
            let modes = if *all_norms {
                vec![NormMode::Zn, NormMode::ZnL2]
            } else {
                vec![norm_mode(norm.as_deref(), cfg)?]
            };
            let data = TaskData::load(task)?;
            let mut text = String::new();
            for mode in modes {
                let report = grid_search(&data.sets[0], &data.sets[1], &data.classes, cfg.grid(mode), mode)?;
                let tsv = report.to_tsv();
                text.push_str(if text.is_empty() { &tsv } else { tsv.split_once('\n').map_or("", |x| x.1) });
                println!("{}\t{mode}\tC={:e}\tvalid_uar={:.4}", data.task, report.best_c, report.best_uar);
            }
            write_text(out, &text)
        }
        Command::Predict { model, features, out } => predict(model, features, out),
        Command::Evaluate {
            task,
            grid,
            out,
            confusion,
            model_dir,
        } => evaluate(task, grid, out, confusion.as_deref(), model_dir.as_deref()),
        Command::Snr {
            corpus,
            annotations,
            background,
            out_dir,
        } => {
            let manifest = CorpusManifest::load(&corpus.manifest)?;
            let fmt = selection_format(cfg);
            let anns = read_annotations(annotations, &manifest, &fmt)?;
            let bg = read_annotations(background, &manifest, &fmt)?;
            snr(&manifest, &anns, &bg, cfg, out_dir)
        }
        Command::GenFixtures {
            out,
            sessions,
            calls,
            session_s,
            snr_min,
            snr_max,
        } => {
            let d = FixtureConfig::default();
            let fc = FixtureConfig {
                sessions_per_species: sessions.unwrap_or(d.sessions_per_species),
                calls_per_session: calls.unwrap_or(d.calls_per_session),
                session_s: session_s.unwrap_or(d.session_s),
                snr_min_db: snr_min.unwrap_or(d.snr_min_db),
                snr_max_db: snr_max.unwrap_or(d.snr_max_db),
                seed: cfg.seed.unwrap_or(d.seed),
                ..d
            };
            fc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let corpus = write_fixtures(out, &fc)?;
            println!(
                "{} recordings, {} annotations in {}",
                corpus.manifest.recordings.len(),
                corpus.annotations.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn selection_format(cfg: &PipelineConfig) -> SelectionFormat {
    SelectionFormat {
        label_column: cfg.label_column.clone(),
        source_column: cfg.source_column.clone(),
        default_source: None,
    }
}

fn read_all(paths: &[PathBuf], manifest: &CorpusManifest, cfg: &PipelineConfig) -> Result<Vec<Annotation>> {
    let fmt = selection_format(cfg);
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_annotations(p, manifest, &fmt)?);
    }
    Ok(out)
}

fn norm_mode(arg: Option<&str>, cfg: &PipelineConfig) -> Result<NormMode> {
    match arg {
        Some(s) => s.parse().map_err(|e: Error| CliError::Usage(e.to_string())),
        None => Ok(cfg.norm),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e)))?;
    Ok(())
}

/// Reads the listed recordings in parallel, keeping the given order.
fn load_clips(recs: &[&Recording]) -> Result<Vec<AudioClip>> {
    Ok(recs.par_iter().map(|r| read_wave(&r.path)).collect::<callsift::Result<Vec<_>>>()?)
}

fn detect(manifest: &CorpusManifest, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let mut events = Vec::new();
    for species in species_of(manifest) {
        let recs: Vec<&Recording> = manifest.recordings_of(&species).collect();
        let clips = load_clips(&recs)?;
        let det = cfg.detector_for(&species);
        let profile = build_global_profile(&clips, det)?;
        let found = clips
            .par_iter()
            .map(|c| {
                Ok(RecordingEvents {
                    source_id: c.source_id.clone(),
                    events: detect_events(c, &profile, det)?,
                })
            })
            .collect::<callsift::Result<Vec<_>>>()?;
        let kept: f64 = found.iter().flat_map(|r| &r.events).map(|e| e.duration()).sum();
        let total: f64 = clips.iter().map(|c| c.duration_s()).sum();
        println!(
            "{species}\tevents={}\tretained={:.3}",
            found.iter().map(|r| r.events.len()).sum::<usize>(),
            kept / total
        );
        events.extend(found);
    }
    write_events(out, &events)?;
    Ok(())
}

/// Enclosures in manifest order.
fn species_of(manifest: &CorpusManifest) -> Vec<String> {
    let mut seen = HashSet::new();
    manifest
        .recordings
        .iter()
        .filter(|r| seen.insert(r.enclosure.clone()))
        .map(|r| r.enclosure.clone())
        .collect()
}

fn optimize(manifest: &CorpusManifest, anns: &[Annotation], cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let mut text = String::from("# detector thresholds chosen by optimize-thresholds\n");
    for species in species_of(manifest) {
        let recs: Vec<&Recording> = manifest.recordings_of(&species).collect();
        let ids: HashSet<&str> = recs.iter().map(|r| r.source_id.as_str()).collect();
        let seeds: Vec<Annotation> = anns
            .iter()
            .filter(|a| a.label != BACKGROUND_LABEL && ids.contains(a.source_id.as_str()))
            .cloned()
            .collect();
        if seeds.is_empty() {
            log::warn!("{species}: no seed annotations, thresholds left unchanged");
            continue;
        }
        let clips = load_clips(&recs)?;
        let (best, report) = optimize_thresholds(&clips, &seeds, cfg.detector_for(&species))?;
        if !report.target_met {
            log::warn!("{species}: recall target not reached (best {:.3})", report.recall);
        }
        println!(
            "{species}\trecall={:.4}\tretained={:.4}\tseeds={}\ttarget_met={}",
            report.recall, report.retained_fraction, report.seed_count, report.target_met
        );
        text.push_str(&format!(
            "# {species}: recall {} retained {} over {} seeds\ndetect.{species}.loudness_db = {}\ndetect.{species}.deviation = {}\n",
            report.recall, report.retained_fraction, report.seed_count, best.loudness_db_threshold, best.deviation_threshold
        ));
    }
    write_text(out, &text)
}

fn condensed_id(species: &str) -> String {
    format!("condensed_{species}")
}

fn condense_cmd(
    manifest: &CorpusManifest,
    events: &[RecordingEvents],
    anns: Option<&[Annotation]>,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let by_id: HashMap<&str, &RecordingEvents> = events.iter().map(|r| (r.source_id.as_str(), r)).collect();
    if let Some(r) = events.iter().find(|r| manifest.recording(&r.source_id).is_none()) {
        return Err(Error::Reference(format!("events on `{}`, which is not in the manifest", r.source_id)).into());
    }
    for species in species_of(manifest) {
        let recs: Vec<&Recording> = manifest
            .recordings_of(&species)
            .filter(|r| by_id.get(r.source_id.as_str()).is_some_and(|e| !e.events.is_empty()))
            .collect();
        if recs.is_empty() {
            continue;
        }
        let clips = load_clips(&recs)?;
        let parts: Vec<(&AudioClip, &[_])> = clips
            .iter()
            .map(|c| (c, by_id[c.source_id.as_str()].events.as_slice()))
            .collect();
        let cid = condensed_id(&species);
        let (clip, index) = condense(&parts, &cid)?;
        write_wave(&clip, &out_dir.join(format!("{cid}.wav")))?;
        index.write_tsv(&out_dir.join(format!("{cid}{INDEX_SUFFIX}")))?;
        println!(
            "{cid}\t{:.1} s of {:.1} s ({:.3})",
            index.total_condensed_s,
            index.total_source_s,
            index.total_condensed_s / index.total_source_s
        );
        if let Some(anns) = anns {
            let ids: HashSet<&str> = recs.iter().map(|r| r.source_id.as_str()).collect();
            let mut projected = Vec::new();
            let mut outside = 0;
            for a in anns.iter().filter(|a| ids.contains(a.source_id.as_str())) {
                match project_annotations(std::slice::from_ref(a), &index, &cid) {
                    Ok(p) => projected.extend(p),
                    Err(Error::Bounds(_)) => outside += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            if outside > 0 {
                log::warn!("{cid}: {outside} annotation(s) not inside a single detected event were not projected");
            }
            write_annotations(&out_dir.join(format!("{cid}.selections.tsv")), &projected, &selection_format(cfg))?;
        }
    }
    Ok(())
}

fn lift(manifest: &CorpusManifest, index_path: &Path, anns_path: &Path, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let index = CondensedIndex::read_tsv(index_path)?;
    let name = index_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let cid = name.strip_suffix(INDEX_SUFFIX).unwrap_or(&name).to_string();
    // the condensed file is a recording of its own for annotation purposes
    let mut recs = manifest.recordings.clone();
    recs.push(Recording {
        source_id: cid.clone(),
        path: index_path.with_file_name(format!("{cid}.wav")),
        start: String::new(),
        start_s: 0.0,
        recorder: String::new(),
        enclosure: String::new(),
    });
    let condensed_manifest = CorpusManifest::new(recs, manifest.label_set.clone(), vec![])?;
    let fmt = SelectionFormat {
        default_source: Some(cid),
        ..selection_format(cfg)
    };
    let anns = read_annotations(anns_path, &condensed_manifest, &fmt)?;
    let lifted = lift_annotations(&anns, &index)?;
    write_annotations(out, &lifted, &selection_format(cfg))?;
    println!("{} annotations lifted to {} source intervals", anns.len(), lifted.len());
    Ok(())
}

/// Features for every chunk long enough to analyse, in input order.
pub fn extract_features(manifest: &CorpusManifest, anns: &[Annotation], cfg: &PipelineConfig) -> Result<Vec<FeatureVector>> {
    let mut needed: Vec<&Recording> = Vec::new();
    let mut seen = HashSet::new();
    for a in anns {
        let rec = manifest
            .recording(&a.source_id)
            .ok_or_else(|| Error::Reference(format!("recording `{}` not in manifest", a.source_id)))?;
        if seen.insert(a.source_id.as_str()) {
            needed.push(rec);
        }
    }
    let clips = load_clips(&needed)?;
    let mut extractors = HashMap::new();
    for c in &clips {
        if let std::collections::hash_map::Entry::Vacant(e) = extractors.entry(c.sample_rate()) {
            e.insert(LldExtractor::new(&cfg.lld, c.sample_rate())?);
        }
    }
    let by_id: HashMap<&str, &AudioClip> = clips.iter().map(|c| (c.source_id.as_str(), c)).collect();
    let rows = anns
        .par_iter()
        .map(|a| {
            let clip = by_id[a.source_id.as_str()];
            let chunk = clip.slice(a.interval)?;
            let lld = match extractors[&clip.sample_rate()].extract(&chunk) {
                Ok(l) => l,
                Err(Error::TooShort(m)) => {
                    log::warn!("skipping {}@{}: {m}", a.source_id, a.interval.begin_s);
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            Ok(Some(summarize(&lld)?.with_label(a.label.clone()).with_chunk(ChunkRef {
                source_id: a.source_id.clone(),
                interval: a.interval,
            })))
        })
        .collect::<callsift::Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Feature rows grouped by split for one classification task.
struct TaskData {
    task: String,
    classes: Vec<String>,
    /// Train, valid, test.
    sets: [LabeledSet; 3],
}

impl TaskData {
    fn load(args: &TaskArgs) -> Result<Self> {
        let features = read_features_csv(&args.features)?;
        let split: HashMap<String, Split> = read_split(&args.split)?
            .into_iter()
            .map(|(a, s)| {
                let key = ChunkRef {
                    source_id: a.source_id,
                    interval: a.interval,
                };
                (key.to_string(), s)
            })
            .collect();
        let mut parts: [Vec<FeatureVector>; 3] = Default::default();
        for (i, f) in features.into_iter().enumerate() {
            if !args.with_background && f.label.as_deref() == Some(BACKGROUND_LABEL) {
                continue;
            }
            let key = f
                .chunk_ref
                .as_ref()
                .ok_or_else(|| Error::Reference(format!("feature row {} has no chunk_ref", i + 1)))?
                .to_string();
            let s = split
                .get(&key)
                .ok_or_else(|| Error::Reference(format!("chunk {key} is missing from the split file")))?;
            let slot = Split::ALL.iter().position(|x| x == s).expect("known split");
            parts[slot].push(f);
        }
        let all: Vec<FeatureVector> = parts.iter().flatten().cloned().collect();
        let classes = classes_of(&all);
        let task = if args.with_background { "species+background" } else { "species" };
        let [a, b, c] = &parts;
        Ok(Self {
            task: task.into(),
            sets: [
                LabeledSet::from_features(a, &classes)?,
                LabeledSet::from_features(b, &classes)?,
                LabeledSet::from_features(c, &classes)?,
            ],
            classes,
        })
    }
}

fn predict(model_path: &Path, features_path: &Path, out: &Path) -> Result<()> {
    let model = KelmModel::load(model_path)?;
    let features = read_features_csv(features_path)?;
    let preds = model.predict_features(&features)?;
    let mut text = String::from("chunk_ref\tlabel\tpredicted");
    for l in &model.labels {
        text.push_str(&format!("\tscore_{l}"));
    }
    text.push('\n');
    for (f, (scores, label)) in features.iter().zip(&preds) {
        text.push_str(&format!(
            "{}\t{}\t{label}",
            f.chunk_ref.as_ref().map(|c| c.to_string()).unwrap_or_default(),
            f.label.as_deref().unwrap_or("")
        ));
        for s in scores {
            text.push_str(&format!("\t{s}"));
        }
        text.push('\n');
    }
    write_text(out, &text)
}

/// Selected rows of a grid TSV: (mode, C, valid accuracy, valid UAR).
fn read_grid(path: &Path) -> Result<Vec<(NormMode, f64, f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("norm\tC\taccuracy\tuar\tselected") {
        return Err(Error::Schema(format!("{}: not a grid-search TSV", path.display())).into());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| Error::Row { row, message: m.to_string() };
        if f.len() != 5 {
            return Err(bad("expected 5 columns").into());
        }
        if f[4] != "1" {
            continue;
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("not a number"));
        out.push((f[0].parse::<NormMode>()?, num(f[1])?, num(f[2])?, num(f[3])?));
    }
    if out.is_empty() {
        return Err(Error::Schema(format!("{}: no selected C", path.display())).into());
    }
    Ok(out)
}

fn evaluate(args: &TaskArgs, grid: &Path, out: &Path, confusion: Option<&Path>, model_dir: Option<&Path>) -> Result<()> {
    let data = TaskData::load(args)?;
    let selected = read_grid(grid)?;
    let mut ledger = ProbeLedger::new();
    let mut report = String::from("task\tnorm\tC\tvalid_accuracy\tvalid_uar\ttest_accuracy\ttest_uar\n");
    let mut matrices = String::new();
    for (mode, c, v_acc, v_uar) in selected {
        let [train, valid, test] = &data.sets;
        let t = refit_and_test(train, valid, test, &data.classes, c, mode, &data.task, &mut ledger)?;
        report.push_str(&format!(
            "{}\t{mode}\t{c:e}\t{v_acc}\t{v_uar}\t{}\t{}\n",
            data.task, t.accuracy, t.uar
        ));
        matrices.push_str(&format!("# {} {mode}\n{}", data.task, t.confusion.to_tsv()));
        println!("{}\t{mode}\ttest_accuracy={:.4}\ttest_uar={:.4}", data.task, t.accuracy, t.uar);
        if let Some(dir) = model_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            t.model.save(&dir.join(format!("{}_{mode}.kelm", data.task)))?;
        }
    }
    write_text(out, &report)?;
    if let Some(p) = confusion {
        write_text(p, &matrices)?;
    }
    Ok(())
}

fn snr(manifest: &CorpusManifest, anns: &[Annotation], bg: &[Annotation], cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut spec = cfg.lld.frame;
    spec.preemphasis = 0.0;
    for species in species_of(manifest) {
        let recs: Vec<&Recording> = manifest.recordings_of(&species).collect();
        let ids: HashSet<&str> = recs.iter().map(|r| r.source_id.as_str()).collect();
        let clips = load_clips(&recs)?;
        let by_id: HashMap<&str, &AudioClip> = clips.iter().map(|c| (c.source_id.as_str(), c)).collect();
        let cut = |list: &[Annotation], keep: &dyn Fn(&Annotation) -> bool| -> callsift::Result<Vec<AudioClip>> {
            list.iter()
                .filter(|a| ids.contains(a.source_id.as_str()) && keep(a))
                .map(|a| by_id[a.source_id.as_str()].slice(a.interval))
                .collect()
        };
        let signal = cut(anns, &|a| a.label == species)?;
        let background = cut(bg, &|a| a.label == BACKGROUND_LABEL)?;
        if signal.is_empty() || background.is_empty() {
            log::warn!("{species}: no signal or background chunks, SNR profile skipped");
            continue;
        }
        let profile = snr_profile(&signal, &background, cfg.snr_max_hz, &spec, cfg.snr_averaging)?;
        profile.write_csv(&out_dir.join(format!("snr_{species}.csv")))?;
        let peak = (0..profile.diff_db.len())
            .max_by(|&a, &b| profile.diff_db[a].total_cmp(&profile.diff_db[b]))
            .unwrap_or(0);
        println!("{species}\tpeak {:.0} Hz\t{:.1} dB", profile.bin_hz[peak], profile.diff_db[peak]);
    }
    Ok(())
}
