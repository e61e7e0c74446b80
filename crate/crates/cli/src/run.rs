//! Stage execution with dependency checks and result caching.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use neurotrack::classify::{
    group_tests, length_sweep, metrics, nested_cv, profiles_at, roc_auc, write_profiles_csv, CvResult, Metrics, Roc,
    StatTestResult, SubjectOutcomes, SweepPoint, TrackingProfile,
};
use neurotrack::cohortsim::{
    gen_story, read_cohort_manifest, read_story_dir, read_subject_eeg, write_cohort_dir, CohortGenerator,
};
use neurotrack::dsp::EegPreprocessor;
use neurotrack::pipeline::{
    evaluate_subject_models, extract_features, pretrain_models, pretraining_cohort, shapley_report, FeatureModel,
    ShapleyReport, StoryFeatures, StoryRefs, SubjectInput,
};
use neurotrack::speechfeat::{FeatureName, FeatureStream};
use neurotrack::MultichannelSignal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{hash_json, ExperimentConfig};
use crate::manifest::{RunManifest, Stage, StageRecord, StageStatus};
use crate::report;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("stage `{stage}` needs the outputs of stage `{missing}`, which are missing or stale; add `{missing}` to --stages")]
    Dependency { stage: Stage, missing: Stage },
    #[error("numerical failure in stage `{stage}`: {message}\ndiagnostics written to {}", diagnostics.display())]
    Numerical { stage: Stage, message: String, diagnostics: PathBuf },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) | RunError::Other(_) => 1,
            RunError::Dependency { .. } => 2,
            RunError::Numerical { .. } => 3,
        }
    }
}

/// Where each stage keeps its outputs under the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn cohort(&self) -> PathBuf {
        self.root.join("cohort")
    }
    pub fn preprocess(&self) -> PathBuf {
        self.root.join("preprocess")
    }
    pub fn features(&self, which: &str) -> PathBuf {
        self.root.join("features").join(which)
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn evaluate(&self) -> PathBuf {
        self.root.join("evaluate")
    }
    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn diagnostics(&self) -> PathBuf {
        self.root.join("diagnostics")
    }
}

pub const PROFILES_CSV: &str = "profiles.csv";
pub const GROUP_STATS_JSON: &str = "group_stats.json";
pub const CLASSIFICATION_JSON: &str = "classification.json";
pub const SWEEP_CSV: &str = "sweep.csv";

/// One row of the group-statistics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    #[serde(flatten)]
    pub test: StatTestResult,
    pub control_mean: f64,
    pub patient_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub fdr_q: f64,
    pub n_controls: usize,
    pub n_patients: usize,
    pub features: Vec<GroupStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub metrics: Metrics,
    pub roc: Roc,
    pub cv: CvResult,
    pub shapley: ShapleyReport,
}

/// Cache key of every stage: the configuration it reads plus the keys of
/// the stages whose outputs it consumes.
pub fn stage_keys(cfg: &ExperimentConfig) -> Vec<(Stage, String)> {
    let p = &cfg.pipeline;
    let c = &cfg.cohort;
    let pre_spec = pretraining_cohort(c, &p.pretrain);
    let story = |s: &neurotrack::cohortsim::CohortSpec| {
        json!({"vocab": s.vocab, "minutes": s.story_minutes, "audio_fs": s.audio_fs, "seed": s.story_seed})
    };
    let mut keys: Vec<(Stage, String)> = Vec::new();
    for stage in Stage::ALL {
        let own = match stage {
            Stage::Simulate => json!({"cohort": c}),
            Stage::Preprocess => json!({"preprocess": p.preprocess}),
            Stage::Features => json!({"features": p.features, "story": story(c), "pretraining_story": story(&pre_spec)}),
            Stage::Train => json!({
                "pretraining_cohort": pre_spec,
                "pretrain": p.pretrain,
                "preprocess": p.preprocess,
                "windows": p.windows,
            }),
            Stage::Evaluate => json!({"windows": p.windows}),
            Stage::Classify => json!({"cv": p.analysis.cv, "fdr_q": p.analysis.fdr_q}),
            Stage::Sweep => json!({"cv": p.analysis.cv, "minutes": p.analysis.sweep_minutes}),
            Stage::Report => json!({}),
        };
        // evaluate reads the preprocessing settings directly, not only
        // through the preprocess stage's check of the recordings
        let mut deps: Vec<Stage> = stage.dependencies().to_vec();
        if stage == Stage::Evaluate {
            deps.push(Stage::Simulate);
        }
        let dep_keys: Vec<&str> =
            deps.iter().map(|d| keys.iter().find(|(s, _)| s == d).map(|(_, k)| k.as_str()).unwrap()).collect();
        let key = hash_json(&json!({
            "stage": stage.as_str(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": own,
            "inputs": dep_keys,
        }));
        keys.push((stage, key));
    }
    keys
}

pub struct Runner<'a> {
    pub cfg: &'a ExperimentConfig,
    pub layout: Layout,
    pub quiet: bool,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, root: impl Into<PathBuf>) -> Self {
        Self { cfg, layout: Layout::new(root), quiet: false }
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    /// Runs `stages` in pipeline order. Stages whose inputs are unchanged
    /// since their last successful run are skipped.
    pub fn run(&self, stages: &[Stage]) -> Result<RunManifest, RunError> {
        self.cfg.validate().map_err(|e| RunError::Usage(e.to_string()))?;
        let root = &self.layout.root;
        let keys = stage_keys(self.cfg);
        let key = |s: Stage| keys.iter().find(|(k, _)| *k == s).map(|(_, v)| v.clone()).unwrap();
        let mut manifest = RunManifest::load(root)?.unwrap_or_else(|| RunManifest::new(self.cfg.hash()));
        let mut stages = stages.to_vec();
        stages.sort();
        stages.dedup();

        for &s in &stages {
            for &d in s.dependencies() {
                if !stages.contains(&d) && !manifest.is_current(root, d, &key(d)) {
                    return Err(RunError::Dependency { stage: s, missing: d });
                }
            }
        }

        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        manifest.config_hash = self.cfg.hash();
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        for &s in &stages {
            let k = key(s);
            let t = Instant::now();
            if manifest.is_current(root, s, &k) {
                let mut rec = manifest.record(s).unwrap().clone();
                rec.status = StageStatus::Skipped;
                rec.wall_s = t.elapsed().as_secs_f64();
                manifest.upsert(rec);
                manifest.save(root)?;
                self.log(&format!("[{s}] up to date, skipped"));
                continue;
            }
            self.log(&format!("[{s}] running"));
            let outcome = self.execute(s);
            let wall_s = t.elapsed().as_secs_f64();
            match outcome {
                Ok(artifacts) => {
                    let artifacts = artifacts
                        .into_iter()
                        .map(|a| a.strip_prefix(root).map(Path::to_path_buf).unwrap_or(a))
                        .collect();
                    manifest.upsert(StageRecord { stage: s, status: StageStatus::Completed, key: k, wall_s, artifacts });
                    manifest.save(root)?;
                    self.log(&format!("[{s}] done in {wall_s:.1} s"));
                }
                Err(e) => {
                    manifest.upsert(StageRecord { stage: s, status: StageStatus::Failed, key: k, wall_s, artifacts: vec![] });
                    manifest.save(root)?;
                    return Err(self.classify_failure(s, e));
                }
            }
        }
        Ok(manifest)
    }

    fn classify_failure(&self, stage: Stage, e: anyhow::Error) -> RunError {
        let numerical = e.chain().any(|c| {
            matches!(
                c.downcast_ref::<neurotrack::Error>(),
                Some(neurotrack::Error::Numerical(_) | neurotrack::Error::NotConverged { .. })
            )
        });
        if !numerical {
            return RunError::Other(e.context(format!("stage `{stage}` failed")));
        }
        let dir = self.layout.diagnostics();
        let path = dir.join(format!("{stage}.txt"));
        let mut text = format!("stage: {stage}\nconfig hash: {}\n\n", self.cfg.hash());
        for (i, c) in e.chain().enumerate() {
            text.push_str(&format!("{}{c}\n", "  ".repeat(i)));
        }
        text.push_str("\nconfiguration:\n");
        text.push_str(&self.cfg.to_text());
        if let Err(io) = fs::create_dir_all(&dir).and_then(|_| fs::write(&path, text)) {
            return RunError::Other(e.context(format!("stage `{stage}` failed; diagnostics not written: {io}")));
        }
        RunError::Numerical { stage, message: format!("{e:#}"), diagnostics: path }
    }

    fn execute(&self, s: Stage) -> anyhow::Result<Vec<PathBuf>> {
        match s {
            Stage::Simulate => self.simulate(),
            Stage::Preprocess => self.preprocess(),
            Stage::Features => self.features(),
            Stage::Train => self.train(),
            Stage::Evaluate => self.evaluate(),
            Stage::Classify => self.classify(),
            Stage::Sweep => self.sweep(),
            Stage::Report => report::write_report(&self.layout.results(), &self.layout.report()),
        }
    }

    fn simulate(&self) -> anyhow::Result<Vec<PathBuf>> {
        let dir = self.layout.cohort();
        fresh_dir(&dir)?;
        let gen = CohortGenerator::new(self.cfg.cohort.clone())?;
        write_cohort_dir(&gen, &dir)?;
        self.log(&format!("  wrote {} subjects to {}", gen.len(), dir.display()));
        Ok(vec![dir.join("cohort.json"), dir.join("story"), dir.join("subjects")])
    }

    /// Checks every recording against the story and records its level
    /// before and after referencing. The band-filtered signals are
    /// recomputed in memory by the stages that need them.
    fn preprocess(&self) -> anyhow::Result<Vec<PathBuf>> {
        let cohort = self.layout.cohort();
        let m = read_cohort_manifest(&cohort)?;
        let story = read_story_dir(&cohort)?;
        let pre = EegPreprocessor::new(self.cfg.pipeline.preprocess);
        let rows: Vec<anyhow::Result<serde_json::Value>> = m
            .subjects
            .par_iter()
            .map(|info| {
                let raw = read_subject_eeg(&cohort, &info.id)?;
                let expected = (story.words.duration_s() * raw.fs()).round() as usize;
                if raw.n_samples().abs_diff(expected) > 1 {
                    bail!("{}: {} samples, story implies {expected}", info.id, raw.n_samples());
                }
                let raw_rms = rms(&raw);
                let referenced = pre.reference(raw)?;
                Ok(json!({
                    "id": info.id,
                    "group": info.group,
                    "fs": referenced.fs(),
                    "n_channels": referenced.n_channels(),
                    "n_samples": referenced.n_samples(),
                    "rms_raw": raw_rms,
                    "rms_referenced": rms(&referenced),
                }))
            })
            .collect();
        let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
        let dir = self.layout.preprocess();
        fresh_dir(&dir)?;
        let summary = json!({
            "config": self.cfg.pipeline.preprocess,
            "edge_samples": self.cfg.pipeline.edge(),
            "subjects": rows,
        });
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_vec_pretty(&summary)?)?;
        Ok(vec![path])
    }

    fn features(&self) -> anyhow::Result<Vec<PathBuf>> {
        let fc = &self.cfg.pipeline.features;
        let story = read_story_dir(&self.layout.cohort())?;
        let cohort_features = extract_features(StoryRefs::from(&story), fc)?;
        let a = self.layout.features("cohort");
        save_features(&cohort_features, &a)?;
        self.log("  extracted cohort story features");

        let spec = pretraining_cohort(&self.cfg.cohort, &self.cfg.pipeline.pretrain);
        let pre_story = gen_story(&spec.vocab, spec.story_minutes, spec.audio_fs, spec.story_seed)?;
        let pre_features = extract_features(StoryRefs::from(&pre_story), fc)?;
        let b = self.layout.features("pretraining");
        save_features(&pre_features, &b)?;
        self.log("  extracted pretraining story features");
        Ok(vec![a.join(FEATURES_INDEX), b.join(FEATURES_INDEX)])
    }

    fn train(&self) -> anyhow::Result<Vec<PathBuf>> {
        let p = &self.cfg.pipeline;
        let features = load_features(&self.layout.features("pretraining"))?;
        let spec = pretraining_cohort(&self.cfg.cohort, &p.pretrain);
        let story = gen_story(&spec.vocab, spec.story_minutes, spec.audio_fs, spec.story_seed)?;
        let gen = CohortGenerator::with_story(spec, Arc::new(story))?;
        let eeg = (0..p.pretrain.n_subjects).map(|i| Ok(gen.subject(i)?.eeg)).collect::<anyhow::Result<Vec<_>>>()?;
        let models = pretrain_models(
            &p.specs(),
            &eeg,
            &features,
            &p.preprocess,
            &p.windows,
            p.edge(),
            &p.pretrain.training,
            p.pretrain.seed,
            |m| self.log(&format!("  {m}")),
        )?;
        let dir = self.layout.models();
        fresh_dir(&dir)?;
        for m in &models {
            m.save(&dir)?;
        }
        let summary: Vec<_> = models
            .iter()
            .map(|m| {
                json!({
                    "feature": m.spec.feature,
                    "architecture": m.spec.architecture(),
                    "band": m.spec.band,
                    "epochs": m.history.len(),
                    "best_epoch": m.best_epoch,
                    "test_accuracy": m.test_accuracy,
                })
            })
            .collect();
        let path = dir.join("training.json");
        fs::write(&path, serde_json::to_vec_pretty(&summary)?)?;
        Ok(vec![dir])
    }

    fn evaluate(&self) -> anyhow::Result<Vec<PathBuf>> {
        let p = &self.cfg.pipeline;
        let cohort = self.layout.cohort();
        let m = read_cohort_manifest(&cohort)?;
        let features = load_features(&self.layout.features("cohort"))?;
        let models = load_models(&self.layout.models())?;
        let dir = self.layout.evaluate();
        fresh_dir(&dir)?;
        let paths: Vec<anyhow::Result<PathBuf>> = m
            .subjects
            .par_iter()
            .map(|info| {
                let eeg = read_subject_eeg(&cohort, &info.id)?;
                let input = SubjectInput { id: info.id.clone(), group: info.group, age: info.age, eeg };
                let out = evaluate_subject_models(&models, input, &features, &p.preprocess, &p.windows, p.edge())?;
                let path = dir.join(format!("{}.json", info.id));
                fs::write(&path, serde_json::to_vec(&out)?)?;
                self.log(&format!("  evaluated {}", info.id));
                Ok(path)
            })
            .collect();
        let mut out = paths.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
        let ids: Vec<&str> = m.subjects.iter().map(|s| s.id.as_str()).collect();
        let index = dir.join("index.json");
        fs::write(&index, serde_json::to_vec_pretty(&ids)?)?;
        out.push(index);
        Ok(out)
    }

    fn outcomes(&self) -> anyhow::Result<Vec<SubjectOutcomes>> {
        load_outcomes(&self.layout.evaluate())
    }

    fn classify(&self) -> anyhow::Result<Vec<PathBuf>> {
        let a = &self.cfg.pipeline.analysis;
        let profiles = profiles_at(&self.outcomes()?, f64::INFINITY)?;
        let stats = group_stats(&profiles, a.fdr_q)?;
        let cv = nested_cv(&profiles, &a.cv)?;
        let m = metrics(&cv.predicted(), &cv.labels())?;
        let roc = roc_auc(&cv.scores(), &cv.labels())?;
        let shapley = shapley_report(&profiles, &a.cv)?;
        self.log(&format!("  LOSO accuracy {:.3}, AUC {:.3}", m.accuracy, roc.auc));

        let dir = self.layout.results();
        fs::create_dir_all(&dir)?;
        let prof = dir.join(PROFILES_CSV);
        write_profiles_csv(&profiles, BufWriter::new(fs::File::create(&prof)?))?;
        let gs = dir.join(GROUP_STATS_JSON);
        fs::write(&gs, serde_json::to_vec_pretty(&stats)?)?;
        let cl = dir.join(CLASSIFICATION_JSON);
        fs::write(&cl, serde_json::to_vec_pretty(&Classification { metrics: m, roc, cv, shapley })?)?;
        Ok(vec![prof, gs, cl])
    }

    fn sweep(&self) -> anyhow::Result<Vec<PathBuf>> {
        let a = &self.cfg.pipeline.analysis;
        let points = length_sweep(&self.outcomes()?, &a.sweep_minutes, &a.cv)?;
        let dir = self.layout.results();
        fs::create_dir_all(&dir)?;
        let path = dir.join(SWEEP_CSV);
        write_sweep_csv(&points, &path)?;
        Ok(vec![path])
    }
}

pub fn group_stats(profiles: &[TrackingProfile], q: f64) -> neurotrack::Result<GroupStats> {
    let tests = group_tests(profiles, q)?;
    let mean = |f: FeatureName, patient: bool| {
        let v: Vec<f64> = profiles.iter().filter(|p| p.is_patient() == patient).map(|p| p.accuracies[&f]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let n_patients = profiles.iter().filter(|p| p.is_patient()).count();
    Ok(GroupStats {
        fdr_q: q,
        n_controls: profiles.len() - n_patients,
        n_patients,
        features: tests
            .into_iter()
            .map(|t| GroupStat { control_mean: mean(t.feature, false), patient_mean: mean(t.feature, true), test: t })
            .collect(),
    })
}

pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> anyhow::Result<Vec<SweepPoint>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<Vec<SweepPoint>, _>>()?)
}

pub fn load_outcomes(dir: &Path) -> anyhow::Result<Vec<SubjectOutcomes>> {
    let index: Vec<String> = serde_json::from_slice(&fs::read(dir.join("index.json"))?)?;
    index
        .iter()
        .map(|id| {
            let path = dir.join(format!("{id}.json"));
            let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
            Ok(serde_json::from_slice(&bytes)?)
        })
        .collect()
}

pub fn load_models(dir: &Path) -> anyhow::Result<Vec<FeatureModel>> {
    FeatureName::ALL
        .iter()
        .map(|f| FeatureModel::load(dir, *f).with_context(|| format!("cannot load the `{f}` model")))
        .collect()
}

const FEATURES_INDEX: &str = "features.json";

#[derive(Serialize, Deserialize)]
struct FeatureIndex {
    fs: f64,
    n_samples: usize,
    streams: Vec<FeatureName>,
}

/// One signal container per stream plus a JSON index naming them.
pub fn save_features(f: &StoryFeatures, dir: &Path) -> anyhow::Result<()> {
    fresh_dir(dir)?;
    for (name, s) in &f.streams {
        s.signal.save(dir.join(format!("{name}.sig")))?;
    }
    let index = FeatureIndex { fs: f.fs(), n_samples: f.n_samples(), streams: f.streams.keys().copied().collect() };
    fs::write(dir.join(FEATURES_INDEX), serde_json::to_vec_pretty(&index)?)?;
    Ok(())
}

pub fn load_features(dir: &Path) -> anyhow::Result<StoryFeatures> {
    let path = dir.join(FEATURES_INDEX);
    let index: FeatureIndex = serde_json::from_slice(&fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?)?;
    let mut streams = std::collections::BTreeMap::new();
    for name in index.streams {
        let signal = MultichannelSignal::load(dir.join(format!("{name}.sig")))?;
        if signal.n_samples() != index.n_samples || signal.fs() != index.fs {
            bail!("feature `{name}` in {} does not match its index", dir.display());
        }
        streams.insert(name, FeatureStream::new(name, signal)?);
    }
    Ok(StoryFeatures { streams })
}

fn fresh_dir(dir: &Path) -> anyhow::Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).with_context(|| format!("cannot clear {}", dir.display()))?;
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(())
}

fn rms(s: &MultichannelSignal) -> f64 {
    let d = s.data();
    (d.iter().map(|v| v * v).sum::<f64>() / d.len().max(1) as f64).sqrt()
}
