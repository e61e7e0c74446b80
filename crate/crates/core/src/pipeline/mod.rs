//! The end-to-end experiment: pretrain feature models on simulated
//! control listeners, evaluate them on a cohort, and classify the cohort
//! from the resulting tracking profiles.

mod features;
mod models;

use serde::{Deserialize, Serialize};

pub use features::{
    edge_trim, extract_features, prepare_eeg, sentences_from_pauses, trim, FeatureConfig, StoryFeatures, StoryRefs,
};
pub use models::{
    bands_of, evaluate_subject_models, model_specs, pretrain_models, FeatureModel, ModelSpec, SubjectInput,
    TrainingSettings, WindowConfig,
};

use crate::classify::{
    fit_selected, group_tests, length_sweep, metrics, nested_cv, profile_feature_names, profiles_at,
    shapley_values, CvConfig, CvResult, Metrics, Roc, StatTestResult, SubjectOutcomes, SweepPoint, TrackingProfile,
};
use crate::cohortsim::{CohortGenerator, CohortSpec, EEG_FS};
use crate::dsp::PreprocessConfig;
use crate::error::{invalid, Result};
use crate::rng::derive_seed;

/// Pretraining population: control listeners of a separate simulated
/// cohort that shares the response templates of the evaluated one but
/// hears a different story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub n_subjects: usize,
    pub story_minutes: f64,
    pub seed: u64,
    pub training: TrainingSettings,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { n_subjects: 8, story_minutes: 20.0, seed: 11, training: TrainingSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub cv: CvConfig,
    pub fdr_q: f64,
    pub sweep_minutes: Vec<u32>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { cv: CvConfig::default(), fdr_q: 0.05, sweep_minutes: (1..=20).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub windows: WindowConfig,
    pub pretrain: PretrainConfig,
    pub analysis: AnalysisConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            windows: WindowConfig::default(),
            pretrain: PretrainConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.windows.validate()?;
        self.analysis.cv.validate()?;
        if self.pretrain.n_subjects == 0 {
            return Err(invalid("pretraining needs at least one subject"));
        }
        if !(self.pretrain.story_minutes > 0.0) {
            return Err(invalid("pretraining story length must be positive"));
        }
        if !(self.analysis.fdr_q > 0.0 && self.analysis.fdr_q <= 1.0) {
            return Err(invalid("FDR rate must lie in (0, 1]"));
        }
        if self.analysis.sweep_minutes.contains(&0) {
            return Err(invalid("sweep lengths must be at least one minute"));
        }
        Ok(())
    }

    pub fn edge(&self) -> usize {
        edge_trim(&self.preprocess, &self.features.envelope, EEG_FS)
    }

    pub fn specs(&self) -> Vec<ModelSpec> {
        model_specs(&self.windows)
    }
}

/// Cohort whose controls form the pretraining population of `spec`.
pub fn pretraining_cohort(spec: &CohortSpec, cfg: &PretrainConfig) -> CohortSpec {
    CohortSpec {
        n_controls: cfg.n_subjects.max(2),
        n_patients: 2,
        story_minutes: cfg.story_minutes,
        story_seed: derive_seed(spec.story_seed, "pretraining story"),
        seed: derive_seed(cfg.seed, "pretraining listeners"),
        ..spec.clone()
    }
}

/// Simulates the pretraining listeners of `spec` and trains every feature
/// model on them.
pub fn pretrain(spec: &CohortSpec, cfg: &PipelineConfig, mut progress: impl FnMut(&str)) -> Result<Vec<FeatureModel>> {
    cfg.validate()?;
    let gen = CohortGenerator::new(pretraining_cohort(spec, &cfg.pretrain))?;
    let features = extract_features(StoryRefs::from(gen.story().as_ref()), &cfg.features)?;
    progress("extracted pretraining story features");
    let eeg = (0..cfg.pretrain.n_subjects).map(|i| Ok(gen.subject(i)?.eeg)).collect::<Result<Vec<_>>>()?;
    progress(&format!("simulated {} pretraining listeners", eeg.len()));
    pretrain_models(
        &cfg.specs(),
        &eeg,
        &features,
        &cfg.preprocess,
        &cfg.windows,
        cfg.edge(),
        &cfg.pretrain.training,
        cfg.pretrain.seed,
        progress,
    )
}

/// Evaluates every model on every subject of `gen`, one subject at a time.
pub fn evaluate_cohort(
    gen: &CohortGenerator,
    models: &[FeatureModel],
    cfg: &PipelineConfig,
    progress: impl FnMut(&str),
) -> Result<Vec<SubjectOutcomes>> {
    let features = extract_features(StoryRefs::from(gen.story().as_ref()), &cfg.features)?;
    evaluate_with_features(gen, &features, models, cfg, progress)
}

/// [`evaluate_cohort`] with the features of the cohort's story already
/// extracted.
pub fn evaluate_with_features(
    gen: &CohortGenerator,
    features: &StoryFeatures,
    models: &[FeatureModel],
    cfg: &PipelineConfig,
    mut progress: impl FnMut(&str),
) -> Result<Vec<SubjectOutcomes>> {
    let mut out = Vec::with_capacity(gen.len());
    for i in 0..gen.len() {
        let rec = gen.subject(i)?;
        let input = SubjectInput { id: rec.info.id.clone(), group: rec.info.group, age: rec.info.age, eeg: rec.eeg };
        out.push(evaluate_subject_models(models, input, features, &cfg.preprocess, &cfg.windows, cfg.edge())?);
        progress(&format!("evaluated {}", rec.info.id));
    }
    Ok(out)
}

/// Per-subject Shapley values of the classifier fitted on all subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub features: Vec<String>,
    pub subject_ids: Vec<String>,
    /// `values[subject][feature]`
    pub values: Vec<Vec<f64>>,
    pub mean_abs: Vec<f64>,
}

impl ShapleyReport {
    /// Feature indices by decreasing mean |phi|, ties by column order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.features.len()).collect();
        idx.sort_by(|&a, &b| self.mean_abs[b].total_cmp(&self.mean_abs[a]).then(a.cmp(&b)));
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub profiles: Vec<TrackingProfile>,
    pub group_tests: Vec<StatTestResult>,
    pub cv: CvResult,
    pub metrics: Metrics,
    pub roc: Roc,
    pub shapley: ShapleyReport,
    pub sweep: Vec<SweepPoint>,
}

pub fn shapley_report(profiles: &[TrackingProfile], cv: &CvConfig) -> Result<ShapleyReport> {
    let x: Vec<Vec<f64>> = profiles.iter().map(TrackingProfile::feature_vector).collect();
    let y: Vec<bool> = profiles.iter().map(TrackingProfile::is_patient).collect();
    let (model, _) = fit_selected(&x, &y, cv, derive_seed(cv.seed, "shapley"))?;
    let values = x.iter().map(|row| shapley_values(&model, row, &x)).collect::<Result<Vec<_>>>()?;
    let d = profile_feature_names().len();
    let mean_abs = (0..d).map(|k| values.iter().map(|v| v[k].abs()).sum::<f64>() / values.len() as f64).collect();
    Ok(ShapleyReport {
        features: profile_feature_names(),
        subject_ids: profiles.iter().map(|p| p.subject_id.clone()).collect(),
        values,
        mean_abs,
    })
}

/// Group statistics, nested cross-validation, Shapley attribution and the
/// recording-length sweep.
pub fn analyze(outcomes: &[SubjectOutcomes], cfg: &AnalysisConfig) -> Result<Analysis> {
    let profiles = profiles_at(outcomes, f64::INFINITY)?;
    let tests = group_tests(&profiles, cfg.fdr_q)?;
    let cv = nested_cv(&profiles, &cfg.cv)?;
    let m = metrics(&cv.predicted(), &cv.labels())?;
    let roc = crate::classify::roc_auc(&cv.scores(), &cv.labels())?;
    let shapley = shapley_report(&profiles, &cfg.cv)?;
    let sweep = length_sweep(outcomes, &cfg.sweep_minutes, &cfg.cv)?;
    Ok(Analysis { profiles, group_tests: tests, cv, metrics: m, roc, shapley, sweep })
}
