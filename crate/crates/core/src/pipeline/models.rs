//! The eleven feature models: their wiring, pretraining on control
//! listeners and evaluation on cohort subjects.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{prepare_eeg, trim, StoryFeatures};
use crate::classify::{PairOutcome, SubjectOutcomes};
use crate::cohortsim::Group;
use crate::dsp::{BandName, PreprocessConfig};
use crate::error::{invalid, Error, Result};
use crate::mmtask::{make_pairs, split_pairs, PairGeometry, SplitSpec};
use crate::nn::{
    evaluate_groups, evaluate_pairs, group_pairs, load_checkpoint, save_checkpoint, train_model, Architecture,
    EpochStats, MatchMismatchModel, ModelConfig, Source, TrainConfig,
};
use crate::rng::derive_seed;
use crate::signal::MultichannelSignal;
use crate::speechfeat::{FeatureClass, FeatureName};

/// Window lengths in seconds; the hop equals the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub envelope_s: f64,
    pub phoneme_s: f64,
    pub word_s: f64,
    pub offset_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { envelope_s: 5.0, phoneme_s: 5.0, word_s: 10.0, offset_s: 1.0 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.envelope_s, self.phoneme_s, self.word_s, self.offset_s].iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("windows and offset must be positive"));
        }
        Ok(())
    }
}

/// Which stimulus channels and EEG band a feature model consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub feature: FeatureName,
    pub inputs: Vec<FeatureName>,
    pub band: BandName,
    pub window_s: f64,
}

impl ModelSpec {
    pub fn architecture(&self) -> Architecture {
        if self.inputs.len() == 1 {
            Architecture::SingleFeature
        } else {
            Architecture::DualFeature
        }
    }

    pub fn geometry(&self, w: &WindowConfig) -> PairGeometry {
        PairGeometry { window_s: self.window_s, hop_s: self.window_s, offset_s: w.offset_s }
    }

    /// Stimulus channels stacked in input order.
    pub fn stimulus(&self, features: &StoryFeatures) -> Result<MultichannelSignal> {
        let parts = self.inputs.iter().map(|f| Ok(&features.get(*f)?.signal)).collect::<Result<Vec<_>>>()?;
        MultichannelSignal::stack(&parts)
    }
}

/// Envelope models are single-feature on EEG of their own band; onset
/// and linguistic models are dual-feature on broadband EEG, paired with
/// the onsets of their level.
pub fn model_specs(w: &WindowConfig) -> Vec<ModelSpec> {
    FeatureName::ALL
        .iter()
        .map(|&feature| {
            if let Some(band) = feature.band() {
                return ModelSpec { feature, inputs: vec![feature], band, window_s: w.envelope_s };
            }
            let (onset, window_s) = if feature.is_word_level() {
                (FeatureName::WordOnset, w.word_s)
            } else {
                (FeatureName::PhonemeOnset, w.phoneme_s)
            };
            debug_assert!(feature.class() != FeatureClass::Acoustic);
            ModelSpec { feature, inputs: vec![feature, onset], band: BandName::Broad, window_s }
        })
        .collect()
}

/// Distinct EEG bands used by `specs`, in canonical order.
pub fn bands_of(specs: &[ModelSpec]) -> Vec<BandName> {
    BandName::ANALYSIS.iter().copied().filter(|b| specs.iter().any(|s| s.band == *b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSettings {
    pub model: ModelConfig,
    pub single: TrainConfig,
    pub dual: TrainConfig,
    pub split: SplitSpec,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            model: ModelConfig::new(Architecture::SingleFeature),
            single: TrainConfig::default(),
            dual: TrainConfig::default(),
            split: SplitSpec::default(),
        }
    }
}

/// A pretrained feature model with its training record.
#[derive(Debug, Clone)]
pub struct FeatureModel {
    pub spec: ModelSpec,
    pub model: MatchMismatchModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Accuracy on the held-out tail of every pretraining recording.
    pub test_accuracy: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    spec: ModelSpec,
    history: Vec<EpochStats>,
    best_epoch: usize,
    test_accuracy: Option<f64>,
}

impl FeatureModel {
    /// Checkpoint named after the feature, with the spec and training
    /// record in its metadata.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let rec = ModelRecord {
            spec: self.spec.clone(),
            history: self.history.clone(),
            best_epoch: self.best_epoch,
            test_accuracy: self.test_accuracy.is_finite().then_some(self.test_accuracy),
        };
        save_checkpoint(&self.model, serde_json::to_value(rec)?, dir, self.spec.feature.as_str())?;
        Ok(())
    }

    pub fn load(dir: &Path, feature: FeatureName) -> Result<Self> {
        let (model, manifest) = load_checkpoint(dir, feature.as_str())?;
        let rec: ModelRecord = serde_json::from_value(manifest.metadata)?;
        if rec.spec.feature != feature {
            return Err(Error::Format(format!("checkpoint `{feature}` holds a `{}` model", rec.spec.feature)));
        }
        Ok(Self {
            spec: rec.spec,
            model,
            history: rec.history,
            best_epoch: rec.best_epoch,
            test_accuracy: rec.test_accuracy.unwrap_or(f64::NAN),
        })
    }
}

/// Trains every model in `specs` on the given listeners, whose EEG is
/// prepared band by band so only one band is held at a time.
pub fn pretrain_models(
    specs: &[ModelSpec],
    subjects: &[MultichannelSignal],
    features: &StoryFeatures,
    pre: &PreprocessConfig,
    windows: &WindowConfig,
    edge: usize,
    settings: &TrainingSettings,
    seed: u64,
    mut progress: impl FnMut(&str),
) -> Result<Vec<FeatureModel>> {
    windows.validate()?;
    if subjects.is_empty() {
        return Err(invalid("no pretraining subjects"));
    }
    let mut out: Vec<Option<FeatureModel>> = vec![None; specs.len()];
    for band in bands_of(specs) {
        let eeg = subjects
            .iter()
            .map(|raw| Ok(prepare_eeg(raw.clone(), &[band], pre, edge)?.remove(&band).unwrap()))
            .collect::<Result<Vec<_>>>()?;
        for (k, spec) in specs.iter().enumerate().filter(|(_, s)| s.band == band) {
            let stimulus = trim(&spec.stimulus(features)?, edge)?;
            let sources: Vec<Source<'_>> = eeg.iter().map(|e| Source { eeg: e, stimulus: &stimulus }).collect();
            let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
            for (i, e) in eeg.iter().enumerate() {
                let id = format!("pretrain-{i}");
                let pairs = make_pairs(e, &stimulus, &spec.geometry(windows), &id, spec.feature.as_str())?;
                let split = split_pairs(&pairs, &settings.split)?;
                train.extend(group_pairs(i, &split.train));
                val.extend(group_pairs(i, &split.val));
                test.extend(group_pairs(i, &split.test));
            }
            let arch = spec.architecture();
            let cfg = TrainConfig {
                seed: derive_seed(seed, spec.feature.as_str()),
                ..if arch == Architecture::SingleFeature { settings.single.clone() } else { settings.dual.clone() }
            };
            let model_cfg = ModelConfig { architecture: arch, ..settings.model.clone() };
            let trained = train_model(model_cfg, &sources, &train, &val, &cfg)?;
            let test_accuracy = if test.is_empty() { f64::NAN } else { evaluate_groups(&trained.model, &sources, &test)?.1 };
            progress(&format!(
                "pretrained {} ({} epochs, best {}, test accuracy {:.3})",
                spec.feature,
                trained.history.len(),
                trained.best_epoch,
                test_accuracy
            ));
            out[k] = Some(FeatureModel {
                spec: spec.clone(),
                model: trained.model,
                history: trained.history,
                best_epoch: trained.best_epoch,
                test_accuracy,
            });
        }
    }
    Ok(out.into_iter().map(|m| m.expect("every spec has a band")).collect())
}

/// A cohort listener to evaluate.
#[derive(Debug, Clone)]
pub struct SubjectInput {
    pub id: String,
    pub group: Group,
    pub age: f64,
    pub eeg: MultichannelSignal,
}

/// Every pair outcome of one subject under every model. Window ends are
/// reported in story time, so they include the trimmed leading edge.
pub fn evaluate_subject_models(
    models: &[FeatureModel],
    subject: SubjectInput,
    features: &StoryFeatures,
    pre: &PreprocessConfig,
    windows: &WindowConfig,
    edge: usize,
) -> Result<SubjectOutcomes> {
    if subject.eeg.n_samples() != features.n_samples() || subject.eeg.fs() != features.fs() {
        return Err(Error::Shape(format!(
            "EEG of `{}` ({} samples at {} Hz) does not match the story features ({} samples at {} Hz)",
            subject.id,
            subject.eeg.n_samples(),
            subject.eeg.fs(),
            features.n_samples(),
            features.fs()
        )));
    }
    let specs: Vec<ModelSpec> = models.iter().map(|m| m.spec.clone()).collect();
    let bands = prepare_eeg(subject.eeg, &bands_of(&specs), pre, edge)?;
    let fs = features.fs();
    let offset_s = edge as f64 / fs;
    let mut outcomes = Vec::new();
    let mut stimuli: BTreeMap<Vec<FeatureName>, MultichannelSignal> = BTreeMap::new();
    for m in models {
        if !stimuli.contains_key(&m.spec.inputs) {
            stimuli.insert(m.spec.inputs.clone(), trim(&m.spec.stimulus(features)?, edge)?);
        }
        let stimulus = &stimuli[&m.spec.inputs];
        let eeg = &bands[&m.spec.band];
        let pairs = make_pairs(eeg, stimulus, &m.spec.geometry(windows), &subject.id, m.spec.feature.as_str())?;
        if pairs.is_empty() {
            return Err(invalid(format!("recording of `{}` is too short for `{}` windows", subject.id, m.spec.feature)));
        }
        let correct = evaluate_pairs(&m.model, eeg, stimulus, &pairs)?;
        outcomes.extend(pairs.iter().zip(correct).map(|(p, c)| PairOutcome {
            feature: m.spec.feature,
            matched_end_s: p.matched_end_s(fs) + offset_s,
            correct: c,
        }));
    }
    Ok(SubjectOutcomes { subject_id: subject.id, group: subject.group, age: subject.age, outcomes })
}
