//! Story-level stimulus features and subject-level EEG preparation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cohortsim::{Story, StoredStory};
use crate::dsp::{extract_envelopes, BandDef, BandName, EegPreprocessor, EnvelopeConfig, PreprocessConfig};
use crate::error::{invalid, Error, Result};
use crate::signal::MultichannelSignal;
use crate::speechfeat::{
    encode_linguistic, onset_train, word_values, AlignmentTrack, CohortModel, FeatureName, FeatureStream, Lexicon,
    NGramModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub envelope: EnvelopeConfig,
    pub ngram_order: usize,
    /// Add-k smoothing of the word model.
    pub ngram_k: f64,
    /// Pauses longer than this split the story into sentences for the
    /// word model's context.
    pub sentence_gap_s: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { envelope: EnvelopeConfig::default(), ngram_order: 2, ngram_k: 0.1, sentence_gap_s: 0.15 }
    }
}

/// Borrowed story resources, from a generated story or one read from disk.
#[derive(Debug, Clone, Copy)]
pub struct StoryRefs<'a> {
    pub words: &'a AlignmentTrack,
    pub phonemes: &'a AlignmentTrack,
    pub audio: &'a MultichannelSignal,
    pub lexicon: &'a Lexicon,
    pub corpus: &'a [Vec<String>],
}

impl<'a> From<&'a Story> for StoryRefs<'a> {
    fn from(s: &'a Story) -> Self {
        Self { words: &s.words, phonemes: &s.phonemes, audio: &s.audio, lexicon: &s.lexicon, corpus: &s.corpus }
    }
}

impl<'a> From<&'a StoredStory> for StoryRefs<'a> {
    fn from(s: &'a StoredStory) -> Self {
        Self { words: &s.words, phonemes: &s.phonemes, audio: &s.audio, lexicon: &s.lexicon, corpus: &s.corpus }
    }
}

/// The eleven feature streams of one story at the envelope output rate,
/// each scaled to unit RMS.
#[derive(Debug, Clone)]
pub struct StoryFeatures {
    pub streams: BTreeMap<FeatureName, FeatureStream>,
}

impl StoryFeatures {
    pub fn get(&self, f: FeatureName) -> Result<&FeatureStream> {
        self.streams.get(&f).ok_or_else(|| invalid(format!("feature `{f}` was not extracted")))
    }

    pub fn n_samples(&self) -> usize {
        self.streams.values().next().map_or(0, |s| s.values().len())
    }

    pub fn fs(&self) -> f64 {
        self.streams.values().next().map_or(0.0, |s| s.signal.fs())
    }
}

/// Groups story words into pause-delimited sentences.
pub fn sentences_from_pauses(words: &AlignmentTrack, gap_s: f64) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    let mut last_offset = f64::NEG_INFINITY;
    for t in words.tokens() {
        if out.is_empty() || t.onset_s - last_offset > gap_s {
            out.push(Vec::new());
        }
        out.last_mut().unwrap().push(t.symbol.clone());
        last_offset = t.offset_s;
    }
    out
}

fn unit_rms(f: FeatureStream) -> Result<FeatureStream> {
    let v = f.values();
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    if !(rms > 0.0) {
        return Err(Error::Numerical(format!("feature `{}` is silent", f.name)));
    }
    let data = v.iter().map(|x| x / rms).collect();
    FeatureStream::new(f.name, MultichannelSignal::mono(data, f.signal.fs())?)
}

pub fn extract_features(story: StoryRefs<'_>, cfg: &FeatureConfig) -> Result<StoryFeatures> {
    let fs = cfg.envelope.out_fs;
    let d = story.words.duration_s();
    let n = (d * fs).round() as usize;
    let mut streams = BTreeMap::new();

    let bands: Vec<BandDef> = BandName::ANALYSIS.iter().map(|&b| BandDef::canonical(b)).collect();
    for (band, env) in BandName::ANALYSIS.iter().zip(extract_envelopes(story.audio, &bands, &cfg.envelope)?) {
        if env.n_samples() != n {
            return Err(Error::Shape(format!("{band} envelope has {} samples, expected {n}", env.n_samples())));
        }
        let name = FeatureName::envelope(*band).expect("analysis bands have envelope features");
        streams.insert(name, FeatureStream::new(name, env)?);
    }

    let cohort = CohortModel::new(story.lexicon);
    let (mut surprisal, mut entropy) = (Vec::new(), Vec::new());
    for w in story.words.tokens() {
        for s in cohort.stats(&w.symbol)? {
            surprisal.push(s.surprisal);
            entropy.push(s.entropy);
        }
    }
    if surprisal.len() != story.phonemes.len() {
        return Err(Error::Shape(format!(
            "{} phonemes in the alignment but {} in the lexicon pronunciations",
            story.phonemes.len(),
            surprisal.len()
        )));
    }
    let model = NGramModel::train(story.corpus, cfg.ngram_order, cfg.ngram_k)?;
    let values = word_values(&model, story.lexicon, &sentences_from_pauses(story.words, cfg.sentence_gap_s))?;
    let freq: Vec<f64> = values.iter().map(|v| v.frequency).collect();
    let wsurp: Vec<f64> = values.iter().map(|v| v.surprisal).collect();

    let impulses = [
        onset_train(FeatureName::PhonemeOnset, story.phonemes, fs, d)?,
        onset_train(FeatureName::WordOnset, story.words, fs, d)?,
        encode_linguistic(FeatureName::PhonemeSurprisal, story.phonemes, &surprisal, fs, d)?,
        encode_linguistic(FeatureName::CohortEntropy, story.phonemes, &entropy, fs, d)?,
        encode_linguistic(FeatureName::WordFrequency, story.words, &freq, fs, d)?,
        encode_linguistic(FeatureName::WordSurprisal, story.words, &wsurp, fs, d)?,
    ];
    for s in impulses {
        streams.insert(s.name, s);
    }
    let streams = streams.into_iter().map(|(k, v)| Ok((k, unit_rms(v)?))).collect::<Result<_>>()?;
    Ok(StoryFeatures { streams })
}

/// Samples dropped at each end of every stream to discard the transients
/// of the EEG and envelope band filters.
pub fn edge_trim(pre: &PreprocessConfig, env: &EnvelopeConfig, eeg_fs: f64) -> usize {
    let eeg = pre.edge_samples(EegPreprocessor::new(*pre).filter_fs(eeg_fs));
    let env_delay_s = (env.filter_order / 2) as f64 / env.filter_fs;
    eeg.max((env_delay_s * env.out_fs).ceil() as usize)
}

pub fn trim(signal: &MultichannelSignal, edge: usize) -> Result<MultichannelSignal> {
    let n = signal.n_samples();
    if 2 * edge >= n {
        return Err(invalid(format!("recording of {n} samples is too short to trim {edge} samples per edge")));
    }
    signal.slice_samples(edge, n - edge)
}

/// Referenced, band-filtered, z-scored and edge-trimmed EEG per band.
pub fn prepare_eeg(
    raw: MultichannelSignal,
    bands: &[BandName],
    pre: &PreprocessConfig,
    edge: usize,
) -> Result<BTreeMap<BandName, MultichannelSignal>> {
    let p = EegPreprocessor::new(*pre);
    let referenced = p.reference(raw)?;
    let defs: Vec<BandDef> = bands.iter().map(|&b| BandDef::canonical(b)).collect();
    let filtered = p.bands(&referenced, &defs)?;
    bands.iter().zip(filtered).map(|(b, s)| Ok((*b, trim(&s, edge)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speechfeat::{Level, Token};

    #[test]
    fn pauses_split_sentences() {
        let tok = |s: &str, on: f64, off: f64| Token { symbol: s.into(), onset_s: on, offset_s: off };
        let words = AlignmentTrack::new(
            Level::Word,
            vec![tok("a", 0.0, 0.2), tok("b", 0.25, 0.4), tok("c", 0.8, 1.0), tok("d", 1.05, 1.2)],
            2.0,
        )
        .unwrap();
        let s = sentences_from_pauses(&words, 0.15);
        assert_eq!(s, vec![vec!["a".to_string(), "b".into()], vec!["c".into(), "d".into()]]);
    }

    #[test]
    fn trim_matches_filter_delay() {
        let pre = PreprocessConfig::default();
        assert_eq!(edge_trim(&pre, &EnvelopeConfig::default(), 64.0), 125);
        let s = MultichannelSignal::mono((0..300).map(|i| i as f64).collect(), 64.0).unwrap();
        let t = trim(&s, 125).unwrap();
        assert_eq!(t.n_samples(), 50);
        assert_eq!(t.channel(0)[0], 125.0);
        assert!(trim(&s, 150).is_err());
    }
}
