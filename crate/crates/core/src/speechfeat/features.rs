use std::fmt;

use serde::{Deserialize, Serialize};

use super::alignment::AlignmentTrack;
use crate::dsp::BandName;
use crate::error::{invalid, Error, Result};
use crate::signal::MultichannelSignal;

/// The eleven stimulus representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureName {
    EnvelopeDelta,
    EnvelopeTheta,
    EnvelopeAlpha,
    EnvelopeBeta,
    EnvelopeBroad,
    PhonemeOnset,
    WordOnset,
    PhonemeSurprisal,
    CohortEntropy,
    WordFrequency,
    WordSurprisal,
}

impl FeatureName {
    pub const ALL: [FeatureName; 11] = [
        FeatureName::EnvelopeBroad,
        FeatureName::EnvelopeDelta,
        FeatureName::EnvelopeTheta,
        FeatureName::EnvelopeAlpha,
        FeatureName::EnvelopeBeta,
        FeatureName::PhonemeOnset,
        FeatureName::WordOnset,
        FeatureName::CohortEntropy,
        FeatureName::PhonemeSurprisal,
        FeatureName::WordFrequency,
        FeatureName::WordSurprisal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureName::EnvelopeDelta => "envelope_delta",
            FeatureName::EnvelopeTheta => "envelope_theta",
            FeatureName::EnvelopeAlpha => "envelope_alpha",
            FeatureName::EnvelopeBeta => "envelope_beta",
            FeatureName::EnvelopeBroad => "envelope_broad",
            FeatureName::PhonemeOnset => "phoneme_onset",
            FeatureName::WordOnset => "word_onset",
            FeatureName::PhonemeSurprisal => "phoneme_surprisal",
            FeatureName::CohortEntropy => "cohort_entropy",
            FeatureName::WordFrequency => "word_frequency",
            FeatureName::WordSurprisal => "word_surprisal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    /// The envelope band of an acoustic feature.
    pub fn band(self) -> Option<BandName> {
        Some(match self {
            FeatureName::EnvelopeDelta => BandName::Delta,
            FeatureName::EnvelopeTheta => BandName::Theta,
            FeatureName::EnvelopeAlpha => BandName::Alpha,
            FeatureName::EnvelopeBeta => BandName::Beta,
            FeatureName::EnvelopeBroad => BandName::Broad,
            _ => return None,
        })
    }

    pub fn envelope(band: BandName) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.band() == Some(band))
    }

    pub fn class(self) -> FeatureClass {
        match self {
            FeatureName::PhonemeOnset | FeatureName::WordOnset => FeatureClass::Segmentation,
            FeatureName::PhonemeSurprisal
            | FeatureName::CohortEntropy
            | FeatureName::WordFrequency
            | FeatureName::WordSurprisal => FeatureClass::Linguistic,
            _ => FeatureClass::Acoustic,
        }
    }

    /// True for features attached to word onsets.
    pub fn is_word_level(self) -> bool {
        matches!(self, FeatureName::WordOnset | FeatureName::WordFrequency | FeatureName::WordSurprisal)
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureClass {
    Acoustic,
    Segmentation,
    Linguistic,
}

/// A named one-dimensional stimulus representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    pub name: FeatureName,
    pub signal: MultichannelSignal,
}

impl FeatureStream {
    pub fn new(name: FeatureName, signal: MultichannelSignal) -> Result<Self> {
        if signal.n_channels() != 1 {
            return Err(Error::Shape(format!(
                "feature `{name}` must be one-dimensional, got {} channels",
                signal.n_channels()
            )));
        }
        let signal = signal.with_labels(vec![name.as_str().to_string()])?;
        Ok(Self { name, signal })
    }

    pub fn values(&self) -> &[f64] {
        self.signal.channel(0)
    }
}

/// Nearest sample, ties away from zero.
pub fn onset_sample(onset_s: f64, fs: f64) -> usize {
    (onset_s * fs).round() as usize
}

fn impulse_train(
    name: FeatureName,
    track: &AlignmentTrack,
    values: Option<&[f64]>,
    fs: f64,
    duration_s: f64,
) -> Result<FeatureStream> {
    if !(fs > 0.0 && duration_s > 0.0) {
        return Err(invalid("rate and duration must be positive"));
    }
    let n = (duration_s * fs).round() as usize;
    let mut data = vec![0.0; n];
    for (i, tok) in track.tokens().iter().enumerate() {
        if tok.onset_s >= duration_s {
            return Err(invalid(format!(
                "onset {} s of token {i} is beyond the {duration_s} s stream",
                tok.onset_s
            )));
        }
        let idx = onset_sample(tok.onset_s, fs).min(n.saturating_sub(1));
        let v = values.map_or(1.0, |vals| vals[i]);
        // colliding onsets keep the larger value
        if v > data[idx] {
            data[idx] = v;
        }
    }
    FeatureStream::new(name, MultichannelSignal::mono(data, fs)?)
}

/// Unit impulses at the onset sample of every token.
pub fn onset_train(
    name: FeatureName,
    track: &AlignmentTrack,
    fs: f64,
    duration_s: f64,
) -> Result<FeatureStream> {
    impulse_train(name, track, None, fs, duration_s)
}

/// Impulses at token onsets scaled by per-token values (e.g. surprisal).
pub fn encode_linguistic(
    name: FeatureName,
    track: &AlignmentTrack,
    values: &[f64],
    fs: f64,
    duration_s: f64,
) -> Result<FeatureStream> {
    if values.len() != track.len() {
        return Err(Error::Shape(format!(
            "{} values for {} tokens",
            values.len(),
            track.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(invalid(format!("linguistic values must be finite and non-negative, got {v}")));
    }
    impulse_train(name, track, Some(values), fs, duration_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speechfeat::alignment::{Level, Token};

    fn track(onsets: &[f64]) -> AlignmentTrack {
        let toks = onsets
            .iter()
            .map(|&o| Token { symbol: "x".into(), onset_s: o, offset_s: o + 0.01 })
            .collect();
        AlignmentTrack::new(Level::Word, toks, 2.0).unwrap()
    }

    #[test]
    fn onsets_land_on_rounded_samples() {
        let s = onset_train(FeatureName::WordOnset, &track(&[0.5, 1.0]), 64.0, 2.0).unwrap();
        assert_eq!(s.values().len(), 128);
        assert_eq!(s.values()[32], 1.0);
        assert_eq!(s.values()[64], 1.0);
        assert_eq!(s.values().iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn empty_track_is_silent() {
        let t = AlignmentTrack::new(Level::Word, vec![], 2.0).unwrap();
        let s = onset_train(FeatureName::WordOnset, &t, 64.0, 2.0).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn collisions_keep_unit_value() {
        let s = onset_train(FeatureName::PhonemeOnset, &track(&[0.500, 0.505]), 64.0, 2.0).unwrap();
        assert_eq!(s.values()[32], 1.0);
        assert_eq!(s.values().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn linguistic_values_at_onsets() {
        let s = encode_linguistic(FeatureName::PhonemeSurprisal, &track(&[0.5, 1.0]), &[0.585, 0.0], 64.0, 2.0)
            .unwrap();
        assert_eq!(s.values()[32], 0.585);
        assert_eq!(s.values()[64], 0.0);
        assert!(encode_linguistic(FeatureName::PhonemeSurprisal, &track(&[0.5]), &[1.0, 2.0], 64.0, 2.0).is_err());
        assert!(encode_linguistic(FeatureName::PhonemeSurprisal, &track(&[0.5]), &[-1.0], 64.0, 2.0).is_err());
    }

    #[test]
    fn onset_beyond_duration_errors() {
        assert!(onset_train(FeatureName::WordOnset, &track(&[1.5]), 64.0, 1.0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for f in FeatureName::ALL {
            assert_eq!(FeatureName::parse(f.as_str()), Some(f));
        }
    }
}
