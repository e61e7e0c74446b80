//! Match-mismatch examples.
//!
//! An example pairs an EEG window with two candidate stimulus windows: the
//! one recorded at the same time (matched) and one starting a fixed offset
//! after the matched window ends (mismatched). Every base pair is emitted
//! twice with the candidate order swapped, so labels are exactly balanced.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::MultichannelSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    FirstIsMatch,
    SecondIsMatch,
}

impl PairLabel {
    /// 1.0 when the first candidate is the match.
    pub fn target(self) -> f64 {
        match self {
            PairLabel::FirstIsMatch => 1.0,
            PairLabel::SecondIsMatch => 0.0,
        }
    }
}

/// One labelled example, stored as sample offsets into the EEG and the
/// stimulus it was cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub subject_id: String,
    pub feature_name: String,
    /// Index of the base pair this example (or its swapped twin) came from.
    pub base_index: usize,
    pub window: usize,
    pub matched_start: usize,
    pub mismatched_start: usize,
    pub label: PairLabel,
    pub start_s: f64,
    pub mismatched_start_s: f64,
}

impl SegmentPair {
    /// Sample offset of the first and second candidate.
    pub fn candidate_starts(&self) -> (usize, usize) {
        match self.label {
            PairLabel::FirstIsMatch => (self.matched_start, self.mismatched_start),
            PairLabel::SecondIsMatch => (self.mismatched_start, self.matched_start),
        }
    }

    pub fn matched_end_s(&self, fs: f64) -> f64 {
        (self.matched_start + self.window) as f64 / fs
    }

    /// Copies the EEG window and both candidate windows out of the sources.
    pub fn windows(
        &self,
        eeg: &MultichannelSignal,
        feature: &MultichannelSignal,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let cut = |s: &MultichannelSignal, start: usize| -> Vec<f64> {
            s.channels().flat_map(|c| c[start..start + self.window].iter().copied()).collect()
        };
        let (a, b) = self.candidate_starts();
        (cut(eeg, self.matched_start), cut(feature, a), cut(feature, b))
    }
}

/// Window geometry in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub window_s: f64,
    pub hop_s: f64,
    pub offset_s: f64,
}

impl PairGeometry {
    pub fn new(window_s: f64) -> Self {
        Self { window_s, hop_s: window_s, offset_s: 1.0 }
    }

    /// Number of base pairs in a recording of `n` samples at `fs`.
    pub fn base_count(&self, n: usize, fs: f64) -> usize {
        let w = (self.window_s * fs).round() as usize;
        let h = (self.hop_s * fs).round() as usize;
        let o = (self.offset_s * fs).round() as usize;
        let span = 2 * w + o;
        if n < span || h == 0 {
            0
        } else {
            (n - span) / h + 1
        }
    }
}

/// Cuts swap-balanced match-mismatch examples from an aligned EEG
/// recording and stimulus (which may have several channels, e.g. the two
/// inputs of a dual-feature model).
///
/// Matched windows start at `0, hop, 2 hop, ...`; a base pair is kept only
/// when `start + window + offset + window` fits in the recording.
pub fn make_pairs(
    eeg: &MultichannelSignal,
    feature: &MultichannelSignal,
    geometry: &PairGeometry,
    subject_id: &str,
    feature_name: &str,
) -> Result<Vec<SegmentPair>> {
    if (eeg.fs() - feature.fs()).abs() > 1e-9 || eeg.n_samples() != feature.n_samples() {
        return Err(Error::Shape(format!(
            "EEG ({} samples at {} Hz) and stimulus ({} samples at {} Hz) are not aligned",
            eeg.n_samples(),
            eeg.fs(),
            feature.n_samples(),
            feature.fs()
        )));
    }
    let PairGeometry { window_s, hop_s, offset_s } = *geometry;
    if !(window_s > 0.0 && hop_s > 0.0 && offset_s >= 0.0) {
        return Err(invalid("window and hop must be positive and the offset non-negative"));
    }
    let fs = eeg.fs();
    let n = eeg.n_samples();
    let w = (window_s * fs).round() as usize;
    let h = (hop_s * fs).round() as usize;
    let o = (offset_s * fs).round() as usize;
    if w == 0 || h == 0 {
        return Err(invalid("window and hop must span at least one sample"));
    }
    if w > n {
        return Err(invalid(format!(
            "window of {window_s} s is longer than the {} s recording",
            n as f64 / fs
        )));
    }
    let count = geometry.base_count(n, fs);
    let mut pairs = Vec::with_capacity(2 * count);
    for base in 0..count {
        let t = base * h;
        let mm = t + w + o;
        for label in [PairLabel::FirstIsMatch, PairLabel::SecondIsMatch] {
            pairs.push(SegmentPair {
                subject_id: subject_id.to_string(),
                feature_name: feature_name.to_string(),
                base_index: base,
                window: w,
                matched_start: t,
                mismatched_start: mm,
                label,
                start_s: t as f64 / fs,
                mismatched_start_s: mm as f64 / fs,
            });
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<SegmentPair>,
    pub val: Vec<SegmentPair>,
    pub test: Vec<SegmentPair>,
}

/// Splits one subject's pairs into contiguous blocks of source time: the
/// first 80% of base pairs train, the next 10% validate, the rest test.
/// Swapped twins always share a partition.
pub fn split_pairs(pairs: &[SegmentPair], spec: &SplitSpec) -> Result<Split> {
    let sum = spec.train + spec.val + spec.test;
    if (sum - 1.0).abs() > 1e-9 || spec.train < 0.0 || spec.val < 0.0 || spec.test < 0.0 {
        return Err(invalid(format!("split fractions must be non-negative and sum to 1, got {sum}")));
    }
    if let Some(p) = pairs.iter().find(|p| p.subject_id != pairs[0].subject_id) {
        return Err(invalid(format!(
            "split expects one subject, found `{}` and `{}`",
            pairs[0].subject_id, p.subject_id
        )));
    }
    let mut bases: Vec<usize> = pairs.iter().map(|p| p.base_index).collect();
    bases.sort_unstable();
    bases.dedup();
    let n = bases.len();
    if n < 10 {
        return Err(invalid(format!("need at least 10 base pairs to split, got {n}")));
    }
    let n_train = (spec.train * n as f64).round() as usize;
    let n_val = ((spec.val * n as f64).round() as usize).min(n - n_train);
    let rank = |b: usize| bases.binary_search(&b).unwrap();
    let mut split = Split::default();
    for p in pairs {
        let r = rank(p.base_index);
        let dst = if r < n_train {
            &mut split.train
        } else if r < n_train + n_val {
            &mut split.val
        } else {
            &mut split.test
        };
        dst.push(p.clone());
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signals(seconds: usize) -> (MultichannelSignal, MultichannelSignal) {
        let n = seconds * 64;
        let eeg = MultichannelSignal::zeros(4, n, 64.0).unwrap();
        let feat = MultichannelSignal::mono((0..n).map(|i| i as f64).collect(), 64.0).unwrap();
        (eeg, feat)
    }

    #[test]
    fn twenty_minute_count() {
        let (eeg, feat) = signals(1200);
        let pairs = make_pairs(&eeg, &feat, &PairGeometry::new(5.0), "s1", "env").unwrap();
        assert_eq!(pairs.len(), 476);
        let pairs10 = make_pairs(&eeg, &feat, &PairGeometry::new(10.0), "s1", "word").unwrap();
        assert_eq!(pairs10.len(), 2 * ((1200 - 21) / 10 + 1));
    }

    #[test]
    fn too_short_recording_yields_nothing() {
        let (eeg, feat) = signals(10);
        assert!(make_pairs(&eeg, &feat, &PairGeometry::new(5.0), "s1", "env").unwrap().is_empty());
        assert!(make_pairs(&eeg, &feat, &PairGeometry::new(11.0), "s1", "env").is_err());
    }

    #[test]
    fn mismatch_starts_one_second_after_match_ends() {
        let (eeg, feat) = signals(120);
        for p in make_pairs(&eeg, &feat, &PairGeometry::new(5.0), "s1", "env").unwrap() {
            assert_eq!(p.mismatched_start_s - (p.start_s + 5.0), 1.0);
        }
    }

    #[test]
    fn windows_follow_label() {
        let (eeg, feat) = signals(30);
        let pairs = make_pairs(&eeg, &feat, &PairGeometry::new(5.0), "s1", "env").unwrap();
        let (_, a, b) = pairs[0].windows(&eeg, &feat);
        assert_eq!(a[0], 0.0);
        assert_eq!(b[0], 384.0);
        let (_, a, b) = pairs[1].windows(&eeg, &feat);
        assert_eq!((a[0], b[0]), (384.0, 0.0));
        assert_eq!(a.len(), 320);
    }

    #[test]
    fn misaligned_inputs_error() {
        let (eeg, _) = signals(30);
        let feat = MultichannelSignal::mono(vec![0.0; 100], 64.0).unwrap();
        assert!(make_pairs(&eeg, &feat, &PairGeometry::new(5.0), "s1", "env").is_err());
    }

    #[test]
    fn split_arithmetic_and_partition() {
        // 100 base pairs: 5 s windows, span 11 s, 5 s hop -> 506 s
        let (eeg, feat) = signals(506);
        let pairs = make_pairs(&eeg, &feat, &PairGeometry::new(5.0), "s1", "env").unwrap();
        assert_eq!(pairs.len(), 200);
        let s = split_pairs(&pairs, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (160, 20, 20));
        let last_train = s.train.iter().map(|p| p.matched_start + p.window).max().unwrap();
        let first_val = s.val.iter().map(|p| p.matched_start).min().unwrap();
        let last_val = s.val.iter().map(|p| p.matched_start + p.window).max().unwrap();
        let first_test = s.test.iter().map(|p| p.matched_start).min().unwrap();
        assert!(last_train <= first_val && last_val <= first_test);
        for part in [&s.train, &s.val, &s.test] {
            let first = part.iter().filter(|p| p.label == PairLabel::FirstIsMatch).count();
            assert_eq!(2 * first, part.len());
        }
    }

    #[test]
    fn split_needs_ten_base_pairs() {
        let (eeg, feat) = signals(50);
        let pairs = make_pairs(&eeg, &feat, &PairGeometry::new(5.0), "s1", "env").unwrap();
        assert!(pairs.len() < 20);
        assert!(split_pairs(&pairs, &SplitSpec::default()).is_err());
    }
}
