//! Classification as a function of how much of the recording is used.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cv::{nested_cv, CvConfig};
use super::metrics::{metrics, roc_auc};
use super::profile::TrackingProfile;
use super::stats::midranks;
use crate::cohortsim::Group;
use crate::error::{invalid, Result};
use crate::speechfeat::FeatureName;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub feature: FeatureName,
    /// End of the matched window in story time, seconds.
    pub matched_end_s: f64,
    pub correct: bool,
}

/// Every evaluated pair of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectOutcomes {
    pub subject_id: String,
    pub group: Group,
    pub age: f64,
    pub outcomes: Vec<PairOutcome>,
}

impl SubjectOutcomes {
    /// Accuracies over pairs whose matched window ends by `max_s`.
    pub fn profile_at(&self, max_s: f64) -> Result<TrackingProfile> {
        let mut counts: BTreeMap<FeatureName, (usize, usize)> = FeatureName::ALL.iter().map(|f| (*f, (0, 0))).collect();
        for o in &self.outcomes {
            if o.matched_end_s <= max_s {
                let c = counts.get_mut(&o.feature).expect("feature key set is fixed");
                c.0 += o.correct as usize;
                c.1 += 1;
            }
        }
        let mut acc = BTreeMap::new();
        for (f, (hit, n)) in counts {
            if n == 0 {
                return Err(invalid(format!("no `{f}` pairs end within {max_s} s for `{}`", self.subject_id)));
            }
            acc.insert(f, hit as f64 / n as f64);
        }
        TrackingProfile::new(&self.subject_id, self.group, self.age, acc)
    }

    /// Accuracies over every pair.
    pub fn profile(&self) -> Result<TrackingProfile> {
        self.profile_at(f64::INFINITY)
    }
}

pub fn profiles_at(subjects: &[SubjectOutcomes], max_s: f64) -> Result<Vec<TrackingProfile>> {
    subjects.iter().map(|s| s.profile_at(max_s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub minutes: u32,
    pub accuracy: f64,
    pub auc: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Nested cross-validation repeated on the first `k` minutes for each `k`
/// in `minutes`.
pub fn length_sweep(subjects: &[SubjectOutcomes], minutes: &[u32], cfg: &CvConfig) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(minutes.len());
    for &k in minutes {
        if k == 0 {
            return Err(invalid("sweep lengths must be at least one minute"));
        }
        let profiles = profiles_at(subjects, 60.0 * k as f64)?;
        let cv = nested_cv(&profiles, cfg)?;
        let m = metrics(&cv.predicted(), &cv.labels())?;
        let roc = roc_auc(&cv.scores(), &cv.labels())?;
        out.push(SweepPoint {
            minutes: k,
            accuracy: m.accuracy,
            auc: roc.auc,
            f1: m.f1,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
        });
    }
    Ok(out)
}

/// Spearman rank correlation with midranks for ties; 0 when either side
/// is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (midranks(x), midranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(n_per_feature: usize) -> SubjectOutcomes {
        let mut outcomes = vec![];
        for f in FeatureName::ALL {
            for i in 0..n_per_feature {
                outcomes.push(PairOutcome { feature: f, matched_end_s: 30.0 * (i + 1) as f64, correct: i % 2 == 0 });
            }
        }
        SubjectOutcomes { subject_id: "s".into(), group: Group::Control, age: 70.0, outcomes }
    }

    #[test]
    fn truncation_counts_only_early_pairs() {
        let s = subject(4);
        let p = s.profile_at(60.0).unwrap();
        assert!(p.accuracies.values().all(|&a| a == 0.5));
        let p = s.profile_at(30.0).unwrap();
        assert!(p.accuracies.values().all(|&a| a == 1.0));
        assert_eq!(s.profile_at(120.0).unwrap(), s.profile().unwrap());
        assert!(s.profile_at(10.0).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), 0.0);
    }
}
