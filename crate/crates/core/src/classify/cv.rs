//! Leave-one-subject-out evaluation with an inner stratified grid search.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::profile::{profile_feature_names, TrackingProfile};
use super::svm::{svm_train_with, SvmModel, DEFAULT_TOLERANCE};
use crate::error::{invalid, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub c_grid: Vec<f64>,
    /// Gamma candidates as multiples of `1 / n_active_features`.
    pub gamma_scales: Vec<f64>,
    pub inner_folds: usize,
    pub pruning: bool,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            c_grid: (0..7).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 6.0)).collect(),
            gamma_scales: vec![0.1, 1.0, 10.0],
            inner_folds: 5,
            pruning: false,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.gamma_scales.is_empty() {
            return Err(invalid("hyperparameter grids must be non-empty"));
        }
        if self.c_grid.iter().chain(&self.gamma_scales).any(|v| !(*v > 0.0)) {
            return Err(invalid("grid values must be positive"));
        }
        if self.inner_folds < 2 {
            return Err(invalid("need at least 2 inner folds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub subject_id: String,
    pub is_patient: bool,
    pub predicted_patient: bool,
    pub score: f64,
}

/// What one outer fold saw, for auditing leakage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub test_subject: String,
    pub c: f64,
    pub gamma: f64,
    pub active_features: Vec<String>,
    pub inner_accuracy: f64,
    pub n_train: usize,
    /// SHA-256 over the training subjects' ids and feature values.
    pub train_hash: String,
    pub train_subjects: Vec<String>,
    pub test_excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub predictions: Vec<SubjectPrediction>,
    pub folds: Vec<FoldRecord>,
}

impl CvResult {
    pub fn scores(&self) -> Vec<f64> {
        self.predictions.iter().map(|p| p.score).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.predictions.iter().map(|p| p.is_patient).collect()
    }

    pub fn predicted(&self) -> Vec<bool> {
        self.predictions.iter().map(|p| p.predicted_patient).collect()
    }
}

/// Class-stratified assignment of `labels` to `k` folds.
pub fn stratified_folds(labels: &[bool], k: usize, r: &mut rng::Rng) -> Result<Vec<usize>> {
    let mut fold = vec![0; labels.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(invalid(format!(
                "only {} {} subjects for {k} inner folds; every fold needs both classes",
                idx.len(),
                if class { "patient" } else { "control" }
            )));
        }
        idx.shuffle(r);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    Ok(fold)
}

fn hash_training(x: &[Vec<f64>], ids: &[String]) -> String {
    let mut h = Sha256::new();
    for (row, id) in x.iter().zip(ids) {
        h.update(id.as_bytes());
        h.update([0u8]);
        for v in row {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean inner-fold accuracy of one hyperparameter setting.
fn inner_score(x: &[Vec<f64>], y: &[bool], folds: &[usize], k: usize, c: f64, gamma: f64, active: &[bool], tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..k {
        let (mut xt, mut yt, mut xv, mut yv) = (vec![], vec![], vec![], vec![]);
        for i in 0..x.len() {
            if folds[i] == f {
                xv.push(x[i].clone());
                yv.push(y[i]);
            } else {
                xt.push(x[i].clone());
                yt.push(y[i]);
            }
        }
        let m = svm_train_with(&xt, &yt, c, gamma, active, tol)?;
        let correct = xv.iter().zip(&yv).filter(|(r, l)| m.predict(r) == **l).count();
        total += correct as f64 / xv.len() as f64;
    }
    Ok(total / k as f64)
}

/// Best `(score, C, gamma)` over the grid; ties keep the earliest point.
fn grid_search(
    x: &[Vec<f64>],
    y: &[bool],
    folds: &[usize],
    active: &[bool],
    cfg: &CvConfig,
) -> Result<(f64, f64, f64)> {
    let d = active.iter().filter(|&&a| a).count().max(1) as f64;
    let mut best: Option<(f64, f64, f64)> = None;
    for &c in &cfg.c_grid {
        for &gs in &cfg.gamma_scales {
            let gamma = gs / d;
            let s = inner_score(x, y, folds, cfg.inner_folds, c, gamma, active, cfg.tolerance)?;
            if best.is_none_or(|b| s > b.0) {
                best = Some((s, c, gamma));
            }
        }
    }
    Ok(best.unwrap())
}

/// Selects hyperparameters (and, with pruning, features) on `x`, `y` by
/// inner cross-validation and refits on all of it.
pub fn fit_selected(x: &[Vec<f64>], y: &[bool], cfg: &CvConfig, seed: u64) -> Result<(SvmModel, f64)> {
    let d = x.first().map_or(0, Vec::len);
    let mut r = rng::stream(seed, 0);
    let folds = stratified_folds(y, cfg.inner_folds, &mut r)?;
    let mut active = vec![true; d];
    let mut best = grid_search(x, y, &folds, &active, cfg)?;
    if cfg.pruning {
        loop {
            let mut round: Option<(usize, (f64, f64, f64))> = None;
            for f in 0..d {
                if !active[f] || active.iter().filter(|&&a| a).count() == 1 {
                    continue;
                }
                let mut trial = active.clone();
                trial[f] = false;
                let s = grid_search(x, y, &folds, &trial, cfg)?;
                if round.is_none_or(|(_, b)| s.0 > b.0) {
                    round = Some((f, s));
                }
            }
            match round {
                Some((f, s)) if s.0 > best.0 => {
                    active[f] = false;
                    best = s;
                }
                _ => break,
            }
        }
    }
    let model = svm_train_with(x, y, best.1, best.2, &active, cfg.tolerance)?;
    Ok((model, best.0))
}

/// Leave-one-subject-out predictions with per-fold model selection.
pub fn nested_cv(profiles: &[TrackingProfile], cfg: &CvConfig) -> Result<CvResult> {
    cfg.validate()?;
    if profiles.len() < 10 {
        return Err(invalid(format!("nested cross-validation needs at least 10 subjects, got {}", profiles.len())));
    }
    for p in profiles {
        p.validate()?;
    }
    let x: Vec<Vec<f64>> = profiles.iter().map(TrackingProfile::feature_vector).collect();
    let y: Vec<bool> = profiles.iter().map(TrackingProfile::is_patient).collect();
    let ids: Vec<String> = profiles.iter().map(|p| p.subject_id.clone()).collect();
    let names = profile_feature_names();
    let folds: Vec<Result<(SubjectPrediction, FoldRecord)>> = (0..profiles.len())
        .into_par_iter()
        .map(|test| {
            let train: Vec<usize> = (0..profiles.len()).filter(|&i| i != test).collect();
            let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let idt: Vec<String> = train.iter().map(|&i| ids[i].clone()).collect();
            let (model, inner) = fit_selected(&xt, &yt, cfg, rng::derive_seed(cfg.seed, &ids[test]))?;
            let score = model.decision(&x[test]);
            let record = FoldRecord {
                test_subject: ids[test].clone(),
                c: model.c,
                gamma: model.gamma,
                active_features: names.iter().zip(&model.active).filter(|(_, a)| **a).map(|(n, _)| n.clone()).collect(),
                inner_accuracy: inner,
                n_train: xt.len(),
                train_hash: hash_training(&xt, &idt),
                test_excluded: !idt.contains(&ids[test]),
                train_subjects: idt,
            };
            let pred = SubjectPrediction {
                subject_id: ids[test].clone(),
                is_patient: y[test],
                predicted_patient: score > 0.0,
                score,
            };
            Ok((pred, record))
        })
        .collect();
    let mut result = CvResult { predictions: vec![], folds: vec![] };
    for f in folds {
        let (p, r) = f?;
        result.predictions.push(p);
        result.folds.push(r);
    }
    Ok(result)
}
