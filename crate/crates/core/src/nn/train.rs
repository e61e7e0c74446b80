//! Mini-batch Adam training with early stopping, and evaluation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{bce_with_logit, sigmoid, ExampleView, MatchMismatchModel, ModelConfig};
use crate::error::{invalid, Error, Result};
use crate::mmtask::{PairLabel, SegmentPair};
use crate::rng;
use crate::signal::MultichannelSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self { cfg, m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grads[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grads[i] * grads[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= learning_rate * mh / (vh.sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Examples (single candidate orders) per gradient step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), batch_size: 64, max_epochs: 100, patience: 5, seed: 0 }
    }
}

/// Aligned EEG and stimulus (`features` channels) of one recording.
#[derive(Debug, Clone, Copy)]
pub struct Source<'a> {
    pub eeg: &'a MultichannelSignal,
    pub stimulus: &'a MultichannelSignal,
}

/// A base pair with the candidate orders that are present.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGroup {
    pub source: usize,
    pub window: usize,
    pub eeg_start: usize,
    pub matched_start: usize,
    pub mismatched_start: usize,
    /// `(swapped, target)` where unswapped means the matched window is
    /// the first candidate.
    pub orientations: Vec<(bool, f64)>,
    /// Index of each orientation in the original pair list.
    pub pair_indices: Vec<usize>,
}

/// Groups swapped twins so their embeddings are computed once.
pub fn group_pairs(source: usize, pairs: &[SegmentPair]) -> Vec<PairGroup> {
    let mut groups: Vec<PairGroup> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let key = (p.base_index, p.matched_start, p.mismatched_start, p.window);
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(PairGroup {
                source,
                window: p.window,
                eeg_start: p.matched_start,
                matched_start: p.matched_start,
                mismatched_start: p.mismatched_start,
                orientations: vec![],
                pair_indices: vec![],
            });
            groups.len() - 1
        });
        let swapped = p.label == PairLabel::SecondIsMatch;
        groups[g].orientations.push((swapped, if swapped { 0.0 } else { 1.0 }));
        groups[g].pair_indices.push(i);
    }
    groups
}

fn cut(s: &MultichannelSignal, start: usize, w: usize) -> Vec<f64> {
    s.channels().flat_map(|c| c[start..start + w].iter().copied()).collect()
}

fn check_sources(model: &MatchMismatchModel, sources: &[Source<'_>]) -> Result<()> {
    let cfg = model.config();
    for (i, s) in sources.iter().enumerate() {
        if s.eeg.n_channels() != cfg.eeg_channels || s.stimulus.n_channels() != cfg.architecture.n_features() {
            return Err(Error::Shape(format!(
                "source {i}: model expects {} EEG channels and {} stimulus channels, got {} and {}",
                cfg.eeg_channels,
                cfg.architecture.n_features(),
                s.eeg.n_channels(),
                s.stimulus.n_channels()
            )));
        }
        if s.eeg.n_samples() != s.stimulus.n_samples() {
            return Err(Error::Shape(format!("source {i}: EEG and stimulus lengths differ")));
        }
    }
    Ok(())
}

fn group_forward(
    model: &MatchMismatchModel,
    sources: &[Source<'_>],
    g: &PairGroup,
) -> Result<super::model::ForwardPass> {
    let src = sources.get(g.source).ok_or_else(|| invalid(format!("unknown source {}", g.source)))?;
    let end = g.eeg_start.max(g.matched_start).max(g.mismatched_start) + g.window;
    if end > src.eeg.n_samples() {
        return Err(Error::Shape(format!("window ending at sample {end} exceeds the recording")));
    }
    let eeg = cut(src.eeg, g.eeg_start, g.window);
    let first = cut(src.stimulus, g.matched_start, g.window);
    let second = cut(src.stimulus, g.mismatched_start, g.window);
    model.forward(&ExampleView { eeg: &eeg, first: &first, second: &second, t: g.window })
}

/// Summed loss and gradient over `groups`, scaled by `scale`. Work is
/// split into fixed chunks and reduced in order, so the result does not
/// depend on the thread count.
fn batch_gradient(
    model: &MatchMismatchModel,
    sources: &[Source<'_>],
    groups: &[&PairGroup],
    scale: f64,
) -> Result<(f64, Vec<f64>)> {
    const CHUNK: usize = 4;
    let parts: Vec<Result<(f64, Vec<f64>)>> = groups
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; model.n_params()];
            let mut loss = 0.0;
            for grp in chunk {
                let pass = group_forward(model, sources, grp)?;
                loss += model.backward(&pass, &grp.orientations, scale, &mut g, false).0;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = vec![0.0; model.n_params()];
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        for (t, v) in total.iter_mut().zip(&g) {
            *t += v;
        }
    }
    Ok((loss, total))
}

/// Mean loss and accuracy over all orientations.
pub fn evaluate_groups(
    model: &MatchMismatchModel,
    sources: &[Source<'_>],
    groups: &[PairGroup],
) -> Result<(f64, f64)> {
    let outcomes: Vec<Result<(f64, usize, usize)>> = groups
        .par_iter()
        .map(|g| {
            let pass = group_forward(model, sources, g)?;
            let (zp, zq) = model.logits(&pass);
            let mut loss = 0.0;
            let mut correct = 0;
            for &(swapped, y) in &g.orientations {
                let z = if swapped { zq } else { zp };
                loss += bce_with_logit(z, y);
                correct += is_correct(sigmoid(z), y) as usize;
            }
            Ok((loss, correct, g.orientations.len()))
        })
        .collect();
    let (mut loss, mut correct, mut n) = (0.0, 0, 0);
    for o in outcomes {
        let (l, c, k) = o?;
        loss += l;
        correct += c;
        n += k;
    }
    if n == 0 {
        return Err(invalid("no examples to evaluate"));
    }
    Ok((loss / n as f64, correct as f64 / n as f64))
}

/// A prediction is correct when it falls strictly on the target's side
/// of 0.5; exactly 0.5 counts as wrong.
pub fn is_correct(prob: f64, target: f64) -> bool {
    if target >= 0.5 {
        prob > 0.5
    } else {
        prob < 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: MatchMismatchModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Trains a freshly initialised model. `train` and `val` index into
/// `sources` via [`PairGroup::source`].
pub fn train_model(
    config: ModelConfig,
    sources: &[Source<'_>],
    train: &[PairGroup],
    val: &[PairGroup],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let mut r = rng::stream(cfg.seed, 0);
    let model = MatchMismatchModel::init(config, &mut r)?;
    continue_training(model, sources, train, val, cfg)
}

/// Trains from the given weights.
pub fn continue_training(
    mut model: MatchMismatchModel,
    sources: &[Source<'_>],
    train: &[PairGroup],
    val: &[PairGroup],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    if train.is_empty() || val.is_empty() {
        return Err(invalid("training and validation sets must be non-empty"));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(invalid("batch size and epoch count must be positive"));
    }
    check_sources(&model, sources)?;
    let mut adam = Adam::new(cfg.adam.clone(), model.n_params());
    let mut best = (f64::INFINITY, model.params().to_vec(), 0usize);
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.max_epochs {
        let mut r = rng::stream(cfg.seed, 1 + epoch as u64);
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        let mut epoch_n = 0usize;
        let mut batch: Vec<&PairGroup> = Vec::new();
        let mut batch_n = 0;
        let mut step = 0;
        for (pos, &i) in order.iter().enumerate() {
            batch.push(&train[i]);
            batch_n += train[i].orientations.len();
            if batch_n < cfg.batch_size && pos + 1 < order.len() {
                continue;
            }
            let (loss, grads) = batch_gradient(&model, sources, &batch, 1.0 / batch_n as f64)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss or gradient at epoch {epoch}, step {step} (loss {loss})"
                )));
            }
            adam.step(model.params_mut(), &grads);
            epoch_loss += loss;
            epoch_n += batch_n;
            batch.clear();
            batch_n = 0;
            step += 1;
        }
        let (val_loss, val_accuracy) = evaluate_groups(&model, sources, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("validation loss diverged at epoch {epoch}")));
        }
        history.push(EpochStats { epoch, train_loss: epoch_loss / epoch_n as f64, val_loss, val_accuracy });
        if val_loss < best.0 {
            best = (val_loss, model.params().to_vec(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    model.set_params(best.1)?;
    Ok(TrainedModel { model, history, best_epoch: best.2 })
}

/// Correctness of every pair, in input order.
pub fn evaluate_pairs(
    model: &MatchMismatchModel,
    eeg: &MultichannelSignal,
    stimulus: &MultichannelSignal,
    pairs: &[SegmentPair],
) -> Result<Vec<bool>> {
    let sources = [Source { eeg, stimulus }];
    check_sources(model, &sources)?;
    let groups = group_pairs(0, pairs);
    let per_group: Vec<Result<Vec<(usize, bool)>>> = groups
        .par_iter()
        .map(|g| {
            let pass = group_forward(model, &sources, g)?;
            let (p, q) = model.probabilities(&pass);
            Ok(g.orientations
                .iter()
                .zip(&g.pair_indices)
                .map(|(&(swapped, y), &i)| (i, is_correct(if swapped { q } else { p }, y)))
                .collect())
        })
        .collect();
    let mut out = vec![false; pairs.len()];
    for g in per_group {
        for (i, c) in g? {
            out[i] = c;
        }
    }
    Ok(out)
}

/// Fraction of pairs classified correctly.
pub fn evaluate_subject(
    model: &MatchMismatchModel,
    eeg: &MultichannelSignal,
    stimulus: &MultichannelSignal,
    pairs: &[SegmentPair],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("no pairs to evaluate"));
    }
    let c = evaluate_pairs(model, eeg, stimulus, pairs)?;
    Ok(c.iter().filter(|&&b| b).count() as f64 / c.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -2.0, 0.5];
        let mut a = Adam::new(AdamConfig::default(), 3);
        a.step(&mut p, &[3.0, -0.1, 0.0]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-2.0 + 1e-3)).abs() < 1e-9);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = vec![3.0];
        let mut a = Adam::new(AdamConfig { learning_rate: 0.05, ..AdamConfig::default() }, 1);
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            a.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ties_count_as_wrong() {
        assert!(!is_correct(0.5, 1.0));
        assert!(!is_correct(0.5, 0.0));
        assert!(is_correct(0.51, 1.0));
        assert!(is_correct(0.49, 0.0));
    }
}
