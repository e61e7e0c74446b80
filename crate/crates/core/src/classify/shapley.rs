//! Exact Shapley attribution with an interventional value function.

use super::svm::SvmModel;
use crate::error::{invalid, Error, Result};

/// Largest feature count enumerated exactly.
pub const MAX_EXACT_FEATURES: usize = 16;

/// Shapley values of `f` at `x`: `v(S)` is the mean of `f` over the
/// background rows with the features in `S` replaced by those of `x`.
pub fn shapley_exact(f: &(dyn Fn(&[f64]) -> f64 + Sync), x: &[f64], background: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = x.len();
    if d == 0 || d > MAX_EXACT_FEATURES {
        return Err(invalid(format!("exact Shapley values need 1-{MAX_EXACT_FEATURES} features, got {d}")));
    }
    if background.is_empty() {
        return Err(invalid("empty background set"));
    }
    if background.iter().any(|b| b.len() != d) {
        return Err(Error::Shape("background rows differ in length from x".into()));
    }
    let n_sets = 1usize << d;
    let mut value = vec![0.0; n_sets];
    let mut mixed = vec![0.0; d];
    for (s, v) in value.iter_mut().enumerate() {
        let mut acc = 0.0;
        for b in background {
            for k in 0..d {
                mixed[k] = if s >> k & 1 == 1 { x[k] } else { b[k] };
            }
            acc += f(&mixed);
        }
        *v = acc / background.len() as f64;
    }
    // weight of a coalition of size s not containing i: s! (d - s - 1)! / d!
    let fact: Vec<f64> = (0..=d).scan(1.0, |a, k| {
        if k > 0 {
            *a *= k as f64;
        }
        Some(*a)
    })
    .collect();
    let weight: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - s - 1] / fact[d]).collect();
    let mut phi = vec![0.0; d];
    for s in 0..n_sets {
        let size = s.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *p += weight[size] * (value[s | 1 << i] - value[s]);
            }
        }
    }
    Ok(phi)
}

/// Shapley values of an SVM decision score.
pub fn shapley_values(model: &SvmModel, x: &[f64], background: &[Vec<f64>]) -> Result<Vec<f64>> {
    if model.support_vectors.is_empty() {
        return Err(invalid("model has no support vectors"));
    }
    if x.len() != model.n_features() {
        return Err(Error::Shape(format!("model has {} features, profile has {}", model.n_features(), x.len())));
    }
    shapley_exact(&|z: &[f64]| model.decision(z), x, background)
}
