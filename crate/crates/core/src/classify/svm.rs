//! Soft-margin RBF support vector machine solved by SMO with second-order
//! working-set selection.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
const MAX_ITERATIONS: usize = 1_000_000;
const TAU: f64 = 1e-12;

/// Per-feature standardisation fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let d = x.first().map(Vec::len).ok_or_else(|| invalid("no rows to fit"))?;
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            if row.len() != d {
                return Err(Error::Shape("ragged feature matrix".into()));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for row in x {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        // constant columns are centred but not scaled
        let std = std.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Standardised support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub scaler: Scaler,
    /// Features that enter the kernel; the rest are ignored.
    pub active: Vec<bool>,
    /// Dual objective `0.5 a'Qa - sum a` at the solution.
    pub objective: f64,
    pub iterations: usize,
}

fn rbf(a: &[f64], b: &[f64], active: &[bool], gamma: f64) -> f64 {
    let mut d = 0.0;
    for ((x, y), &on) in a.iter().zip(b).zip(active) {
        if on {
            d += (x - y) * (x - y);
        }
    }
    (-gamma * d).exp()
}

impl SvmModel {
    /// Signed margin; positive means the positive class.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform(x);
        self.decision_scaled(&z)
    }

    fn decision_scaled(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * rbf(sv, z, &self.active, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }

    pub fn n_features(&self) -> usize {
        self.scaler.mean.len()
    }
}

/// Trains on rows `x` with labels `y` (true = positive class), using all
/// features.
pub fn svm_train(x: &[Vec<f64>], y: &[bool], c: f64, gamma: f64) -> Result<SvmModel> {
    let d = x.first().map_or(0, Vec::len);
    svm_train_with(x, y, c, gamma, &vec![true; d], DEFAULT_TOLERANCE)
}

/// Trains with a feature mask and KKT tolerance.
pub fn svm_train_with(
    x: &[Vec<f64>],
    y: &[bool],
    c: f64,
    gamma: f64,
    active: &[bool],
    tol: f64,
) -> Result<SvmModel> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos < 2 || y.len() - n_pos < 2 {
        return Err(invalid("need at least two examples of each class"));
    }
    if !(c > 0.0 && gamma > 0.0 && tol > 0.0) {
        return Err(invalid(format!("C, gamma and tolerance must be positive (C={c}, gamma={gamma})")));
    }
    let scaler = Scaler::fit(x)?;
    if active.len() != scaler.mean.len() {
        return Err(Error::Shape("feature mask length differs from feature count".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("features must be finite"));
    }
    let z: Vec<Vec<f64>> = x.iter().map(|r| scaler.transform(r)).collect();
    let n = z.len();
    let yy: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rbf(&z[i], &z[j], active, gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| yy[i] * yy[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let mut iterations = 0;
    loop {
        // i: maximal violating index from the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if up(alpha[t], yy[t]) {
                let v = -yy[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if low(alpha[t], yy[t]) {
                    let v = -yy[t] * grad[t];
                    gmin = gmin.min(v);
                    let b = gmax - v;
                    if b > 0.0 {
                        let a = (k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t]).max(TAU);
                        let score = -(b * b) / a;
                        if score < best {
                            best = score;
                            j_sel = Some(t);
                        }
                    }
                }
            }
        }
        let residual = gmax - gmin;
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if residual < tol {
            break;
        }
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            return Err(Error::NotConverged { iterations, residual });
        }
        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        if yy[i] != yy[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }
    // rho from free vectors, else the midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut n_free = 0;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = yy[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            n_free += 1;
        } else if (alpha[t] >= c && yy[t] < 0.0) || (alpha[t] <= 0.0 && yy[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { (ub + lb) / 2.0 };
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(z[t].clone());
            dual_coef.push(alpha[t] * yy[t]);
        }
    }
    Ok(SvmModel {
        support_vectors,
        dual_coef,
        bias: -rho,
        gamma,
        c,
        scaler,
        active: active.to_vec(),
        objective,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_split_at_midpoint() {
        let x = vec![vec![0.0], vec![0.1], vec![1.9], vec![2.0]];
        let y = vec![false, false, true, true];
        let m = svm_train(&x, &y, 1e3, 1.0).unwrap();
        assert!(m.decision(&[0.95]) < 0.0);
        assert!(m.decision(&[1.05]) > 0.0);
        assert!(m.decision(&[1.0]).abs() < 1e-2, "{}", m.decision(&[1.0]));
    }

    #[test]
    fn xor_is_separable() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![false, false, true, true];
        let m = svm_train(&x, &y, 10.0, 1.0).unwrap();
        for (r, l) in x.iter().zip(&y) {
            assert_eq!(m.predict(r), *l);
        }
    }

    #[test]
    fn dual_coefficients_are_boxed() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let y: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let m = svm_train(&x, &y, 0.5, 1.0).unwrap();
        assert!(m.dual_coef.iter().all(|c| c.abs() <= 0.5 + 1e-12));
        let s: f64 = m.dual_coef.iter().sum();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn needs_both_classes() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(svm_train(&x, &[true, true, false], 1.0, 1.0).is_err());
        assert!(svm_train(&x, &[true, false], 1.0, 1.0).is_err());
    }
}
