//! Rank-sum test and Benjamini-Hochberg adjustment.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::profile::TrackingProfile;
use crate::error::{invalid, Result};
use crate::speechfeat::FeatureName;

/// Combined size at or below which p-values are exact.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Mann-Whitney U of group `a`: its rank sum minus `n_a (n_a + 1) / 2`.
    pub w: f64,
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_group(v: &[f64], name: &str) -> Result<()> {
    if v.len() < 2 {
        return Err(invalid(format!("group {name} needs at least 2 values, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("group {name} contains non-finite values")));
    }
    Ok(())
}

/// Two-sided Wilcoxon rank-sum test of `a` against `b`.
///
/// Exact (enumerating every assignment of the pooled midranks to group
/// `a`) when `n_a + n_b <= 12`; otherwise the normal approximation with
/// tie and continuity corrections.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSum> {
    check_group(a, "a")?;
    check_group(b, "b")?;
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;
    let mean = (na * nb) as f64 / 2.0;
    if n <= EXACT_MAX_N {
        let dev = (u - mean).abs();
        let mut hits = 0u64;
        let mut total = 0u64;
        for_each_subset(n, na, |subset| {
            let s: f64 = subset.iter().map(|&i| ranks[i]).sum();
            let ui = s - (na * (na + 1)) as f64 / 2.0;
            if (ui - mean).abs() >= dev - 1e-9 {
                hits += 1;
            }
            total += 1;
        });
        return Ok(RankSum { w: u, p: hits as f64 / total as f64, exact: true });
    }
    let mut ties = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        // every value tied
        return Ok(RankSum { w: u, p: 1.0, exact: false });
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let p = (2.0 * Normal::standard().sf(z)).min(1.0);
    Ok(RankSum { w: u, p, exact: false })
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // rightmost position that can still advance
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrResult {
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

/// Benjamini-Hochberg step-up adjustment at rate `q`.
pub fn fdr_bh(pvals: &[f64], q: f64) -> Result<FdrResult> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("p-values must lie in [0, 1], got {p}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid(format!("FDR rate must lie in (0, 1], got {q}")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 1.0;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(pvals[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    let reject = adjusted.iter().map(|&a| a <= q).collect();
    Ok(FdrResult { adjusted, reject })
}

/// Patient-vs-control test of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub feature: FeatureName,
    pub w: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub reject: bool,
}

/// Rank-sum test per feature (patients as group `a`), adjusted across
/// features at rate `q`.
pub fn group_tests(profiles: &[TrackingProfile], q: f64) -> Result<Vec<StatTestResult>> {
    let mut raw = Vec::with_capacity(FeatureName::ALL.len());
    for f in FeatureName::ALL {
        let pick = |patient: bool| -> Vec<f64> {
            profiles.iter().filter(|p| p.is_patient() == patient).map(|p| p.accuracies[&f]).collect()
        };
        raw.push((f, wilcoxon_rank_sum(&pick(true), &pick(false))?));
    }
    let pvals: Vec<f64> = raw.iter().map(|(_, r)| r.p).collect();
    let fdr = fdr_bh(&pvals, q)?;
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, (feature, r))| StatTestResult {
            feature,
            w: r.w,
            p: r.p,
            p_adjusted: fdr.adjusted[i],
            reject: fdr.reject[i],
        })
        .collect())
}
