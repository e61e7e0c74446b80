//! Figure data: per-figure CSVs with an SVG rendering of each.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use neurotrack::classify::{read_profiles_csv, SweepPoint, TrackingProfile};
use neurotrack::speechfeat::FeatureName;
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::run::{read_sweep_csv, Classification, GroupStats, CLASSIFICATION_JSON, GROUP_STATS_JSON, PROFILES_CSV, SWEEP_CSV};
use crate::svg::{Chart, PALETTE};

pub const CHECKSUMS: &str = "checksums.txt";

/// Everything the report is drawn from, validated on load.
pub struct Results {
    pub profiles: Vec<TrackingProfile>,
    pub stats: GroupStats,
    pub classification: Classification,
    pub sweep: Vec<SweepPoint>,
}

impl Results {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let open = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).with_context(|| format!("missing results file {}", p.display()))
        };
        let profiles = read_profiles_csv(&open(PROFILES_CSV)?[..]).context("corrupt profiles CSV")?;
        let stats: GroupStats = serde_json::from_slice(&open(GROUP_STATS_JSON)?).context("corrupt group statistics")?;
        let classification: Classification =
            serde_json::from_slice(&open(CLASSIFICATION_JSON)?).context("corrupt classification results")?;
        open(SWEEP_CSV)?;
        let sweep = read_sweep_csv(&dir.join(SWEEP_CSV)).context("corrupt sweep CSV")?;

        ensure!(!profiles.is_empty(), "no profiles");
        ensure!(stats.features.len() == FeatureName::ALL.len(), "group statistics cover {} features", stats.features.len());
        let roc = &classification.roc.points;
        ensure!(
            roc.first() == Some(&(0.0, 0.0)) && roc.last() == Some(&(1.0, 1.0)),
            "ROC curve must run from (0, 0) to (1, 1)"
        );
        let sh = &classification.shapley;
        ensure!(sh.values.iter().all(|v| v.len() == sh.features.len()), "ragged Shapley matrix");
        ensure!(!sweep.is_empty(), "empty sweep");
        Ok(Self { profiles, stats, classification, sweep })
    }
}

/// Reads the run results in `results` and writes the figure bundle to
/// `out`. Returns the written paths.
pub fn write_report(results: &Path, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let r = Results::load(results)?;
    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::create_dir_all(out)?;
    let mut files: Vec<(String, String)> = vec![
        ("group_accuracy.csv".into(), group_accuracy_csv(&r)),
        ("group_stats.csv".into(), group_stats_csv(&r)),
        ("metrics.csv".into(), metrics_csv(&r)),
        ("roc.csv".into(), roc_csv(&r)),
        ("shapley.csv".into(), shapley_csv(&r)),
        ("shapley_values.csv".into(), shapley_values_csv(&r)),
        ("sweep.csv".into(), sweep_csv(&r)),
        ("group_accuracy.svg".into(), group_accuracy_svg(&r)),
        ("roc.svg".into(), roc_svg(&r)),
        ("shapley.svg".into(), shapley_svg(&r)),
        ("sweep.svg".into(), sweep_svg(&r)),
    ];
    let sums: String =
        files.iter().map(|(name, body)| format!("{}  {name}\n", hex(&Sha256::digest(body.as_bytes())))).collect();
    files.push((CHECKSUMS.into(), sums));
    let mut paths = Vec::new();
    for (name, body) in files {
        let p = out.join(name);
        fs::write(&p, body)?;
        paths.push(p);
    }
    Ok(paths)
}

/// SHA-256 over every file of a report directory, in name order.
pub fn bundle_hash(dir: &Path) -> anyhow::Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| Ok(e?.path())).collect::<anyhow::Result<_>>()?;
    names.sort();
    if names.is_empty() {
        bail!("{} is empty", dir.display());
    }
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(&p)?);
    }
    Ok(hex(&h.finalize()))
}

fn csv_of(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn group_accuracy_csv(r: &Results) -> String {
    let rows = FeatureName::ALL.iter().flat_map(|f| {
        r.profiles.iter().map(move |p| {
            vec![f.as_str().into(), p.subject_id.clone(), p.group.as_str().into(), p.accuracies[f].to_string()]
        })
    });
    csv_of(&["feature", "subject_id", "group", "accuracy"], rows)
}

fn group_stats_csv(r: &Results) -> String {
    let rows = r.stats.features.iter().map(|s| {
        vec![
            s.test.feature.as_str().into(),
            s.control_mean.to_string(),
            s.patient_mean.to_string(),
            s.test.w.to_string(),
            s.test.p.to_string(),
            s.test.p_adjusted.to_string(),
            s.test.reject.to_string(),
        ]
    });
    csv_of(&["feature", "control_mean", "patient_mean", "w", "p", "p_adjusted", "reject"], rows)
}

fn metrics_csv(r: &Results) -> String {
    let m = &r.classification.metrics;
    let rows = [
        ("accuracy", m.accuracy),
        ("auc", r.classification.roc.auc),
        ("sensitivity", m.sensitivity),
        ("specificity", m.specificity),
        ("tp", m.tp as f64),
        ("tn", m.tn as f64),
        ("fp", m.fp as f64),
        ("fn", m.fn_ as f64),
    ];
    csv_of(&["metric", "value"], rows.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]))
}

fn roc_csv(r: &Results) -> String {
    csv_of(&["fpr", "tpr"], r.classification.roc.points.iter().map(|(x, y)| vec![x.to_string(), y.to_string()]))
}

fn shapley_csv(r: &Results) -> String {
    let sh = &r.classification.shapley;
    let rows = sh
        .ranking()
        .into_iter()
        .enumerate()
        .map(|(rank, k)| vec![(rank + 1).to_string(), sh.features[k].clone(), sh.mean_abs[k].to_string()]);
    csv_of(&["rank", "feature", "mean_abs_shapley"], rows)
}

fn shapley_values_csv(r: &Results) -> String {
    let sh = &r.classification.shapley;
    let mut header = vec!["subject_id"];
    header.extend(sh.features.iter().map(String::as_str));
    let rows = sh.subject_ids.iter().zip(&sh.values).map(|(id, v)| {
        let mut row = vec![id.clone()];
        row.extend(v.iter().map(f64::to_string));
        row
    });
    csv_of(&header, rows)
}

fn sweep_csv(r: &Results) -> String {
    csv_of(
        &["minutes", "accuracy", "auc", "f1", "sensitivity", "specificity"],
        r.sweep.iter().map(|p| {
            vec![
                p.minutes.to_string(),
                p.accuracy.to_string(),
                p.auc.to_string(),
                p.f1.to_string(),
                p.sensitivity.to_string(),
                p.specificity.to_string(),
            ]
        }),
    )
}

fn group_accuracy_svg(r: &Results) -> String {
    let all: Vec<f64> = r.profiles.iter().flat_map(|p| p.accuracies.values().copied()).collect();
    let lo = (all.iter().copied().fold(1.0, f64::min) * 10.0).floor() / 10.0;
    let n = FeatureName::ALL.len() as f64;
    let mut c = Chart::new("Match-mismatch accuracy by group", (-0.6, n - 0.4), (lo.min(0.4), 1.0), "", "accuracy");
    c.x_categories(&FeatureName::ALL.iter().map(|f| f.as_str().to_string()).collect::<Vec<_>>());
    for (i, f) in FeatureName::ALL.iter().enumerate() {
        for (g, patient) in [false, true].into_iter().enumerate() {
            let x = i as f64 + if patient { 0.18 } else { -0.18 };
            let vals: Vec<f64> = r.profiles.iter().filter(|p| p.is_patient() == patient).map(|p| p.accuracies[f]).collect();
            for (k, v) in vals.iter().enumerate() {
                // deterministic horizontal spread
                let jitter = ((k * 37) % 11) as f64 / 10.0 * 0.12 - 0.06;
                c.dot(x + jitter, *v, PALETTE[g]);
            }
            if !vals.is_empty() {
                c.tick(x, vals.iter().sum::<f64>() / vals.len() as f64, 0.12, "#000");
            }
        }
        if let Some(s) = r.stats.features.iter().find(|s| s.test.feature == *f) {
            if s.test.reject {
                let px = c.px(i as f64);
                let py = c.py(1.0) + 14.0;
                c.text(px, py, "*", "middle", 16);
            }
        }
    }
    c.legend(&[("control", PALETTE[0]), ("patient", PALETTE[1])]);
    c.finish()
}

fn roc_svg(r: &Results) -> String {
    let roc = &r.classification.roc;
    let mut c = Chart::new(&format!("ROC (AUC {:.3})", roc.auc), (0.0, 1.0), (0.0, 1.0), "false positive rate", "true positive rate");
    c.x_ticks(&(0..=4).map(|i| (i as f64 / 4.0, format!("{:.2}", i as f64 / 4.0))).collect::<Vec<_>>());
    c.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999", true);
    c.polyline(&roc.points, PALETTE[0], false);
    c.finish()
}

fn shapley_svg(r: &Results) -> String {
    let sh = &r.classification.shapley;
    let order = sh.ranking();
    let top = sh.mean_abs.iter().copied().fold(0.0, f64::max).max(1e-12);
    let n = order.len() as f64;
    let mut c = Chart::new("Feature importance (mean |Shapley value|)", (0.0, top * 1.35), (-0.6, n - 0.4), "mean |phi|", "");
    for (rank, &k) in order.iter().enumerate() {
        let y = n - 1.0 - rank as f64;
        c.hbar(y, sh.mean_abs[k], PALETTE[0]);
        let (px, py) = (c.px(sh.mean_abs[k]) + 4.0, c.py(y) + 4.0);
        c.text(px, py, &sh.features[k], "start", 10);
    }
    c.finish()
}

fn sweep_svg(r: &Results) -> String {
    let max_m = r.sweep.iter().map(|p| p.minutes).max().unwrap_or(1) as f64;
    let mut c = Chart::new("Classification vs recording length", (0.0, max_m + 1.0), (0.0, 1.0), "minutes", "score");
    c.x_ticks(&r.sweep.iter().map(|p| (p.minutes as f64, p.minutes.to_string())).collect::<Vec<_>>());
    let acc: Vec<(f64, f64)> = r.sweep.iter().map(|p| (p.minutes as f64, p.accuracy)).collect();
    let auc: Vec<(f64, f64)> = r.sweep.iter().map(|p| (p.minutes as f64, p.auc)).collect();
    c.polyline(&acc, PALETTE[0], false);
    c.polyline(&auc, PALETTE[1], true);
    for (x, y) in &acc {
        c.dot(*x, *y, PALETTE[0]);
    }
    c.legend(&[("accuracy", PALETTE[0]), ("AUC", PALETTE[1])]);
    c.finish()
}
