use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neurotrack_cli::report::bundle_hash;
use neurotrack_cli::{RunManifest, Stage, StageStatus};

const QUICK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/quick.conf");

fn neurotrack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurotrack"))
        .args(args)
        .arg("--quiet")
        .env("NEUROTRACK_OUTPUT", out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("test.conf");
    fs::write(&p, text).unwrap();
    p
}

fn tree_hashes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn default_cohort_has_48_subject_files_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    // the default cohort with a one-minute story to keep the files small
    let cfg = write_config(tmp.path(), "cohort.story_minutes = 1\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = neurotrack(&["simulate", "--config", cfg.to_str().unwrap()], out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let subjects = fs::read_dir(a.join("cohort/subjects")).unwrap().count();
    assert_eq!(subjects, 48);
    assert!(a.join("cohort/cohort.json").exists());
    let (ha, hb) = (tree_hashes(&a.join("cohort")), tree_hashes(&b.join("cohort")));
    assert_eq!(ha.len(), hb.len());
    assert!(ha == hb, "cohort directories differ");

    let o = neurotrack(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "4"], &b);
    assert!(o.status.success());
    assert_ne!(tree_hashes(&b.join("cohort")), ha);
}

#[test]
fn invalid_config_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cohort.n_controls = 0\n");
    let out = tmp.path().join("out");
    let o = neurotrack(&["simulate", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("controls"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(neurotrack(&["run", "--stages", "simulate,fit"], &out).status.code(), Some(1));
    assert_eq!(neurotrack(&["frobnicate"], &out).status.code(), Some(1));
    let cfg = write_config(tmp.path(), "cohort.n_contrls = 3\n");
    let o = neurotrack(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_contrls"));
    assert_eq!(neurotrack(&["inspect"], &out).status.code(), Some(1));
    assert_eq!(neurotrack(&["--help"], &out).status.code(), Some(0));
}

#[test]
fn classify_without_evaluate_outputs_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = neurotrack(&["run", "--config", QUICK, "--stages", "classify"], &out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("`evaluate`"), "{}", stderr(&o));
    let o = neurotrack(&["report", out.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_training_exits_3_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "pretrain.training.single.adam.learning_rate = 1e200\npretrain.training.dual.adam.learning_rate = 1e200\n{}",
        fs::read_to_string(QUICK).unwrap()
    );
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = neurotrack(&["run", "--config", cfg.to_str().unwrap(), "--stages", "simulate,features,train"], &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let diag = out.join("diagnostics/train.txt");
    assert!(stderr(&o).contains(diag.to_str().unwrap()), "{}", stderr(&o));
    assert!(fs::read_to_string(diag).unwrap().contains("numerical failure"));
    let m = RunManifest::load(&out).unwrap().unwrap();
    assert_eq!(m.record(Stage::Train).unwrap().status, StageStatus::Failed);
    assert_eq!(m.record(Stage::Simulate).unwrap().status, StageStatus::Completed);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn full_run_reports_and_reruns_as_noop() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = neurotrack(&["run", "--config", QUICK, "--jobs", "1"], &out);
    assert!(o.status.success(), "{}", stderr(&o));

    let results = out.join("results");
    for f in ["profiles.csv", "group_stats.json", "classification.json", "sweep.csv"] {
        assert!(results.join(f).exists(), "{f}");
    }
    let profiles = csv_rows(&results.join("profiles.csv"));
    assert_eq!(profiles.len(), 10);
    assert_eq!(profiles[0].len(), 14);
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(results.join("group_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["features"].as_array().unwrap().len(), 11);
    let cl: serde_json::Value = serde_json::from_slice(&fs::read(results.join("classification.json")).unwrap()).unwrap();
    for k in ["metrics", "roc", "cv", "shapley"] {
        assert!(cl.get(k).is_some(), "{k}");
    }

    let report = out.join("report");
    let sweep = csv_rows(&report.join("sweep.csv"));
    assert_eq!(sweep.len(), 20);
    assert_eq!(sweep.iter().map(|r| r[0].parse::<u32>().unwrap()).collect::<Vec<_>>(), (1..=20).collect::<Vec<_>>());
    let shap = csv_rows(&report.join("shapley.csv"));
    assert_eq!(shap.len(), 12);
    let phi: Vec<f64> = shap.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(phi.windows(2).all(|w| w[0] >= w[1]), "{phi:?}");
    let roc = csv_rows(&report.join("roc.csv"));
    assert_eq!(roc.first().unwrap(), &vec!["0".to_string(), "0".into()]);
    assert_eq!(roc.last().unwrap(), &vec!["1".to_string(), "1".into()]);
    for svg in ["group_accuracy.svg", "roc.svg", "shapley.svg", "sweep.svg"] {
        assert!(fs::read_to_string(report.join(svg)).unwrap().starts_with("<svg"), "{svg}");
    }
    let before = bundle_hash(&report).unwrap();

    let o = neurotrack(&["run", "--config", QUICK], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = RunManifest::load(&out).unwrap().unwrap();
    assert_eq!(m.stages.len(), 8);
    assert!(m.stages.iter().all(|r| r.status == StageStatus::Skipped), "{m:?}");
    assert_eq!(bundle_hash(&report).unwrap(), before);

    let o = neurotrack(&["inspect"], &out);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains(&m.config_hash) && text.contains("skipped"), "{text}");

    // changing only the analysis reruns the analysis stages
    let cfg = write_config(tmp.path(), &format!("analysis.fdr_q = 0.1\n{}", fs::read_to_string(QUICK).unwrap()));
    let o = neurotrack(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = RunManifest::load(&out).unwrap().unwrap();
    let status = |s: Stage| m.record(s).unwrap().status;
    assert_eq!(status(Stage::Train), StageStatus::Skipped);
    assert_eq!(status(Stage::Evaluate), StageStatus::Skipped);
    assert_eq!(status(Stage::Classify), StageStatus::Completed);
    assert_eq!(status(Stage::Report), StageStatus::Completed);

    // the report subcommand regenerates the same bundle from the results
    let o = neurotrack(&["report", out.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
}
