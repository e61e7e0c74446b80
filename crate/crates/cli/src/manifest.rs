use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Preprocess,
    Features,
    Train,
    Evaluate,
    Classify,
    Sweep,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Simulate,
        Stage::Preprocess,
        Stage::Features,
        Stage::Train,
        Stage::Evaluate,
        Stage::Classify,
        Stage::Sweep,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Preprocess => "preprocess",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Classify => "classify",
            Stage::Sweep => "sweep",
            Stage::Report => "report",
        }
    }

    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Simulate => &[],
            Stage::Preprocess | Stage::Features => &[Stage::Simulate],
            Stage::Train => &[Stage::Features],
            Stage::Evaluate => &[Stage::Preprocess, Stage::Features, Stage::Train],
            Stage::Classify | Stage::Sweep => &[Stage::Evaluate],
            Stage::Report => &[Stage::Classify, Stage::Sweep],
        }
    }

    /// Parses `all` or a comma-separated list, returned in pipeline order.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>, String> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            out.push(part.parse()?);
        }
        if out.is_empty() {
            return Err("no stages given".into());
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}` (expected one of simulate, preprocess, features, train, evaluate, classify, sweep, report)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    /// Outputs of an earlier run with the same inputs were reused.
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    /// Hash of the configuration the stage reads and of its inputs' keys.
    pub key: String,
    pub wall_s: f64,
    /// Relative to the output root.
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION").to_string(), config_hash, stages: Vec::new() }
    }

    pub fn load(root: &Path) -> anyhow::Result<Option<Self>> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(&path)?;
        Ok(Some(serde_json::from_slice(&bytes).map_err(|e| anyhow::anyhow!("corrupt {}: {e}", path.display()))?))
    }

    /// Written to a temporary file and renamed, so readers never see a
    /// partial manifest.
    pub fn save(&self, root: &Path) -> anyhow::Result<()> {
        let tmp = root.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(&tmp, root.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    pub fn upsert(&mut self, rec: StageRecord) {
        self.stages.retain(|r| r.stage != rec.stage);
        self.stages.push(rec);
        self.stages.sort_by_key(|r| r.stage);
    }

    /// Whether `stage` finished with inputs `key` and its artifacts are
    /// still on disk.
    pub fn is_current(&self, root: &Path, stage: Stage, key: &str) -> bool {
        self.record(stage).is_some_and(|r| {
            r.status != StageStatus::Failed && r.key == key && r.artifacts.iter().all(|a| root.join(a).exists())
        })
    }

    pub fn render(&self) -> String {
        let mut s = format!("tool version  {}\nconfig hash   {}\n\n", self.tool_version, self.config_hash);
        s.push_str(&format!("{:<11} {:<10} {:>9}  artifacts\n", "stage", "status", "wall (s)"));
        for r in &self.stages {
            let status = match r.status {
                StageStatus::Completed => "completed",
                StageStatus::Skipped => "skipped",
                StageStatus::Failed => "failed",
            };
            let first = r.artifacts.first().map(|p| p.display().to_string()).unwrap_or_default();
            let more = if r.artifacts.len() > 1 { format!(" (+{})", r.artifacts.len() - 1) } else { String::new() };
            s.push_str(&format!("{:<11} {:<10} {:>9.2}  {first}{more}\n", r.stage.as_str(), status, r.wall_s));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lists() {
        assert_eq!(Stage::parse_list("all").unwrap().len(), 8);
        assert_eq!(Stage::parse_list("sweep, classify,classify").unwrap(), vec![Stage::Classify, Stage::Sweep]);
        assert!(Stage::parse_list("classify,fit").is_err());
        assert!(Stage::parse_list(" , ").is_err());
    }

    #[test]
    fn dependencies_point_upstream() {
        for s in Stage::ALL {
            assert!(s.dependencies().iter().all(|d| *d < s));
        }
    }

    #[test]
    fn currency_needs_key_and_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "x").unwrap();
        let mut m = RunManifest::new("h".into());
        m.upsert(StageRecord {
            stage: Stage::Simulate,
            status: StageStatus::Completed,
            key: "k".into(),
            wall_s: 0.1,
            artifacts: vec!["a.txt".into()],
        });
        assert!(m.is_current(dir.path(), Stage::Simulate, "k"));
        assert!(!m.is_current(dir.path(), Stage::Simulate, "other"));
        assert!(!m.is_current(dir.path(), Stage::Features, "k"));
        std::fs::remove_file(dir.path().join("a.txt")).unwrap();
        assert!(!m.is_current(dir.path(), Stage::Simulate, "k"));

        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), Some(m));
    }
}
