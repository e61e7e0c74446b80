//! Experiment configuration: flat `dotted.key = value` text layered over
//! the library defaults.
//!
//! ```text
//! # comments run to the end of the line
//! seed = 3
//! cohort.n_controls = 22
//! analysis.cv.c_grid = [0.1, 1, 10]
//!
//! [pretrain.training.single]
//! max_epochs = 20
//! ```
//!
//! Values are parsed as JSON when they can be and taken as bare strings
//! otherwise, so `features.envelope.method.method = analytic_magnitude`
//! works without quotes. Every key must name a field that exists in the default
//! configuration.

use std::path::{Path, PathBuf};

use neurotrack::cohortsim::CohortSpec;
use neurotrack::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Syntax { path: String, line: usize, msg: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Seeds the draw of listeners; copied into `cohort.seed`.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cohort: CohortSpec,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let cohort = CohortSpec::default();
        Self { seed: cohort.seed, output_dir: "neurotrack-out".into(), cohort, pipeline: PipelineConfig::default() }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses `text` over the defaults. `origin` only labels errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut tree = serde_json::to_value(Self::default()).expect("defaults serialize");
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let syntax = |msg: &str| ConfigError::Syntax { path: origin.into(), line: i + 1, msg: msg.into() };
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section header"))?.trim();
                if !valid_key(name) {
                    return Err(syntax("bad section name"));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(syntax("bad key"));
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            set_path(&mut tree, &full, parse_value(value.trim()))?;
        }
        let mut cfg: Self = serde_json::from_value(tree).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.cohort.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.cohort.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |e: neurotrack::Error| ConfigError::Invalid(e.to_string());
        self.cohort.validate().map_err(bad)?;
        self.pipeline.validate().map_err(bad)?;
        let w = &self.pipeline.windows;
        if !(w.offset_s < w.envelope_s.min(w.phoneme_s).min(w.word_s)) {
            return Err(ConfigError::Invalid("the mismatch offset must be shorter than every window".into()));
        }
        if self.pipeline.specs().len() != 11 {
            return Err(ConfigError::Invalid("every feature needs a model".into()));
        }
        Ok(())
    }

    /// Semantic content as canonical JSON: keys sorted, no whitespace,
    /// and the output location left out.
    pub fn canonical(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("output_dir");
        v
    }

    pub fn hash(&self) -> String {
        hash_json(&self.canonical())
    }

    /// Key-value rendering of the full configuration, readable by
    /// [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }
}

pub fn hash_json(v: &Value) -> String {
    hex(&Sha256::digest(v.to_string().as_bytes()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn strip_comment(line: &str) -> &str {
    // a `#` inside a quoted string is data
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
}

fn parse_value(v: &str) -> Value {
    serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let unknown = || ConfigError::UnknownKey(key.to_string());
    let (parents, last) = match key.rsplit_once('.') {
        Some((p, l)) => (p.split('.').collect::<Vec<_>>(), l),
        None => (Vec::new(), key),
    };
    let mut node = tree;
    for part in parents {
        node = node.get_mut(part).ok_or_else(unknown)?;
    }
    let slot = node.as_object_mut().and_then(|m| m.get_mut(last)).ok_or_else(unknown)?;
    *slot = value;
    Ok(())
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::String(s) => out.push_str(&format!("{prefix} = {s}\n")),
        other => out.push_str(&format!("{prefix} = {other}\n")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&cfg.to_text(), "text").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sections_and_comments() {
        let cfg = ExperimentConfig::parse(
            "seed = 9 # inline\n[cohort]\nn_controls = 4\n\n[analysis.cv]\nc_grid = [1, 2]\n",
            "t",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.cohort.seed, 9);
        assert_eq!(cfg.cohort.n_controls, 4);
        assert_eq!(cfg.pipeline.analysis.cv.c_grid, vec![1.0, 2.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::parse("cohort.n_control = 3", "t"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("nope = 3", "t"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("cohort = 3", "t"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn envelope_method_switches_variant() {
        let cfg = ExperimentConfig::parse("features.envelope.method.method = analytic_magnitude", "t").unwrap();
        assert_eq!(cfg.pipeline.features.envelope.method, neurotrack::dsp::EnvelopeMethod::AnalyticMagnitude);
        let cfg = ExperimentConfig::parse("features.envelope.method.n_bands = 8", "t").unwrap();
        assert!(matches!(
            cfg.pipeline.features.envelope.method,
            neurotrack::dsp::EnvelopeMethod::Gammatone { n_bands: 8, .. }
        ));
    }

    #[test]
    fn hash_ignores_layout_and_output() {
        let a = ExperimentConfig::parse("seed = 5\ncohort.n_patients = 7", "a").unwrap();
        let b = ExperimentConfig::parse("# note\n\n  cohort.n_patients=7   \nseed=5\noutput_dir = elsewhere\n", "b").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::parse("seed = 5\ncohort.n_patients = 8", "c").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation_catches_empty_groups() {
        let cfg = ExperimentConfig::parse("cohort.n_controls = 0", "t").unwrap();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    proptest::proptest! {
        #[test]
        fn text_round_trip(
            seed in 0u64..u64::MAX,
            n in 2usize..200,
            minutes in 0.1f64..60.0,
            q in 1e-6f64..1.0,
            grid in proptest::collection::vec(1e-3f64..1e3, 1..6),
        ) {
            let mut cfg = ExperimentConfig::default().with_seed(seed);
            cfg.cohort.n_patients = n;
            cfg.cohort.story_minutes = minutes;
            cfg.pipeline.analysis.fdr_q = q;
            cfg.pipeline.analysis.cv.c_grid = grid;
            let back = ExperimentConfig::parse(&cfg.to_text(), "text").unwrap();
            proptest::prop_assert_eq!(back.hash(), cfg.hash());
            proptest::prop_assert_eq!(back, cfg);
        }
    }
}
