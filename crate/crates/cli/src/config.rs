//! Run configuration: a TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use neuroprobe::attribution::{Augmentation, ScorerKind};
use neuroprobe::intervention::Direction;
use neuroprobe::tasks::{PlantedSpec, TaskFamily, TrainSettings};
use neuroprobe::Precision;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Trained,
    Planted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub precision: Precision,
    pub tasks: Vec<TaskFamily>,
    /// "default", "compact" or a path to a template file.
    pub template: String,
    /// Minimum eval comprehension before attribution is allowed.
    pub gate: f64,
    /// Marker questions the planted model is verified on.
    pub plant_check_questions: usize,
    pub paths: Paths,
    pub data: DataConfig,
    pub model: ModelSection,
    pub train: TrainSettings,
    pub planted: PlantedSpec,
    pub attribution: AttributionSection,
    pub intervention: InterventionSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            precision: Precision::F32,
            tasks: vec![TaskFamily::MarkerDetect],
            template: "default".into(),
            gate: 0.6,
            plant_check_questions: 20,
            paths: Paths::default(),
            data: DataConfig::default(),
            model: ModelSection::default(),
            train: TrainSettings::default(),
            planted: PlantedSpec::default(),
            attribution: AttributionSection::default(),
            intervention: InterventionSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Artifact locations. Relative paths resolve against `root`, and a
/// relative `root` against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub root: PathBuf,
    pub data: PathBuf,
    pub vocab: PathBuf,
    pub weights: PathBuf,
    pub sets: PathBuf,
    pub plans: PathBuf,
    pub reports: PathBuf,
    pub manifests: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            root: "run".into(),
            data: "data".into(),
            vocab: "vocab.txt".into(),
            weights: "model.npw".into(),
            sets: "sets".into(),
            plans: "plans".into(),
            reports: "reports".into(),
            manifests: "manifests".into(),
        }
    }
}

impl Paths {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }
    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.data)
    }
    pub fn vocab_file(&self) -> PathBuf {
        self.resolve(&self.vocab)
    }
    pub fn weights_file(&self) -> PathBuf {
        self.resolve(&self.weights)
    }
    pub fn sets_dir(&self) -> PathBuf {
        self.resolve(&self.sets)
    }
    pub fn plans_dir(&self) -> PathBuf {
        self.resolve(&self.plans)
    }
    pub fn reports_dir(&self) -> PathBuf {
        self.resolve(&self.reports)
    }
    pub fn manifests_dir(&self) -> PathBuf {
        self.resolve(&self.manifests)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_eval: usize,
    /// Filler words; empty uses the built-in list.
    pub vocab: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n_train: 400, n_eval: 100, vocab: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub source: ModelSource,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub max_seq: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { source: ModelSource::Planted, n_layers: 2, d_model: 64, n_heads: 4, d_ffn: 256, max_seq: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionSection {
    pub scorers: Vec<ScorerKind>,
    pub augmentation: Augmentation,
    pub m: usize,
    pub z: usize,
    pub k: usize,
    /// Training questions attributed per task.
    pub tr: usize,
}

impl Default for AttributionSection {
    fn default() -> Self {
        Self {
            scorers: vec![ScorerKind::NeuronLlm],
            augmentation: Augmentation::Aqua,
            m: 16,
            z: 5000,
            k: 100,
            tr: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionSection {
    pub budget: usize,
    pub step: f64,
    pub directions: Vec<Direction>,
}

impl Default for InterventionSection {
    fn default() -> Self {
        Self { budget: 100, step: 0.1, directions: vec![Direction::Enhance, Direction::Degrade] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Evaluate on this many questions, half comprehended and half not by
    /// the unmodified model; 0 uses the whole eval split.
    pub balanced: usize,
    /// Ratio of the cross-task matrix plans.
    pub cross_task_ratio: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { balanced: 0, cross_task_ratio: 0.5 }
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let c: Self = toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads `path` (or starts from defaults) and applies `key=value`
    /// overrides; values parse as TOML, falling back to plain strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut value: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::missing(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let c: Self = value.try_into().map_err(|e: toml::de::Error| CliError::usage(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::usage(m.to_string()));
        if self.tasks.is_empty() {
            return bad("tasks must not be empty");
        }
        if self.attribution.scorers.is_empty() {
            return bad("attribution.scorers must not be empty");
        }
        if self.attribution.m == 0 || self.attribution.k == 0 || self.attribution.tr == 0 {
            return bad("attribution m, k and tr must be positive");
        }
        if !(self.intervention.step > 0.0 && self.intervention.step <= 1.0) {
            return bad("intervention.step must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gate) {
            return bad("gate must lie in [0, 1]");
        }
        let p = &self.paths;
        for path in [&p.root, &p.data, &p.vocab, &p.weights, &p.sets, &p.plans, &p.reports, &p.manifests] {
            if path.as_os_str().is_empty() {
                return bad("paths must not be empty");
            }
        }
        Ok(())
    }

    /// Hash of everything except the artifact locations and the worker
    /// count, neither of which changes any result.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.workers = 0;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("override key {key:?} is malformed")));
    }
    let value = parse_value(raw.trim());
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::usage(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
