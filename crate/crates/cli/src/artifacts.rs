//! Error kinds with exit codes, hashing, manifests and artifact naming.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use neuroprobe::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage,
    Missing,
    Stale,
    Numeric,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Usage => 1,
            ExitKind::Missing => 2,
            ExitKind::Stale => 3,
            ExitKind::Numeric => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        Self { kind: ExitKind::Usage, message: m.into() }
    }
    pub fn missing(m: impl Into<String>) -> Self {
        Self { kind: ExitKind::Missing, message: m.into() }
    }
    pub fn stale(m: impl Into<String>) -> Self {
        Self { kind: ExitKind::Stale, message: m.into() }
    }
    pub fn numeric(m: impl Into<String>) -> Self {
        Self { kind: ExitKind::Numeric, message: m.into() }
    }
    pub fn code(&self) -> i32 {
        self.kind.code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => ExitKind::Missing,
            Error::Integrity { .. } | Error::Schema(_) => ExitKind::Stale,
            Error::PlantedCheck(_) => ExitKind::Numeric,
            e if e.is_numeric() => ExitKind::Numeric,
            _ => ExitKind::Usage,
        };
        Self { kind, message: e.to_string() }
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> CliResult<String> {
    Ok(sha256_bytes(&read(path)?))
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::missing(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::missing(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write(path, text.as_bytes())
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Per-command record of what was read and written.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.content_hash(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn key(config: &RunConfig, path: &Path) -> String {
        path.strip_prefix(&config.paths.root).unwrap_or(path).display().to_string()
    }

    pub fn input(&mut self, config: &RunConfig, path: &Path) -> CliResult<String> {
        let h = file_hash(path)?;
        self.inputs.insert(Self::key(config, path), h.clone());
        Ok(h)
    }

    pub fn output(&mut self, config: &RunConfig, path: &Path) -> CliResult<String> {
        let h = file_hash(path)?;
        self.outputs.insert(Self::key(config, path), h.clone());
        Ok(h)
    }

    pub fn save(&self, config: &RunConfig) -> CliResult<PathBuf> {
        let path = config.paths.manifests_dir().join(format!("{}.json", self.command));
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Artifact file names.
pub struct Layout<'a>(pub &'a RunConfig);

impl Layout<'_> {
    pub fn task_dir(&self, task: &str) -> PathBuf {
        self.0.paths.data_dir().join(task)
    }
    pub fn train_file(&self, task: &str) -> PathBuf {
        self.task_dir(task).join("train.jsonl")
    }
    pub fn eval_file(&self, task: &str) -> PathBuf {
        self.task_dir(task).join("eval.jsonl")
    }
    pub fn eval_proxies_file(&self, task: &str) -> PathBuf {
        self.task_dir(task).join("eval.proxies.jsonl")
    }
    pub fn sets_file(&self, task: &str, scorer: &str) -> PathBuf {
        self.0.paths.sets_dir().join(format!("{task}.{scorer}.json"))
    }
    pub fn plan_file(&self, task: &str, scorer: &str, direction: &str) -> PathBuf {
        self.0.paths.plans_dir().join(format!("{task}.{scorer}.{direction}.json"))
    }
    pub fn sweep_file(&self, task: &str, scorer: &str, direction: &str) -> PathBuf {
        self.0.paths.reports_dir().join(format!("{task}.{scorer}.{direction}.sweep.json"))
    }
    pub fn report(&self, name: &str) -> PathBuf {
        self.0.paths.reports_dir().join(name)
    }
    pub fn planted_file(&self) -> PathBuf {
        self.0.paths.weights_file().with_extension("planted.json")
    }
}
