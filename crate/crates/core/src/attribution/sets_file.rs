use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pipeline::{Augmentation, ScorerKind};
use super::scores::{NeuronSets, ScoredNeuron};
use crate::error::{Error, Result};

pub const NEURON_SET_SCHEMA: u32 = 1;

/// Persisted attribution result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronSetFile {
    pub schema_version: u32,
    pub task: String,
    pub model_hash: String,
    pub scorer: ScorerKind,
    pub augmentation: Augmentation,
    pub m: usize,
    pub z: usize,
    pub k: usize,
    pub tr: usize,
    pub examples: Vec<String>,
    pub good: Vec<ScoredNeuron>,
    pub bad: Vec<ScoredNeuron>,
    pub ambiguous_count: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Hashes of the configuration and upstream artifacts.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl NeuronSetFile {
    pub fn sets(&self) -> NeuronSets {
        NeuronSets {
            good: self.good.clone(),
            bad: self.bad.clone(),
            ambiguous: Vec::new(),
            z: self.z,
            k: self.k,
            warnings: self.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("neuron sets serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        if f.schema_version != NEURON_SET_SCHEMA {
            return Err(Error::Schema(format!("neuron-set schema version {}", f.schema_version)));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::NeuronId;

    #[test]
    fn json_round_trip() {
        let f = NeuronSetFile {
            schema_version: NEURON_SET_SCHEMA,
            task: "marker_detect".into(),
            model_hash: "ab".into(),
            scorer: ScorerKind::NeuronLlm,
            augmentation: Augmentation::Aqua,
            m: 16,
            z: 10,
            k: 2,
            tr: 1,
            examples: vec!["e1".into()],
            good: vec![ScoredNeuron::new(NeuronId::new(1, 2), 0.5)],
            bad: vec![],
            ambiguous_count: 0,
            warnings: vec![],
            provenance: BTreeMap::new(),
        };
        let text = f.to_json();
        assert!(text.contains("\"scorer\": \"neuron_llm\""));
        assert_eq!(NeuronSetFile::from_json(&text).unwrap(), f);
        assert!(NeuronSetFile::from_json(&text.replace("\"schema_version\": 1", "\"schema_version\": 2")).is_err());
    }
}
