use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::engine::{ModelConfig, NeuronId};
use crate::error::{Error, Result};

/// Dense per-neuron scores over all layers, flat in `(layer, index)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronScoreMap {
    pub n_layers: usize,
    pub d_ffn: usize,
    pub scores: Vec<f64>,
    /// Integration steps, when the scores came from integrated gradients.
    pub m: Option<usize>,
    pub label: String,
    /// Ids of the prompts that contributed.
    pub sources: Vec<String>,
}

impl NeuronScoreMap {
    pub fn zeros(n_layers: usize, d_ffn: usize, label: impl Into<String>) -> Self {
        Self {
            n_layers,
            d_ffn,
            scores: vec![0.0; n_layers * d_ffn],
            m: None,
            label: label.into(),
            sources: Vec::new(),
        }
    }

    pub fn for_model(cfg: &ModelConfig, label: impl Into<String>) -> Self {
        Self::zeros(cfg.n_layers, cfg.d_ffn, label)
    }

    pub fn from_layers(layers: Vec<Vec<f64>>, label: impl Into<String>) -> Self {
        let d_ffn = layers.first().map_or(0, Vec::len);
        let n_layers = layers.len();
        Self {
            n_layers,
            d_ffn,
            scores: layers.concat(),
            m: None,
            label: label.into(),
            sources: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, n: NeuronId) -> f64 {
        self.scores[n.flat(self.d_ffn)]
    }

    pub fn set(&mut self, n: NeuronId, v: f64) {
        let i = n.flat(self.d_ffn);
        self.scores[i] = v;
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.scores[l * self.d_ffn..(l + 1) * self.d_ffn]
    }

    pub fn neuron(&self, flat: usize) -> NeuronId {
        NeuronId::from_flat(flat, self.d_ffn)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if (self.n_layers, self.d_ffn) != (other.n_layers, other.d_ffn) {
            return Err(Error::InvalidArgument(format!(
                "score maps differ in shape: {}x{} vs {}x{}",
                self.n_layers, self.d_ffn, other.n_layers, other.d_ffn
            )));
        }
        Ok(())
    }

    /// Elementwise sum; sources are concatenated.
    pub fn add(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.scores.iter_mut().zip(&other.scores) {
            *a += b;
        }
        self.sources.extend(other.sources.iter().cloned());
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.scores.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite {
                site: "neuron score",
                layer: Some(i / self.d_ffn.max(1)),
                position: None,
            }),
            None => Ok(()),
        }
    }
}

/// Flat indices ordered by descending score; ties go to the lower
/// `(layer, index)`.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Flat indices ordered by ascending score; ties go to the lower
/// `(layer, index)`.
pub fn rank_ascending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredNeuron {
    pub layer: usize,
    pub index: usize,
    pub score: f64,
}

impl ScoredNeuron {
    pub fn new(n: NeuronId, score: f64) -> Self {
        Self {
            layer: n.layer,
            index: n.index,
            score,
        }
    }

    pub fn id(&self) -> NeuronId {
        NeuronId::new(self.layer, self.index)
    }
}

/// Selected good (descending) and bad (ascending) neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronSets {
    pub good: Vec<ScoredNeuron>,
    pub bad: Vec<ScoredNeuron>,
    pub ambiguous: Vec<NeuronId>,
    pub z: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl NeuronSets {
    pub fn good_ids(&self) -> Vec<NeuronId> {
        self.good.iter().map(ScoredNeuron::id).collect()
    }

    pub fn bad_ids(&self) -> Vec<NeuronId> {
        self.bad.iter().map(ScoredNeuron::id).collect()
    }

    /// Checks ordering and disjointness.
    pub fn validate(&self) -> Result<()> {
        let ordered = |v: &[ScoredNeuron], want: Ordering| {
            v.windows(2).all(|w| {
                let c = w[0].score.total_cmp(&w[1].score);
                c == want || (c == Ordering::Equal && w[0].id() < w[1].id())
            })
        };
        if !ordered(&self.good, Ordering::Greater) {
            return Err(Error::InvalidArgument("good set is not in descending order".into()));
        }
        if !ordered(&self.bad, Ordering::Less) {
            return Err(Error::InvalidArgument("bad set is not in ascending order".into()));
        }
        let good = self.good_ids();
        if self.bad.iter().any(|b| good.contains(&b.id())) {
            return Err(Error::InvalidArgument("good and bad sets overlap".into()));
        }
        if self.ambiguous.iter().any(|a| good.contains(a) || self.bad.iter().any(|b| b.id() == *a)) {
            return Err(Error::InvalidArgument("ambiguous neuron selected".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_breaks_ties_by_position() {
        let s = [1.0, 3.0, 1.0, -2.0, 3.0];
        assert_eq!(rank_descending(&s), vec![1, 4, 0, 2, 3]);
        assert_eq!(rank_ascending(&s), vec![3, 0, 2, 1, 4]);
    }

    #[test]
    fn addition_requires_matching_shapes() {
        let mut a = NeuronScoreMap::zeros(2, 3, "a");
        let mut b = NeuronScoreMap::zeros(2, 3, "b");
        b.scores[4] = 1.5;
        b.sources.push("x".into());
        a.add(&b).unwrap();
        assert_eq!(a.get(NeuronId::new(1, 1)), 1.5);
        assert_eq!(a.sources, vec!["x"]);
        assert!(a.add(&NeuronScoreMap::zeros(3, 2, "c")).is_err());
    }
}
