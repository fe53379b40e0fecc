use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};

/// Address of one FFN neuron: an element of the post-activation
/// intermediate vector of block `layer`.
///
/// Ordering is `(layer, index)`, which is also the tie-break order used by
/// every ranking in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub const fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }

    pub fn flat(self, d_ffn: usize) -> usize {
        self.layer * d_ffn + self.index
    }

    pub fn from_flat(flat: usize, d_ffn: usize) -> Self {
        Self::new(flat / d_ffn, flat % d_ffn)
    }

    pub fn check(self, cfg: &ModelConfig) -> Result<()> {
        if self.layer < cfg.n_layers && self.index < cfg.d_ffn {
            Ok(())
        } else {
            Err(Error::NeuronOutOfRange(self))
        }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}.N{}", self.layer, self.index)
    }
}

/// What an override does to a neuron's natural activation in the current pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "alpha", rename_all = "lowercase")]
pub enum OverrideMode {
    /// Silence: the activation is replaced by 0.
    Zero,
    /// Excite: the activation is doubled.
    Double,
    /// Multiply the activation by a finite non-negative factor.
    Scale(f64),
}

impl OverrideMode {
    pub fn factor(self) -> f64 {
        match self {
            OverrideMode::Zero => 0.0,
            OverrideMode::Double => 2.0,
            OverrideMode::Scale(a) => a,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            OverrideMode::Scale(a) if !(a.is_finite() && a >= 0.0) => Err(Error::InvalidOverride(format!(
                "scale factor {a} must be finite and non-negative"
            ))),
            _ => Ok(()),
        }
    }
}

/// Activation overrides for one forward pass.
///
/// `entries` are persistent: they apply at every token position.
/// `layer_scales`, when present, multiply each layer's whole tapped vector
/// at the final position only; this is the integration path used by
/// attribution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverrideMap {
    #[serde(with = "entry_list")]
    entries: BTreeMap<NeuronId, OverrideMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer_scales: Option<Vec<f64>>,
}

/// Entries as a JSON-friendly list of `[neuron, mode]` pairs.
mod entry_list {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{NeuronId, OverrideMode};

    pub fn serialize<S: Serializer>(map: &BTreeMap<NeuronId, OverrideMode>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<(&NeuronId, &OverrideMode)> = map.iter().collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<NeuronId, OverrideMode>, D::Error> {
        let list = Vec::<(NeuronId, OverrideMode)>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for (n, m) in list {
            m.validate().map_err(D::Error::custom)?;
            if map.insert(n, m).is_some() {
                return Err(D::Error::custom(format!("duplicate override for {n:?}")));
            }
        }
        Ok(map)
    }
}

impl OverrideMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, neuron: NeuronId, mode: OverrideMode) -> Result<()> {
        mode.validate()?;
        if self.entries.contains_key(&neuron) {
            return Err(Error::DuplicateOverride(neuron));
        }
        self.entries.insert(neuron, mode);
        Ok(())
    }

    pub fn with(mut self, neuron: NeuronId, mode: OverrideMode) -> Result<Self> {
        self.insert(neuron, mode)?;
        Ok(self)
    }

    pub fn set_layer_scales(&mut self, scales: Vec<f64>) -> Result<()> {
        if let Some(bad) = scales.iter().find(|a| !(a.is_finite() && (0.0..=1.0).contains(*a))) {
            return Err(Error::InvalidOverride(format!("layer scale {bad} outside [0, 1]")));
        }
        self.layer_scales = Some(scales);
        Ok(())
    }

    pub fn layer_scales(&self) -> Option<&[f64]> {
        self.layer_scales.as_deref()
    }

    pub fn get(&self, neuron: NeuronId) -> Option<OverrideMode> {
        self.entries.get(&neuron).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NeuronId, OverrideMode)> + '_ {
        self.entries.iter().map(|(&n, &m)| (n, m))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.layer_scales.is_none()
    }

    pub fn min_layer(&self) -> Option<usize> {
        self.entries.keys().map(|n| n.layer).min()
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        for n in self.entries.keys() {
            n.check(cfg)?;
        }
        if let Some(s) = &self.layer_scales {
            if s.len() != cfg.n_layers {
                return Err(Error::InvalidOverride(format!(
                    "{} layer scales for a {}-layer model",
                    s.len(),
                    cfg.n_layers
                )));
            }
        }
        Ok(())
    }

    /// Per-layer sparse `(index, factor)` lists, sorted by index.
    pub(crate) fn per_layer(&self, n_layers: usize) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); n_layers];
        for (n, m) in &self.entries {
            out[n.layer].push((n.index, m.factor()));
        }
        out
    }
}

/// Tapped FFN activations (post-nonlinearity, pre-down-projection) of every
/// layer at one token position.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSnapshot<T> {
    pub position: usize,
    pub layers: Vec<Vec<T>>,
}

impl<T: Copy> ActivationSnapshot<T> {
    pub fn get(&self, neuron: NeuronId) -> T {
        self.layers[neuron.layer][neuron.index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let m = OverrideMap::new()
            .with(NeuronId::new(1, 2), OverrideMode::Zero)
            .unwrap()
            .with(NeuronId::new(0, 5), OverrideMode::Scale(0.5))
            .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<OverrideMap>(&text).unwrap(), m);
        let dup = text.replace("\"index\":2", "\"index\":5").replace("\"layer\":1", "\"layer\":0");
        assert!(serde_json::from_str::<OverrideMap>(&dup).is_err(), "{dup}");
    }

    #[test]
    fn duplicate_override_rejected() {
        let n = NeuronId::new(0, 3);
        let mut map = OverrideMap::new();
        map.insert(n, OverrideMode::Zero).unwrap();
        assert!(matches!(map.insert(n, OverrideMode::Double), Err(Error::DuplicateOverride(_))));
    }

    #[test]
    fn negative_or_nan_scale_rejected() {
        let mut map = OverrideMap::new();
        assert!(map.insert(NeuronId::new(0, 0), OverrideMode::Scale(-1.0)).is_err());
        assert!(map.insert(NeuronId::new(0, 1), OverrideMode::Scale(f64::NAN)).is_err());
        assert!(map.set_layer_scales(vec![1.5]).is_err());
    }

    #[test]
    fn neuron_order_is_layer_then_index() {
        let mut v = vec![NeuronId::new(1, 0), NeuronId::new(0, 9), NeuronId::new(0, 2)];
        v.sort();
        assert_eq!(v, vec![NeuronId::new(0, 2), NeuronId::new(0, 9), NeuronId::new(1, 0)]);
    }

    #[test]
    fn mode_serialization_is_tagged() {
        let s = serde_json::to_string(&OverrideMode::Scale(0.5)).unwrap();
        assert_eq!(s, r#"{"mode":"scale","alpha":0.5}"#);
        let z = serde_json::to_string(&OverrideMode::Zero).unwrap();
        assert_eq!(z, r#"{"mode":"zero"}"#);
    }
}
