use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::aggregate::{ace_aggregate, kn_count_aggregate, random_select, top_k_good};
use super::ig::{act_scores, ig_scores};
use super::scores::{NeuronScoreMap, NeuronSets};
use super::targets::{TargetFn, TargetKind};
use crate::aqua::{derive_seed, generate_proxies, Prompter, QAExample};
use crate::engine::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Contrastive target, signed aggregation, good and bad sets.
    NeuronLlm,
    /// Probability margin target, signed aggregation, good set only.
    Tn,
    /// Correct-letter log-probability, signed aggregation, good set only.
    Qrnca,
    /// Correct-letter log-probability, count aggregation.
    Kn,
    /// Mean absolute activation.
    Act,
    /// Uniform random neurons.
    Random,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 6] = [Self::NeuronLlm, Self::Tn, Self::Qrnca, Self::Kn, Self::Act, Self::Random];

    pub fn target_kind(self) -> TargetKind {
        match self {
            Self::NeuronLlm => TargetKind::ContrastiveCe,
            Self::Tn => TargetKind::TnMargin,
            Self::Qrnca | Self::Kn => TargetKind::CorrectLogProb,
            Self::Act => TargetKind::ActivationOnly,
            Self::Random => TargetKind::Random,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::NeuronLlm => "neuron_llm",
            Self::Tn => "tn",
            Self::Qrnca => "qrnca",
            Self::Kn => "kn",
            Self::Act => "act",
            Self::Random => "random",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scorer {s:?}")))
    }
}

/// Which prompts stand for one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    /// The three option-permuted proxies, scores summed.
    Aqua,
    /// The question as given, single prompt.
    Legacy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSettings {
    pub scorer: ScorerKind,
    pub augmentation: Augmentation,
    pub m: usize,
    /// Requested gate size; clamped with [`clamp_z`].
    pub z: usize,
    pub k: usize,
    /// Seeds proxy permutations and random selection.
    pub seed: u64,
}

impl Default for AttributionSettings {
    fn default() -> Self {
        Self {
            scorer: ScorerKind::NeuronLlm,
            augmentation: Augmentation::Aqua,
            m: 16,
            z: 5000,
            k: 100,
            seed: 0,
        }
    }
}

/// Largest usable gate size: half the neurons, so that an example's top and
/// bottom sets never overlap.
pub fn clamp_z(z: usize, total_neurons: usize) -> usize {
    z.min(total_neurons / 2).max(1)
}

#[derive(Debug, Clone)]
pub struct Attribution {
    pub sets: NeuronSets,
    /// One map per example (empty for random selection).
    pub per_example: Vec<NeuronScoreMap>,
}

/// Prompts standing for `example` under `augmentation`.
pub fn example_prompts(example: &QAExample, augmentation: Augmentation, seed: u64) -> Result<Vec<QAExample>> {
    Ok(match augmentation {
        Augmentation::Aqua => generate_proxies(example, derive_seed(seed, &example.id))?.proxies.to_vec(),
        Augmentation::Legacy => vec![example.clone()],
    })
}

/// Scores neurons on `examples` and selects good and bad sets.
pub fn attribute<T: Scalar>(
    model: &Model<T>,
    prompter: Prompter<'_>,
    examples: &[QAExample],
    settings: &AttributionSettings,
) -> Result<Attribution> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("attribution needs at least one example".into()));
    }
    let cfg = model.config();
    let z = clamp_z(settings.z, cfg.total_neurons());
    let k = settings.k.min(z);
    if k < settings.k {
        log::warn!("K = {} exceeds z = {z}; using {k}", settings.k);
    }
    let scorer = settings.scorer;
    if scorer == ScorerKind::Random {
        let sets = random_select(settings.seed, k, cfg.n_layers, cfg.d_ffn)?;
        return Ok(Attribution {
            sets,
            per_example: Vec::new(),
        });
    }

    let mut per_example = Vec::with_capacity(examples.len());
    for example in examples {
        let prompts = example_prompts(example, settings.augmentation, settings.seed)?;
        let map = if scorer == ScorerKind::Act {
            let tokens = prompts.iter().map(|p| prompter.tokens(p)).collect::<Result<Vec<_>>>()?;
            act_scores(model, &tokens)?
        } else {
            let kind = scorer.target_kind();
            let mut es = NeuronScoreMap::for_model(cfg, format!("{scorer}/{:?}", settings.augmentation));
            es.m = Some(settings.m);
            for p in &prompts {
                let target = TargetFn::new(kind, prompter.letter_ids(), p.correct_index)?;
                let mut ig = ig_scores(model, &prompter.tokens(p)?, &target, settings.m)?;
                ig.sources = vec![p.id.clone()];
                es.add(&ig)?;
            }
            es
        };
        log::debug!("scored {} with {scorer}", example.id);
        per_example.push(map);
    }

    let sets = match scorer {
        ScorerKind::NeuronLlm => ace_aggregate(&per_example, z, k)?,
        ScorerKind::Tn | ScorerKind::Qrnca => {
            let mut s = ace_aggregate(&per_example, z, k)?;
            s.bad.clear();
            s.warnings.retain(|w| !w.starts_with("bad"));
            s
        }
        ScorerKind::Kn => kn_count_aggregate(&per_example, z, k)?,
        ScorerKind::Act => {
            let mut mean = NeuronScoreMap::for_model(cfg, "act");
            for m in &per_example {
                mean.add(m)?;
            }
            let n = per_example.len() as f64;
            mean.scores.iter_mut().for_each(|s| *s /= n);
            top_k_good(&mean, k)
        }
        ScorerKind::Random => unreachable!("handled above"),
    };
    Ok(Attribution { sets, per_example })
}
