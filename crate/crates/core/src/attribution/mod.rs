//! Neuron importance: integrated gradients, per-example sums over proxies,
//! task-level aggregation and baseline scorers.

mod aggregate;
mod ig;
mod pipeline;
mod scores;
mod sets_file;
mod targets;

pub use aggregate::{ace_aggregate, kn_count_aggregate, random_select, top_k_good};
pub use ig::{act_scores, es_score, ig_scores, ig_scores_per_neuron};
pub use pipeline::{attribute, clamp_z, example_prompts, Attribution, AttributionSettings, Augmentation, ScorerKind};
pub use scores::{rank_ascending, rank_descending, NeuronScoreMap, NeuronSets, ScoredNeuron};
pub use sets_file::{NeuronSetFile, NEURON_SET_SCHEMA};
pub use targets::{option_cross_entropy, option_probs, summed_log_prob, target_value, TargetFn, TargetKind};
