use rayon::prelude::*;

use super::scores::NeuronScoreMap;
use super::targets::{TargetFn, TargetKind};
use crate::aqua::{Prompter, ProxySet};
use crate::engine::{Model, TapSession};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Integrated gradients of every tapped neuron at the final prompt position.
///
/// Each layer is integrated separately: its whole tapped vector is scaled by
/// `k/m` for `k = 1..=m` (right Riemann sum) with the other layers left
/// intact, and the averaged gradient is multiplied by the clean activation.
pub fn ig_scores<T: Scalar>(model: &Model<T>, tokens: &[usize], target: &TargetFn, m: usize) -> Result<NeuronScoreMap> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let session = TapSession::new(model, tokens)?;
    ig_from_session(&session, target, m)
}

pub(crate) fn ig_from_session<T: Scalar>(session: &TapSession<'_, T>, target: &TargetFn, m: usize) -> Result<NeuronScoreMap> {
    let cfg = session.model().config();
    let n_layers = cfg.n_layers;
    let snap = session.activations();
    let jobs: Vec<(usize, usize)> = (0..n_layers).flat_map(|l| (1..=m).map(move |k| (l, k))).collect();
    let grads: Vec<Vec<T>> = jobs
        .par_iter()
        .map(|&(l, k)| {
            let mut alphas = vec![T::one(); n_layers];
            alphas[l] = T::of(k as f64 / m as f64);
            session.grad_at_layer_scales(target, &alphas).map(|g| g.grads[l].clone())
        })
        .collect::<Result<_>>()?;
    let mut layers = Vec::with_capacity(n_layers);
    for (l, chunk) in grads.chunks(m).enumerate() {
        let mut sum = vec![0.0f64; cfg.d_ffn];
        for g in chunk {
            for (s, v) in sum.iter_mut().zip(g) {
                *s += v.f64();
            }
        }
        layers.push(
            sum.iter()
                .zip(&snap.layers[l])
                .map(|(&s, &w)| w.f64() * s / m as f64)
                .collect(),
        );
    }
    let mut map = NeuronScoreMap::from_layers(layers, format!("ig/{:?}", target.kind));
    map.m = Some(m);
    map.check_finite()?;
    Ok(map)
}

/// Reference integrated gradients with every neuron integrated on its own
/// path (all other neurons intact). Restricted to models of at most 64
/// neurons.
pub fn ig_scores_per_neuron<T: Scalar>(model: &Model<T>, tokens: &[usize], target: &TargetFn, m: usize) -> Result<NeuronScoreMap> {
    let cfg = model.config();
    if cfg.total_neurons() > 64 {
        return Err(Error::InvalidArgument("per-neuron integration is limited to 64 neurons".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let session = TapSession::new(model, tokens)?;
    let snap = session.activations();
    let mut map = NeuronScoreMap::for_model(cfg, format!("ig-per-neuron/{:?}", target.kind));
    map.m = Some(m);
    for flat in 0..cfg.total_neurons() {
        let n = map.neuron(flat);
        let mut sum = 0.0;
        for k in 1..=m {
            let mut scales = vec![vec![T::one(); cfg.d_ffn]; cfg.n_layers];
            scales[n.layer][n.index] = T::of(k as f64 / m as f64);
            sum += session.grad_with_scales(target, &scales)?.grads[n.layer][n.index].f64();
        }
        map.scores[flat] = snap.get(n).f64() * sum / m as f64;
    }
    Ok(map)
}

/// Sum of the integrated-gradient maps of the three proxy prompts.
pub fn es_score<T: Scalar>(model: &Model<T>, prompter: Prompter<'_>, proxies: &ProxySet, kind: TargetKind, m: usize) -> Result<NeuronScoreMap> {
    let mut es = NeuronScoreMap::for_model(model.config(), format!("es/{kind:?}"));
    es.m = Some(m);
    for p in &proxies.proxies {
        let tokens = prompter.tokens(p)?;
        let target = TargetFn::new(kind, prompter.letter_ids(), p.correct_index)?;
        let mut ig = ig_scores(model, &tokens, &target, m)?;
        ig.sources = vec![p.id.clone()];
        es.add(&ig)?;
    }
    Ok(es)
}

/// Mean absolute activation at the final position of each prompt.
pub fn act_scores<T: Scalar>(model: &Model<T>, prompts: &[Vec<usize>]) -> Result<NeuronScoreMap> {
    if prompts.is_empty() {
        return Err(Error::InvalidArgument("no prompts".into()));
    }
    let cfg = model.config();
    let mut map = NeuronScoreMap::for_model(cfg, "act");
    for tokens in prompts {
        let snap = model.capture_activations(tokens, tokens.len() - 1)?;
        for (s, v) in map.scores.iter_mut().zip(snap.layers.iter().flatten()) {
            *s += v.f64().abs();
        }
    }
    let n = prompts.len() as f64;
    map.scores.iter_mut().for_each(|s| *s /= n);
    Ok(map)
}
