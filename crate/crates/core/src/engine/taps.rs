//! Gradients of a logit objective with respect to the tapped FFN
//! activations at the final position.
//!
//! Scaling the taps at the final position cannot change any earlier
//! position (attention is causal), so a session runs the clean prompt once
//! and then only recomputes and backpropagates the final position, reusing
//! the clean keys and values of the prefix.

use super::forward::{Edits, QkvRecord, TailRecord, Trace, TraceOptions};
use super::ops::{self, NormRecord};
use super::overrides::ActivationSnapshot;
use super::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A differentiable scalar function of the final-position logits.
pub trait LogitObjective<T: Scalar> {
    /// Returns `F(logits)` and `dF/dlogits`.
    fn value_and_grad(&self, logits: &[T]) -> Result<(T, Vec<T>)>;

    fn value(&self, logits: &[T]) -> Result<T> {
        Ok(self.value_and_grad(logits)?.0)
    }
}

/// Objective value and per-layer gradients `dF/dw` at the tap sites.
#[derive(Debug, Clone)]
pub struct TapGrad<T> {
    pub value: T,
    pub grads: Vec<Vec<T>>,
}

struct FinalLayer<T> {
    qkv: QkvRecord<T>,
    k: Vec<T>,
    v: Vec<T>,
    tail: TailRecord<T>,
}

struct FinalPass<T> {
    layers: Vec<FinalLayer<T>>,
    lnf: NormRecord<T>,
    logits: Vec<T>,
}

/// Clean run of one prompt that answers repeated tap-gradient queries.
pub struct TapSession<'m, T: Scalar> {
    model: &'m Model<T>,
    trace: Trace<T>,
    embed_final: Vec<T>,
}

impl<'m, T: Scalar> TapSession<'m, T> {
    pub fn new(model: &'m Model<T>, tokens: &[usize]) -> Result<Self> {
        let n_layers = model.config.n_layers;
        let trace = model.run(
            tokens,
            &Edits::none(n_layers),
            TraceOptions {
                full: false,
                record: false,
            },
        )?;
        let embed_final = model.embed(tokens).pop().expect("non-empty prompt");
        Ok(Self {
            model,
            trace,
            embed_final,
        })
    }

    pub fn model(&self) -> &'m Model<T> {
        self.model
    }

    /// Clean activations at the final position.
    pub fn activations(&self) -> ActivationSnapshot<T> {
        ActivationSnapshot {
            position: self.trace.len() - 1,
            layers: (0..self.model.config.n_layers)
                .map(|l| self.trace.final_tail(l).ffn_act.clone())
                .collect(),
        }
    }

    pub fn clean_logits(&self) -> Result<Vec<T>> {
        self.model.final_logits(&self.trace)
    }

    fn scales_from_alphas(&self, alphas: &[T]) -> Result<Vec<Vec<T>>> {
        let cfg = &self.model.config;
        if alphas.len() != cfg.n_layers {
            return Err(Error::InvalidOverride(format!(
                "{} layer scales for a {}-layer model",
                alphas.len(),
                cfg.n_layers
            )));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= T::zero() && **a <= T::one())) {
            return Err(Error::InvalidOverride(format!("layer scale {a} outside [0, 1]")));
        }
        Ok(alphas.iter().map(|&a| vec![a; cfg.d_ffn]).collect())
    }

    fn check_scales(&self, scales: &[Vec<T>]) -> Result<()> {
        let cfg = &self.model.config;
        if scales.len() != cfg.n_layers || scales.iter().any(|s| s.len() != cfg.d_ffn) {
            return Err(Error::InvalidOverride("per-neuron scales must be n_layers x d_ffn".into()));
        }
        Ok(())
    }

    fn final_pass(&self, scales: Vec<Vec<T>>) -> Result<FinalPass<T>> {
        let model = self.model;
        let cfg = &model.config;
        let d = cfg.d_model;
        let pos = self.trace.len() - 1;
        let edits = Edits {
            persistent: vec![Vec::new(); cfg.n_layers],
            final_scales: Some(scales),
            nudge: None,
        };
        let mut x = self.embed_final.clone();
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for layer in 0..cfg.n_layers {
            let (qkv, k, v) = model.qkv(layer, &x);
            let keys = &self.trace.keys[layer];
            let values = &self.trace.values[layer];
            let (x_out, tail) = model.attend_ffn(
                layer,
                pos,
                &x,
                &qkv.q,
                &keys[..pos * d],
                &k,
                &values[..pos * d],
                &v,
                edits.at(layer, true),
            )?;
            layers.push(FinalLayer { qkv, k, v, tail });
            x = x_out;
        }
        let (logits, lnf, _) = model.logits_of(&x)?;
        Ok(FinalPass { layers, lnf, logits })
    }

    /// Final-position logits with every layer's taps scaled per neuron.
    pub fn logits_with_scales(&self, scales: &[Vec<T>]) -> Result<Vec<T>> {
        self.check_scales(scales)?;
        Ok(self.final_pass(scales.to_vec())?.logits)
    }

    /// Final-position logits with each layer's tapped vector scaled jointly.
    pub fn logits_at_layer_scales(&self, alphas: &[T]) -> Result<Vec<T>> {
        Ok(self.final_pass(self.scales_from_alphas(alphas)?)?.logits)
    }

    pub fn grad_at_layer_scales(&self, objective: &dyn LogitObjective<T>, alphas: &[T]) -> Result<TapGrad<T>> {
        let scales = self.scales_from_alphas(alphas)?;
        self.grad_inner(objective, scales)
    }

    pub fn grad_with_scales(&self, objective: &dyn LogitObjective<T>, scales: &[Vec<T>]) -> Result<TapGrad<T>> {
        self.check_scales(scales)?;
        self.grad_inner(objective, scales.to_vec())
    }

    fn grad_inner(&self, objective: &dyn LogitObjective<T>, scales: Vec<Vec<T>>) -> Result<TapGrad<T>> {
        let model = self.model;
        let cfg = &model.config;
        let d = cfg.d_model;
        let pos = self.trace.len() - 1;
        let fp = self.final_pass(scales)?;
        let (value, dlogits) = objective.value_and_grad(&fp.logits)?;
        if !value.is_finite() || dlogits.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                site: "objective",
                layer: None,
                position: Some(pos),
            });
        }
        let mut dnormed = vec![T::zero(); d];
        ops::matvec_t_acc(&model.params.w_unembed, &dlogits, &mut dnormed);
        let mut dx = ops::layer_norm_backward(&fp.lnf, &model.params.lnf_gain, &dnormed, None, None);

        let mut grads = vec![Vec::new(); cfg.n_layers];
        let mut dkeys = vec![T::zero(); (pos + 1) * d];
        let mut dvalues = vec![T::zero(); (pos + 1) * d];
        for layer in (0..cfg.n_layers).rev() {
            let fl = &fp.layers[layer];
            let keys = &self.trace.keys[layer];
            let values = &self.trace.values[layer];
            dkeys.iter_mut().for_each(|v| *v = T::zero());
            dvalues.iter_mut().for_each(|v| *v = T::zero());
            let tg = model.tail_backward(
                layer,
                pos,
                &fl.tail,
                &fl.qkv.q,
                &keys[..pos * d],
                &fl.k,
                &values[..pos * d],
                &fl.v,
                &dx,
                &mut dkeys,
                &mut dvalues,
                None,
            );
            let dr = model.qkv_backward(layer, &fl.qkv, &tg.dq, &dkeys[pos * d..], &dvalues[pos * d..], None);
            let mut next = tg.dx_resid;
            ops::add_assign(&mut next, &dr);
            if tg.d_tap.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    site: "tap gradient",
                    layer: Some(layer),
                    position: Some(pos),
                });
            }
            grads[layer] = tg.d_tap;
            dx = next;
        }
        Ok(TapGrad { value, grads })
    }
}
