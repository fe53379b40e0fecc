//! Decoder-only transformer with FFN activation taps and overrides.

mod backward;
mod config;
mod forward;
pub(crate) mod ops;
mod overrides;
mod params;
mod taps;
mod weights_io;

pub use config::{Activation, ModelConfig};
pub use overrides::{ActivationSnapshot, NeuronId, OverrideMap, OverrideMode};
pub use params::{LayerParams, Params};
pub use taps::{LogitObjective, TapGrad, TapSession};
pub use weights_io::{file_hash, sha256_hex, FORMAT_VERSION, MAGIC};

use forward::{Edits, Trace, TraceOptions};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Immutable weights plus configuration. Every call owns its scratch
/// buffers, so a model can be shared across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Scalar> {
    config: ModelConfig,
    params: Params<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, params: Params<T>) -> Result<Self> {
        let config = config.with_precision(T::PRECISION);
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn into_params(self) -> Params<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone().with_precision(U::PRECISION),
            params: self.params.cast(),
        }
    }

    fn edits_for(&self, overrides: &OverrideMap) -> Result<Edits<T>> {
        overrides.validate(&self.config)?;
        let mut edits = Edits::none(self.config.n_layers);
        edits.persistent = overrides.per_layer(self.config.n_layers);
        if let Some(s) = overrides.layer_scales() {
            edits.final_scales = Some(s.iter().map(|&a| vec![T::of(a); self.config.d_ffn]).collect());
        }
        Ok(edits)
    }

    fn run_edits(&self, tokens: &[usize], edits: &Edits<T>) -> Result<Vec<T>> {
        let trace = self.run(
            tokens,
            edits,
            TraceOptions {
                full: false,
                record: false,
            },
        )?;
        self.final_logits(&trace)
    }

    /// Next-token logits at the last position.
    pub fn forward(&self, tokens: &[usize], overrides: &OverrideMap) -> Result<Vec<T>> {
        let edits = self.edits_for(overrides)?;
        self.run_edits(tokens, &edits)
    }

    /// Forward pass with `delta` added to one tapped activation at the last
    /// position, after any overrides. Used by finite-difference checks.
    pub fn forward_with_nudge(&self, tokens: &[usize], overrides: &OverrideMap, neuron: NeuronId, delta: T) -> Result<Vec<T>> {
        neuron.check(&self.config)?;
        let mut edits = self.edits_for(overrides)?;
        edits.nudge = Some((neuron, delta));
        self.run_edits(tokens, &edits)
    }

    /// Unmodified tapped activations at `position`.
    pub fn capture_activations(&self, tokens: &[usize], position: usize) -> Result<ActivationSnapshot<T>> {
        if position >= tokens.len() {
            return Err(Error::PositionOutOfRange {
                position,
                len: tokens.len(),
            });
        }
        Ok(TapSession::new(self, &tokens[..=position])?.activations())
    }

    /// `dF/dw` for every tap at `position`, with each layer's tapped vector
    /// at that position replaced by `layer_scales[l]` times its value.
    pub fn grad_at_taps(
        &self,
        tokens: &[usize],
        objective: &dyn LogitObjective<T>,
        layer_scales: &[f64],
        position: usize,
    ) -> Result<TapGrad<T>> {
        if position >= tokens.len() {
            return Err(Error::PositionOutOfRange {
                position,
                len: tokens.len(),
            });
        }
        let alphas: Vec<T> = layer_scales.iter().map(|&a| T::of(a)).collect();
        TapSession::new(self, &tokens[..=position])?.grad_at_layer_scales(objective, &alphas)
    }

    pub fn tap_session(&self, tokens: &[usize]) -> Result<TapSession<'_, T>> {
        TapSession::new(self, tokens)
    }

    /// Recorded clean run for cheap single-neuron ablations in `layer`.
    pub fn ablation_base(&self, tokens: &[usize], layer: usize) -> Result<AblationBase<'_, T>> {
        if layer >= self.config.n_layers {
            return Err(Error::NeuronOutOfRange(NeuronId::new(layer, 0)));
        }
        let trace = self.run(
            tokens,
            &Edits::none(self.config.n_layers),
            TraceOptions {
                full: false,
                record: true,
            },
        )?;
        Ok(AblationBase {
            model: self,
            trace,
            layer,
        })
    }
}

/// Clean run that answers "what if neuron i of this layer were scaled by
/// f at every position" by resuming the pass after the layer.
pub struct AblationBase<'m, T: Scalar> {
    model: &'m Model<T>,
    trace: Trace<T>,
    layer: usize,
}

impl<T: Scalar> AblationBase<'_, T> {
    pub fn clean_logits(&self) -> Result<Vec<T>> {
        self.model.final_logits(&self.trace)
    }

    pub fn logits_with_factor(&self, index: usize, factor: f64) -> Result<Vec<T>> {
        let model = self.model;
        let cfg = &model.config;
        if index >= cfg.d_ffn {
            return Err(Error::NeuronOutOfRange(NeuronId::new(self.layer, index)));
        }
        let d = cfg.d_model;
        let lp = &model.params.layers[self.layer];
        let column: Vec<T> = (0..d).map(|r| lp.w_out[r * cfg.d_ffn + index]).collect();
        let shift = |p: usize, x: &mut Vec<T>| {
            let tail = self.trace.tails[self.layer][p].as_ref().expect("recorded pass");
            let delta = (T::of(factor) - T::one()) * tail.ffn_act[index];
            for (v, &c) in x.iter_mut().zip(&column) {
                *v += delta * c;
            }
        };
        let last = self.trace.len() - 1;
        if self.layer + 1 == cfg.n_layers {
            let mut x = self.trace.outputs[last].clone().expect("final position computed");
            shift(last, &mut x);
            return Ok(model.logits_of(&x)?.0);
        }
        let mut xs = self.trace.inputs[self.layer + 1].clone();
        for (p, x) in xs.iter_mut().enumerate() {
            shift(p, x);
        }
        let trace = model.run_blocks(
            &self.trace.tokens,
            self.layer + 1,
            xs,
            &Edits::none(cfg.n_layers),
            TraceOptions {
                full: false,
                record: false,
            },
        )?;
        model.final_logits(&trace)
    }
}

#[cfg(test)]
mod tests;
