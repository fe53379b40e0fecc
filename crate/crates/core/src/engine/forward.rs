//! Layer-major forward pass with optional recording for backpropagation.

use super::ops::{self, NormRecord};
use super::overrides::NeuronId;
use super::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Activation edits for one pass. Persistent factors apply at every
/// position; `final_scales` and `nudge` touch only the last position.
#[derive(Debug, Clone, Default)]
pub(crate) struct Edits<T> {
    pub persistent: Vec<Vec<(usize, f64)>>,
    pub final_scales: Option<Vec<Vec<T>>>,
    pub nudge: Option<(NeuronId, T)>,
}

impl<T: Scalar> Edits<T> {
    pub fn none(n_layers: usize) -> Self {
        Self {
            persistent: vec![Vec::new(); n_layers],
            final_scales: None,
            nudge: None,
        }
    }

    pub fn at(&self, layer: usize, is_final: bool) -> PositionEdit<'_, T> {
        PositionEdit {
            persistent: &self.persistent[layer],
            scales: if is_final {
                self.final_scales.as_ref().map(|s| s[layer].as_slice())
            } else {
                None
            },
            nudge: match self.nudge {
                Some((n, d)) if is_final && n.layer == layer => Some((n.index, d)),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PositionEdit<'a, T> {
    pub persistent: &'a [(usize, f64)],
    pub scales: Option<&'a [T]>,
    pub nudge: Option<(usize, T)>,
}

impl<T: Scalar> PositionEdit<'_, T> {
    fn is_identity(&self) -> bool {
        self.persistent.is_empty() && self.scales.is_none() && self.nudge.is_none()
    }
}

/// Pre-attention state of one position.
#[derive(Debug, Clone, Default)]
pub(crate) struct QkvRecord<T> {
    pub ln1: NormRecord<T>,
    pub ln1_out: Vec<T>,
    pub q: Vec<T>,
}

/// Attention-output and FFN state of one position.
#[derive(Debug, Clone, Default)]
pub(crate) struct TailRecord<T> {
    /// Attention weights, `n_heads` rows of `pos + 1`.
    pub att: Vec<T>,
    pub att_concat: Vec<T>,
    pub ln2: NormRecord<T>,
    pub ln2_out: Vec<T>,
    pub ffn_pre: Vec<T>,
    /// Natural activation before any edit.
    pub ffn_act: Vec<T>,
    /// Multiplicative edit factors, when any were applied.
    pub ffn_mult: Option<Vec<T>>,
    /// Tapped activation after edits (what the down projection sees).
    pub ffn_out: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TraceOptions {
    /// Compute the last block at every position, not just the final one.
    pub full: bool,
    /// Keep per-position records for backpropagation.
    pub record: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    pub tokens: Vec<usize>,
    /// `inputs[l][p]`: residual entering block `l` at position `p`
    /// (recorded passes only).
    pub inputs: Vec<Vec<Vec<T>>>,
    /// Flat `[pos][d_model]` keys and values per layer.
    pub keys: Vec<Vec<T>>,
    pub values: Vec<Vec<T>>,
    pub qkv: Vec<Vec<QkvRecord<T>>>,
    /// `tails[l][p]`; only the final position is kept for unrecorded passes.
    pub tails: Vec<Vec<Option<TailRecord<T>>>>,
    /// Residual leaving the last block, per position (`None` where skipped).
    pub outputs: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Trace<T> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn final_tail(&self, layer: usize) -> &TailRecord<T> {
        self.tails[layer][self.len() - 1]
            .as_ref()
            .expect("final position is always recorded")
    }
}

impl<T: Scalar> Model<T> {
    pub(crate) fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        let cfg = &self.config;
        if tokens.is_empty() || tokens.len() > cfg.max_seq {
            return Err(Error::SequenceLength {
                len: tokens.len(),
                max_seq: cfg.max_seq,
            });
        }
        if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                token,
                position,
                vocab_size: cfg.vocab_size,
            });
        }
        Ok(())
    }

    pub(crate) fn embed(&self, tokens: &[usize]) -> Vec<Vec<T>> {
        let d = self.config.d_model;
        tokens
            .iter()
            .enumerate()
            .map(|(p, &t)| {
                let te = &self.params.tok_emb[t * d..(t + 1) * d];
                let pe = &self.params.pos_emb[p * d..(p + 1) * d];
                te.iter().zip(pe).map(|(&a, &b)| a + b).collect()
            })
            .collect()
    }

    pub(crate) fn qkv(&self, layer: usize, x: &[T]) -> (QkvRecord<T>, Vec<T>, Vec<T>) {
        let lp = &self.params.layers[layer];
        let d = self.config.d_model;
        let eps = T::of(self.config.norm_eps);
        let (ln1_out, ln1) = ops::layer_norm(x, &lp.ln1_gain, &lp.ln1_bias, eps);
        let mut q = vec![T::zero(); d];
        let mut k = vec![T::zero(); d];
        let mut v = vec![T::zero(); d];
        ops::matvec(&lp.wq, &lp.bq, &ln1_out, &mut q);
        ops::matvec(&lp.wk, &lp.bk, &ln1_out, &mut k);
        ops::matvec(&lp.wv, &lp.bv, &ln1_out, &mut v);
        (QkvRecord { ln1, ln1_out, q }, k, v)
    }

    /// Causal attention for position `pos = prefix_len` followed by the FFN.
    /// `prefix_*` hold the keys/values of earlier positions; `own_*` belong to
    /// `pos` itself.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn attend_ffn(
        &self,
        layer: usize,
        pos: usize,
        x: &[T],
        q: &[T],
        prefix_keys: &[T],
        own_k: &[T],
        prefix_values: &[T],
        own_v: &[T],
        edit: PositionEdit<'_, T>,
    ) -> Result<(Vec<T>, TailRecord<T>)> {
        let cfg = &self.config;
        let lp = &self.params.layers[layer];
        let d = cfg.d_model;
        let dh = cfg.d_head();
        let n = pos + 1;
        let scale = T::one() / T::of(dh as f64).sqrt();

        let mut att = vec![T::zero(); cfg.n_heads * n];
        let mut att_concat = vec![T::zero(); d];
        for h in 0..cfg.n_heads {
            let off = h * dh;
            let qh = &q[off..off + dh];
            let row = &mut att[h * n..(h + 1) * n];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = if j < pos { &prefix_keys[j * d + off..j * d + off + dh] } else { &own_k[off..off + dh] };
                *s = ops::dot(qh, kj) * scale;
            }
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for s in row.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            for s in row.iter_mut() {
                *s /= sum;
            }
            let out = &mut att_concat[off..off + dh];
            for (j, &a) in row.iter().enumerate() {
                let vj = if j < pos { &prefix_values[j * d + off..j * d + off + dh] } else { &own_v[off..off + dh] };
                for (o, &vv) in out.iter_mut().zip(vj) {
                    *o += a * vv;
                }
            }
        }

        let mut x_mid = vec![T::zero(); d];
        ops::matvec(&lp.wo, &lp.bo, &att_concat, &mut x_mid);
        ops::add_assign(&mut x_mid, x);

        let eps = T::of(cfg.norm_eps);
        let (ln2_out, ln2) = ops::layer_norm(&x_mid, &lp.ln2_gain, &lp.ln2_bias, eps);
        let mut ffn_pre = vec![T::zero(); cfg.d_ffn];
        ops::matvec(&lp.w_in, &lp.b_in, &ln2_out, &mut ffn_pre);
        let ffn_act: Vec<T> = ffn_pre.iter().map(|&z| ops::gelu(z)).collect();
        if ffn_act.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                site: "ffn activation",
                layer: Some(layer),
                position: Some(pos),
            });
        }

        let (ffn_out, ffn_mult) = if edit.is_identity() {
            (ffn_act.clone(), None)
        } else {
            let mut mult = vec![T::one(); cfg.d_ffn];
            for &(i, f) in edit.persistent {
                mult[i] = T::of(f);
            }
            if let Some(s) = edit.scales {
                for (m, &sv) in mult.iter_mut().zip(s) {
                    *m *= sv;
                }
            }
            let mut out: Vec<T> = ffn_act.iter().zip(&mult).map(|(&a, &m)| m * a).collect();
            if let Some((i, delta)) = edit.nudge {
                out[i] += delta;
            }
            (out, Some(mult))
        };

        let mut x_out = vec![T::zero(); d];
        ops::matvec(&lp.w_out, &lp.b_out, &ffn_out, &mut x_out);
        ops::add_assign(&mut x_out, &x_mid);

        Ok((
            x_out,
            TailRecord {
                att,
                att_concat,
                ln2,
                ln2_out,
                ffn_pre,
                ffn_act,
                ffn_mult,
                ffn_out,
            },
        ))
    }

    /// Runs blocks `start..n_layers` on the given residual inputs.
    pub(crate) fn run_blocks(
        &self,
        tokens: &[usize],
        start: usize,
        mut xs: Vec<Vec<T>>,
        edits: &Edits<T>,
        opts: TraceOptions,
    ) -> Result<Trace<T>> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let len = xs.len();
        let last = len - 1;
        let n_layers = cfg.n_layers;

        let mut trace = Trace {
            tokens: tokens.to_vec(),
            inputs: vec![Vec::new(); n_layers],
            keys: vec![Vec::new(); n_layers],
            values: vec![Vec::new(); n_layers],
            qkv: vec![Vec::new(); n_layers],
            tails: (0..n_layers).map(|_| vec![None; len]).collect(),
            outputs: vec![None; len],
        };

        for layer in start..n_layers {
            let mut keys = Vec::with_capacity(len * d);
            let mut values = Vec::with_capacity(len * d);
            let mut qs = Vec::with_capacity(len);
            for x in &xs {
                let (rec, k, v) = self.qkv(layer, x);
                keys.extend_from_slice(&k);
                values.extend_from_slice(&v);
                qs.push(rec);
            }
            let is_last_layer = layer + 1 == n_layers;
            let positions = if is_last_layer && !opts.full { last..len } else { 0..len };
            let mut next: Vec<Option<Vec<T>>> = vec![None; len];
            for p in positions {
                let is_final = p == last;
                let (x_out, tail) = self.attend_ffn(
                    layer,
                    p,
                    &xs[p],
                    &qs[p].q,
                    &keys[..p * d],
                    &keys[p * d..(p + 1) * d],
                    &values[..p * d],
                    &values[p * d..(p + 1) * d],
                    edits.at(layer, is_final),
                )?;
                if opts.record || is_final {
                    trace.tails[layer][p] = Some(tail);
                }
                next[p] = Some(x_out);
            }
            trace.keys[layer] = keys;
            trace.values[layer] = values;
            if opts.record {
                trace.qkv[layer] = qs;
            }
            if is_last_layer {
                if opts.record {
                    trace.inputs[layer] = xs;
                }
                trace.outputs = next;
                break;
            }
            let next: Vec<Vec<T>> = next.into_iter().map(|x| x.expect("all positions computed")).collect();
            if opts.record {
                trace.inputs[layer] = std::mem::replace(&mut xs, next);
            } else {
                xs = next;
            }
        }
        Ok(trace)
    }

    pub(crate) fn run(&self, tokens: &[usize], edits: &Edits<T>, opts: TraceOptions) -> Result<Trace<T>> {
        self.check_tokens(tokens)?;
        let xs = self.embed(tokens);
        self.run_blocks(tokens, 0, xs, edits, opts)
    }

    /// Final layer norm and unembedding of one residual vector.
    pub(crate) fn logits_of(&self, residual: &[T]) -> Result<(Vec<T>, NormRecord<T>, Vec<T>)> {
        let p = &self.params;
        let (normed, rec) = ops::layer_norm(residual, &p.lnf_gain, &p.lnf_bias, T::of(self.config.norm_eps));
        let mut logits = vec![T::zero(); self.config.vocab_size];
        ops::matvec(&p.w_unembed, &p.b_unembed, &normed, &mut logits);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                site: "logits",
                layer: None,
                position: None,
            });
        }
        Ok((logits, rec, normed))
    }

    pub(crate) fn final_logits(&self, trace: &Trace<T>) -> Result<Vec<T>> {
        let out = trace.outputs[trace.len() - 1].as_ref().expect("final position computed");
        Ok(self.logits_of(out)?.0)
    }
}
