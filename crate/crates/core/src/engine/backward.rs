//! Reverse-mode passes through the block structure.

use super::forward::{Edits, QkvRecord, TailRecord, TraceOptions};
use super::ops;
use super::params::{LayerParams, Params};
use super::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gradients produced by backpropagating through one block tail.
pub(crate) struct TailGrad<T> {
    /// Gradient with respect to the tapped (post-edit) activation.
    pub d_tap: Vec<T>,
    /// Gradient reaching the residual stream entering the block, excluding
    /// the path through this position's own query/key/value.
    pub dx_resid: Vec<T>,
    pub dq: Vec<T>,
}

impl<T: Scalar> Model<T> {
    /// Backpropagates `dx_out` through attention output and FFN of position
    /// `pos`. Key/value gradients for positions `0..=pos` accumulate into
    /// `dkeys`/`dvalues` (flat `[pos][d_model]`).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn tail_backward(
        &self,
        layer: usize,
        pos: usize,
        tail: &TailRecord<T>,
        q: &[T],
        prefix_keys: &[T],
        own_k: &[T],
        prefix_values: &[T],
        own_v: &[T],
        dx_out: &[T],
        dkeys: &mut [T],
        dvalues: &mut [T],
        mut grads: Option<&mut LayerParams<T>>,
    ) -> TailGrad<T> {
        let cfg = &self.config;
        let lp = &self.params.layers[layer];
        let d = cfg.d_model;
        let dh = cfg.d_head();
        let n = pos + 1;
        let scale = T::one() / T::of(dh as f64).sqrt();

        // FFN
        let mut d_tap = vec![T::zero(); cfg.d_ffn];
        ops::matvec_t_acc(&lp.w_out, dx_out, &mut d_tap);
        if let Some(g) = grads.as_deref_mut() {
            ops::outer_acc(dx_out, &tail.ffn_out, &mut g.w_out);
            ops::add_assign(&mut g.b_out, dx_out);
        }
        let mut dpre: Vec<T> = d_tap.clone();
        if let Some(mult) = &tail.ffn_mult {
            for (v, &m) in dpre.iter_mut().zip(mult) {
                *v *= m;
            }
        }
        for (v, &z) in dpre.iter_mut().zip(&tail.ffn_pre) {
            *v *= ops::gelu_grad(z);
        }
        let mut dln2 = vec![T::zero(); d];
        ops::matvec_t_acc(&lp.w_in, &dpre, &mut dln2);
        if let Some(g) = grads.as_deref_mut() {
            ops::outer_acc(&dpre, &tail.ln2_out, &mut g.w_in);
            ops::add_assign(&mut g.b_in, &dpre);
        }
        let mut dx_mid = match grads.as_deref_mut() {
            Some(g) => ops::layer_norm_backward(&tail.ln2, &lp.ln2_gain, &dln2, Some(&mut g.ln2_gain), Some(&mut g.ln2_bias)),
            None => ops::layer_norm_backward(&tail.ln2, &lp.ln2_gain, &dln2, None, None),
        };
        ops::add_assign(&mut dx_mid, dx_out);

        // attention output projection
        let mut datt = vec![T::zero(); d];
        ops::matvec_t_acc(&lp.wo, &dx_mid, &mut datt);
        if let Some(g) = grads.as_deref_mut() {
            ops::outer_acc(&dx_mid, &tail.att_concat, &mut g.wo);
            ops::add_assign(&mut g.bo, &dx_mid);
        }

        let mut dq = vec![T::zero(); d];
        let mut da = vec![T::zero(); n];
        for h in 0..cfg.n_heads {
            let off = h * dh;
            let a = &tail.att[h * n..(h + 1) * n];
            let dout = &datt[off..off + dh];
            for j in 0..n {
                let vj = if j < pos { &prefix_values[j * d + off..j * d + off + dh] } else { &own_v[off..off + dh] };
                da[j] = ops::dot(dout, vj);
                let dvj = &mut dvalues[j * d + off..j * d + off + dh];
                for (t, &o) in dvj.iter_mut().zip(dout) {
                    *t += a[j] * o;
                }
            }
            let mix = a.iter().zip(&da).map(|(&x, &y)| x * y).sum::<T>();
            let qh = &q[off..off + dh];
            for j in 0..n {
                let ds = a[j] * (da[j] - mix) * scale;
                let kj = if j < pos { &prefix_keys[j * d + off..j * d + off + dh] } else { &own_k[off..off + dh] };
                for (t, &kv) in dq[off..off + dh].iter_mut().zip(kj) {
                    *t += ds * kv;
                }
                for (t, &qv) in dkeys[j * d + off..j * d + off + dh].iter_mut().zip(qh) {
                    *t += ds * qv;
                }
            }
        }

        TailGrad {
            d_tap,
            dx_resid: dx_mid,
            dq,
        }
    }

    /// Backpropagates query/key/value gradients of one position into the
    /// residual stream entering the block.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn qkv_backward(
        &self,
        layer: usize,
        rec: &QkvRecord<T>,
        dq: &[T],
        dk: &[T],
        dv: &[T],
        mut grads: Option<&mut LayerParams<T>>,
    ) -> Vec<T> {
        let lp = &self.params.layers[layer];
        let d = self.config.d_model;
        let mut dln1 = vec![T::zero(); d];
        ops::matvec_t_acc(&lp.wq, dq, &mut dln1);
        ops::matvec_t_acc(&lp.wk, dk, &mut dln1);
        ops::matvec_t_acc(&lp.wv, dv, &mut dln1);
        match grads.as_deref_mut() {
            Some(g) => {
                ops::outer_acc(dq, &rec.ln1_out, &mut g.wq);
                ops::outer_acc(dk, &rec.ln1_out, &mut g.wk);
                ops::outer_acc(dv, &rec.ln1_out, &mut g.wv);
                ops::add_assign(&mut g.bq, dq);
                ops::add_assign(&mut g.bk, dk);
                ops::add_assign(&mut g.bv, dv);
                ops::layer_norm_backward(&rec.ln1, &lp.ln1_gain, &dln1, Some(&mut g.ln1_gain), Some(&mut g.ln1_bias))
            }
            None => ops::layer_norm_backward(&rec.ln1, &lp.ln1_gain, &dln1, None, None),
        }
    }

    /// Summed next-token cross-entropy over `targets` (`(position, token)`)
    /// and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, tokens: &[usize], targets: &[(usize, usize)]) -> Result<(f64, Params<T>)> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let len = tokens.len();
        for &(p, t) in targets {
            if p >= len {
                return Err(Error::PositionOutOfRange { position: p, len });
            }
            if t >= cfg.vocab_size {
                return Err(Error::TokenOutOfRange {
                    token: t,
                    position: p,
                    vocab_size: cfg.vocab_size,
                });
            }
        }
        let trace = self.run(
            tokens,
            &Edits::none(cfg.n_layers),
            TraceOptions {
                full: true,
                record: true,
            },
        )?;
        let mut grads = Params::zeros(cfg);
        let mut loss = 0.0;

        // unembedding and final norm
        let mut dx: Vec<Vec<T>> = vec![vec![T::zero(); d]; len];
        for &(p, t) in targets {
            let resid = trace.outputs[p].as_ref().expect("full pass");
            let (logits, rec, normed) = self.logits_of(resid)?;
            let lse = ops::log_sum_exp(&logits);
            loss += (lse - logits[t]).f64();
            let mut dlogits: Vec<T> = logits.iter().map(|&z| (z - lse).exp()).collect();
            dlogits[t] -= T::one();
            ops::outer_acc(&dlogits, &normed, &mut grads.w_unembed);
            ops::add_assign(&mut grads.b_unembed, &dlogits);
            let mut dnormed = vec![T::zero(); d];
            ops::matvec_t_acc(&self.params.w_unembed, &dlogits, &mut dnormed);
            let dr = ops::layer_norm_backward(&rec, &self.params.lnf_gain, &dnormed, Some(&mut grads.lnf_gain), Some(&mut grads.lnf_bias));
            ops::add_assign(&mut dx[p], &dr);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                site: "loss",
                layer: None,
                position: None,
            });
        }

        for layer in (0..cfg.n_layers).rev() {
            let keys = &trace.keys[layer];
            let values = &trace.values[layer];
            let mut dkeys = vec![T::zero(); len * d];
            let mut dvalues = vec![T::zero(); len * d];
            let mut dqs = vec![Vec::new(); len];
            let mut dx_next = vec![Vec::new(); len];
            let g = &mut grads.layers[layer];
            for p in (0..len).rev() {
                let tail = trace.tails[layer][p].as_ref().expect("recorded pass");
                let tg = self.tail_backward(
                    layer,
                    p,
                    tail,
                    &trace.qkv[layer][p].q,
                    &keys[..p * d],
                    &keys[p * d..(p + 1) * d],
                    &values[..p * d],
                    &values[p * d..(p + 1) * d],
                    &dx[p],
                    &mut dkeys[..(p + 1) * d],
                    &mut dvalues[..(p + 1) * d],
                    Some(g),
                );
                dqs[p] = tg.dq;
                dx_next[p] = tg.dx_resid;
            }
            for p in 0..len {
                let dr = self.qkv_backward(
                    layer,
                    &trace.qkv[layer][p],
                    &dqs[p],
                    &dkeys[p * d..(p + 1) * d],
                    &dvalues[p * d..(p + 1) * d],
                    Some(g),
                );
                ops::add_assign(&mut dx_next[p], &dr);
            }
            dx = dx_next;
        }

        for (p, (&t, g)) in tokens.iter().zip(&dx).enumerate() {
            ops::add_assign(&mut grads.tok_emb[t * d..(t + 1) * d], g);
            ops::add_assign(&mut grads.pos_emb[p * d..(p + 1) * d], g);
        }
        Ok((loss, grads))
    }
}
