use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Weights of one transformer block. Matrices are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gain: Vec<T>,
    pub ln1_bias: Vec<T>,
    pub wq: Vec<T>,
    pub bq: Vec<T>,
    pub wk: Vec<T>,
    pub bk: Vec<T>,
    pub wv: Vec<T>,
    pub bv: Vec<T>,
    pub wo: Vec<T>,
    pub bo: Vec<T>,
    pub ln2_gain: Vec<T>,
    pub ln2_bias: Vec<T>,
    /// `[d_ffn][d_model]`
    pub w_in: Vec<T>,
    pub b_in: Vec<T>,
    /// `[d_model][d_ffn]`
    pub w_out: Vec<T>,
    pub b_out: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// `[vocab][d_model]`
    pub tok_emb: Vec<T>,
    /// `[max_seq][d_model]`
    pub pos_emb: Vec<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_gain: Vec<T>,
    pub lnf_bias: Vec<T>,
    /// `[vocab][d_model]`
    pub w_unembed: Vec<T>,
    pub b_unembed: Vec<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let f = cfg.d_ffn;
        let z = |n: usize| vec![T::zero(); n];
        Self {
            ln1_gain: z(d),
            ln1_bias: z(d),
            wq: z(d * d),
            bq: z(d),
            wk: z(d * d),
            bk: z(d),
            wv: z(d * d),
            bv: z(d),
            wo: z(d * d),
            bo: z(d),
            ln2_gain: z(d),
            ln2_bias: z(d),
            w_in: z(f * d),
            b_in: z(f),
            w_out: z(d * f),
            b_out: z(d),
        }
    }

    fn tensors(&self) -> [(&'static str, &Vec<T>); 16] {
        [
            ("ln1_gain", &self.ln1_gain),
            ("ln1_bias", &self.ln1_bias),
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln2_gain", &self.ln2_gain),
            ("ln2_bias", &self.ln2_bias),
            ("w_in", &self.w_in),
            ("b_in", &self.b_in),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<T>; 16] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w_in,
            &mut self.b_in,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }
}

impl<T: Scalar> Params<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let z = |n: usize| vec![T::zero(); n];
        Self {
            tok_emb: z(cfg.vocab_size * d),
            pos_emb: z(cfg.max_seq * d),
            layers: (0..cfg.n_layers).map(|_| LayerParams::zeros(cfg)).collect(),
            lnf_gain: z(d),
            lnf_bias: z(d),
            w_unembed: z(cfg.vocab_size * d),
            b_unembed: z(cfg.vocab_size),
        }
    }

    /// GPT-2 style initialization: N(0, std) matrices, unit norm gains,
    /// zero biases, residual projections scaled by `1/sqrt(2 * n_layers)`.
    pub fn random<R: Rng + ?Sized>(cfg: &ModelConfig, std: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        let normal = Normal::new(0.0, std).expect("finite std");
        let resid = Normal::new(0.0, std / (2.0 * cfg.n_layers as f64).sqrt()).expect("finite std");
        let mut fill = |v: &mut Vec<T>, dist: &Normal<f64>| {
            for x in v.iter_mut() {
                *x = T::of(dist.sample(rng));
            }
        };
        fill(&mut p.tok_emb, &normal);
        fill(&mut p.pos_emb, &normal);
        for layer in &mut p.layers {
            fill(&mut layer.wq, &normal);
            fill(&mut layer.wk, &normal);
            fill(&mut layer.wv, &normal);
            fill(&mut layer.wo, &resid);
            fill(&mut layer.w_in, &normal);
            fill(&mut layer.w_out, &resid);
            layer.ln1_gain.fill(T::one());
            layer.ln2_gain.fill(T::one());
        }
        fill(&mut p.w_unembed, &normal);
        p.lnf_gain.fill(T::one());
        p
    }

    /// All tensors in canonical (file) order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Vec<T>)> {
        let mut out = vec![
            ("tok_emb".to_string(), &self.tok_emb),
            ("pos_emb".to_string(), &self.pos_emb),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("lnf_gain".to_string(), &self.lnf_gain));
        out.push(("lnf_bias".to_string(), &self.lnf_bias));
        out.push(("w_unembed".to_string(), &self.w_unembed));
        out.push(("b_unembed".to_string(), &self.b_unembed));
        out
    }

    /// Mutable tensors in the same order as [`Params::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.lnf_gain);
        out.push(&mut self.lnf_bias);
        out.push(&mut self.w_unembed);
        out.push(&mut self.b_unembed);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = Params::<T>::zeros(cfg);
        if self.layers.len() != cfg.n_layers {
            return Err(Error::Config(format!(
                "expected {} layers, found {}",
                cfg.n_layers,
                self.layers.len()
            )));
        }
        for ((name, have), (_, want)) in self.named_tensors().into_iter().zip(expected.named_tensors()) {
            if have.len() != want.len() {
                return Err(Error::Config(format!(
                    "tensor {name} has {} elements, expected {}",
                    have.len(),
                    want.len()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        Params {
            tok_emb: conv(&self.tok_emb),
            pos_emb: conv(&self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_gain: conv(&l.ln1_gain),
                    ln1_bias: conv(&l.ln1_bias),
                    wq: conv(&l.wq),
                    bq: conv(&l.bq),
                    wk: conv(&l.wk),
                    bk: conv(&l.bk),
                    wv: conv(&l.wv),
                    bv: conv(&l.bv),
                    wo: conv(&l.wo),
                    bo: conv(&l.bo),
                    ln2_gain: conv(&l.ln2_gain),
                    ln2_bias: conv(&l.ln2_bias),
                    w_in: conv(&l.w_in),
                    b_in: conv(&l.b_in),
                    w_out: conv(&l.w_out),
                    b_out: conv(&l.b_out),
                })
                .collect(),
            lnf_gain: conv(&self.lnf_gain),
            lnf_bias: conv(&self.lnf_bias),
            w_unembed: conv(&self.w_unembed),
            b_unembed: conv(&self.b_unembed),
        }
    }
}
