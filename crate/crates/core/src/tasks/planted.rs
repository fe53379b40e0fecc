//! Hand-built transformer that solves the marker task through a known
//! circuit, with designated good and bad FFN neurons.
//!
//! Layer norms are made transparent (huge epsilon, matching gain) and every
//! write into the residual stream is zero-sum thanks to a sink dimension, so
//! each block sees the raw residual. The circuit:
//!
//! * layer 0 attention binds each option to its letter, copies the category
//!   of the most recent marker word, and flags the question section;
//! * layer 0 FFN flags the option naming that category (correct) and the
//!   option naming its sibling (lure);
//! * planted-layer neurons are constant and feed two gains;
//! * the next layer's select head attends from the final position to the
//!   options with weight `base + gain_good` on the correct one and
//!   `gain_bad` on the lure, and copies the bound letter into the logits.
//!
//! Zeroing a good neuron lowers the correct letter's logit; zeroing a bad
//! one lowers the lure's. Everything else is background noise well below
//! the margin.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::generate::lure_slot;
use super::lexicon::{self, CATEGORIES, MARKERS};
use crate::aqua::{Prompter, QAExample};
use crate::engine::{Model, ModelConfig, NeuronId, Params};
use crate::error::{Error, Result};
use crate::evaluation::answer_from_logits;
use crate::scalar::{Precision, Scalar};
use crate::tokenizer::{Tokenizer, LETTERS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedSpec {
    pub n_layers: usize,
    pub d_ffn: usize,
    pub max_seq: usize,
    pub planted_layer: usize,
    pub n_good: usize,
    pub n_bad: usize,
    pub seed: u64,
    /// Required single-neuron logit shift of planted neurons; background
    /// neurons must stay below it.
    pub margin: f64,
    /// Select-head preference for the correct option with the good gain removed.
    pub select_base: f64,
    /// Weight from each planted neuron into its gain.
    pub gain_weight: f64,
    /// Constant pre-activation of planted neurons.
    pub planted_preact: f64,
    pub letter_scale: f64,
    pub background_in_std: f64,
    pub background_letter_std: f64,
    pub background_junk_std: f64,
    pub demo_header: String,
    pub question_header: String,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_layers: 4,
            d_ffn: 1024,
            max_seq: 128,
            planted_layer: 2,
            n_good: 8,
            n_bad: 8,
            seed: 0,
            margin: 0.05,
            select_base: 1.5,
            gain_weight: 0.5,
            planted_preact: 0.5,
            letter_scale: 4.0,
            background_in_std: 0.5,
            background_letter_std: 2e-4,
            background_junk_std: 0.03,
            demo_header: "Example".into(),
            question_header: "Question".into(),
        }
    }
}

pub const D_MODEL: usize = 64;
pub const N_HEADS: usize = 4;
const LN_EPS: f64 = 1e6;
const LN_GAIN: f64 = 1000.0;

// Residual layout.
const POS: usize = 0;
const LET: usize = 1; // 4: letter token identity
const MC: usize = 5; // 8: marker category
const OC: usize = 13; // 8: option category (category-name tokens)
const HDR: usize = 21;
const HQ: usize = 22;
const BL: usize = 23; // 4: bound letter
const TC: usize = 27; // 8: target category copied from the marker
const INQ: usize = 35;
const RC: usize = 36; // option is correct
const RL: usize = 37; // option is the lure
const GP: usize = 38;
const GM: usize = 39;
const LL: usize = 40; // 4: letter logits
const JUNK: usize = 44;
const SINK: usize = 63;

// Layer-0 routing strengths.
const LETTER_BIAS: f64 = 40.0;
const LETTER_RECENCY: f64 = 4.0;
const MARKER_BIAS: f64 = 40.0;
const HEADER_BIAS: f64 = 60.0;
const MATCH_GAIN: f64 = 10.0;
// Select head.
const OPTION_BIAS: f64 = 20.0;
const QUESTION_BIAS: f64 = 20.0;

/// Verified planted model.
#[derive(Debug, Clone)]
pub struct PlantedModel<T: Scalar> {
    pub model: Model<T>,
    pub planted_good: Vec<NeuronId>,
    pub planted_bad: Vec<NeuronId>,
    pub margin: f64,
    pub check: PlantedCheck,
}

/// Outcome of the exhaustive ablation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCheck {
    pub layer: usize,
    pub questions: usize,
    /// Smallest target-letter shift seen for a planted neuron.
    pub min_planted_shift: f64,
    /// Largest letter-logit shift seen for any other neuron.
    pub max_background_shift: f64,
    /// Neurons whose ablation crossed the margin, in index order.
    pub passing: Vec<usize>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

struct Builder {
    p: Params<f64>,
    d: usize,
    d_ffn: usize,
}

impl Builder {
    fn set(m: &mut [f64], cols: usize, r: usize, c: usize, v: f64) {
        m[r * cols + c] = v;
    }
    fn wq(&mut self, l: usize, r: usize, c: usize, v: f64) {
        Self::set(&mut self.p.layers[l].wq, self.d, r, c, v)
    }
    fn wk(&mut self, l: usize, r: usize, c: usize, v: f64) {
        Self::set(&mut self.p.layers[l].wk, self.d, r, c, v)
    }
    fn wv(&mut self, l: usize, r: usize, c: usize, v: f64) {
        Self::set(&mut self.p.layers[l].wv, self.d, r, c, v)
    }
    fn wo(&mut self, l: usize, r: usize, c: usize, v: f64) {
        Self::set(&mut self.p.layers[l].wo, self.d, r, c, v)
    }
    fn w_in(&mut self, l: usize, n: usize, c: usize, v: f64) {
        Self::set(&mut self.p.layers[l].w_in, self.d, n, c, v)
    }
    fn w_out(&mut self, l: usize, r: usize, n: usize, v: f64) {
        Self::set(&mut self.p.layers[l].w_out, self.d_ffn, r, n, v)
    }

    /// Makes every vector written into the residual stream sum to zero.
    fn balance(&mut self) {
        let d = self.d;
        let fix_rows = |m: &mut [f64]| {
            for row in m.chunks_mut(d) {
                row[SINK] = 0.0;
                row[SINK] = -row.iter().sum::<f64>();
            }
        };
        fix_rows(&mut self.p.tok_emb);
        fix_rows(&mut self.p.pos_emb);
        for lp in &mut self.p.layers {
            for (m, cols) in [(&mut lp.wo, d), (&mut lp.w_out, self.d_ffn)] {
                for c in 0..cols {
                    m[SINK * cols + c] = 0.0;
                    let s: f64 = (0..d).map(|r| m[r * cols + c]).sum();
                    m[SINK * cols + c] = -s;
                }
            }
            fix_rows(&mut lp.bo);
            fix_rows(&mut lp.b_out);
        }
    }
}

fn token(tok: &Tokenizer, w: &str) -> Result<usize> {
    tok.id(w).ok_or_else(|| Error::PlantedCheck(format!("vocabulary lacks {w:?}")))
}

/// Builds and verifies the planted model. `check` must be marker-task
/// questions; each is verified by zeroing and doubling every neuron of the
/// planted layer.
pub fn build_planted<T: Scalar>(
    spec: &PlantedSpec,
    prompter: Prompter<'_>,
    check: &[QAExample],
) -> Result<PlantedModel<T>> {
    let tok = prompter.tokenizer;
    let l_plant = spec.planted_layer;
    let l_select = l_plant + 1;
    if l_plant == 0 || l_select >= spec.n_layers {
        return Err(Error::Config(format!(
            "planted layer {l_plant} needs a feature layer before it and a select layer after it (n_layers {})",
            spec.n_layers
        )));
    }
    if spec.n_good + spec.n_bad > spec.d_ffn {
        return Err(Error::Config(format!(
            "{} planted neurons do not fit in d_ffn {}",
            spec.n_good + spec.n_bad,
            spec.d_ffn
        )));
    }
    if spec.d_ffn < 16 {
        return Err(Error::Config("d_ffn must hold the 16 matching neurons of layer 0".into()));
    }
    if !(spec.margin > 0.0) {
        return Err(Error::Config("margin must be positive".into()));
    }
    let cfg = ModelConfig::new(spec.n_layers, D_MODEL, N_HEADS, spec.d_ffn, tok.vocab_size(), spec.max_seq)
        .with_precision(Precision::F64)
        .with_norm_eps(LN_EPS);
    cfg.validate()?;
    let d = D_MODEL;
    let dh = d / N_HEADS;
    let qs = (dh as f64).sqrt();
    let mut b = Builder { p: Params::zeros(&cfg), d, d_ffn: spec.d_ffn };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Embeddings.
    for (i, letter) in LETTERS.iter().enumerate() {
        b.p.tok_emb[token(tok, letter)? * d + LET + i] = 1.0;
    }
    for (c, name) in CATEGORIES.iter().enumerate() {
        b.p.tok_emb[token(tok, name)? * d + OC + c] = 1.0;
        for m in MARKERS[c] {
            if let Some(id) = tok.id(m) {
                b.p.tok_emb[id * d + MC + c] = 1.0;
            }
        }
    }
    b.p.tok_emb[token(tok, &spec.demo_header)? * d + HDR] = 1.0;
    let q = token(tok, &spec.question_header)?;
    b.p.tok_emb[q * d + HDR] = 1.0;
    b.p.tok_emb[q * d + HQ] = 1.0;
    for p in 0..spec.max_seq {
        b.p.pos_emb[p * d + POS] = p as f64;
    }

    // Layer norms: transparent.
    for lp in &mut b.p.layers {
        lp.ln1_gain.fill(LN_GAIN);
        lp.ln2_gain.fill(LN_GAIN);
    }
    b.p.lnf_gain.fill(LN_GAIN);

    // Layer 0, heads 0-2: "most recent token with a feature" lookups.
    // score = bias * feature(key) + recency * position(key).
    let lookups: [(usize, &[usize], f64, f64, &[(usize, usize)]); 3] = [
        (0, &[LET, LET + 1, LET + 2, LET + 3], LETTER_BIAS, LETTER_RECENCY, &[(LET, BL), (LET + 1, BL + 1), (LET + 2, BL + 2), (LET + 3, BL + 3)]),
        (1, &[MC, MC + 1, MC + 2, MC + 3, MC + 4, MC + 5, MC + 6, MC + 7], MARKER_BIAS, 1.0, &[
            (MC, TC), (MC + 1, TC + 1), (MC + 2, TC + 2), (MC + 3, TC + 3),
            (MC + 4, TC + 4), (MC + 5, TC + 5), (MC + 6, TC + 6), (MC + 7, TC + 7),
        ]),
        (2, &[HDR], HEADER_BIAS, 1.0, &[(HQ, INQ)]),
    ];
    for (h, feats, bias, recency, copies) in lookups {
        let off = h * dh;
        b.p.layers[0].bq[off] = qs;
        b.p.layers[0].bq[off + 1] = qs;
        for &f in feats {
            b.wk(0, off, f, bias);
        }
        b.wk(0, off + 1, POS, recency);
        for (j, &(from, to)) in copies.iter().enumerate() {
            b.wv(0, off + j, from, 1.0);
            b.wo(0, to, off + j, 1.0);
        }
    }

    // Layer 0 FFN: neurons 0..8 flag the correct option, 8..16 the lure.
    let fire = 1.0 / gelu(0.5 * MATCH_GAIN);
    for c in 0..CATEGORIES.len() {
        for (n, target, out) in [(c, c, RC), (8 + c, lexicon::sibling(c), RL)] {
            b.w_in(0, n, OC + c, MATCH_GAIN);
            b.w_in(0, n, TC + target, MATCH_GAIN);
            b.w_in(0, n, INQ, MATCH_GAIN);
            b.p.layers[0].b_in[n] = -2.5 * MATCH_GAIN;
            b.w_out(0, out, n, fire);
        }
    }

    // Planted neurons.
    let picks = index::sample(&mut rng, spec.d_ffn, spec.n_good + spec.n_bad).into_vec();
    let mut good: Vec<usize> = picks[..spec.n_good].to_vec();
    let mut bad: Vec<usize> = picks[spec.n_good..].to_vec();
    good.sort_unstable();
    bad.sort_unstable();
    for (set, gain) in [(&good, GP), (&bad, GM)] {
        for &n in set.iter() {
            b.p.layers[l_plant].b_in[n] = spec.planted_preact;
            b.w_out(l_plant, gain, n, spec.gain_weight);
        }
    }

    // Select head (head 0 of the next layer).
    let ls = l_select;
    b.p.layers[ls].bq[0] = qs * OPTION_BIAS;
    b.p.layers[ls].bq[1] = qs * QUESTION_BIAS;
    b.p.layers[ls].bq[2] = qs * spec.select_base;
    b.wq(ls, 2, GP, qs);
    b.wq(ls, 3, GM, qs);
    for c in 0..CATEGORIES.len() {
        b.wk(ls, 0, OC + c, 1.0);
    }
    b.wk(ls, 1, INQ, 1.0);
    b.wk(ls, 2, RC, 1.0);
    b.wk(ls, 3, RL, 1.0);
    for i in 0..4 {
        b.wv(ls, i, BL + i, 1.0);
        b.wo(ls, LL + i, i, 1.0);
    }

    // Unembedding: letters read their logit dimension.
    for (i, letter) in LETTERS.iter().enumerate() {
        b.p.w_unembed[token(tok, letter)? * d + LL + i] = spec.letter_scale;
    }

    // Background neurons everywhere else.
    let w_std = Normal::new(0.0, spec.background_in_std).expect("finite");
    let ll_std = Normal::new(0.0, spec.background_letter_std).expect("finite");
    let junk_std = Normal::new(0.0, spec.background_junk_std).expect("finite");
    let readable: Vec<usize> = (1..SINK).collect();
    for l in 0..spec.n_layers {
        for n in 0..spec.d_ffn {
            let reserved = (l == 0 && n < 16) || (l == l_plant && (good.contains(&n) || bad.contains(&n)));
            if reserved {
                continue;
            }
            for &c in &readable {
                b.w_in(l, n, c, w_std.sample(&mut rng) / (readable.len() as f64).sqrt());
            }
            b.p.layers[l].b_in[n] = w_std.sample(&mut rng) * 2.0;
            for i in 0..4 {
                b.w_out(l, LL + i, n, ll_std.sample(&mut rng));
            }
            for r in JUNK..SINK {
                b.w_out(l, r, n, junk_std.sample(&mut rng));
            }
        }
    }
    b.balance();

    let model: Model<T> = Model::new(cfg.clone(), b.p)?.cast();
    let id = |i: &usize| NeuronId::new(l_plant, *i);
    let planted_good: Vec<NeuronId> = good.iter().map(id).collect();
    let planted_bad: Vec<NeuronId> = bad.iter().map(id).collect();
    let check = verify_planted(&model, l_plant, &good, &bad, spec.margin, prompter, check)?;
    Ok(PlantedModel { model, planted_good, planted_bad, margin: spec.margin, check })
}

/// Zeroes and doubles every neuron of `layer` on every question and checks
/// that exactly `good` and `bad` move their target letter by the margin.
pub fn verify_planted<T: Scalar>(
    model: &Model<T>,
    layer: usize,
    good: &[usize],
    bad: &[usize],
    margin: f64,
    prompter: Prompter<'_>,
    questions: &[QAExample],
) -> Result<PlantedCheck> {
    if questions.is_empty() {
        return Err(Error::PlantedCheck("no questions to verify against".into()));
    }
    let letters = prompter.letter_ids();
    let d_ffn = model.config().d_ffn;
    let mut min_planted = f64::INFINITY;
    let mut max_background: f64 = 0.0;
    let mut passing = vec![true; d_ffn];
    let mut failures = Vec::new();
    for q in questions {
        let lure = lure_slot(q).ok_or_else(|| Error::PlantedCheck(format!("{}: no lure option", q.id)))?;
        let tokens = prompter.tokens(q)?;
        let base = model.ablation_base(&tokens, layer)?;
        let clean = base.clean_logits()?;
        let pick = |logits: &[T]| letters.map(|i| logits[i].f64());
        let clean4 = pick(&clean);
        let chosen = answer_from_logits(&clean, letters)?.chosen;
        if chosen != q.correct_index {
            return Err(Error::PlantedCheck(format!(
                "{}: planted model answers {} instead of {}",
                q.id, LETTERS[chosen], LETTERS[q.correct_index]
            )));
        }
        for n in 0..d_ffn {
            let target = if good.contains(&n) {
                Some(q.correct_index)
            } else if bad.contains(&n) {
                Some(lure)
            } else {
                None
            };
            for (factor, sign) in [(0.0, -1.0), (2.0, 1.0)] {
                let shifted = pick(&base.logits_with_factor(n, factor)?);
                let delta: Vec<f64> = (0..4).map(|i| shifted[i] - clean4[i]).collect();
                let biggest = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                match target {
                    Some(t) => {
                        let moved = sign * delta[t];
                        min_planted = min_planted.min(moved);
                        if moved < margin {
                            passing[n] = false;
                            failures.push(format!("{}: neuron {n} x{factor} moves {} by {:+.4}", q.id, LETTERS[t], delta[t]));
                        }
                    }
                    None => {
                        max_background = max_background.max(biggest);
                        if biggest >= margin {
                            failures.push(format!("{}: background neuron {n} x{factor} shifts a letter by {biggest:.4}", q.id));
                        }
                    }
                }
            }
        }
    }
    for n in 0..d_ffn {
        if !good.contains(&n) && !bad.contains(&n) {
            passing[n] = false;
        }
    }
    if !failures.is_empty() {
        failures.truncate(10);
        return Err(Error::PlantedCheck(failures.join("; ")));
    }
    Ok(PlantedCheck {
        layer,
        questions: questions.len(),
        min_planted_shift: min_planted,
        max_background_shift: max_background,
        passing: (0..d_ffn).filter(|&n| passing[n]).collect(),
    })
}
