//! Next-token training with AdamW.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aqua::{Prompter, QAExample};
use crate::engine::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which positions contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMask {
    /// Only the answer letter after the prompt.
    AnswerOnly,
    /// Every next token of prompt plus answer.
    AllPositions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Linear warm-up steps; afterwards cosine decay to `lr * min_lr_ratio`.
    pub warmup: usize,
    pub min_lr_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    pub loss_mask: LossMask,
    pub init_std: f64,
    pub seed: u64,
    /// Compute the per-sequence gradients of a batch on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 16,
            lr: 3e-3,
            warmup: 100,
            min_lr_ratio: 0.1,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.01,
            grad_clip: 1.0,
            loss_mask: LossMask::AllPositions,
            init_std: 0.02,
            seed: 0,
            parallel: false,
        }
    }
}

impl TrainSettings {
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.lr * (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.steps.saturating_sub(self.warmup).max(1) as f64;
        let t = ((step - self.warmup) as f64 / span).min(1.0);
        let floor = self.lr * self.min_lr_ratio;
        floor + (self.lr - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// A token sequence and its `(position, next token)` targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSeq {
    pub tokens: Vec<usize>,
    pub targets: Vec<(usize, usize)>,
}

impl TrainSeq {
    /// `prompt` followed by `answer`; the input drops the answer itself.
    pub fn from_prompt(prompt: Vec<usize>, answer: usize, mask: LossMask) -> Self {
        let n = prompt.len();
        let targets = match mask {
            LossMask::AnswerOnly => vec![(n - 1, answer)],
            LossMask::AllPositions => (0..n).map(|p| (p, if p + 1 < n { prompt[p + 1] } else { answer })).collect(),
        };
        Self { tokens: prompt, targets }
    }
}

/// Draws training sequences from questions, shuffling the option order of
/// every draw so the letter carries no prior.
pub struct QuestionSampler<'a> {
    pub prompter: Prompter<'a>,
    pub examples: &'a [QAExample],
    pub mask: LossMask,
}

impl QuestionSampler<'_> {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Result<TrainSeq> {
        let ex = &self.examples[rng.random_range(0..self.examples.len())];
        let mut order = [0usize, 1, 2, 3];
        order.shuffle(rng);
        let mut q = ex.clone();
        q.options = order.map(|i| ex.options[i].clone());
        q.correct_index = order.iter().position(|&i| i == ex.correct_index).unwrap();
        let prompt = self.prompter.tokens(&q)?;
        Ok(TrainSeq::from_prompt(prompt, self.prompter.letter_ids()[q.correct_index], self.mask))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainCurve {
    /// Tab-separated `step loss grad_norm lr`, one row per step.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tloss\tgrad_norm\tlr\n");
        for p in &self.points {
            out.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6e}\n", p.step, p.loss, p.grad_norm, p.lr));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }

    /// Mean loss over the last `n` steps.
    pub fn tail_loss(&self, n: usize) -> f64 {
        let tail = &self.points[self.points.len().saturating_sub(n)..];
        tail.iter().map(|p| p.loss).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Mean per-target cross-entropy of `seqs` under `model`.
pub fn mean_loss<T: Scalar>(model: &Model<T>, seqs: &[TrainSeq]) -> Result<f64> {
    let (mut total, mut n) = (0.0, 0usize);
    for s in seqs {
        let (loss, _) = model.loss_and_grad(&s.tokens, &s.targets)?;
        total += loss;
        n += s.targets.len();
    }
    Ok(total / n.max(1) as f64)
}

/// Trains `model` in place. `draw` supplies one sequence per call from the
/// training rng. With `parallel` off the result depends only on the seed.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    draw: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<TrainSeq>,
    settings: &TrainSettings,
) -> Result<TrainCurve> {
    if settings.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let sizes: Vec<usize> = model.params().named_tensors().iter().map(|(_, t)| t.len()).collect();
    let mut m1: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut m2 = m1.clone();
    let mut curve = TrainCurve::default();
    for step in 0..settings.steps {
        let batch = (0..settings.batch_size).map(|_| draw(&mut rng)).collect::<Result<Vec<_>>>()?;
        let model_ref = &*model;
        let results: Vec<_> = if settings.parallel {
            batch.par_iter().map(|s| model_ref.loss_and_grad(&s.tokens, &s.targets)).collect()
        } else {
            batch.iter().map(|s| model_ref.loss_and_grad(&s.tokens, &s.targets)).collect()
        };
        let n_targets: usize = batch.iter().map(|s| s.targets.len()).sum();
        let scale = 1.0 / n_targets.max(1) as f64;
        let mut grad: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut loss = 0.0;
        // Fixed-order reduction keeps the sum independent of scheduling.
        for r in results {
            let (l, g) = match r {
                Err(e) if e.is_numeric() => return Err(Error::Divergence { step, loss: f64::NAN }),
                r => r?,
            };
            loss += l;
            for (acc, t) in grad.iter_mut().zip(g.named_tensors()) {
                for (a, &v) in acc.iter_mut().zip(t.1.iter()) {
                    *a += v.f64() * scale;
                }
            }
        }
        loss *= scale;
        let norm = grad.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        let clip = if settings.grad_clip > 0.0 && norm > settings.grad_clip { settings.grad_clip / norm } else { 1.0 };
        let lr = settings.lr_at(step);
        let t = (step + 1) as i32;
        let c1 = 1.0 - settings.beta1.powi(t);
        let c2 = 1.0 - settings.beta2.powi(t);
        for (i, w) in model.params_mut().tensors_mut().into_iter().enumerate() {
            for j in 0..w.len() {
                let g = grad[i][j] * clip;
                m1[i][j] = settings.beta1 * m1[i][j] + (1.0 - settings.beta1) * g;
                m2[i][j] = settings.beta2 * m2[i][j] + (1.0 - settings.beta2) * g * g;
                let update = (m1[i][j] / c1) / ((m2[i][j] / c2).sqrt() + settings.eps);
                let x = w[j].f64();
                w[j] = T::of(x - lr * (update + settings.weight_decay * x));
            }
        }
        curve.points.push(CurvePoint { step, loss, grad_norm: norm, lr });
        if step % 100 == 0 {
            log::debug!("step {step} loss {loss:.4} |g| {norm:.3} lr {lr:.2e}");
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ModelConfig, Params};
    use crate::scalar::Precision;

    fn toy() -> (Model<f64>, Vec<TrainSeq>) {
        let cfg = ModelConfig::new(2, 16, 2, 32, 12, 8).with_precision(Precision::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Model::new(cfg.clone(), Params::random(&cfg, 0.1, &mut rng)).unwrap();
        // next token = previous token + 1 (mod 12)
        let seqs = (0..12)
            .map(|s| {
                let tokens: Vec<usize> = (0..6).map(|i| (s + i) % 12).collect();
                TrainSeq::from_prompt(tokens, (s + 6) % 12, LossMask::AllPositions)
            })
            .collect();
        (model, seqs)
    }

    fn drawer(seqs: &[TrainSeq]) -> impl FnMut(&mut ChaCha8Rng) -> Result<TrainSeq> + '_ {
        move |rng| Ok(seqs[rng.random_range(0..seqs.len())].clone())
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (mut model, seqs) = toy();
        let before = model.params().clone();
        let settings = TrainSettings { steps: 5, batch_size: 2, lr: 0.0, ..Default::default() };
        train(&mut model, &mut drawer(&seqs), &settings).unwrap();
        assert_eq!(model.params(), &before);
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let (mut a, seqs) = toy();
        let mut b = a.clone();
        let start = mean_loss(&a, &seqs).unwrap();
        let settings = TrainSettings { steps: 150, batch_size: 4, lr: 1e-2, warmup: 10, ..Default::default() };
        let curve = train(&mut a, &mut drawer(&seqs), &settings).unwrap();
        assert!(mean_loss(&a, &seqs).unwrap() < 0.5 * start);
        assert_eq!(curve.points.len(), 150);
        train(&mut b, &mut drawer(&seqs), &TrainSettings { parallel: true, ..settings }).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn divergence_names_the_step() {
        let (mut model, seqs) = toy();
        model.params_mut().tok_emb[0] = f64::NAN;
        let bad = TrainSeq { tokens: vec![0, 1], targets: vec![(1, 2)] };
        let mut draw = |_: &mut ChaCha8Rng| Ok(bad.clone());
        let err = train(&mut model, &mut draw, &TrainSettings { steps: 3, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 0, .. }), "{err}");
        let _ = seqs;
    }

    #[test]
    fn answer_only_targets_the_last_position() {
        let s = TrainSeq::from_prompt(vec![5, 6, 7], 2, LossMask::AnswerOnly);
        assert_eq!(s.targets, vec![(2, 2)]);
        let s = TrainSeq::from_prompt(vec![5, 6, 7], 2, LossMask::AllPositions);
        assert_eq!(s.targets, vec![(0, 6), (1, 7), (2, 2)]);
    }
}
