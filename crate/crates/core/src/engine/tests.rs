use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn small_model(seed: u64, n_layers: usize) -> Model<f64> {
    let cfg = ModelConfig::new(n_layers, 16, 4, 32, 12, 16).with_precision(crate::Precision::F64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::random(&cfg, 0.4, &mut rng);
    // nonzero biases and gains exercise every term of the backward pass
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    Model::new(cfg, params).unwrap()
}

fn tokens() -> Vec<usize> {
    vec![3, 7, 1, 0, 11, 5, 2]
}

/// log-softmax of token 2 plus a linear term on token 9.
struct Probe;

impl LogitObjective<f64> for Probe {
    fn value_and_grad(&self, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = ops::softmax(logits);
        let lse = ops::log_sum_exp(logits);
        let value = logits[2] - lse + 0.3 * logits[9];
        let mut g: Vec<f64> = p.iter().map(|&q| -q).collect();
        g[2] += 1.0;
        g[9] += 0.3;
        Ok((value, g))
    }
}

#[test]
fn forward_is_deterministic() {
    let m = small_model(1, 2);
    let a = m.forward(&tokens(), &OverrideMap::new()).unwrap();
    let b = m.forward(&tokens(), &OverrideMap::new()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 12);
}

#[test]
fn rejects_bad_tokens_and_lengths() {
    let m = small_model(1, 2);
    assert!(matches!(m.forward(&[0, 12], &OverrideMap::new()), Err(Error::TokenOutOfRange { token: 12, position: 1, .. })));
    assert!(matches!(m.forward(&[0; 17], &OverrideMap::new()), Err(Error::SequenceLength { .. })));
    assert!(matches!(m.forward(&[], &OverrideMap::new()), Err(Error::SequenceLength { .. })));
    assert!(m.capture_activations(&tokens(), 7).is_err());
}

#[test]
fn override_algebra_holds_exactly() {
    let m = small_model(2, 2);
    let t = tokens();
    let plain = m.forward(&t, &OverrideMap::new()).unwrap();
    let mut ones = OverrideMap::new();
    for l in 0..2 {
        for i in 0..32 {
            ones.insert(NeuronId::new(l, i), OverrideMode::Scale(1.0)).unwrap();
        }
    }
    assert_eq!(m.forward(&t, &ones).unwrap(), plain);
    let n = NeuronId::new(0, 5);
    let pairs = [(OverrideMode::Zero, OverrideMode::Scale(0.0)), (OverrideMode::Double, OverrideMode::Scale(2.0))];
    for (a, b) in pairs {
        let la = m.forward(&t, &OverrideMap::new().with(n, a).unwrap()).unwrap();
        let lb = m.forward(&t, &OverrideMap::new().with(n, b).unwrap()).unwrap();
        assert_eq!(la, lb);
        assert_ne!(la, plain);
    }
}

#[test]
fn zero_model_activations_are_gelu_of_zero() {
    let cfg = ModelConfig::new(2, 8, 2, 6, 8, 8);
    let m = Model::<f32>::new(cfg.clone(), Params::zeros(&cfg)).unwrap();
    let snap = m.capture_activations(&[1, 2, 3], 1).unwrap();
    assert_eq!(snap.position, 1);
    for layer in &snap.layers {
        assert_eq!(layer.len(), 6);
        assert!(layer.iter().all(|&v| v == ops::gelu(0.0f32)));
    }
    // zeroing a neuron whose activation is already zero changes nothing
    let plain = m.forward(&[1, 2, 3], &OverrideMap::new()).unwrap();
    let z = OverrideMap::new().with(NeuronId::new(1, 2), OverrideMode::Zero).unwrap();
    assert_eq!(m.forward(&[1, 2, 3], &z).unwrap(), plain);
}

#[test]
fn override_leaves_earlier_layers_untouched() {
    let m = small_model(3, 3);
    let t = tokens();
    let edits_clean = Edits::none(3);
    let mut edits = Edits::none(3);
    edits.persistent[1] = vec![(4, 0.0), (9, 2.0)];
    let opts = TraceOptions {
        full: true,
        record: true,
    };
    let a = m.run(&t, &edits_clean, opts).unwrap();
    let b = m.run(&t, &edits, opts).unwrap();
    for p in 0..t.len() {
        assert_eq!(a.tails[0][p].as_ref().unwrap().ffn_act, b.tails[0][p].as_ref().unwrap().ffn_act);
        assert_eq!(a.tails[1][p].as_ref().unwrap().ffn_act, b.tails[1][p].as_ref().unwrap().ffn_act);
        assert_ne!(a.tails[2][p].as_ref().unwrap().ffn_act, b.tails[2][p].as_ref().unwrap().ffn_act);
    }
}

#[test]
fn partial_and_full_passes_agree_at_final_position() {
    let m = small_model(4, 2);
    let t = tokens();
    let full = m
        .run(
            &t,
            &Edits::none(2),
            TraceOptions {
                full: true,
                record: true,
            },
        )
        .unwrap();
    assert_eq!(m.final_logits(&full).unwrap(), m.forward(&t, &OverrideMap::new()).unwrap());
}

#[test]
fn snapshot_matches_prefix_run() {
    let m = small_model(5, 2);
    let t = tokens();
    let snap = m.capture_activations(&t, 3).unwrap();
    let full = m
        .run(
            &t,
            &Edits::none(2),
            TraceOptions {
                full: true,
                record: true,
            },
        )
        .unwrap();
    for l in 0..2 {
        assert_eq!(snap.layers[l], full.tails[l][3].as_ref().unwrap().ffn_act);
    }
}

#[test]
fn tap_gradient_matches_central_differences() {
    let m = small_model(6, 2);
    let t = tokens();
    let session = m.tap_session(&t).unwrap();
    for alphas in [[1.0, 1.0], [0.3, 0.8]] {
        let g = session.grad_at_layer_scales(&Probe, &alphas).unwrap();
        let mut map = OverrideMap::new();
        map.set_layer_scales(alphas.to_vec()).unwrap();
        let h = 1e-4;
        for l in 0..2 {
            for i in 0..32 {
                let n = NeuronId::new(l, i);
                let fp = Probe.value(&m.forward_with_nudge(&t, &map, n, h).unwrap()).unwrap();
                let fm = Probe.value(&m.forward_with_nudge(&t, &map, n, -h).unwrap()).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let an = g.grads[l][i];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-5, "{n}: fd {fd} analytic {an}");
            }
        }
    }
}

#[test]
fn severed_layer_has_zero_gradient() {
    let mut m = small_model(7, 2);
    for v in m.params_mut().layers[1].w_out.iter_mut() {
        *v = 0.0;
    }
    let g = m.grad_at_taps(&tokens(), &Probe, &[1.0, 1.0], 6).unwrap();
    assert!(g.grads[1].iter().all(|&v| v == 0.0));
    assert!(g.grads[0].iter().any(|&v| v != 0.0));
}

#[test]
fn training_gradient_matches_central_differences() {
    let m = small_model(8, 2);
    let t = tokens();
    let targets = [(2usize, 4usize), (6, 1)];
    let (_, grads) = m.loss_and_grad(&t, &targets).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let names: Vec<String> = m.params().named_tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
    for (ti, name) in names.iter().enumerate() {
        let len = analytic[ti].len();
        for _ in 0..3 {
            let k = rng.random_range(0..len);
            let eval = |delta: f64| {
                let mut mm = m.clone();
                mm.params_mut().tensors_mut()[ti][k] += delta;
                mm.loss_and_grad(&t, &targets).unwrap().0
            };
            let h = 1e-5;
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = analytic[ti][k];
            assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "{name}[{k}]: fd {fd} analytic {an}");
        }
    }
}

#[test]
fn weights_round_trip_and_detect_corruption() {
    let m = small_model(10, 2);
    let bytes = m.to_bytes();
    let back = Model::<f64>::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.hash(), m.hash());
    let mut broken = bytes.clone();
    broken[40] ^= 1;
    assert!(matches!(Model::<f64>::from_bytes(&broken), Err(Error::Integrity { .. })));
    let as32 = Model::<f32>::from_bytes(&bytes).unwrap();
    assert_eq!(as32.config().precision, crate::Precision::F32);
}

#[test]
fn resumed_ablation_matches_override_forward() {
    let m = small_model(11, 3);
    let t = tokens();
    for layer in 0..3 {
        let base = m.ablation_base(&t, layer).unwrap();
        assert_eq!(base.clean_logits().unwrap(), m.forward(&t, &OverrideMap::new()).unwrap());
        for (i, f, mode) in [(3, 0.0, OverrideMode::Zero), (17, 2.0, OverrideMode::Double)] {
            let fast = base.logits_with_factor(i, f).unwrap();
            let slow = m.forward(&t, &OverrideMap::new().with(NeuronId::new(layer, i), mode).unwrap()).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
