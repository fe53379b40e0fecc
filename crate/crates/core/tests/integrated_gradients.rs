use neuroprobe::attribution::{ig_scores, ig_scores_per_neuron, target_value, TargetFn, TargetKind};
use neuroprobe::engine::Params;
use neuroprobe::{Model, ModelConfig, Precision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(seed: u64, n_layers: usize, d_ffn: usize) -> Model<f64> {
    let cfg = ModelConfig::new(n_layers, 16, 4, d_ffn, 12, 16).with_precision(Precision::F64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::random(&cfg, 0.4, &mut rng);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    Model::new(cfg, params).unwrap()
}

const PROMPT: [usize; 6] = [5, 9, 0, 7, 11, 6];

#[test]
fn joint_and_per_neuron_paths_agree_with_one_neuron_per_layer() {
    // scaling a one-neuron layer is scaling that neuron
    let m = model(2, 3, 1);
    for kind in [TargetKind::ContrastiveCe, TargetKind::CorrectLogProb, TargetKind::TnMargin] {
        let t = TargetFn::new(kind, [1, 2, 3, 4], 3).unwrap();
        let joint = ig_scores(&m, &PROMPT, &t, 16).unwrap();
        let single = ig_scores_per_neuron(&m, &PROMPT, &t, 16).unwrap();
        for (a, b) in joint.scores.iter().zip(&single.scores) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{kind:?}: {a} vs {b}");
        }
    }
}

#[test]
fn per_neuron_path_is_complete_for_a_single_neuron() {
    let m = model(3, 2, 1);
    let t = TargetFn::new(TargetKind::ContrastiveCe, [1, 2, 3, 4], 0).unwrap();
    let s = m.tap_session(&PROMPT).unwrap();
    let f = |a: [f64; 2]| target_value(&s.logits_at_layer_scales(&a).unwrap(), &t).unwrap();
    let ig = ig_scores_per_neuron(&m, &PROMPT, &t, 512).unwrap();
    let delta = f([1.0, 1.0]) - f([1.0, 0.0]);
    assert!((ig.scores[1] - delta).abs() <= 0.01 * delta.abs(), "{} vs {delta}", ig.scores[1]);
}

#[test]
fn per_neuron_mode_is_limited_to_small_models() {
    let m = model(4, 2, 40);
    let t = TargetFn::new(TargetKind::ContrastiveCe, [1, 2, 3, 4], 0).unwrap();
    assert!(ig_scores_per_neuron(&m, &PROMPT, &t, 4).is_err());
    assert!(ig_scores(&m, &PROMPT, &t, 0).is_err());
}

#[test]
fn one_step_is_gradient_times_activation() {
    let m = model(5, 2, 8);
    let t = TargetFn::new(TargetKind::CorrectLogProb, [1, 2, 3, 4], 2).unwrap();
    let s = m.tap_session(&PROMPT).unwrap();
    let g = s.grad_at_layer_scales(&t, &[1.0, 1.0]).unwrap();
    let w = s.activations();
    let ig = ig_scores(&m, &PROMPT, &t, 1).unwrap();
    for l in 0..2 {
        for i in 0..8 {
            let want = g.grads[l][i] * w.layers[l][i];
            assert!((ig.layer(l)[i] - want).abs() < 1e-14, "L{l}.N{i}");
        }
    }
}
