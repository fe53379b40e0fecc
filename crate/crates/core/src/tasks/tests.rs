use super::*;
use crate::aqua::{PromptTemplate, Prompter};
use crate::engine::OverrideMap;
use crate::evaluation::answer_from_logits;

fn marker_data(n_eval: usize) -> (TaskData, PromptTemplate) {
    let data = generate_task(&TaskSpec::new(TaskFamily::MarkerDetect, 40, n_eval, 7)).unwrap();
    (data, PromptTemplate::default())
}

#[test]
fn planted_model_passes_its_own_check() {
    let (data, template) = marker_data(6);
    let tok = build_tokenizer(&template, data.train.iter().chain(&data.eval)).unwrap();
    let prompter = Prompter::new(&template, &tok);
    let spec = PlantedSpec { d_ffn: 256, ..Default::default() };
    let t = std::time::Instant::now();
    let planted: PlantedModel<f64> = build_planted(&spec, prompter, &data.eval).unwrap();
    eprintln!("build {:?} {:?}", t.elapsed(), planted.check);
    let mut expected: Vec<usize> = planted.planted_good.iter().chain(&planted.planted_bad).map(|n| n.index).collect();
    expected.sort_unstable();
    assert_eq!(planted.check.passing, expected);
    assert!(planted.check.max_background_shift < planted.margin);
    for q in &data.train {
        let logits = planted.model.forward(&prompter.tokens(q).unwrap(), &OverrideMap::new()).unwrap();
        assert_eq!(answer_from_logits(&logits, prompter.letter_ids()).unwrap().chosen, q.correct_index, "{}", q.id);
    }
}

#[test]
fn planted_rejects_bad_shapes() {
    let (data, template) = marker_data(2);
    let tok = build_tokenizer(&template, data.train.iter().chain(&data.eval)).unwrap();
    let prompter = Prompter::new(&template, &tok);
    let spec = PlantedSpec { d_ffn: 32, n_good: 20, n_bad: 20, ..Default::default() };
    assert!(build_planted::<f64>(&spec, prompter, &data.eval).is_err());
    let spec = PlantedSpec { planted_layer: 3, ..Default::default() };
    assert!(build_planted::<f64>(&spec, prompter, &data.eval).is_err());
}

#[test]
fn planted_without_bad_neurons() {
    let (data, template) = marker_data(3);
    let tok = build_tokenizer(&template, data.train.iter().chain(&data.eval)).unwrap();
    let prompter = Prompter::new(&template, &tok);
    let spec = PlantedSpec { d_ffn: 64, n_bad: 0, ..Default::default() };
    let planted: PlantedModel<f32> = build_planted(&spec, prompter, &data.eval).unwrap();
    assert!(planted.planted_bad.is_empty());
    assert_eq!(planted.check.passing.len(), 8);
}
