use neuroprobe::aqua::generate_proxies;
use neuroprobe::attribution::{NeuronSets, ScoredNeuron};
use neuroprobe::evaluation::metric_change;
use neuroprobe::intervention::{build_plan, Direction};
use neuroprobe::{NeuronId, QAExample};
use proptest::prelude::*;

fn example(correct: usize) -> QAExample {
    QAExample {
        id: "p".into(),
        role: String::new(),
        rule: String::new(),
        stem: "s".into(),
        options: ["w", "x", "y", "z"].map(String::from),
        correct_index: correct,
        demonstration: None,
    }
}

fn sets(n_good: usize, n_bad: usize) -> NeuronSets {
    NeuronSets {
        good: (0..n_good).map(|i| ScoredNeuron::new(NeuronId::new(0, i), (n_good - i) as f64)).collect(),
        bad: (0..n_bad).map(|i| ScoredNeuron::new(NeuronId::new(1, i), -((n_bad - i) as f64))).collect(),
        ambiguous: vec![],
        z: 100,
        k: 100,
        warnings: vec![],
    }
}

proptest! {
    #[test]
    fn proxies_keep_the_answer(seed in any::<u64>(), correct in 0usize..4) {
        let e = example(correct);
        let p = generate_proxies(&e, seed).unwrap();
        p.verify_against(&e).unwrap();
        for q in &p.proxies {
            prop_assert_eq!(q.correct_option(), e.correct_option());
        }
    }

    #[test]
    fn fail_iff_change_opposes_direction(a in 0.01f64..1.0, b in 0.0f64..1.0) {
        for d in [Direction::Enhance, Direction::Degrade] {
            let c = metric_change(a, b, d);
            prop_assert_eq!(c.fail, (b - a) * d.sign() < 0.0);
            prop_assert!((c.relative.value().unwrap() - (b - a).abs() / a * 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn plans_respect_budget_and_polarity(n_good in 0usize..30, n_bad in 0usize..30, budget in 1usize..40, step in 0usize..=10) {
        prop_assume!(n_good + n_bad > 0);
        let ratio = step as f64 / 10.0;
        let p = build_plan(&sets(n_good, n_bad), Direction::Degrade, budget, ratio).unwrap();
        prop_assert!(p.selected_good.len() + p.selected_bad.len() <= budget);
        prop_assert_eq!(p.override_map.len(), p.selected_good.len() + p.selected_bad.len());
        if step == 0 { prop_assert!(p.selected_good.is_empty()); }
        if step == 10 { prop_assert!(p.selected_bad.is_empty()); }
        prop_assert_eq!(p.shortfall, p.selected_good.len() + p.selected_bad.len() < budget);
    }
}
