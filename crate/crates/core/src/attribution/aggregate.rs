use log::warn;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scores::{rank_ascending, rank_descending, NeuronScoreMap, NeuronSets, ScoredNeuron};
use crate::engine::NeuronId;
use crate::error::{Error, Result};

fn check_inputs(maps: &[NeuronScoreMap], z: usize, k: usize) -> Result<usize> {
    let first = maps.first().ok_or_else(|| Error::InvalidArgument("no score maps".into()))?;
    let total = first.len();
    if maps.iter().any(|m| (m.n_layers, m.d_ffn) != (first.n_layers, first.d_ffn)) {
        return Err(Error::InvalidArgument("score maps differ in shape".into()));
    }
    for m in maps {
        m.check_finite()?;
    }
    if z == 0 || z > total {
        return Err(Error::InvalidArgument(format!("z = {z} outside 1..={total}")));
    }
    if k == 0 || k > z {
        return Err(Error::InvalidArgument(format!("K = {k} outside 1..={z}")));
    }
    Ok(total)
}

fn shortfall(sets: &mut NeuronSets, which: &str, got: usize) {
    if got < sets.k {
        let msg = format!("{which} set has {got} of {} requested neurons", sets.k);
        warn!("{msg}");
        sets.warnings.push(msg);
    }
}

/// Task-level aggregation of per-example scores.
///
/// For example `j`, `G_j` holds the top `z` neurons by score and `B_j` the
/// bottom `z`. A neuron in some `G_j` and some `B_j'` is ambiguous and
/// scores 0; otherwise it scores the sum of its per-example scores over the
/// examples whose `G_j ∪ B_j` contains it. The final good set is the top `K`
/// with a positive score, the bad set the bottom `K` with a negative score.
pub fn ace_aggregate(es_maps: &[NeuronScoreMap], z: usize, k: usize) -> Result<NeuronSets> {
    let total = check_inputs(es_maps, z, k)?;
    let d_ffn = es_maps[0].d_ffn;
    let mut in_good = vec![false; total];
    let mut in_bad = vec![false; total];
    let mut ace = vec![0.0f64; total];
    for map in es_maps {
        let mut member = vec![false; total];
        for &i in &rank_descending(&map.scores)[..z] {
            in_good[i] = true;
            member[i] = true;
        }
        for &i in &rank_ascending(&map.scores)[..z] {
            in_bad[i] = true;
            member[i] = true;
        }
        for i in 0..total {
            if member[i] {
                ace[i] += map.scores[i];
            }
        }
    }
    let mut ambiguous = Vec::new();
    for i in 0..total {
        if in_good[i] && in_bad[i] {
            ace[i] = 0.0;
            ambiguous.push(NeuronId::from_flat(i, d_ffn));
        }
    }
    let scored = |i: usize| ScoredNeuron::new(NeuronId::from_flat(i, d_ffn), ace[i]);
    let good: Vec<ScoredNeuron> = rank_descending(&ace).into_iter().filter(|&i| ace[i] > 0.0).take(k).map(scored).collect();
    let bad: Vec<ScoredNeuron> = rank_ascending(&ace).into_iter().filter(|&i| ace[i] < 0.0).take(k).map(scored).collect();
    let mut sets = NeuronSets {
        good,
        bad,
        ambiguous,
        z,
        k,
        warnings: Vec::new(),
    };
    let (g, b) = (sets.good.len(), sets.bad.len());
    shortfall(&mut sets, "good", g);
    shortfall(&mut sets, "bad", b);
    Ok(sets)
}

/// Count-based aggregation: a neuron's score is the number of examples
/// whose top `z` contain it; ties go to the larger summed score, then to the
/// lower `(layer, index)`. Only a good set is produced.
pub fn kn_count_aggregate(es_maps: &[NeuronScoreMap], z: usize, k: usize) -> Result<NeuronSets> {
    let total = check_inputs(es_maps, z, k)?;
    let d_ffn = es_maps[0].d_ffn;
    let mut count = vec![0usize; total];
    let mut summed = vec![0.0f64; total];
    for map in es_maps {
        for &i in &rank_descending(&map.scores)[..z] {
            count[i] += 1;
        }
        for (s, v) in summed.iter_mut().zip(&map.scores) {
            *s += v;
        }
    }
    let mut order: Vec<usize> = (0..total).filter(|&i| count[i] > 0).collect();
    order.sort_by(|&a, &b| count[b].cmp(&count[a]).then(summed[b].total_cmp(&summed[a])).then(a.cmp(&b)));
    let good = order
        .into_iter()
        .take(k)
        .map(|i| ScoredNeuron::new(NeuronId::from_flat(i, d_ffn), count[i] as f64))
        .collect::<Vec<_>>();
    let mut sets = NeuronSets {
        good,
        bad: Vec::new(),
        ambiguous: Vec::new(),
        z,
        k,
        warnings: Vec::new(),
    };
    let g = sets.good.len();
    shortfall(&mut sets, "good", g);
    Ok(sets)
}

/// Top `K` neurons of a score map as a good-only set.
pub fn top_k_good(map: &NeuronScoreMap, k: usize) -> NeuronSets {
    let good = rank_descending(&map.scores)
        .into_iter()
        .take(k)
        .map(|i| ScoredNeuron::new(map.neuron(i), map.scores[i]))
        .collect();
    NeuronSets {
        good,
        bad: Vec::new(),
        ambiguous: Vec::new(),
        z: 0,
        k,
        warnings: Vec::new(),
    }
}

/// `2K` distinct neurons drawn uniformly without replacement; the first
/// `K` form the good set and the rest the bad set, each in draw order.
pub fn random_select(seed: u64, k: usize, n_layers: usize, d_ffn: usize) -> Result<NeuronSets> {
    let total = n_layers * d_ffn;
    if k == 0 || 2 * k > total {
        return Err(Error::InvalidArgument(format!("cannot draw 2 x {k} of {total} neurons")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, total, 2 * k).into_vec();
    let take = |s: &[usize]| s.iter().map(|&i| ScoredNeuron::new(NeuronId::from_flat(i, d_ffn), 0.0)).collect();
    Ok(NeuronSets {
        good: take(&picks[..k]),
        bad: take(&picks[k..]),
        ambiguous: Vec::new(),
        z: 0,
        k,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(scores: &[f64], d_ffn: usize) -> NeuronScoreMap {
        let mut m = NeuronScoreMap::zeros(scores.len() / d_ffn, d_ffn, "t");
        m.scores = scores.to_vec();
        m
    }

    #[test]
    fn neuron_good_in_one_bad_in_another_is_ambiguous() {
        // neuron 0 is top in example 1 and bottom in example 2
        let a = map(&[5.0, 1.0, 0.0, -1.0], 2);
        let b = map(&[-5.0, 1.0, 0.5, -1.0], 2);
        let sets = ace_aggregate(&[a, b], 1, 1).unwrap();
        assert_eq!(sets.ambiguous, vec![NeuronId::new(0, 0)]);
        assert!(sets.good.iter().chain(&sets.bad).all(|s| s.id() != NeuronId::new(0, 0)));
        sets.validate().unwrap();
    }

    #[test]
    fn ace_sums_only_gated_examples() {
        // z = 1: neuron 1 is top in both, neuron 3 bottom in both
        let a = map(&[0.1, 2.0, 0.0, -3.0], 4);
        let b = map(&[0.2, 1.0, 0.0, -1.0], 4);
        let sets = ace_aggregate(&[a.clone(), b.clone()], 1, 1).unwrap();
        assert_eq!(sets.good, vec![ScoredNeuron::new(NeuronId::new(0, 1), 3.0)]);
        assert_eq!(sets.bad, vec![ScoredNeuron::new(NeuronId::new(0, 3), -4.0)]);
        assert!(sets.warnings.is_empty());
        // z = 2: neuron 0 is in both top sets, neuron 2 (score 0) in both
        // bottom sets
        let sets = ace_aggregate(&[a, b], 2, 2).unwrap();
        assert_eq!(sets.good_ids(), vec![NeuronId::new(0, 1), NeuronId::new(0, 0)]);
        assert!((sets.good[1].score - 0.3).abs() < 1e-15);
        assert_eq!(sets.bad_ids(), vec![NeuronId::new(0, 3)]);
    }

    #[test]
    fn count_dominates_magnitude() {
        let maps: Vec<_> = (0..5)
            .map(|j| {
                let big = if j < 4 { 100.0 } else { -100.0 };
                map(&[1.0, big, 0.0, 0.0], 4)
            })
            .collect();
        let sets = kn_count_aggregate(&maps, 2, 2).unwrap();
        assert_eq!(sets.good[0].id(), NeuronId::new(0, 0));
        assert_eq!(sets.good[0].score, 5.0);
        assert_eq!(sets.good[1].score, 4.0);
        assert!(sets.bad.is_empty());
    }

    #[test]
    fn count_ties_go_to_larger_sum() {
        let a = map(&[1.0, 2.0, 0.0], 3);
        let sets = kn_count_aggregate(&[a.clone(), a], 2, 2).unwrap();
        assert_eq!(sets.good_ids(), vec![NeuronId::new(0, 1), NeuronId::new(0, 0)]);
    }

    #[test]
    fn range_checks() {
        let a = map(&[1.0, 2.0], 2);
        assert!(ace_aggregate(std::slice::from_ref(&a), 3, 1).is_err());
        assert!(ace_aggregate(std::slice::from_ref(&a), 1, 2).is_err());
        assert!(ace_aggregate(&[], 1, 1).is_err());
        assert!(kn_count_aggregate(&[a], 0, 0).is_err());
    }

    #[test]
    fn random_selection_is_seeded_and_disjoint() {
        let a = random_select(4, 10, 2, 32).unwrap();
        assert_eq!(a, random_select(4, 10, 2, 32).unwrap());
        assert_ne!(a, random_select(5, 10, 2, 32).unwrap());
        assert!(a.good.iter().all(|g| !a.bad_ids().contains(&g.id())));
        assert!(random_select(1, 40, 2, 32).is_err());
    }
}
