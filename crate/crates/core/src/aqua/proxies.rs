use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::QAExample;
use crate::error::{Error, Result};

/// Three option-permuted variants of one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxySet {
    pub parent_id: String,
    pub seed: u64,
    /// `proxies[t].options[i] == parent.options[permutations[t][i]]`.
    pub permutations: [[usize; 4]; 3],
    pub proxies: [QAExample; 3],
}

/// All 24 permutations of `0..4` in lexicographic order.
pub fn permutations_of_four() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&x| seen[x] = true);
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

fn apply(example: &QAExample, perm: [usize; 4], t: usize) -> QAExample {
    let correct = perm.iter().position(|&src| src == example.correct_index).expect("permutation covers all slots");
    QAExample {
        id: format!("{}#{}", example.id, t + 1),
        options: perm.map(|src| example.options[src].clone()),
        correct_index: correct,
        ..example.clone()
    }
}

/// Samples three distinct permutations uniformly without replacement and
/// applies them to the options; the demonstration is left as is.
pub fn generate_proxies(example: &QAExample, seed: u64) -> Result<ProxySet> {
    example.validate()?;
    let all = permutations_of_four();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, all.len(), 3);
    let permutations = [all[picks.index(0)], all[picks.index(1)], all[picks.index(2)]];
    let proxies = [0, 1, 2].map(|t| apply(example, permutations[t], t));
    Ok(ProxySet {
        parent_id: example.id.clone(),
        seed,
        permutations,
        proxies,
    })
}

/// Per-example seed from a run seed and the example id.
pub fn derive_seed(base: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// One proxy set per example, seeded by [`derive_seed`].
pub fn expand(examples: &[QAExample], base_seed: u64) -> Result<Vec<ProxySet>> {
    examples.iter().map(|e| generate_proxies(e, derive_seed(base_seed, &e.id))).collect()
}

impl ProxySet {
    /// Checks the stored permutations against a parent question.
    pub fn verify_against(&self, parent: &QAExample) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidExample(format!("proxy set {}: {m}", self.parent_id)));
        if parent.id != self.parent_id {
            return fail(format!("parent id {} does not match", parent.id));
        }
        for (t, (perm, proxy)) in self.permutations.iter().zip(&self.proxies).enumerate() {
            if self.permutations[..t].contains(perm) {
                return fail("repeated permutation".into());
            }
            if *proxy != apply(parent, *perm, t) {
                return fail(format!("proxy {} does not follow its permutation", t + 1));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::sentiment;
    use super::*;

    #[test]
    fn twenty_four_distinct_permutations() {
        let all = permutations_of_four();
        assert_eq!(all.len(), 24);
        assert_eq!(all[0], [0, 1, 2, 3]);
        assert_eq!(all[23], [3, 2, 1, 0]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn proxies_preserve_correct_content() {
        let e = sentiment("q1");
        let set = generate_proxies(&e, 7).unwrap();
        for (t, p) in set.proxies.iter().enumerate() {
            assert_eq!(p.correct_option(), "positive");
            assert_eq!(p.id, format!("q1#{}", t + 1));
            assert_eq!(p.demonstration, e.demonstration);
        }
        set.verify_against(&e).unwrap();
    }

    #[test]
    fn seeded_and_varied() {
        let e = sentiment("q1");
        assert_eq!(generate_proxies(&e, 3).unwrap(), generate_proxies(&e, 3).unwrap());
        let distinct: std::collections::BTreeSet<_> = (0..20u64).map(|s| generate_proxies(&e, s).unwrap().permutations).collect();
        assert!(distinct.len() > 15);
    }

    #[test]
    fn derived_seeds_depend_on_id_and_base() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }

    #[test]
    fn tampered_set_is_rejected() {
        let e = sentiment("q1");
        let mut set = generate_proxies(&e, 5).unwrap();
        set.proxies[1].options.swap(0, 1);
        assert!(set.verify_against(&e).is_err());
    }
}
