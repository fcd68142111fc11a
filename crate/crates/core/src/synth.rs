//! Seeded generator of small valid molecules for tests and demos.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::molparse::parse_smiles;

/// Chain units with two open attachment points (ring digits close inside
/// the unit, so they can be reused).
const UNITS: [&str; 16] = [
    "C", "C", "C", "CC", "N", "O", "C(=O)", "C(C)", "C(F)", "C(O)", "C(N)", "S", "C(Cl)", "c1ccc(cc1)", "C1CCC(CC1)",
    "c1ccc(nc1)",
];

/// A random linear chain of `units` building blocks.
pub fn random_smiles(rng: &mut impl Rng, units: usize) -> String {
    (0..units.max(1)).map(|_| UNITS[rng.random_range(0..UNITS.len())]).collect()
}

/// `n` distinct molecules (by canonical key) of 2 to `max_units` units.
pub fn molecule_corpus(n: usize, max_units: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let units = rng.random_range(2..=max_units.max(2));
        let s = random_smiles(&mut rng, units);
        let g = parse_smiles(&s).expect("generated SMILES parse");
        if seen.insert(g.canonical_key) {
            out.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_valid_unique_and_seeded() {
        let a = molecule_corpus(200, 6, 1);
        assert_eq!(a, molecule_corpus(200, 6, 1));
        assert_ne!(a, molecule_corpus(200, 6, 2));
        let keys: HashSet<String> = a.iter().map(|s| parse_smiles(s).unwrap().canonical_key).collect();
        assert_eq!(keys.len(), 200);
    }
}
