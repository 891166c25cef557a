use ancestral_core::color_seq::{is_feasible, random_feasible, ColorSequence};
use ancestral_core::csa::{color_splitting, feasible_split, verify_ancestral};
use ancestral_core::merkle::{verify, MerkleTree};
use ancestral_core::subindex::find_sub_indices;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn compact_form_round_trips(counts in prop::collection::vec(1u64..1000, 1..8)) {
        let s = ColorSequence::from_counts(&counts).unwrap();
        prop_assert_eq!(s.to_compact().parse::<ColorSequence>().unwrap(), s);
    }

    #[test]
    fn random_feasible_splits_stay_feasible(h in 2u32..16, seed: u64) {
        let s = random_feasible(h, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(is_feasible(&s));
        let split = feasible_split(&s).unwrap();
        prop_assert!(is_feasible(&split.left) && is_feasible(&split.right));
        prop_assert!(!split.left.contains(split.left_child_color));
        prop_assert!(!split.right.contains(split.right_child_color));
    }

    #[test]
    fn sub_indices_agree_with_coloring(h in 1u32..8, seed: u64, pick: u64) {
        let s = random_feasible(h, &mut ChaCha8Rng::seed_from_u64(seed));
        let col = color_splitting(&s).unwrap();
        prop_assert!(verify_ancestral(&col, &s));
        let leaf = (1u64 << h) + pick % (1u64 << h);
        let p = find_sub_indices(h, leaf, &s).unwrap();
        let pos = col.positions();
        for (k, j) in p.nodes.iter().zip(&p.sub_indices) {
            prop_assert_eq!(pos[*k as usize], *j);
        }
    }

    #[test]
    fn proofs_verify_only_their_own_item(items in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..16), 2..40), pick: usize) {
        let t = MerkleTree::build(&items).unwrap();
        let j = pick % items.len();
        let proof = t.prove(j as u64 + 1).unwrap();
        prop_assert!(verify(&t.root(), &items[j], j as u64 + 1, &proof).unwrap());
        let other = (j + 1) % items.len();
        if items[other] != items[j] {
            prop_assert!(!verify(&t.root(), &items[other], j as u64 + 1, &proof).unwrap());
        }
    }
}
