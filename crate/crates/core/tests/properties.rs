use proptest::prelude::*;
use trinet::constraint::{build_constraints, Mode};
use trinet::local::{eval_strategy, opi_deviation, GridStrategy};
use trinet::opi::{correlators_to_probs, probs_to_correlators, OpiCorrelators, TriangleDistribution};
use trinet::orbit::{canonicalize_word, is_vanishing, Word};
use trinet::scalar::rat;

fn word(max_len: usize) -> impl Strategy<Value = Word> {
    (3..=max_len).prop_flat_map(|n| prop::collection::vec(0u8..4, n)).prop_map(|d| Word::from_digits(&d))
}

fn strategy(max_k: usize) -> impl Strategy<Value = GridStrategy> {
    (1..=max_k).prop_flat_map(|k| {
        let t = || prop::collection::vec(0u8..4, k * k);
        (t(), t(), t()).prop_map(move |(a, b, c)| GridStrategy::new(k, [a, b, c]).unwrap())
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn words_parse_back(w in word(12)) {
        prop_assert_eq!(Word::parse(&w.to_string()).unwrap(), w);
    }

    #[test]
    fn canonical_form_is_an_orbit_invariant(w in word(9), pick in any::<prop::sample::Index>()) {
        let images: Vec<Word> = w.images().into_iter().collect();
        let other = images[pick.index(images.len())];
        prop_assert_eq!(other.canonical(), w.canonical());
        prop_assert_eq!(w.canonical().canonical(), w.canonical());
        prop_assert_eq!(is_vanishing(&other), is_vanishing(&w));
        prop_assert_eq!(canonicalize_word(&w).size, images.len());
    }

    #[test]
    fn opi_coordinates_round_trip(a in -300i64..300, b in -300i64..300, d in 1i64..97) {
        let c = OpiCorrelators::new(rat(a, d), rat(b, d));
        prop_assert_eq!(probs_to_correlators(&correlators_to_probs(&c)).unwrap(), c);
    }

    #[test]
    fn grid_distributions_are_normalized_and_obey_finner(s in strategy(8)) {
        let d = eval_strategy(&s);
        let total: u64 = d.counts.iter().flatten().flatten().map(|&n| u64::from(n)).sum();
        prop_assert_eq!(total, d.cells());
        prop_assert!(d.finner_holds());
        prop_assert!(d.finner_margin() >= -1e-12);
    }

    #[test]
    fn source_relabeling_keeps_the_distribution(
        (s, perm) in strategy(4).prop_flat_map(|s| { let k = s.k; (Just(s), permutation(k)) }),
        axis in 0usize..3,
    ) {
        prop_assert_eq!(eval_strategy(&s.relabel_source(axis, &perm)), eval_strategy(&s));
    }

    #[test]
    fn output_relabeling_permutes_the_distribution(s in strategy(4), perm in permutation(4)) {
        let p = [perm[0] as u8, perm[1] as u8, perm[2] as u8, perm[3] as u8];
        let before = eval_strategy(&s);
        let after = eval_strategy(&s.relabel_outputs(p));
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    prop_assert_eq!(after.counts[perm[a]][perm[b]][perm[c]], before.counts[a][b][c]);
                }
            }
        }
        let dev = |d: &trinet::local::GridDistribution| opi_deviation(&d.to_triangle());
        prop_assert!((dev(&after) - dev(&before)).abs() < 1e-12);
    }

    #[test]
    fn opi_points_have_no_deviation(a in -100i64..=100, b in -100i64..=100) {
        let c = OpiCorrelators::new(a as f64 / 300.0, b as f64 / 300.0);
        let d = correlators_to_probs(&c);
        prop_assume!(d.is_nonnegative());
        prop_assert!(opi_deviation(&TriangleDistribution::from_opi(&d)) < 1e-15);
    }
}

#[test]
fn noisy_point_is_feasible_everywhere() {
    for n in 3..=8 {
        for mode in [Mode::Single, Mode::Cumulative] {
            let cs = build_constraints(n, mode).unwrap();
            let noisy = vec![0.0; cs.variables.len()];
            assert_eq!(cs.residuals(&noisy).max(), 0.0, "n={n} {mode}");
            for slot in 0..cs.polygons.len() {
                let scale = 4f64.powi(cs.polygons[slot].n as i32);
                assert!(cs.outcome_probabilities(slot, &noisy).iter().all(|&p| p * scale == 1.0));
            }
        }
    }
}
