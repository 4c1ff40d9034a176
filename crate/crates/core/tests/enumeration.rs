mod common;

use std::collections::BTreeSet;

use common::*;
use itertools::Itertools;
use trinet::constraint::{build_constraints_with, Factorization, Mode, PolygonSystem};
use trinet::orbit::{build_matrix, enumerate_outcome_orbits, enumerate_words, WordOrbit};

fn displays(n: usize) -> BTreeSet<String> {
    enumerate_words(n).unwrap().iter().map(WordOrbit::display).collect()
}

#[test]
fn word_lists_match_reference_lists() {
    assert_eq!(displays(4), set(SQUARE));
    assert_eq!(displays(5), set(PENTAGON));
    assert_eq!(displays(6), set(HEXAGON));
    assert_eq!(displays(7), set(HEPTAGON));
}

#[test]
fn constraint_lists_match_reference_lists() {
    let hex = PolygonSystem::build(6, Factorization::Cyclic).unwrap();
    assert_eq!(hex.linear_display().into_iter().collect::<BTreeSet<_>>(), set(HEXAGON_LINEAR));
    let hept = PolygonSystem::build(7, Factorization::Cyclic).unwrap();
    assert_eq!(hept.linear_display().into_iter().collect::<BTreeSet<_>>(), set(HEPTAGON_LINEAR));
    assert_eq!(
        hept.quadratic_display().into_iter().collect::<BTreeSet<_>>(),
        set("jj0jj00=jj00000*jj00000 jj0jkl0=jj00000*jkl0000")
    );
    // the two rules agree below eight parties
    for n in 3..=7 {
        let a = PolygonSystem::build(n, Factorization::Cyclic).unwrap();
        let b = PolygonSystem::build(n, Factorization::SegmentJoin).unwrap();
        assert_eq!(a.linear, b.linear, "n={n}");
        assert_eq!(a.quadratic, b.quadratic, "n={n}");
    }
}

#[test]
fn large_polygon_tallies() {
    let tally = |n, rule| {
        let c = build_constraints_with(n, Mode::Single, rule).unwrap().polygon_counts();
        (c.correlators, c.linear, c.quadratic)
    };
    assert_eq!(tally(8, Factorization::SegmentJoin), (236, 114, 6));
    assert_eq!(tally(9, Factorization::SegmentJoin), (702, 395, 14));
    assert_eq!(tally(8, Factorization::Cyclic), (236, 113, 7));
    assert_eq!(tally(9, Factorization::Cyclic), (702, 391, 18));
}

#[test]
fn outcome_orbits_are_one_more_than_words() {
    for n in 3..=9 {
        let outcomes = enumerate_outcome_orbits(n).unwrap();
        assert_eq!(outcomes.len(), enumerate_words(n).unwrap().len() + 1, "n={n}");
        assert_eq!(outcomes.iter().map(|o| o.size).sum::<u64>(), 4u64.pow(n as u32));
    }
}

#[test]
fn square_matrix_matches_reference_up_to_permutation() {
    let reference = square_matrix();
    let ours = build_matrix(4).unwrap().entries;
    let sorted_rows = |m: &Vec<Vec<i64>>| -> Vec<Vec<i64>> { m.iter().cloned().sorted().collect() };
    let target = sorted_rows(&reference);
    let found = (0..7).permutations(7).any(|perm| {
        let permuted: Vec<Vec<i64>> = ours.iter().map(|r| perm.iter().map(|&c| r[c]).collect()).collect();
        permuted[0] == reference[0] && sorted_rows(&permuted) == target
    });
    assert!(found);
}
