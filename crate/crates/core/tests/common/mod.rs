//! Correlator and constraint lists shared by the test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

pub const SQUARE: &str = "jjjj jjkk jj00 jkjk jkl0 j0j0";
pub const PENTAGON: &str = "jjjj0 jjjkl jjkjl jjkk0 jjk0k jj000 jkjk0 jkl00 jk0l0 j0j00";
pub const HEXAGON: &str = "jjjjjj jjjjkk jjjj00 jjjkjk jjjkl0 jjjk0l jjj0j0 jjkjjk jjkjl0 jjkj0l jjkkll jjkk00 \
    jjklj0 jjklkl jjkllk jjk0k0 jjk00k jj0jj0 jj0kk0 jj0000 jkjk00 jkjlj0 jkjlkl jkj0k0 jkljkl jkl000 \
    jk0jk0 jk0kj0 jk0l00 j0j000 j0k0l0 j00j00";
pub const HEPTAGON: &str = "jjjjjj0 jjjjjkl jjjjkjl jjjjkk0 jjjjk0k jjjj000 jjjkjjl jjjkjk0 jjjkj0k jjjkkj0 \
    jjjkkkl jjjkklk jjjkl00 jjjk0l0 jjjk00l jjj0j00 jjj0kl0 jjkjjk0 jjkjkj0 jjkjkkl jjkjklk jjkjlkk \
    jjkjl00 jjkj0jk jjkj0l0 jjkj00l jjkkjj0 jjkkjlk jjkkll0 jjkkl0l jjkk000 jjklj00 jjklkl0 jjklk0l \
    jjkllk0 jjkl0j0 jjkl0kl jjkl0lk jjk0jl0 jjk0j0l jjk0k00 jjk0lj0 jjk00k0 jjk000k jj0jj00 jj0jkl0 \
    jj0j0j0 jj0kjl0 jj0kk00 jj0k0k0 jj00000 jkjkjkl jkjkl0l jkjk000 jkjlj00 jkjlkl0 jkjlk0l jkjl0j0 \
    jkj0jl0 jkj0k00 jkljkl0 jklj0j0 jkl0000 jk0jk00 jk0j0k0 jk0kj00 jk0k0j0 jk0l000 jk00l00 j0j0000 \
    j0k0l00 j00j000";

pub const HEXAGON_LINEAR: &str = "jjj0j0=0 jjk0k0=0 jkj0k0=0 jk0jk0=0 jk0kj0=0 jk0l00=0 j0j000=0 j0k0l0=0 \
    j00j00=0 jj0kk0=jj0jj0";
pub const HEPTAGON_LINEAR: &str = "jjjk0l0=0 jjj0j00=0 jjj0kl0=0 jjkj0l0=0 jjkl0j0=0 jjk0jl0=0 jjk0j0l=0 \
    jjk0k00=0 jjk0lj0=0 jjk00k0=0 jkjl0j0=0 jkj0jl0=0 jkj0k00=0 jklj0j0=0 jk0jk00=0 jk0j0k0=0 \
    jk0kj00=0 jk0k0j0=0 jk0l000=0 jk00l00=0 j0j0000=0 j0k0l00=0 j00j000=0 jj0j0j0=0 jj0k0k0=0 \
    jj0kjl0=jj0jkl0 jj0kk00=jj0jj00";

/// Reference matrix of the square: rows are the normalization and the
/// six correlators, columns outcome orbits in the reference order.
pub fn square_matrix() -> Vec<Vec<i64>> {
    vec![
        vec![4, 48, 24, 96, 12, 48, 24],
        vec![4, -16, 24, -32, 12, -16, 24],
        vec![4, -16, 8, 0, -4, 16, -8],
        vec![4, 16, 8, 0, -4, -16, -8],
        vec![4, -16, -8, 32, 12, -16, -8],
        vec![4, 0, -8, 0, -4, 0, 8],
        vec![4, 16, -8, -32, 12, 16, -8],
    ]
}

pub fn set(s: &str) -> BTreeSet<String> {
    s.split_whitespace().map(str::to_string).collect()
}
