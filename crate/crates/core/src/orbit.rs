//! Correlator words and outcome orbits of the `n`-party ring.
//!
//! A word assigns to every party either the identity or one of the three
//! bits `j, k, l` of its output; its expectation is a correlator of the
//! inflated ring. The symmetry group is the dihedral group of the ring times
//! the 24 simultaneous output permutations. The Klein four-subgroup of output
//! translations acts on words by signs, which is what kills the vanishing
//! words; the remaining `S3` permutes the bit labels.

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

pub const MIN_PARTIES: usize = 3;
/// Words and outcomes are packed two bits per party into a `u32`.
pub const MAX_PARTIES: usize = 16;

/// Digit of the identity factor in packed words.
pub const IDENTITY: u8 = 3;

/// Bit mask of label `j`, `k`, `l` inside a two-bit output code.
const LABEL_MASK: [u32; 4] = [0b10, 0b01, 0b11, 0b00];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrbitError {
    #[error("polygon size {0} outside {MIN_PARTIES}..={MAX_PARTIES}")]
    UnsupportedSize(usize),
    #[error("invalid character {0:?} in word (expected j, k, l or 0)")]
    InvalidCharacter(char),
}

pub fn check_size(n: usize) -> Result<(), OrbitError> {
    if (MIN_PARTIES..=MAX_PARTIES).contains(&n) {
        Ok(())
    } else {
        Err(OrbitError::UnsupportedSize(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    /// One of the bits `j` (0), `k` (1), `l` (2).
    Bit(u8),
    Identity,
}

impl Factor {
    fn digit(self) -> u8 {
        match self {
            Factor::Bit(b) => b,
            Factor::Identity => IDENTITY,
        }
    }

    fn from_digit(d: u8) -> Self {
        if d == IDENTITY {
            Factor::Identity
        } else {
            Factor::Bit(d)
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Factor::Bit(0) => 'j',
            Factor::Bit(1) => 'k',
            Factor::Bit(_) => 'l',
            Factor::Identity => '0',
        }
    }
}

/// Sequence of digits packed most-significant first, so that the integer
/// order of `code` is the lexicographic order `j < k < l < identity`.
fn pack(digits: &[u8]) -> u32 {
    digits.iter().fold(0, |acc, &d| (acc << 2) | u32::from(d))
}

fn unpack(code: u32, len: usize, out: &mut [u8]) {
    for (i, slot) in out[..len].iter_mut().enumerate() {
        *slot = ((code >> (2 * (len - 1 - i))) & 3) as u8;
    }
}

/// Minimum over the dihedral images of `digits` after renaming symbols in
/// order of first appearance. `fixed` is a symbol that is never renamed
/// (the identity for words), or `None` when all four symbols are permutable.
fn canonical_code(digits: &[u8], fixed: Option<u8>) -> u32 {
    let n = digits.len();
    let mut best = u32::MAX;
    let mut buf = [0u8; MAX_PARTIES];
    for r in 0..n {
        for reflect in [false, true] {
            let mut map = [u8::MAX; 4];
            let mut next = 0u8;
            let mut code = 0u32;
            for (i, slot) in buf[..n].iter_mut().enumerate() {
                let src = if reflect { digits[(r + n - i) % n] } else { digits[(r + i) % n] };
                let d = if Some(src) == fixed {
                    src
                } else {
                    if map[src as usize] == u8::MAX {
                        map[src as usize] = next;
                        next += 1;
                    }
                    map[src as usize]
                };
                *slot = d;
                code = (code << 2) | u32::from(d);
            }
            best = best.min(code);
        }
    }
    best
}

/// A correlator label string of length `n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    len: u8,
    code: u32,
}

impl Word {
    pub fn from_factors(factors: &[Factor]) -> Self {
        assert!(factors.len() <= MAX_PARTIES);
        let digits: Vec<u8> = factors.iter().map(|f| f.digit()).collect();
        Self { len: factors.len() as u8, code: pack(&digits) }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_factors(&vec![Factor::Identity; n])
    }

    /// Parses the `jk0l0` notation.
    pub fn parse(s: &str) -> Result<Self, OrbitError> {
        let factors = s
            .chars()
            .map(|c| match c {
                'j' => Ok(Factor::Bit(0)),
                'k' => Ok(Factor::Bit(1)),
                'l' => Ok(Factor::Bit(2)),
                '0' => Ok(Factor::Identity),
                other => Err(OrbitError::InvalidCharacter(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if factors.len() > MAX_PARTIES {
            return Err(OrbitError::UnsupportedSize(factors.len()));
        }
        Ok(Self::from_factors(&factors))
    }

    /// Builds a word from digits `0, 1, 2` (bits) and `3` (identity).
    pub fn from_digits(digits: &[u8]) -> Self {
        assert!(digits.len() <= MAX_PARTIES && digits.iter().all(|&d| d <= IDENTITY));
        Self { len: digits.len() as u8, code: pack(digits) }
    }

    fn from_code(len: usize, code: u32) -> Self {
        Self { len: len as u8, code }
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn code(&self) -> u32 {
        self.code
    }

    pub fn digits(&self) -> Vec<u8> {
        let mut out = vec![0; self.len()];
        unpack(self.code, self.len(), &mut out);
        out
    }

    pub fn factor(&self, i: usize) -> Factor {
        Factor::from_digit(((self.code >> (2 * (self.len() - 1 - i))) & 3) as u8)
    }

    pub fn factors(&self) -> Vec<Factor> {
        self.digits().into_iter().map(Factor::from_digit).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.digits().iter().all(|&d| d == IDENTITY)
    }

    /// Parties carrying a bit.
    pub fn support(&self) -> Vec<usize> {
        self.digits().iter().enumerate().filter(|(_, &d)| d != IDENTITY).map(|(i, _)| i).collect()
    }

    /// Occurrences of `j`, `k`, `l`.
    pub fn label_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for d in self.digits() {
            if d != IDENTITY {
                c[d as usize] += 1;
            }
        }
        c
    }

    /// Label mask against a packed outcome: the character of the word at
    /// outcome `x` is `(-1)^popcount(mask & x)`.
    pub fn outcome_mask(&self) -> u32 {
        self.digits().iter().fold(0, |acc, &d| (acc << 2) | LABEL_MASK[d as usize])
    }

    /// Character value at a packed outcome code.
    pub fn character(&self, outcome: u32) -> i64 {
        if (self.outcome_mask() & outcome).count_ones().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// All images under rotations, the reflection and label permutations.
    pub fn images(&self) -> HashSet<Word> {
        const PERMS: [[u8; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let n = self.len();
        let digits = self.digits();
        let mut out = HashSet::with_capacity(12 * n);
        let mut buf = vec![0u8; n];
        for r in 0..n {
            for reflect in [false, true] {
                for perm in &PERMS {
                    for (i, slot) in buf.iter_mut().enumerate() {
                        let d = if reflect { digits[(r + n - i) % n] } else { digits[(r + i) % n] };
                        *slot = if d == IDENTITY { d } else { perm[d as usize] };
                    }
                    out.insert(Word::from_code(n, pack(&buf)));
                }
            }
        }
        out
    }

    pub fn canonical(&self) -> Word {
        Word::from_code(self.len(), canonical_code(&self.digits(), Some(IDENTITY)))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fac in self.factors() {
            write!(f, "{}", fac.symbol())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// True iff averaging over simultaneous output translations kills the
/// correlator, i.e. the label counts are not all of the same parity.
pub fn is_vanishing(w: &Word) -> bool {
    let [a, b, c] = w.label_counts();
    !(a % 2 == b % 2 && b % 2 == c % 2)
}

/// Orbit of a word under the ring and label symmetries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WordOrbit {
    pub canonical: Word,
    pub size: usize,
}

impl WordOrbit {
    pub fn display(&self) -> String {
        self.canonical.to_string()
    }
}

pub fn canonicalize_word(w: &Word) -> WordOrbit {
    let canonical = w.canonical();
    WordOrbit { canonical, size: canonical.images().len() }
}

/// All non-vanishing word orbits of the `n`-ring except the identity,
/// sorted by canonical form.
pub fn enumerate_words(n: usize) -> Result<Vec<WordOrbit>, OrbitError> {
    check_size(n)?;
    let total = 1u32 << (2 * n);
    let identity = Word::identity(n);
    let reps: Vec<Word> = (0..total)
        .into_par_iter()
        .filter_map(|code| {
            let w = Word::from_code(n, code);
            (w != identity && !is_vanishing(&w) && w.canonical() == w).then_some(w)
        })
        .collect();
    Ok(reps.into_par_iter().map(|canonical| WordOrbit { canonical, size: canonical.images().len() }).collect())
}

/// Orbit of joint outcomes under the ring symmetries and all output
/// permutations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeOrbit {
    pub canonical: Vec<u8>,
    pub size: u64,
}

impl OutcomeOrbit {
    pub fn code(&self) -> u32 {
        pack(&self.canonical)
    }

    pub fn display(&self) -> String {
        self.canonical.iter().map(|d| char::from(b'0' + d)).collect()
    }
}

impl Serialize for OutcomeOrbit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("OutcomeOrbit", 2)?;
        st.serialize_field("canonical", &self.display())?;
        st.serialize_field("size", &self.size)?;
        st.end()
    }
}

/// Outcome orbits together with the orbit index of every packed outcome.
pub struct OutcomePartition {
    pub orbits: Vec<OutcomeOrbit>,
    pub orbit_of: Vec<u32>,
}

pub fn outcome_partition(n: usize) -> Result<OutcomePartition, OrbitError> {
    check_size(n)?;
    let total = 1u32 << (2 * n);
    let canon: Vec<u32> = (0..total)
        .into_par_iter()
        .map(|code| {
            let mut digits = [0u8; MAX_PARTIES];
            unpack(code, n, &mut digits);
            canonical_code(&digits[..n], None)
        })
        .collect();
    let mut reps: Vec<u32> = canon.iter().enumerate().filter(|(c, &k)| *c as u32 == k).map(|(_, &k)| k).collect();
    reps.sort_unstable();
    let mut sizes = vec![0u64; reps.len()];
    let orbit_of: Vec<u32> = canon
        .iter()
        .map(|k| {
            let idx = reps.binary_search(k).expect("canonical form is its own representative");
            sizes[idx] += 1;
            idx as u32
        })
        .collect();
    let orbits = reps
        .iter()
        .zip(sizes)
        .map(|(&code, size)| {
            let mut canonical = vec![0u8; n];
            unpack(code, n, &mut canonical);
            OutcomeOrbit { canonical, size }
        })
        .collect();
    Ok(OutcomePartition { orbits, orbit_of })
}

pub fn enumerate_outcome_orbits(n: usize) -> Result<Vec<OutcomeOrbit>, OrbitError> {
    Ok(outcome_partition(n)?.orbits)
}

/// Integer transform between outcome-orbit probabilities and correlators.
///
/// Row 0 is the normalization (the identity word), row `1 + i` the word
/// orbit `words[i]`; column `o` is the outcome orbit `outcomes[o]`. Entry
/// `(w, o)` is the sum over the outcomes of orbit `o` of the character of
/// the canonical word `w`, so that `E_w = sum_o C[w][o] * p_o` where `p_o` is
/// the probability of a single outcome of orbit `o`.
#[derive(Debug, Clone)]
pub struct CorrelatorMatrix {
    pub n: usize,
    pub words: Vec<WordOrbit>,
    pub outcomes: Vec<OutcomeOrbit>,
    pub entries: Vec<Vec<i64>>,
}

impl CorrelatorMatrix {
    /// Column labels in row order: `"1"` then the word displays.
    pub fn row_labels(&self) -> Vec<String> {
        std::iter::once("1".to_string()).chain(self.words.iter().map(WordOrbit::display)).collect()
    }

    /// Outcome-major copy: `t[o][w]`.
    pub fn transpose(&self) -> Vec<Vec<i64>> {
        (0..self.outcomes.len()).map(|o| self.entries.iter().map(|row| row[o]).collect()).collect()
    }

    /// Average character of word row `w` (0 = normalization) over outcome
    /// orbit `o`, i.e. the coefficient of the orbit's total probability.
    pub fn mean_character(&self, w: usize, o: usize) -> f64 {
        self.entries[w][o] as f64 / self.outcomes[o].size as f64
    }

    /// Positivity rows: for outcome orbit `o`,
    /// `4^n p_o = 1 + sum_w rows[o][w] E_w` with `rows[o][w]` the sum of the
    /// characters of all words in orbit `w` at the canonical outcome of `o`.
    pub fn positivity_rows(&self) -> Vec<Vec<i64>> {
        (0..self.outcomes.len())
            .map(|o| {
                let size = self.outcomes[o].size as i64;
                self.words
                    .iter()
                    .enumerate()
                    .map(|(w, orbit)| {
                        let num = orbit.size as i64 * self.entries[w + 1][o];
                        debug_assert_eq!(num % size, 0);
                        num / size
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn build_matrix(n: usize) -> Result<CorrelatorMatrix, OrbitError> {
    let words = enumerate_words(n)?;
    let partition = outcome_partition(n)?;
    let n_out = partition.orbits.len();
    let masks: Vec<u32> = std::iter::once(0).chain(words.iter().map(|w| w.canonical.outcome_mask())).collect();
    let entries: Vec<Vec<i64>> = masks
        .par_iter()
        .map(|&mask| {
            let mut row = vec![0i64; n_out];
            for (x, &o) in partition.orbit_of.iter().enumerate() {
                row[o as usize] += if (mask & x as u32).count_ones().is_multiple_of(2) { 1 } else { -1 };
            }
            row
        })
        .collect();
    Ok(CorrelatorMatrix { n, words, outcomes: partition.orbits, entries })
}

/// Positivity rows paired with their outcome orbit, see
/// [`CorrelatorMatrix::positivity_rows`].
pub fn positivity_rows(n: usize) -> Result<Vec<(OutcomeOrbit, Vec<i64>)>, OrbitError> {
    let m = build_matrix(n)?;
    let rows = m.positivity_rows();
    Ok(m.outcomes.into_iter().zip(rows).collect())
}
