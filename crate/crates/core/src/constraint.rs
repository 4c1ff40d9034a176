//! Constraints that no-signalling with independent sources imposes on the
//! correlators of a polygon inflation.
//!
//! Parties of the ring at distance two or more share no source, so a word
//! whose support splits into blocks separated by identity parties is the
//! product of its blocks. A vanishing block forces the word to zero; words
//! with the same multiset of block patterns are equal; the first word of
//! every such group gets one quadratic constraint against its factors.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::orbit::{self, build_matrix, is_vanishing, CorrelatorMatrix, OrbitError, Word, IDENTITY};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("chained union word {0} is not a correlator variable")]
    MissingIntermediate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Constraints of the largest polygon only.
    #[default]
    Single,
    /// Every polygon from the triangle up, sharing chain correlators.
    Cumulative,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Single => "single",
            Mode::Cumulative => "cumulative",
        })
    }
}

/// How a word is cut into independent factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factorization {
    /// Maximal cyclic runs of support; the physically correct rule.
    #[default]
    Cyclic,
    /// Split the canonical string at identities and glue the first and last
    /// segments when the string starts and ends with a bit. Only used to
    /// reproduce the reference constraint tally for 8 and 9 parties; it
    /// treats a wrap-around chain as if its two halves were adjacent.
    SegmentJoin,
}

/// Canonical form of an open chain of factors under reflection and label
/// renaming, with leading and trailing identities trimmed.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainPattern(Vec<u8>);

fn relabel(seq: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut map = [u8::MAX; 3];
    let mut next = 0;
    seq.map(|d| {
        if d == IDENTITY {
            d
        } else {
            if map[d as usize] == u8::MAX {
                map[d as usize] = next;
                next += 1;
            }
            map[d as usize]
        }
    })
    .collect()
}

impl ChainPattern {
    pub fn new(digits: &[u8]) -> Self {
        let start = digits.iter().position(|&d| d != IDENTITY).unwrap_or(digits.len());
        let end = digits.iter().rposition(|&d| d != IDENTITY).map_or(start, |e| e + 1);
        let trimmed = &digits[start..end];
        let fwd = relabel(trimmed.iter().copied());
        let rev = relabel(trimmed.iter().rev().copied());
        ChainPattern(fwd.min(rev))
    }

    pub fn digits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_vanishing(&self) -> bool {
        let mut c = [0usize; 3];
        for &d in &self.0 {
            if d != IDENTITY {
                c[d as usize] += 1;
            }
        }
        !(c[0] % 2 == c[1] % 2 && c[1] % 2 == c[2] % 2)
    }
}

impl fmt::Display for ChainPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &d in &self.0 {
            write!(f, "{}", ['j', 'k', 'l', '0'][d as usize])?;
        }
        Ok(())
    }
}

impl fmt::Debug for ChainPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChainPattern({self})")
    }
}

impl Serialize for ChainPattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Party index lists of the independent blocks of `w`, ordered by the
/// party at which each block starts.
pub type Blocks = Vec<Vec<usize>>;

/// Maximal cyclic runs of support. A word with no identity, or with a
/// single run, is one block.
pub fn factorize(w: &Word) -> Blocks {
    factorize_with(w, Factorization::Cyclic)
}

pub fn factorize_with(w: &Word, rule: Factorization) -> Blocks {
    let d = w.digits();
    let n = d.len();
    let Some(gap) = d.iter().position(|&x| x == IDENTITY) else {
        return vec![(0..n).collect()];
    };
    match rule {
        Factorization::Cyclic => {
            let mut blocks = Vec::new();
            let mut cur = Vec::new();
            for t in 1..=n {
                let i = (gap + t) % n;
                if d[i] == IDENTITY {
                    if !cur.is_empty() {
                        blocks.push(std::mem::take(&mut cur));
                    }
                } else {
                    cur.push(i);
                }
            }
            if !cur.is_empty() {
                blocks.push(cur);
            }
            blocks.sort_by_key(|b| b[0]);
            blocks
        }
        Factorization::SegmentJoin => {
            let mut segs: Blocks = Vec::new();
            let mut cur = Vec::new();
            for (i, &x) in d.iter().enumerate() {
                if x == IDENTITY {
                    if !cur.is_empty() {
                        segs.push(std::mem::take(&mut cur));
                    }
                } else {
                    cur.push(i);
                }
            }
            if !cur.is_empty() {
                segs.push(cur);
            }
            if segs.len() > 1 && d[0] != IDENTITY && d[n - 1] != IDENTITY {
                let last = segs.pop().unwrap_or_default();
                segs[0].extend(last);
            }
            segs
        }
    }
}

fn block_pattern(digits: &[u8], block: &[usize]) -> ChainPattern {
    ChainPattern::new(&block.iter().map(|&i| digits[i]).collect::<Vec<_>>())
}

/// `w` restricted to the parties of `blocks`, identity elsewhere.
fn restrict(w: &Word, blocks: &[Vec<usize>]) -> Word {
    let d = w.digits();
    let mut out = vec![IDENTITY; d.len()];
    for &i in blocks.iter().flatten() {
        out[i] = d[i];
    }
    Word::from_digits(&out)
}

/// One quadratic product constraint `target = left * right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Quadratic {
    pub target: usize,
    pub left: usize,
    pub right: usize,
}

/// Linear constraint between correlators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LinearConstraint {
    Zero(usize),
    Equal(usize, usize),
}

/// Splits a multi-block word into `k - 1` product steps: step `i` writes the
/// union of blocks `i..` as block `i` times the union of blocks `i + 1..`.
/// All words are returned in canonical form.
pub fn chain_reduce(w: &Word, blocks: &[Vec<usize>]) -> Result<Vec<[Word; 3]>, ConstraintError> {
    let check = |x: Word| {
        if x.is_identity() || is_vanishing(&x) {
            Err(ConstraintError::MissingIntermediate(x.to_string()))
        } else {
            Ok(x.canonical())
        }
    };
    (0..blocks.len().saturating_sub(1))
        .map(|i| {
            Ok([check(restrict(w, &blocks[i..]))?, check(restrict(w, &blocks[i..=i]))?, check(restrict(w, &blocks[i + 1..]))?])
        })
        .collect()
}

/// Correlator tables and constraints of one polygon, with indices into
/// `matrix.words`.
#[derive(Debug, Clone)]
pub struct PolygonSystem {
    pub n: usize,
    pub matrix: CorrelatorMatrix,
    pub linear: Vec<LinearConstraint>,
    pub quadratic: Vec<Quadratic>,
    /// Index of the adjacent-pair word `jj0...0`.
    pub objective: usize,
}

impl PolygonSystem {
    pub fn build(n: usize, rule: Factorization) -> Result<Self, ConstraintError> {
        let matrix = build_matrix(n)?;
        let words: Vec<Word> = matrix.words.iter().map(|o| o.canonical).collect();
        let index = |w: &Word| -> Result<usize, ConstraintError> {
            words.binary_search(&w.canonical()).map_err(|_| ConstraintError::MissingIntermediate(w.to_string()))
        };

        let mut linear = Vec::new();
        let mut groups: BTreeMap<usize, (Vec<ChainPattern>, Vec<usize>)> = BTreeMap::new();
        let mut key_group: HashMap<Vec<ChainPattern>, usize> = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            let blocks = factorize_with(w, rule);
            if blocks.len() < 2 {
                continue;
            }
            let digits = w.digits();
            let mut key: Vec<ChainPattern> = blocks.iter().map(|b| block_pattern(&digits, b)).collect();
            if key.iter().any(ChainPattern::is_vanishing) {
                linear.push(LinearConstraint::Zero(i));
                continue;
            }
            key.sort();
            match key_group.get(&key) {
                Some(&rep) => {
                    groups.get_mut(&rep).expect("group exists").1.push(i);
                    linear.push(LinearConstraint::Equal(i, rep));
                }
                None => {
                    key_group.insert(key.clone(), i);
                    groups.insert(i, (key, vec![i]));
                }
            }
        }

        // A product of several blocks is represented by its group's first word.
        let variable = |w: Word| -> Result<usize, ConstraintError> {
            let c = w.canonical();
            let blocks = factorize_with(&c, rule);
            if blocks.len() >= 2 {
                let digits = c.digits();
                let mut key: Vec<ChainPattern> = blocks.iter().map(|b| block_pattern(&digits, b)).collect();
                key.sort();
                if let Some(&rep) = key_group.get(&key) {
                    return Ok(rep);
                }
            }
            index(&c)
        };
        let mut quadratic = Vec::with_capacity(groups.len());
        for &rep in groups.keys() {
            let w = &words[rep];
            let blocks = factorize_with(w, rule);
            quadratic.push(Quadratic {
                target: rep,
                left: variable(restrict(w, &blocks[..1]))?,
                right: variable(restrict(w, &blocks[1..]))?,
            });
        }

        let mut pair = vec![IDENTITY; n];
        pair[0] = 0;
        pair[1] = 0;
        let objective = index(&Word::from_digits(&pair))?;
        Ok(Self { n, matrix, linear, quadratic, objective })
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> {
        self.matrix.words.iter().map(|o| &o.canonical)
    }

    pub fn word(&self, i: usize) -> &Word {
        &self.matrix.words[i].canonical
    }

    pub fn linear_display(&self) -> Vec<String> {
        self.linear
            .iter()
            .map(|c| match *c {
                LinearConstraint::Zero(a) => format!("{}=0", self.word(a)),
                LinearConstraint::Equal(a, b) => format!("{}={}", self.word(a), self.word(b)),
            })
            .collect()
    }

    pub fn quadratic_display(&self) -> Vec<String> {
        self.quadratic.iter().map(|q| format!("{}={}*{}", self.word(q.target), self.word(q.left), self.word(q.right))).collect()
    }

    /// Mean character of every word over every outcome orbit, `[o][w]`,
    /// with column 0 the normalization.
    pub fn mean_characters(&self) -> Vec<Vec<f64>> {
        let m = &self.matrix;
        (0..m.outcomes.len()).map(|o| (0..m.entries.len()).map(|w| m.mean_character(w, o)).collect()).collect()
    }
}

/// Patterns under which a word with at least one identity party is the
/// same correlator in every larger polygon: for each gap, the chain read
/// from the end of the gap round to its start.
pub fn chain_patterns(w: &Word) -> Vec<ChainPattern> {
    let d = w.digits();
    let n = d.len();
    let mut out = Vec::new();
    for g in 0..n {
        if d[g] == IDENTITY && d[(g + 1) % n] != IDENTITY {
            let mut e = g;
            while d[(e + n - 1) % n] == IDENTITY {
                e = (e + n - 1) % n;
            }
            let s = (g + 1) % n;
            let len = (e + n - s) % n;
            let chain: Vec<u8> = (0..len).map(|i| d[(s + i) % n]).collect();
            out.push(ChainPattern::new(&chain));
        }
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrossLink {
    pub polygon: usize,
    pub word: Word,
    pub pattern: ChainPattern,
}

/// Identifications of polygon words with shared chain patterns for all
/// polygons `3..=n`. Words without an identity party are never linked.
pub fn cross_links(n: usize) -> Result<Vec<CrossLink>, ConstraintError> {
    orbit::check_size(n)?;
    let mut out = Vec::new();
    for m in orbit::MIN_PARTIES..=n {
        for o in orbit::enumerate_words(m)? {
            for pattern in chain_patterns(&o.canonical) {
                out.push(CrossLink { polygon: m, word: o.canonical, pattern });
            }
        }
    }
    Ok(out)
}

/// A correlator variable of a [`ConstraintSet`]: one word, or in cumulative
/// mode a class of words of several polygons identified through chains.
#[derive(Debug, Clone, Serialize)]
pub struct Variable {
    /// Display string of the home word.
    pub label: String,
    /// `(polygon slot, word index)` of the first member.
    pub home: (usize, usize),
    pub members: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub correlators: usize,
    pub outcomes: usize,
    pub linear: usize,
    pub quadratic: usize,
}

#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub n: usize,
    pub mode: Mode,
    pub rule: Factorization,
    /// One slot per polygon: only `n` in single mode, `3..=n` otherwise.
    pub polygons: Vec<PolygonSystem>,
    /// `var_of[slot][word]`.
    pub var_of: Vec<Vec<usize>>,
    pub variables: Vec<Variable>,
    pub linear: Vec<LinearConstraint>,
    pub quadratic: Vec<Quadratic>,
    pub objective: usize,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn build_constraints(n: usize, mode: Mode) -> Result<ConstraintSet, ConstraintError> {
    build_constraints_with(n, mode, Factorization::Cyclic)
}

pub fn build_constraints_with(n: usize, mode: Mode, rule: Factorization) -> Result<ConstraintSet, ConstraintError> {
    orbit::check_size(n)?;
    let sizes: Vec<usize> = match mode {
        Mode::Single => vec![n],
        Mode::Cumulative => (orbit::MIN_PARTIES..=n).collect(),
    };
    let polygons = sizes.iter().map(|&m| PolygonSystem::build(m, rule)).collect::<Result<Vec<_>, _>>()?;

    let offsets: Vec<usize> = polygons
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.matrix.words.len();
            Some(o)
        })
        .collect();
    let total: usize = polygons.iter().map(|p| p.matrix.words.len()).sum();
    let mut uf = UnionFind((0..total).collect());
    if mode == Mode::Cumulative {
        let mut chain_home: HashMap<ChainPattern, usize> = HashMap::new();
        for (slot, p) in polygons.iter().enumerate() {
            for (i, w) in p.words().enumerate() {
                for pat in chain_patterns(w) {
                    let node = offsets[slot] + i;
                    match chain_home.get(&pat) {
                        Some(&h) => uf.union(h, node),
                        None => {
                            chain_home.insert(pat, node);
                        }
                    }
                }
            }
        }
    }

    let mut var_of: Vec<Vec<usize>> = polygons.iter().map(|p| vec![0; p.matrix.words.len()]).collect();
    let mut variables: Vec<Variable> = Vec::new();
    let mut root_var: HashMap<usize, usize> = HashMap::new();
    for (slot, p) in polygons.iter().enumerate() {
        for i in 0..p.matrix.words.len() {
            let root = uf.find(offsets[slot] + i);
            let v = *root_var.entry(root).or_insert_with(|| {
                variables.push(Variable { label: p.word(i).to_string(), home: (slot, i), members: 0 });
                variables.len() - 1
            });
            variables[v].members += 1;
            var_of[slot][i] = v;
        }
    }

    let mut linear = Vec::new();
    let mut quadratic: Vec<Quadratic> = Vec::new();
    for (slot, p) in polygons.iter().enumerate() {
        let vo = &var_of[slot];
        for c in &p.linear {
            let mapped = match *c {
                LinearConstraint::Zero(a) => Some(LinearConstraint::Zero(vo[a])),
                LinearConstraint::Equal(a, b) if vo[a] != vo[b] => {
                    Some(LinearConstraint::Equal(vo[a].max(vo[b]), vo[a].min(vo[b])))
                }
                LinearConstraint::Equal(..) => None,
            };
            if let Some(m) = mapped {
                if !linear.contains(&m) {
                    linear.push(m);
                }
            }
        }
        for q in &p.quadratic {
            let mapped = Quadratic { target: vo[q.target], left: vo[q.left], right: vo[q.right] };
            if !quadratic.iter().any(|x| x.target == mapped.target) {
                quadratic.push(mapped);
            }
        }
    }
    let objective = var_of[0][polygons[0].objective];
    Ok(ConstraintSet { n, mode, rule, polygons, var_of, variables, linear, quadratic, objective })
}

impl ConstraintSet {
    /// Counts of the largest polygon as it appears on its own.
    pub fn polygon_counts(&self) -> Counts {
        let p = self.polygons.last().expect("at least one polygon");
        Counts {
            correlators: p.matrix.words.len(),
            outcomes: p.matrix.outcomes.len(),
            linear: p.linear.len(),
            quadratic: p.quadratic.len(),
        }
    }

    /// Counts of the assembled system after cross-polygon identification.
    pub fn counts(&self) -> Counts {
        Counts {
            correlators: self.variables.len(),
            outcomes: self.polygons.iter().map(|p| p.matrix.outcomes.len()).sum(),
            linear: self.linear.len(),
            quadratic: self.quadratic.len(),
        }
    }

    /// Words identified with a variable other than themselves, as
    /// `(slot, word, variable)`; each gives one equality between the
    /// polygon's expression and the variable's home expression.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.var_of.iter().enumerate().flat_map(move |(slot, vo)| {
            vo.iter().enumerate().filter(move |&(i, &v)| self.variables[v].home != (slot, i)).map(move |(i, &v)| (slot, i, v))
        })
    }

    /// Variable indices that appear as a factor of some quadratic.
    pub fn factor_variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.quadratic.iter().flat_map(|q| [q.left, q.right]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Probability of one outcome of each orbit of polygon `slot` at a point
    /// given in correlator-variable space.
    pub fn outcome_probabilities(&self, slot: usize, point: &[f64]) -> Vec<f64> {
        let p = &self.polygons[slot];
        let scale = 4f64.powi(p.n as i32);
        p.matrix
            .positivity_rows()
            .iter()
            .map(|row| {
                let s: f64 = row.iter().zip(&self.var_of[slot]).map(|(&r, &v)| r as f64 * point[v]).sum();
                (1.0 + s) / scale
            })
            .collect()
    }

    /// Largest violation of positivity, linear and exact quadratic
    /// constraints at a point in variable space.
    pub fn residuals(&self, point: &[f64]) -> Residuals {
        let positivity =
            (0..self.polygons.len()).flat_map(|s| self.outcome_probabilities(s, point)).fold(0.0f64, |acc, p| acc.max(-p));
        let linear = self
            .linear
            .iter()
            .map(|c| match *c {
                LinearConstraint::Zero(a) => point[a].abs(),
                LinearConstraint::Equal(a, b) => (point[a] - point[b]).abs(),
            })
            .fold(0.0, f64::max);
        let quadratic =
            self.quadratic.iter().map(|q| (point[q.target] - point[q.left] * point[q.right]).abs()).fold(0.0, f64::max);
        Residuals { positivity, linear, quadratic }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub positivity: f64,
    pub linear: f64,
    pub quadratic: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.positivity.max(self.linear).max(self.quadratic)
    }
}
