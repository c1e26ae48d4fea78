//! Lie words, bounded Lie closures of polynomial generators, free Lie algebra
//! dimensions, and rank tests for interpolation at point tuples.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::FieldRef;
use crate::linalg::{field_coordinates, ExactBasis, FieldKey};
use crate::poly::{Coefficient, PolyField, PolyVectorField};

/// Default relative singular-value tolerance for tuple rank tests.
pub const RANK_TOL: f64 = 1e-9;

/// Binary bracketing tree over generator indices (0-based internally).
///
/// Serializes as nested arrays with 1-based leaves: `[1, [2, 3]]`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum LieWord {
    Leaf(usize),
    Bracket(Box<LieWord>, Box<LieWord>),
}

impl LieWord {
    pub fn leaf(index: usize) -> Self {
        LieWord::Leaf(index)
    }

    pub fn bracket(left: LieWord, right: LieWord) -> Self {
        LieWord::Bracket(Box::new(left), Box::new(right))
    }

    /// Right-nested bracket `[g_{w0}, [g_{w1}, [..., g_{wn}]]]` of a letter sequence.
    pub fn right_nested(letters: &[usize]) -> Option<Self> {
        let (&last, rest) = letters.split_last()?;
        Some(
            rest.iter()
                .rev()
                .fold(LieWord::Leaf(last), |acc, &l| LieWord::bracket(LieWord::Leaf(l), acc)),
        )
    }

    /// Number of leaves.
    pub fn len(&self) -> usize {
        match self {
            LieWord::Leaf(_) => 1,
            LieWord::Bracket(a, b) => a.len() + b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_letter(&self) -> usize {
        match self {
            LieWord::Leaf(i) => *i,
            LieWord::Bracket(a, b) => a.max_letter().max(b.max_letter()),
        }
    }

    /// Evaluates the word on polynomial generators by exact bracketing.
    pub fn evaluate<C: Coefficient>(&self, generators: &[PolyField<C>]) -> Result<PolyField<C>> {
        let mut cache = HashMap::new();
        self.evaluate_cached(generators, &mut cache)
    }

    fn evaluate_cached<C: Coefficient>(
        &self,
        generators: &[PolyField<C>],
        cache: &mut HashMap<LieWord, PolyField<C>>,
    ) -> Result<PolyField<C>> {
        if let Some(f) = cache.get(self) {
            return Ok(f.clone());
        }
        let value = match self {
            LieWord::Leaf(i) => generators.get(*i).cloned().ok_or_else(|| {
                Error::InvalidArgument(format!("word uses generator {} of {}", i + 1, generators.len()))
            })?,
            LieWord::Bracket(a, b) => {
                let fa = a.evaluate_cached(generators, cache)?;
                let fb = b.evaluate_cached(generators, cache)?;
                fa.lie_bracket(&fb)?
            }
        };
        cache.insert(self.clone(), value.clone());
        Ok(value)
    }
}

impl fmt::Display for LieWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LieWord::Leaf(i) => write!(f, "{}", i + 1),
            LieWord::Bracket(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WordJson {
    Leaf(usize),
    Bracket(Box<WordJson>, Box<WordJson>),
}

impl From<&LieWord> for WordJson {
    fn from(w: &LieWord) -> Self {
        match w {
            LieWord::Leaf(i) => WordJson::Leaf(i + 1),
            LieWord::Bracket(a, b) => WordJson::Bracket(Box::new((&**a).into()), Box::new((&**b).into())),
        }
    }
}

impl TryFrom<WordJson> for LieWord {
    type Error = String;

    fn try_from(w: WordJson) -> std::result::Result<Self, String> {
        match w {
            WordJson::Leaf(0) => Err("generator indices are 1-based".into()),
            WordJson::Leaf(i) => Ok(LieWord::Leaf(i - 1)),
            WordJson::Bracket(a, b) => Ok(LieWord::bracket((*a).try_into()?, (*b).try_into()?)),
        }
    }
}

impl Serialize for LieWord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WordJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for LieWord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        WordJson::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

/// `m · binomial(m + k, m)`: dimension of polynomial fields of degree ≤ k on `R^m`.
pub fn poly_field_dimension(m: usize, k: usize) -> usize {
    m * binomial(m + k, m)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Basis of the degree-bounded part of a Lie closure.
#[derive(Clone, Debug, Serialize)]
pub struct LieSpanReport {
    pub generators: usize,
    pub m: usize,
    pub degree_cap: usize,
    pub depth_cap: usize,
    pub dimension: usize,
    /// `m · binomial(m + k, m)`, the dimension of all fields of degree ≤ k.
    pub full_dimension: usize,
    pub words: Vec<LieWord>,
    #[serde(skip)]
    pub basis: Vec<PolyVectorField>,
}

impl LieSpanReport {
    pub fn spans_all_polynomials(&self) -> bool {
        self.dimension == self.full_dimension
    }
}

/// Breadth-first closure of `generators` under right-nested brackets.
///
/// Level `n` brackets each generator with the level-`n-1` elements that were new
/// (independent of everything seen so far, at any degree). Brackets of any
/// degree are kept as bracketing material; only those of degree ≤ `degree_cap`
/// enter the reported basis.
pub fn lie_closure_bounded(
    generators: &[PolyVectorField],
    degree_cap: usize,
    depth_cap: usize,
) -> Result<LieSpanReport> {
    closure_impl(generators, degree_cap, depth_cap, false)
}

/// Like [`lie_closure_bounded`], but stops at the first depth where the
/// bounded span already has the full dimension `m · binomial(m + k, m)`.
pub fn lie_closure_until_full(
    generators: &[PolyVectorField],
    degree_cap: usize,
    max_depth: usize,
) -> Result<LieSpanReport> {
    closure_impl(generators, degree_cap, max_depth, true)
}

fn closure_impl(
    generators: &[PolyVectorField],
    degree_cap: usize,
    depth_cap: usize,
    stop_when_full: bool,
) -> Result<LieSpanReport> {
    let m = generators
        .first()
        .map(PolyVectorField::dim)
        .ok_or_else(|| Error::InvalidArgument("at least one generator is required".into()))?;
    for g in generators {
        check_dim(m, g.dim())?;
    }
    if depth_cap == 0 {
        return Err(Error::InvalidArgument("depth cap must be at least 1".into()));
    }

    let mut closure = Closure {
        all: ExactBasis::new(),
        bounded: ExactBasis::new(),
        degree_cap: degree_cap as i64,
        basis: Vec::new(),
        words: Vec::new(),
    };

    let mut frontier: Vec<(LieWord, PolyVectorField)> = Vec::new();
    for (i, g) in generators.iter().enumerate() {
        if closure.consider(LieWord::Leaf(i), g) {
            frontier.push((LieWord::Leaf(i), g.clone()));
        }
    }

    let full_dimension = poly_field_dimension(m, degree_cap);
    let mut depth_used = 1;
    for depth in 2..=depth_cap {
        if stop_when_full && closure.basis.len() == full_dimension {
            break;
        }
        depth_used = depth;
        let mut next = Vec::new();
        for (word, field) in &frontier {
            for (i, g) in generators.iter().enumerate() {
                if *word == LieWord::Leaf(i) {
                    continue;
                }
                let bracket = g.lie_bracket(field)?;
                if bracket.is_zero() {
                    continue;
                }
                let w = LieWord::bracket(LieWord::Leaf(i), word.clone());
                if closure.consider(w.clone(), &bracket) {
                    next.push((w, bracket));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    Ok(LieSpanReport {
        generators: generators.len(),
        m,
        degree_cap,
        depth_cap: if stop_when_full { depth_used } else { depth_cap },
        dimension: closure.basis.len(),
        full_dimension,
        words: closure.words,
        basis: closure.basis,
    })
}

struct Closure {
    all: ExactBasis<FieldKey>,
    bounded: ExactBasis<FieldKey>,
    degree_cap: i64,
    basis: Vec<PolyVectorField>,
    words: Vec<LieWord>,
}

impl Closure {
    /// Records `field`; returns true when it is new relative to every element seen.
    fn consider(&mut self, word: LieWord, field: &PolyVectorField) -> bool {
        if field.is_zero() {
            return false;
        }
        let coords = field_coordinates(field);
        if field.degree() <= self.degree_cap && self.bounded.insert(coords.clone()) {
            self.basis.push(field.clone());
            self.words.push(word);
        }
        self.all.insert(coords)
    }
}

/// Möbius function by trial division.
pub fn mobius(mut n: u64) -> i64 {
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

/// Dimension of the length-`n` component of the free Lie algebra on `d` generators.
pub fn witt_dimension(d: u64, n: u64) -> Result<u128> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("witt_dimension needs d ≥ 1 and n ≥ 1".into()));
    }
    let mut sum: i128 = 0;
    for k in (1..=n).filter(|&k| n.is_multiple_of(k)) {
        let term = (d as i128)
            .checked_pow((n / k) as u32)
            .ok_or_else(|| Error::InvalidArgument("overflow".into()))?;
        sum += i128::from(mobius(k)) * term;
    }
    Ok((sum / n as i128) as u128)
}

/// Lyndon words of exact length `n` over letters `1..=d`, lexicographically sorted.
///
/// Uses Duval's successor algorithm, which emits every Lyndon word of length
/// at most `n` in lexicographic order.
pub fn lyndon_words(d: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if d == 0 || n == 0 {
        return out;
    }
    let mut w: Vec<usize> = vec![0];
    while !w.is_empty() {
        if w.len() == n {
            out.push(w.iter().map(|&c| c + 1).collect());
        }
        let base = w.clone();
        while w.len() < n {
            w.push(base[w.len() % base.len()]);
        }
        while w.last() == Some(&(d - 1)) {
            w.pop();
        }
        if let Some(last) = w.last_mut() {
            *last += 1;
        }
    }
    out
}

/// Generators for the interpolation matrix: exact polynomials, `f64`
/// polynomials (brackets computed in floating point), or general numeric
/// fields (brackets up to length 2 via Jacobians).
#[derive(Clone, Debug)]
pub enum FieldFamily {
    Exact(Vec<PolyVectorField>),
    Float(Vec<PolyField<f64>>),
    Numeric(Vec<FieldRef>),
}

impl FieldFamily {
    pub fn len(&self) -> usize {
        match self {
            FieldFamily::Exact(v) => v.len(),
            FieldFamily::Float(v) => v.len(),
            FieldFamily::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            FieldFamily::Exact(v) => v.first().map(PolyField::dim),
            FieldFamily::Float(v) => v.first().map(PolyField::dim),
            FieldFamily::Numeric(v) => v.first().map(|f| f.dim()),
        }
    }

    /// Values of every word at every point: `result[w][p]` is `L_w(V)(x_p)`.
    fn word_values(&self, words: &[LieWord], points: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
        match self {
            FieldFamily::Exact(gens) => poly_word_values(gens, words, points),
            FieldFamily::Float(gens) => poly_word_values(gens, words, points),
            FieldFamily::Numeric(gens) => words
                .iter()
                .map(|w| points.iter().map(|x| numeric_word_value(gens, w, x)).collect())
                .collect(),
        }
    }
}

fn poly_word_values<C: Coefficient>(
    gens: &[PolyField<C>],
    words: &[LieWord],
    points: &[Vec<f64>],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut cache = HashMap::new();
    words
        .iter()
        .map(|w| {
            let field = w.evaluate_cached(gens, &mut cache)?;
            points.iter().map(|x| field.evaluate(x)).collect()
        })
        .collect()
}

fn numeric_word_value(gens: &[FieldRef], word: &LieWord, x: &[f64]) -> Result<Vec<f64>> {
    let get = |i: usize| {
        gens.get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("word uses generator {} of {}", i + 1, gens.len())))
    };
    match word {
        LieWord::Leaf(i) => get(*i)?.eval(x),
        LieWord::Bracket(a, b) => match (&**a, &**b) {
            (LieWord::Leaf(i), LieWord::Leaf(j)) => {
                let (u, v) = (get(*i)?, get(*j)?);
                let ux = nalgebra::DVector::from_vec(u.eval(x)?);
                let vx = nalgebra::DVector::from_vec(v.eval(x)?);
                let bracket = v.jacobian(x)? * ux - u.jacobian(x)? * vx;
                Ok(bracket.iter().copied().collect())
            }
            _ => Err(Error::WordTooLong(word.to_string())),
        },
    }
}

fn check_tuple(m: usize, tuple: &[Vec<f64>]) -> Result<()> {
    for x in tuple {
        check_dim(m, x.len())?;
    }
    for i in 0..tuple.len() {
        for j in i + 1..tuple.len() {
            if tuple[i] == tuple[j] {
                return Err(Error::DuplicatePoint { first: i, second: j });
            }
        }
    }
    Ok(())
}

/// Stacked evaluation matrix: `mN × W`, column `w` is `(L_w(V)(x_1), ..., L_w(V)(x_N))`.
pub fn interpolation_matrix(fields: &FieldFamily, words: &[LieWord], tuple: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = fields
        .dim()
        .ok_or_else(|| Error::InvalidArgument("empty field family".into()))?;
    check_tuple(m, tuple)?;
    let values = fields.word_values(words, tuple)?;
    let rows = m * tuple.len();
    Ok(DMatrix::from_fn(rows, words.len(), |r, c| values[c][r / m][r % m]))
}

/// Numerical row-rank summary of an interpolation matrix.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RankReport {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    pub full_row_rank: bool,
}

/// Row rank with relative tolerance: singular values `> tol · σ_max` count.
pub fn rank_report(matrix: &DMatrix<f64>, tol: f64) -> RankReport {
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return RankReport {
            rows,
            cols,
            rank: 0,
            smallest_singular_value: 0.0,
            largest_singular_value: 0.0,
            full_row_rank: rows == 0,
        };
    }
    let sv = matrix.singular_values();
    let largest = sv.max();
    let smallest = if cols < rows { 0.0 } else { sv.min() };
    let rank = sv.iter().filter(|&&s| s > tol * largest).count();
    RankReport {
        rows,
        cols,
        rank,
        smallest_singular_value: smallest,
        largest_singular_value: largest,
        full_row_rank: largest > 0.0 && rank == rows,
    }
}

/// Whether the span of the word fields interpolates at `tuple`.
pub fn interpolates_at_tuple(fields: &FieldFamily, words: &[LieWord], tuple: &[Vec<f64>], tol: f64) -> Result<bool> {
    let matrix = interpolation_matrix(fields, words, tuple)?;
    Ok(rank_report(&matrix, tol).full_row_rank)
}

/// Words whose evaluations on the generators span all polynomial fields of
/// degree ≤ `degree_cap`, found by closing `reference` (typically the
/// canonical five fields). Reused on other generators these give the
/// columns of the rank test.
pub fn spanning_words(reference: &[PolyVectorField], degree_cap: usize) -> Result<Vec<LieWord>> {
    let m = reference.first().map(PolyVectorField::dim).unwrap_or(0);
    Ok(lie_closure_until_full(reference, degree_cap, default_depth(m, degree_cap))?.words)
}

/// Depth budget for reaching every field of degree ≤ `k` from the canonical
/// generators: `k + 2m + 2`.
pub fn default_depth(m: usize, k: usize) -> usize {
    k + 2 * m + 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    #[test]
    fn word_display_and_json() {
        let w = LieWord::right_nested(&[0, 1, 2]).unwrap();
        assert_eq!(w.to_string(), "[1,[2,3]]");
        assert_eq!(w.len(), 3);
        let text = serde_json::to_string(&w).unwrap();
        assert_eq!(text, "[1,[2,3]]");
        let back: LieWord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<LieWord>("[0,1]").is_err());
    }

    #[test]
    fn mobius_values() {
        let expected = [1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0];
        for (n, &mu) in expected.iter().enumerate() {
            assert_eq!(mobius(n as u64 + 1), mu, "mu({})", n + 1);
        }
    }

    #[test]
    fn witt_small_values() {
        assert_eq!(witt_dimension(2, 1).unwrap(), 2);
        assert_eq!(witt_dimension(2, 2).unwrap(), 1);
        assert_eq!(witt_dimension(2, 6).unwrap(), 9);
        assert_eq!(witt_dimension(5, 1).unwrap(), 5);
        assert!(witt_dimension(0, 3).is_err());
    }

    #[test]
    fn lyndon_small_cases() {
        assert_eq!(lyndon_words(2, 1), vec![vec![1], vec![2]]);
        assert_eq!(lyndon_words(2, 2), vec![vec![1, 2]]);
        assert_eq!(lyndon_words(2, 3), vec![vec![1, 1, 2], vec![1, 2, 2]]);
    }

    #[test]
    fn closure_of_zero_is_empty() {
        let report = lie_closure_bounded(&[PolyVectorField::zero(2)], 3, 4).unwrap();
        assert_eq!(report.dimension, 0);
        assert!(lie_closure_bounded(&[], 1, 1).is_err());
        assert!(lie_closure_bounded(&[PolyVectorField::zero(2), PolyVectorField::zero(3)], 1, 1).is_err());
    }

    #[test]
    fn empty_word_list_gives_empty_matrix() {
        let fam = FieldFamily::Exact(vec![PolyVectorField::constant(2, 0).unwrap()]);
        let mat = interpolation_matrix(&fam, &[], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(mat.shape(), (4, 0));
        assert!(!rank_report(&mat, RANK_TOL).full_row_rank);
    }

    #[test]
    fn duplicate_points_rejected() {
        let fam = FieldFamily::Exact(vec![PolyVectorField::constant(2, 0).unwrap()]);
        let err = interpolation_matrix(&fam, &[LieWord::Leaf(0)], &[vec![0.5, 1.0], vec![0.5, 1.0]]).unwrap_err();
        assert_eq!(err, Error::DuplicatePoint { first: 0, second: 1 });
    }

    #[test]
    fn single_linear_field_cannot_span_plane() {
        let a = PolyVectorField::linear(&[vec![rat(1, 1), rat(2, 1)], vec![rat(0, 1), rat(3, 1)]]).unwrap();
        let fam = FieldFamily::Exact(vec![a]);
        assert!(!interpolates_at_tuple(&fam, &[LieWord::Leaf(0)], &[vec![0.3, 0.4]], RANK_TOL).unwrap());
    }

    #[test]
    fn numeric_family_rejects_long_words() {
        let g = crate::field::compile_all(&[
            PolyVectorField::constant(2, 0).unwrap(),
            PolyVectorField::constant(2, 1).unwrap(),
        ]);
        let fam = FieldFamily::Numeric(g);
        let w = LieWord::right_nested(&[0, 1, 0]).unwrap();
        assert!(matches!(
            interpolation_matrix(&fam, &[w], &[vec![0.0, 0.0]]),
            Err(Error::WordTooLong(_))
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(5, 3), 10);
        assert_eq!(binomial(3, 0), 1);
        assert_eq!(poly_field_dimension(2, 2), 12);
        assert_eq!(poly_field_dimension(3, 2), 30);
    }
}
