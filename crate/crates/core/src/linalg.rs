//! Exact incremental rank over the rationals, plus a few dense `f64` helpers.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_traits::{One, Zero};

use crate::poly::{Monomial, PolyVectorField, Rational};

/// Sparse rational vector keyed by an ordered coordinate label.
pub type SparseVector<K> = BTreeMap<K, Rational>;

/// Row echelon basis built one vector at a time.
///
/// Each stored row is normalized so that its largest key (the pivot) has
/// coefficient one. Reduction walks keys in descending order, so a row only
/// ever introduces coordinates below its pivot.
#[derive(Clone, Debug)]
pub struct ExactBasis<K: Ord + Clone> {
    rows: BTreeMap<K, SparseVector<K>>,
}

impl<K: Ord + Clone> Default for ExactBasis<K> {
    fn default() -> Self {
        ExactBasis { rows: BTreeMap::new() }
    }
}

impl<K: Ord + Clone> ExactBasis<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Pivot coordinates of the stored rows, ascending.
    pub fn pivots(&self) -> impl Iterator<Item = &K> {
        self.rows.keys()
    }

    /// Reduces `v` against the basis; an empty result means `v` is in the span.
    pub fn reduce(&self, mut v: SparseVector<K>) -> SparseVector<K> {
        let mut bound: Option<K> = None;
        loop {
            let next = match &bound {
                None => v.keys().next_back().cloned(),
                Some(b) => v.range(..b.clone()).next_back().map(|(k, _)| k.clone()),
            };
            let Some(key) = next else { break };
            if let Some(row) = self.rows.get(&key) {
                let factor = v[&key].clone();
                for (k, c) in row {
                    let updated = v.get(k).cloned().unwrap_or_else(Rational::zero) - factor.clone() * c.clone();
                    if updated.is_zero() {
                        v.remove(k);
                    } else {
                        v.insert(k.clone(), updated);
                    }
                }
            }
            bound = Some(key);
        }
        v
    }

    pub fn contains(&self, v: &SparseVector<K>) -> bool {
        self.reduce(v.clone()).is_empty()
    }

    /// Adds `v` if it is independent of the current rows; returns whether it was added.
    pub fn insert(&mut self, v: SparseVector<K>) -> bool {
        let reduced = self.reduce(v);
        let Some((pivot, lead)) = reduced.iter().next_back().map(|(k, c)| (k.clone(), c.clone())) else {
            return false;
        };
        let row = if lead.is_one() {
            reduced
        } else {
            reduced.into_iter().map(|(k, c)| (k, c / lead.clone())).collect()
        };
        self.rows.insert(pivot, row);
        true
    }
}

/// Coordinate key of a polynomial-field term: monomial first, so the pivot is
/// always a highest-degree term.
pub type FieldKey = (Monomial, usize);

pub fn field_coordinates(field: &PolyVectorField) -> SparseVector<FieldKey> {
    field.terms().map(|(j, m, c)| ((m.clone(), j), c.clone())).collect()
}

/// Exact rank of a dense rational matrix (row count independent of orientation).
pub fn exact_rank(rows: &[Vec<Rational>]) -> usize {
    let mut basis = ExactBasis::<usize>::new();
    for row in rows {
        let v = row
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| (k, c.clone()))
            .collect();
        basis.insert(v);
    }
    basis.rank()
}

/// Largest singular value.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}
