//! Finite multisets of tuples.

use std::collections::btree_map::{self, BTreeMap};
use std::collections::BTreeSet;

use crate::error::QueryError;
use crate::value::Tuple;

/// A finite multiset of tuples of a common arity.
///
/// Only positive multiplicities are stored. Iteration follows the tuple
/// ordering, so evaluation output is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Relation {
    arity: usize,
    counts: BTreeMap<Tuple, u64>,
}

impl Relation {
    pub fn new(arity: usize) -> Self {
        Relation {
            arity,
            counts: BTreeMap::new(),
        }
    }

    /// Builds a relation with one occurrence per listed tuple.
    pub fn from_tuples(
        arity: usize,
        tuples: impl IntoIterator<Item = Tuple>,
    ) -> Result<Self, QueryError> {
        let mut r = Relation::new(arity);
        for t in tuples {
            r.insert(t, 1)?;
        }
        Ok(r)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Adds `n` occurrences of `tuple`. Adding zero occurrences is a no-op.
    pub fn insert(&mut self, tuple: Tuple, n: u64) -> Result<(), QueryError> {
        if tuple.arity() != self.arity {
            return Err(QueryError::ArityMismatch {
                left: self.arity,
                right: tuple.arity(),
            });
        }
        if n == 0 {
            return Ok(());
        }
        let slot = self.counts.entry(tuple).or_insert(0);
        *slot = slot.checked_add(n).ok_or(QueryError::Overflow)?;
        Ok(())
    }

    /// Multiplicity of `tuple`; zero when absent.
    pub fn count(&self, tuple: &Tuple) -> u64 {
        self.counts.get(tuple).copied().unwrap_or(0)
    }

    pub fn contains(&self, tuple: &Tuple) -> bool {
        self.counts.contains_key(tuple)
    }

    /// Number of distinct tuples.
    pub fn distinct_len(&self) -> usize {
        self.counts.len()
    }

    /// Number of tuple occurrences.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tuple, u64)> + '_ {
        self.counts.iter().map(|(t, &n)| (t, n))
    }

    pub fn tuples(&self) -> impl Iterator<Item = &Tuple> + '_ {
        self.counts.keys()
    }

    /// Multiset sum.
    pub fn sum(&self, other: &Relation) -> Result<Relation, QueryError> {
        self.same_arity(other)?;
        let mut out = self.clone();
        for (t, n) in other.iter() {
            out.insert(t.clone(), n)?;
        }
        Ok(out)
    }

    /// Duplicate elimination.
    pub fn dedup(&self) -> Relation {
        Relation {
            arity: self.arity,
            counts: self.counts.keys().map(|t| (t.clone(), 1)).collect(),
        }
    }

    /// NOT-IN difference: a tuple keeps its count from `self` unless it
    /// occurs in `other` at all.
    pub fn difference(&self, other: &Relation) -> Result<Relation, QueryError> {
        self.same_arity(other)?;
        Ok(Relation {
            arity: self.arity,
            counts: self
                .counts
                .iter()
                .filter(|(t, _)| !other.contains(t))
                .map(|(t, &n)| (t.clone(), n))
                .collect(),
        })
    }

    /// Cross product; multiplicities multiply, overflow is an error.
    pub fn product(&self, other: &Relation) -> Result<Relation, QueryError> {
        let mut out = Relation::new(self.arity + other.arity);
        for (u, m) in self.iter() {
            for (v, n) in other.iter() {
                let c = m.checked_mul(n).ok_or(QueryError::Overflow)?;
                out.insert(u.concat(v), c)?;
            }
        }
        Ok(out)
    }

    /// Support of the multiset.
    pub fn support(&self) -> BTreeSet<Tuple> {
        self.counts.keys().cloned().collect()
    }

    fn same_arity(&self, other: &Relation) -> Result<(), QueryError> {
        if self.arity != other.arity {
            return Err(QueryError::ArityMismatch {
                left: self.arity,
                right: other.arity,
            });
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Relation {
    type Item = (&'a Tuple, &'a u64);
    type IntoIter = btree_map::Iter<'a, Tuple, u64>;

    fn into_iter(self) -> Self::IntoIter {
        self.counts.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple;

    fn rel(items: &[(&str, u64)]) -> Relation {
        let mut r = Relation::new(1);
        for (s, n) in items {
            r.insert(tuple![*s], *n).unwrap();
        }
        r
    }

    #[test]
    fn not_in_difference() {
        let a = rel(&[("a", 2), ("b", 1)]);
        let b = rel(&[("b", 3)]);
        assert_eq!(a.difference(&b).unwrap(), rel(&[("a", 2)]));
    }

    #[test]
    fn dedup_of_empty_is_empty() {
        assert!(Relation::new(3).dedup().is_empty());
    }

    #[test]
    fn product_multiplies_counts() {
        let a = rel(&[("a", 2)]);
        let b = rel(&[("x", 3), ("y", 1)]);
        let p = a.product(&b).unwrap();
        assert_eq!(p.count(&tuple!["a", "x"]), 6);
        assert_eq!(p.count(&tuple!["a", "y"]), 2);
        assert_eq!(p.total(), 8);
    }

    #[test]
    fn product_overflow_is_reported() {
        let a = rel(&[("a", u64::MAX)]);
        let b = rel(&[("x", 2)]);
        assert_eq!(a.product(&b), Err(QueryError::Overflow));
    }

    #[test]
    fn arity_is_enforced() {
        let mut r = Relation::new(2);
        assert!(matches!(
            r.insert(tuple![1], 1),
            Err(QueryError::ArityMismatch { .. })
        ));
        assert!(r.sum(&Relation::new(3)).is_err());
    }
}
