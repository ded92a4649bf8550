//! Annotation structures: semirings, their monus (m-semirings) and delta
//! (δ-semirings) extensions, and the shipped instances.
//!
//! | structure  | elements            | ⊕      | ⊗           | ⊖         | δ                  |
//! |------------|---------------------|--------|-------------|-----------|--------------------|
//! | counting   | naturals            | +      | ×           | truncated | 0 ↦ 0, else 1      |
//! | why        | sets of token sets  | ∪      | pairwise ∪  | set diff  | ∅ ↦ ∅, else {∅}    |
//! | boolean    | Boolean functions   | ∨      | ∧           | a ∧ ¬b    | identity           |
//! | formula    | symbolic terms      | ⊕ node | ⊗ node      | ⊖ node    | δ node             |

mod aggregate;
mod boolean;
mod formula;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use aggregate::{sm_aggregate, MonoidAggregate, SemimoduleElement};
pub use boolean::{BoolExpr, BoolFn, MAX_EQUIVALENCE_VARS};
pub use formula::{Formula, FormulaNode};

use crate::circuit::GateId;
use crate::value::{Tag, Value};

/// Opaque token identifier: a gate UUID or a display name.
pub type Token = Arc<str>;

/// A why-provenance witness: one set of contributing tokens.
pub type Witness = BTreeSet<Token>;

/// Why-provenance: a set of witnesses. Not minimized.
pub type WhySet = BTreeSet<Witness>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiringError {
    #[error("structure `{0}` has no monus")]
    MonusUnsupported(String),
    #[error("structure `{0}` has no delta")]
    DeltaUnsupported(String),
    #[error("element {element} does not belong to structure `{structure}`")]
    DomainMismatch { structure: String, element: String },
    #[error("aggregate `{aggregate}` cannot take values of type {tag}")]
    TagMismatch { aggregate: &'static str, tag: Tag },
    #[error("aggregate `{0}` is not supported (only count, sum, min, max)")]
    UnsupportedAggregate(String),
    #[error("annotation arithmetic overflow")]
    Overflow,
}

/// An annotation value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    Count(u64),
    Why(WhySet),
    Bool(BoolFn),
    Formula(Formula),
    /// Reference into a provenance circuit (the universal representation).
    Gate(GateId),
}

impl Element {
    /// `{{name}}`: the why-provenance of a single base tuple.
    pub fn why_token(name: impl Into<Token>) -> Element {
        Element::Why(BTreeSet::from([BTreeSet::from([name.into()])]))
    }

    pub fn why_from<I, J, S>(witnesses: I) -> Element
    where
        I: IntoIterator<Item = J>,
        J: IntoIterator<Item = S>,
        S: Into<Token>,
    {
        Element::Why(
            witnesses
                .into_iter()
                .map(|w| w.into_iter().map(Into::into).collect())
                .collect(),
        )
    }

    pub fn as_count(&self) -> Option<u64> {
        match self {
            Element::Count(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_gate(&self) -> Option<GateId> {
        match self {
            Element::Gate(g) => Some(*g),
            _ => None,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Count(n) => write!(f, "{n}"),
            Element::Why(w) => {
                f.write_str("{")?;
                for (i, witness) in w.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    f.write_str("{")?;
                    for (j, t) in witness.iter().enumerate() {
                        if j > 0 {
                            f.write_str(",")?;
                        }
                        f.write_str(t)?;
                    }
                    f.write_str("}")?;
                }
                f.write_str("}")
            }
            Element::Bool(b) => write!(f, "{b}"),
            Element::Formula(x) => write!(f, "{x}"),
            Element::Gate(g) => write!(f, "{g}"),
        }
    }
}

/// Binary operations of an annotation structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemiringOp {
    Plus,
    Times,
    Monus,
}

/// A semiring over [`Element`], optionally with monus and delta.
///
/// ⊕ is always commutative. Implementations must reject elements from
/// another domain with [`SemiringError::DomainMismatch`].
pub trait AnnotationStructure: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;
    fn contains(&self, e: &Element) -> bool;
    fn zero(&self) -> Element;
    fn one(&self) -> Element;
    fn plus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError>;
    fn times(&self, a: &Element, b: &Element) -> Result<Element, SemiringError>;

    fn has_monus(&self) -> bool {
        false
    }

    fn monus(&self, _a: &Element, _b: &Element) -> Result<Element, SemiringError> {
        Err(SemiringError::MonusUnsupported(self.name().to_string()))
    }

    fn has_delta(&self) -> bool {
        false
    }

    fn delta(&self, _a: &Element) -> Result<Element, SemiringError> {
        Err(SemiringError::DeltaUnsupported(self.name().to_string()))
    }

    fn times_commutative(&self) -> bool {
        true
    }

    /// `a ⊕ … ⊕ a` with `n` summands.
    fn plus_n(&self, a: &Element, n: u64) -> Result<Element, SemiringError> {
        let mut acc = self.zero();
        for _ in 0..n {
            acc = self.plus(&acc, a)?;
        }
        Ok(acc)
    }

    /// Lifted monoid aggregate; see [`sm_aggregate`].
    fn aggregate(
        &self,
        func: MonoidAggregate,
        items: &[(Value, Element, u64)],
        input: Tag,
    ) -> Result<SemimoduleElement, SemiringError> {
        Ok(aggregate::symbolic_aggregate(func, items, input))
    }
}

/// Applies a binary operation of `structure`.
pub fn apply(
    structure: &dyn AnnotationStructure,
    op: SemiringOp,
    a: &Element,
    b: &Element,
) -> Result<Element, SemiringError> {
    for e in [a, b] {
        check_domain(structure, e)?;
    }
    match op {
        SemiringOp::Plus => structure.plus(a, b),
        SemiringOp::Times => structure.times(a, b),
        SemiringOp::Monus => structure.monus(a, b),
    }
}

/// Applies δ of `structure`.
pub fn delta(structure: &dyn AnnotationStructure, a: &Element) -> Result<Element, SemiringError> {
    check_domain(structure, a)?;
    structure.delta(a)
}

/// ⊕-fold over a multiset given as `(element, multiplicity)` pairs, in order.
pub fn sum_with_multiplicity<'a>(
    structure: &dyn AnnotationStructure,
    items: impl IntoIterator<Item = (&'a Element, u64)>,
) -> Result<Element, SemiringError> {
    let mut acc = structure.zero();
    for (e, n) in items {
        let part = if n == 1 {
            e.clone()
        } else {
            structure.plus_n(e, n)?
        };
        acc = structure.plus(&acc, &part)?;
    }
    Ok(acc)
}

fn check_domain(structure: &dyn AnnotationStructure, e: &Element) -> Result<(), SemiringError> {
    if structure.contains(e) {
        Ok(())
    } else {
        Err(mismatch(structure, e))
    }
}

fn mismatch(structure: &dyn AnnotationStructure, e: &Element) -> SemiringError {
    SemiringError::DomainMismatch {
        structure: structure.name().to_string(),
        element: e.to_string(),
    }
}

/// `(ℕ, +, ×, 0, 1)` with truncated difference.
#[derive(Debug, Clone, Copy, Default)]
pub struct Counting;

impl Counting {
    fn nat(&self, e: &Element) -> Result<u64, SemiringError> {
        e.as_count().ok_or_else(|| mismatch(self, e))
    }
}

impl AnnotationStructure for Counting {
    fn name(&self) -> &str {
        "counting"
    }

    fn contains(&self, e: &Element) -> bool {
        matches!(e, Element::Count(_))
    }

    fn zero(&self) -> Element {
        Element::Count(0)
    }

    fn one(&self) -> Element {
        Element::Count(1)
    }

    fn plus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        self.nat(a)?
            .checked_add(self.nat(b)?)
            .map(Element::Count)
            .ok_or(SemiringError::Overflow)
    }

    fn times(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        self.nat(a)?
            .checked_mul(self.nat(b)?)
            .map(Element::Count)
            .ok_or(SemiringError::Overflow)
    }

    fn has_monus(&self) -> bool {
        true
    }

    fn monus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Count(self.nat(a)?.saturating_sub(self.nat(b)?)))
    }

    fn has_delta(&self) -> bool {
        true
    }

    fn delta(&self, a: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Count(u64::from(self.nat(a)? != 0)))
    }

    fn plus_n(&self, a: &Element, n: u64) -> Result<Element, SemiringError> {
        self.times(a, &Element::Count(n))
    }

    /// Resolves to a scalar: each value counts as many times as its
    /// annotation times its multiplicity.
    fn aggregate(
        &self,
        func: MonoidAggregate,
        items: &[(Value, Element, u64)],
        input: Tag,
    ) -> Result<SemimoduleElement, SemiringError> {
        let mut expanded = Vec::with_capacity(items.len());
        for (v, e, n) in items {
            let k = self
                .nat(e)?
                .checked_mul(*n)
                .ok_or(SemiringError::Overflow)?;
            expanded.push((v, k));
        }
        Ok(match func.apply(expanded, input)? {
            Some(v) => SemimoduleElement::Scalar(v),
            None => SemimoduleElement::Neutral(func),
        })
    }
}

/// Why-provenance `(2^(2^X), ∪, ⋓, ∅, {∅})` with set difference.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhyProvenance;

impl WhyProvenance {
    fn set<'a>(&self, e: &'a Element) -> Result<&'a WhySet, SemiringError> {
        match e {
            Element::Why(w) => Ok(w),
            other => Err(mismatch(self, other)),
        }
    }
}

impl AnnotationStructure for WhyProvenance {
    fn name(&self) -> &str {
        "why"
    }

    fn contains(&self, e: &Element) -> bool {
        matches!(e, Element::Why(_))
    }

    fn zero(&self) -> Element {
        Element::Why(WhySet::new())
    }

    fn one(&self) -> Element {
        Element::Why(WhySet::from([Witness::new()]))
    }

    fn plus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Why(
            self.set(a)?.union(self.set(b)?).cloned().collect(),
        ))
    }

    fn times(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        let (a, b) = (self.set(a)?, self.set(b)?);
        Ok(Element::Why(
            a.iter()
                .flat_map(|x| b.iter().map(move |y| x.union(y).cloned().collect()))
                .collect(),
        ))
    }

    fn has_monus(&self) -> bool {
        true
    }

    fn monus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Why(
            self.set(a)?.difference(self.set(b)?).cloned().collect(),
        ))
    }

    fn has_delta(&self) -> bool {
        true
    }

    fn delta(&self, a: &Element) -> Result<Element, SemiringError> {
        Ok(if self.set(a)?.is_empty() {
            self.zero()
        } else {
            self.one()
        })
    }

    fn plus_n(&self, a: &Element, n: u64) -> Result<Element, SemiringError> {
        self.set(a)?;
        Ok(if n == 0 { self.zero() } else { a.clone() })
    }
}

/// Boolean functions `(𝔹[X], ∨, ∧, ⊥, ⊤)` with `a ∧ ¬b` as monus.
#[derive(Debug, Clone, Copy, Default)]
pub struct BooleanFunctions;

impl BooleanFunctions {
    fn func<'a>(&self, e: &'a Element) -> Result<&'a BoolFn, SemiringError> {
        match e {
            Element::Bool(b) => Ok(b),
            other => Err(mismatch(self, other)),
        }
    }
}

impl AnnotationStructure for BooleanFunctions {
    fn name(&self) -> &str {
        "boolean"
    }

    fn contains(&self, e: &Element) -> bool {
        matches!(e, Element::Bool(_))
    }

    fn zero(&self) -> Element {
        Element::Bool(BoolFn::constant(false))
    }

    fn one(&self) -> Element {
        Element::Bool(BoolFn::constant(true))
    }

    fn plus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Bool(BoolFn::or([
            self.func(a)?.clone(),
            self.func(b)?.clone(),
        ])))
    }

    fn times(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Bool(BoolFn::and([
            self.func(a)?.clone(),
            self.func(b)?.clone(),
        ])))
    }

    fn has_monus(&self) -> bool {
        true
    }

    fn monus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Bool(BoolFn::and([
            self.func(a)?.clone(),
            BoolFn::not(self.func(b)?.clone()),
        ])))
    }

    fn has_delta(&self) -> bool {
        true
    }

    /// ⊤ ∨ … ∨ ⊤ = ⊤, so the identity satisfies both δ laws.
    fn delta(&self, a: &Element) -> Result<Element, SemiringError> {
        self.func(a)?;
        Ok(a.clone())
    }

    fn plus_n(&self, a: &Element, n: u64) -> Result<Element, SemiringError> {
        self.func(a)?;
        Ok(if n == 0 { self.zero() } else { a.clone() })
    }
}

/// Symbolic formulas. A pseudo-semiring: it records operations rather than
/// satisfying the axioms up to equality.
#[derive(Debug, Clone, Copy, Default)]
pub struct FormulaSemiring;

impl FormulaSemiring {
    fn formula<'a>(&self, e: &'a Element) -> Result<&'a Formula, SemiringError> {
        match e {
            Element::Formula(f) => Ok(f),
            other => Err(mismatch(self, other)),
        }
    }
}

impl AnnotationStructure for FormulaSemiring {
    fn name(&self) -> &str {
        "formula"
    }

    fn contains(&self, e: &Element) -> bool {
        matches!(e, Element::Formula(_))
    }

    fn zero(&self) -> Element {
        Element::Formula(Formula::zero())
    }

    fn one(&self) -> Element {
        Element::Formula(Formula::one())
    }

    fn plus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Formula(self.formula(a)?.plus(self.formula(b)?)))
    }

    fn times(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Formula(self.formula(a)?.times(self.formula(b)?)))
    }

    fn has_monus(&self) -> bool {
        true
    }

    fn monus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Formula(self.formula(a)?.monus(self.formula(b)?)))
    }

    fn has_delta(&self) -> bool {
        true
    }

    fn delta(&self, a: &Element) -> Result<Element, SemiringError> {
        Ok(Element::Formula(self.formula(a)?.delta()))
    }
}

/// Looks up a shipped structure by name.
pub fn structure_by_name(name: &str) -> Option<Arc<dyn AnnotationStructure>> {
    match name.to_ascii_lowercase().as_str() {
        "counting" | "count" => Some(Arc::new(Counting)),
        "why" => Some(Arc::new(WhyProvenance)),
        "boolean" | "bool" => Some(Arc::new(BooleanFunctions)),
        "formula" => Some(Arc::new(FormulaSemiring)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(n: u64) -> Element {
        Element::Count(n)
    }

    #[test]
    fn counting_examples() {
        let s = Counting;
        assert_eq!(apply(&s, SemiringOp::Plus, &c(2), &c(3)), Ok(c(5)));
        assert_eq!(apply(&s, SemiringOp::Times, &c(2), &c(3)), Ok(c(6)));
        assert_eq!(apply(&s, SemiringOp::Monus, &c(3), &c(5)), Ok(c(0)));
        assert_eq!(delta(&s, &c(0)), Ok(c(0)));
        assert_eq!(delta(&s, &c(7)), Ok(c(1)));
    }

    #[test]
    fn why_examples() {
        let s = WhyProvenance;
        let t3 = Element::why_token("t3");
        let t5 = Element::why_token("t5");
        assert_eq!(
            apply(&s, SemiringOp::Times, &t3, &t5),
            Ok(Element::why_from([["t3", "t5"]]))
        );
        let a = Element::why_from([["t3", "t5"], ["t5", "t6"]]);
        let b = Element::why_from([["t5", "t6"]]);
        assert_eq!(
            apply(&s, SemiringOp::Monus, &a, &b),
            Ok(Element::why_from([["t3", "t5"]]))
        );
        assert_eq!(delta(&s, &s.zero()), Ok(s.zero()));
        assert_eq!(delta(&s, &a), Ok(s.one()));
    }

    #[test]
    fn why_is_not_minimized() {
        let s = WhyProvenance;
        let a = Element::why_from([vec!["a"]]);
        let ab = Element::why_from([vec!["a", "b"]]);
        let sum = s.plus(&a, &ab).unwrap();
        assert_eq!(sum, Element::why_from([vec!["a"], vec!["a", "b"]]));
    }

    #[test]
    fn identities_and_annihilator() {
        let samples: Vec<(Box<dyn AnnotationStructure>, Element)> = vec![
            (Box::new(Counting), c(4)),
            (Box::new(WhyProvenance), Element::why_from([["x", "y"]])),
            (Box::new(BooleanFunctions), Element::Bool(BoolFn::var("x"))),
            (
                Box::new(FormulaSemiring),
                Element::Formula(Formula::token("x")),
            ),
        ];
        for (s, x) in &samples {
            let s = s.as_ref();
            assert_eq!(
                &apply(s, SemiringOp::Plus, x, &s.zero()).unwrap(),
                x,
                "{}",
                s.name()
            );
            assert_eq!(
                apply(s, SemiringOp::Times, x, &s.zero()).unwrap(),
                s.zero(),
                "{}",
                s.name()
            );
            assert_eq!(
                &apply(s, SemiringOp::Times, x, &s.one()).unwrap(),
                x,
                "{}",
                s.name()
            );
        }
    }

    #[test]
    fn boolean_monus_is_and_not() {
        let s = BooleanFunctions;
        let a = Element::Bool(BoolFn::var("a"));
        let b = Element::Bool(BoolFn::var("b"));
        let Element::Bool(f) = s.monus(&a, &b).unwrap() else {
            panic!()
        };
        let expected = BoolFn::and([BoolFn::var("a"), BoolFn::not(BoolFn::var("b"))]);
        assert!(f.equivalent(&expected));
    }

    #[test]
    fn domain_mismatch() {
        let err = apply(&Counting, SemiringOp::Plus, &c(1), &Element::why_token("x"));
        assert!(matches!(err, Err(SemiringError::DomainMismatch { .. })));
    }

    #[derive(Debug)]
    struct Bare;

    impl AnnotationStructure for Bare {
        fn name(&self) -> &str {
            "bare"
        }
        fn contains(&self, e: &Element) -> bool {
            Counting.contains(e)
        }
        fn zero(&self) -> Element {
            Counting.zero()
        }
        fn one(&self) -> Element {
            Counting.one()
        }
        fn plus(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
            Counting.plus(a, b)
        }
        fn times(&self, a: &Element, b: &Element) -> Result<Element, SemiringError> {
            Counting.times(a, b)
        }
    }

    #[test]
    fn missing_monus_and_delta() {
        assert_eq!(
            apply(&Bare, SemiringOp::Monus, &c(1), &c(1)),
            Err(SemiringError::MonusUnsupported("bare".into()))
        );
        assert_eq!(
            delta(&Bare, &c(1)),
            Err(SemiringError::DeltaUnsupported("bare".into()))
        );
    }

    #[test]
    fn aggregate_examples() {
        let items = [(Value::Int(3), c(2), 1), (Value::Int(4), c(1), 1)];
        assert_eq!(
            sm_aggregate(MonoidAggregate::Sum, &items, &Counting, Tag::Int),
            Ok(SemimoduleElement::Scalar(Value::Int(10)))
        );
        let items = [(Value::Int(3), c(1), 1), (Value::Int(4), c(1), 1)];
        assert_eq!(
            sm_aggregate(MonoidAggregate::Min, &items, &Counting, Tag::Int),
            Ok(SemimoduleElement::Scalar(Value::Int(3)))
        );
        assert_eq!(
            sm_aggregate(MonoidAggregate::Sum, &[], &Counting, Tag::Int),
            Ok(SemimoduleElement::Scalar(Value::Int(0)))
        );
        assert_eq!(
            sm_aggregate(MonoidAggregate::Count, &[], &WhyProvenance, Tag::Text),
            Ok(SemimoduleElement::Scalar(Value::Int(0)))
        );
        assert_eq!(
            sm_aggregate(MonoidAggregate::Max, &[], &Counting, Tag::Int),
            Ok(SemimoduleElement::Neutral(MonoidAggregate::Max))
        );
    }

    #[test]
    fn aggregate_rejects_bad_tags() {
        let items = [(Value::text("x"), c(1), 1)];
        assert!(matches!(
            sm_aggregate(MonoidAggregate::Sum, &items, &Counting, Tag::Text),
            Err(SemiringError::TagMismatch { .. })
        ));
        let items = [(Value::Int(1), c(1), 1), (Value::text("x"), c(1), 1)];
        assert!(matches!(
            sm_aggregate(MonoidAggregate::Min, &items, &Counting, Tag::Int),
            Err(SemiringError::TagMismatch { .. })
        ));
        assert_eq!(
            "avg".parse::<MonoidAggregate>(),
            Err(SemiringError::UnsupportedAggregate("avg".into()))
        );
    }

    #[test]
    fn symbolic_aggregate_keeps_pairs() {
        let items = [
            (Value::Int(4), Element::why_token("b"), 1),
            (Value::Int(3), Element::why_token("a"), 2),
        ];
        let got = sm_aggregate(MonoidAggregate::Sum, &items, &WhyProvenance, Tag::Int).unwrap();
        assert_eq!(
            got,
            SemimoduleElement::Symbolic {
                func: MonoidAggregate::Sum,
                terms: vec![
                    (Value::Int(3), Element::why_token("a")),
                    (Value::Int(3), Element::why_token("a")),
                    (Value::Int(4), Element::why_token("b")),
                ],
            }
        );
    }
}
