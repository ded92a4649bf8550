//! Direct semantics over annotated relations. This is the reference the
//! rewriter is checked against, not the production path.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::error::QueryError;
use crate::eval::{eval_predicate, eval_term, Instance};
use crate::query::{AggFunc, Query, QueryAst};
use crate::relation::Relation;
use crate::semiring::{sm_aggregate, sum_with_multiplicity, AnnotationStructure, Element};
use crate::value::{Tag, Tuple, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotatedError {
    #[error("query uses multiset difference but `{0}` has no monus")]
    NeedsMonus(String),
    #[error("query uses aggregation but `{0}` has no delta")]
    NeedsDelta(String),
    #[error("expected {expected} tokens, got {found}")]
    TokenCountMismatch { expected: u64, found: usize },
    #[error(transparent)]
    Query(#[from] QueryError),
}

impl From<crate::semiring::SemiringError> for AnnotatedError {
    fn from(e: crate::semiring::SemiringError) -> Self {
        AnnotatedError::Query(e.into())
    }
}

/// A multiset of `(tuple, annotation)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedRelation {
    arity: usize,
    rows: BTreeMap<(Tuple, Element), u64>,
}

impl AnnotatedRelation {
    pub fn new(arity: usize) -> Self {
        AnnotatedRelation {
            arity,
            rows: BTreeMap::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn insert(&mut self, tuple: Tuple, e: Element, n: u64) -> Result<(), QueryError> {
        if tuple.arity() != self.arity {
            return Err(QueryError::ArityMismatch {
                left: self.arity,
                right: tuple.arity(),
            });
        }
        if n == 0 {
            return Ok(());
        }
        let slot = self.rows.entry((tuple, e)).or_insert(0);
        *slot = slot.checked_add(n).ok_or(QueryError::Overflow)?;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tuple, &Element, u64)> + '_ {
        self.rows.iter().map(|((t, e), n)| (t, e, *n))
    }

    pub fn count(&self, tuple: &Tuple, e: &Element) -> u64 {
        self.rows
            .get(&(tuple.clone(), e.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Annotations of every occurrence of `tuple`.
    pub fn annotations_of<'a>(
        &'a self,
        tuple: &'a Tuple,
    ) -> impl Iterator<Item = (&'a Element, u64)> + 'a {
        self.rows
            .iter()
            .filter(move |((t, _), _)| t == tuple)
            .map(|((_, e), n)| (e, *n))
    }

    /// The relation with the annotation appended as a last column.
    pub fn to_relation(&self) -> Relation {
        let mut out = Relation::new(self.arity + 1);
        for (t, e, n) in self.iter() {
            out.insert(t.extend_one(Value::Annot(e.clone())), n)
                .expect("arity and counts already checked");
        }
        out
    }

    /// Inverse of [`AnnotatedRelation::to_relation`].
    pub fn from_relation(rel: &Relation) -> Result<Self, QueryError> {
        if rel.arity() == 0 {
            return Err(QueryError::ArityMismatch { left: 1, right: 0 });
        }
        let mut out = AnnotatedRelation::new(rel.arity() - 1);
        for (t, n) in rel.iter() {
            let (data, last) = t.split_last().expect("arity checked");
            let e = last.as_element().ok_or(QueryError::TagMismatch {
                context: "annotation column",
                left: last.tag(),
                right: Tag::Annotation,
            })?;
            out.insert(data, e.clone(), n)?;
        }
        Ok(out)
    }

    /// Drops annotations, keeping multiplicities.
    pub fn erase(&self) -> Relation {
        let mut out = Relation::new(self.arity);
        for (t, _, n) in self.iter() {
            out.insert(t.clone(), n)
                .expect("arity and counts already checked");
        }
        out
    }
}

/// Attaches one token per tuple occurrence, in canonical tuple order.
pub fn annotate_relation(
    rel: &Relation,
    tokens: &[Element],
) -> Result<AnnotatedRelation, AnnotatedError> {
    if rel.total() != tokens.len() as u64 {
        return Err(AnnotatedError::TokenCountMismatch {
            expected: rel.total(),
            found: tokens.len(),
        });
    }
    let mut out = AnnotatedRelation::new(rel.arity());
    let mut next = tokens.iter();
    for (t, n) in rel.iter() {
        for _ in 0..n {
            out.insert(t.clone(), next.next().expect("counted").clone(), 1)?;
        }
    }
    Ok(out)
}

/// Annotated relations sharing one structure.
#[derive(Debug, Clone)]
pub struct AnnotatedInstance {
    pub relations: BTreeMap<String, AnnotatedRelation>,
    pub structure: Arc<dyn AnnotationStructure>,
}

impl AnnotatedInstance {
    pub fn new(structure: Arc<dyn AnnotationStructure>) -> Self {
        AnnotatedInstance {
            relations: BTreeMap::new(),
            structure,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, rel: AnnotatedRelation) {
        self.relations.insert(name.into(), rel);
    }

    /// Relations with their annotation column, for evaluating rewritten
    /// queries.
    pub fn to_instance(&self) -> Instance {
        self.relations
            .iter()
            .map(|(k, r)| (k.clone(), r.to_relation()))
            .collect()
    }

    /// The unannotated instance.
    pub fn erase(&self) -> Instance {
        self.relations
            .iter()
            .map(|(k, r)| (k.clone(), r.erase()))
            .collect()
    }
}

/// Whether `structure` supports every operator `ast` needs.
pub fn check_appropriate(
    structure: &dyn AnnotationStructure,
    ast: &QueryAst,
) -> Result<(), AnnotatedError> {
    if ast.root.contains_difference() && !structure.has_monus() {
        return Err(AnnotatedError::NeedsMonus(structure.name().to_string()));
    }
    if ast.root.contains_aggregate() && !structure.has_delta() {
        return Err(AnnotatedError::NeedsDelta(structure.name().to_string()));
    }
    Ok(())
}

/// Evaluates `ast` directly over annotated relations.
pub fn eval_annotated(
    ast: &QueryAst,
    inst: &AnnotatedInstance,
) -> Result<AnnotatedRelation, AnnotatedError> {
    check_appropriate(&*inst.structure, ast)?;
    eval(&ast.root, inst)
}

fn eval(q: &Query, inst: &AnnotatedInstance) -> Result<AnnotatedRelation, AnnotatedError> {
    let k = &*inst.structure;
    Ok(match q {
        Query::Relation(r) => inst
            .relations
            .get(r)
            .cloned()
            .ok_or_else(|| QueryError::UnknownRelation(r.clone()))?,
        Query::Project(terms, input) => {
            let input = eval(input, inst)?;
            let mut out = AnnotatedRelation::new(terms.len());
            for (t, e, n) in input.iter() {
                let row = terms
                    .iter()
                    .map(|x| eval_term(x, t))
                    .collect::<Result<Tuple, _>>()?;
                out.insert(row, e.clone(), n)?;
            }
            out
        }
        Query::Select(p, input) => {
            let input = eval(input, inst)?;
            let mut out = AnnotatedRelation::new(input.arity());
            for (t, e, n) in input.iter() {
                if eval_predicate(p, t)? {
                    out.insert(t.clone(), e.clone(), n)?;
                }
            }
            out
        }
        Query::Product(a, b) => {
            let (a, b) = (eval(a, inst)?, eval(b, inst)?);
            let mut out = AnnotatedRelation::new(a.arity() + b.arity());
            for (u, alpha, m) in a.iter() {
                for (v, beta, n) in b.iter() {
                    let e = k.times(alpha, beta)?;
                    out.insert(
                        u.concat(v),
                        e,
                        m.checked_mul(n).ok_or(QueryError::Overflow)?,
                    )?;
                }
            }
            out
        }
        Query::Sum(a, b) => {
            let (mut a, b) = (eval(a, inst)?, eval(b, inst)?);
            for (t, e, n) in b.iter() {
                a.insert(t.clone(), e.clone(), n)?;
            }
            a
        }
        Query::Dedup(input) => {
            let input = eval(input, inst)?;
            let mut out = AnnotatedRelation::new(input.arity());
            for (t, items) in grouped(&input) {
                out.insert(t.clone(), sum_with_multiplicity(k, items)?, 1)?;
            }
            out
        }
        Query::Diff(a, b) => {
            let (a, b) = (eval(a, inst)?, eval(b, inst)?);
            let sums = grouped(&b)
                .into_iter()
                .map(|(t, items)| Ok((t, sum_with_multiplicity(k, items)?)))
                .collect::<Result<BTreeMap<_, _>, AnnotatedError>>()?;
            let zero = k.zero();
            let mut out = AnnotatedRelation::new(a.arity());
            for (t, alpha, n) in a.iter() {
                let beta = sums.get(t).unwrap_or(&zero);
                out.insert(t.clone(), k.monus(alpha, beta)?, n)?;
            }
            out
        }
        Query::Aggregate {
            group,
            items,
            input,
        } => {
            let input = eval(input, inst)?;
            type Group<'a> = (Vec<Vec<(Value, Element, u64)>>, Vec<(&'a Element, u64)>);
            let mut groups: BTreeMap<Tuple, Group> = BTreeMap::new();
            for (t, e, n) in input.iter() {
                let key = group
                    .iter()
                    .map(|&i| eval_term(&crate::query::Term::Column(i), t))
                    .collect::<Result<Tuple, _>>()?;
                let slot = groups
                    .entry(key)
                    .or_insert_with(|| (vec![Vec::new(); items.len()], Vec::new()));
                for (item, col) in items.iter().zip(slot.0.iter_mut()) {
                    col.push((eval_term(&item.term, t)?, e.clone(), n));
                }
                slot.1.push((e, n));
            }
            let mut out = AnnotatedRelation::new(group.len() + items.len());
            for (key, (cols, annots)) in groups {
                let mut row = key.into_vec();
                for (item, col) in items.iter().zip(&cols) {
                    let AggFunc::Value(f) = item.func else {
                        return Err(QueryError::UnsupportedAggregate(item.func.name()).into());
                    };
                    let tag = col.first().map(|(v, _, _)| v.tag()).unwrap_or(Tag::Int);
                    row.push(Value::Module(Box::new(sm_aggregate(f, col, k, tag)?)));
                }
                let e = k.delta(&sum_with_multiplicity(k, annots)?)?;
                out.insert(Tuple::new(row), e, 1)?;
            }
            out
        }
    })
}

fn grouped(rel: &AnnotatedRelation) -> BTreeMap<&Tuple, Vec<(&Element, u64)>> {
    let mut out: BTreeMap<&Tuple, Vec<(&Element, u64)>> = BTreeMap::new();
    for (t, e, n) in rel.iter() {
        out.entry(t).or_default().push((e, n));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{CmpOp, Predicate, Term};
    use crate::semiring::{Counting, FormulaSemiring, WhyProvenance};
    use crate::tuple;

    fn personnel(
        structure: Arc<dyn AnnotationStructure>,
        token: impl Fn(usize) -> Element,
    ) -> AnnotatedInstance {
        let rows = [
            (1, "John", "Director", "New York"),
            (2, "Paul", "Janitor", "New York"),
            (3, "Dave", "Analyst", "Paris"),
            (4, "Ellen", "Field agent", "Berlin"),
            (5, "Magdalen", "Double agent", "Paris"),
            (6, "Nancy", "HR", "Paris"),
            (7, "Susan", "Analyst", "Berlin"),
        ];
        let mut r = Relation::new(4);
        for (id, name, pos, city) in rows {
            r.insert(tuple![id as i64, name, pos, city], 1).unwrap();
        }
        let tokens: Vec<Element> = (1..=7).map(token).collect();
        let mut inst = AnnotatedInstance::new(structure);
        inst.insert("Personnel", annotate_relation(&r, &tokens).unwrap());
        inst
    }

    fn q_city() -> QueryAst {
        Query::dedup(Query::project(
            vec![Term::col(4)],
            Query::join(
                Predicate::and(
                    Predicate::eq(Term::col(4), Term::col(8)),
                    Predicate::cmp(CmpOp::Lt, Term::col(1), Term::col(5)),
                ),
                Query::relation("Personnel"),
                Query::relation("Personnel"),
            ),
        ))
        .into()
    }

    #[test]
    fn q_city_formulas() {
        let inst = personnel(Arc::new(FormulaSemiring), |i| {
            Element::Formula(crate::semiring::Formula::token(format!("t{i}")))
        });
        let out = eval_annotated(&q_city(), &inst).unwrap();
        let text: BTreeMap<String, String> = out
            .iter()
            .map(|(t, e, _)| (t[0].to_string(), e.to_string()))
            .collect();
        assert_eq!(text["New York"], "(t1 ⊗ t2)");
        assert_eq!(text["Berlin"], "(t4 ⊗ t7)");
        assert_eq!(text["Paris"], "((t3 ⊗ t5) ⊕ (t3 ⊗ t6) ⊕ (t5 ⊗ t6))");
    }

    #[test]
    fn q_city_counting() {
        let inst = personnel(Arc::new(Counting), |_| Element::Count(1));
        let out = eval_annotated(&q_city(), &inst).unwrap();
        assert_eq!(out.count(&tuple!["Paris"], &Element::Count(3)), 1);
        assert_eq!(out.count(&tuple!["New York"], &Element::Count(1)), 1);
        assert_eq!(out.count(&tuple!["Berlin"], &Element::Count(1)), 1);
    }

    #[test]
    fn appropriateness() {
        #[derive(Debug)]
        struct Plain;
        impl AnnotationStructure for Plain {
            fn name(&self) -> &str {
                "plain"
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
            fn plus(
                &self,
                a: &Element,
                b: &Element,
            ) -> Result<Element, crate::semiring::SemiringError> {
                Counting.plus(a, b)
            }
            fn times(
                &self,
                a: &Element,
                b: &Element,
            ) -> Result<Element, crate::semiring::SemiringError> {
                Counting.times(a, b)
            }
        }
        assert_eq!(check_appropriate(&Plain, &q_city()), Ok(()));
        let diff: QueryAst = Query::diff(Query::relation("R"), Query::relation("R")).into();
        assert_eq!(
            check_appropriate(&Plain, &diff),
            Err(AnnotatedError::NeedsMonus("plain".into()))
        );
        let agg: QueryAst = Query::aggregate(
            vec![1],
            vec![crate::query::AggItem::new(
                AggFunc::Value(crate::semiring::MonoidAggregate::Count),
                Term::col(1),
            )],
            Query::relation("R"),
        )
        .into();
        assert_eq!(
            check_appropriate(&Plain, &agg),
            Err(AnnotatedError::NeedsDelta("plain".into()))
        );
        assert_eq!(check_appropriate(&WhyProvenance, &agg), Ok(()));
    }

    #[test]
    fn token_count_is_checked() {
        let mut r = Relation::new(1);
        r.insert(tuple![1i64], 2).unwrap();
        assert_eq!(
            annotate_relation(&r, &[Element::Count(1)]),
            Err(AnnotatedError::TokenCountMismatch {
                expected: 2,
                found: 1
            })
        );
        let a = annotate_relation(&r, &[Element::Count(1), Element::Count(2)]).unwrap();
        assert_eq!(a.len(), 2);
        assert!(annotate_relation(&Relation::new(3), &[])
            .unwrap()
            .is_empty());
    }
}
