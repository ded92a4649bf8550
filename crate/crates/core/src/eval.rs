//! Standard multiset semantics of the algebra.
//!
//! Annotation-valued terms (`⊗`, `⊖`, `∗`) and annotation aggregates only
//! occur in rewritten queries; they are interpreted through an
//! [`AnnotationOps`] supplied by the caller.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::error::QueryError;
use crate::query::{AggFunc, AggItem, ArithOp, CmpOp, Predicate, Query, QueryAst, Term};
use crate::relation::Relation;
use crate::semiring::{
    sm_aggregate, sum_with_multiplicity, AnnotationStructure, Element, MonoidAggregate,
    SemimoduleElement,
};
use crate::value::{Tag, Tuple, Value};

/// A database instance: relation label to relation.
pub type Instance = BTreeMap<String, Relation>;

/// Interpretation of the annotation operators appearing in rewritten queries.
pub trait AnnotationOps {
    fn times(&mut self, a: &Element, b: &Element) -> Result<Element, QueryError>;
    fn monus(&mut self, a: &Element, b: &Element) -> Result<Element, QueryError>;
    /// ⊕ over a multiset of `(element, multiplicity)`; the empty fold is 0.
    fn plus_fold(&mut self, items: &[(&Element, u64)]) -> Result<Element, QueryError>;
    fn delta(&mut self, a: &Element) -> Result<Element, QueryError>;
    fn tensor(&mut self, v: &Value, a: &Element) -> Result<SemimoduleElement, QueryError>;
    fn lifted(
        &mut self,
        func: MonoidAggregate,
        items: &[(&SemimoduleElement, u64)],
        input: Tag,
    ) -> Result<SemimoduleElement, QueryError>;
}

/// Annotation operators computed directly in one structure.
#[derive(Debug, Clone)]
pub struct StructureOps {
    structure: Arc<dyn AnnotationStructure>,
}

impl StructureOps {
    pub fn new(structure: Arc<dyn AnnotationStructure>) -> Self {
        StructureOps { structure }
    }
}

impl AnnotationOps for StructureOps {
    fn times(&mut self, a: &Element, b: &Element) -> Result<Element, QueryError> {
        Ok(crate::semiring::apply(
            &*self.structure,
            crate::semiring::SemiringOp::Times,
            a,
            b,
        )?)
    }

    fn monus(&mut self, a: &Element, b: &Element) -> Result<Element, QueryError> {
        Ok(crate::semiring::apply(
            &*self.structure,
            crate::semiring::SemiringOp::Monus,
            a,
            b,
        )?)
    }

    fn plus_fold(&mut self, items: &[(&Element, u64)]) -> Result<Element, QueryError> {
        Ok(sum_with_multiplicity(
            &*self.structure,
            items.iter().copied(),
        )?)
    }

    fn delta(&mut self, a: &Element) -> Result<Element, QueryError> {
        Ok(crate::semiring::delta(&*self.structure, a)?)
    }

    fn tensor(&mut self, v: &Value, a: &Element) -> Result<SemimoduleElement, QueryError> {
        Ok(SemimoduleElement::Tensor(v.clone(), a.clone()))
    }

    fn lifted(
        &mut self,
        func: MonoidAggregate,
        items: &[(&SemimoduleElement, u64)],
        input: Tag,
    ) -> Result<SemimoduleElement, QueryError> {
        let mut flat = Vec::with_capacity(items.len());
        for (m, n) in items {
            match m {
                SemimoduleElement::Tensor(v, e) => flat.push((v.clone(), e.clone(), *n)),
                other => {
                    return Err(QueryError::UnsupportedAggregate(format!(
                        "hat_{func} over non-tensor {other}"
                    )))
                }
            }
        }
        Ok(sm_aggregate(func, &flat, &*self.structure, input)?)
    }
}

/// Evaluates a term on a tuple. Annotation operators are rejected.
pub fn eval_term(term: &Term, tuple: &Tuple) -> Result<Value, QueryError> {
    term_value(term, tuple, &mut None)
}

/// Evaluates a predicate on a tuple.
pub fn eval_predicate(p: &Predicate, tuple: &Tuple) -> Result<bool, QueryError> {
    predicate_value(p, tuple, &mut None)
}

/// Evaluates `ast` over `instance`. Rewritten queries need `ops`.
pub fn eval_query(
    ast: &QueryAst,
    instance: &Instance,
    ops: Option<&mut dyn AnnotationOps>,
) -> Result<Relation, QueryError> {
    let mut ev = Evaluator { instance, ops };
    Ok(ev.eval(&ast.root)?.into_owned())
}

type Ops<'o> = Option<&'o mut dyn AnnotationOps>;

fn ops_of<'a, 'o>(ops: &'a mut Ops<'o>) -> Result<&'a mut (dyn AnnotationOps + 'o), QueryError> {
    ops.as_deref_mut().ok_or(QueryError::NoAnnotationStructure)
}

fn annotation(v: &Value) -> Result<&Element, QueryError> {
    v.as_element().ok_or(QueryError::TagMismatch {
        context: "annotation operand",
        left: v.tag(),
        right: Tag::Annotation,
    })
}

fn term_value(term: &Term, tuple: &Tuple, ops: &mut Ops<'_>) -> Result<Value, QueryError> {
    match term {
        Term::Const(v) => Ok(v.clone()),
        Term::Column(i) => tuple.at(*i).cloned().ok_or(QueryError::IndexOutOfRange {
            index: *i,
            arity: tuple.arity(),
        }),
        Term::Named(n) => Err(QueryError::UnknownColumn(n.clone())),
        Term::Arith(op, a, b) => {
            let a = term_value(a, tuple, ops)?;
            let b = term_value(b, tuple, ops)?;
            arith(*op, &a, &b)
        }
        Term::Times(a, b) => {
            let (a, b) = (term_value(a, tuple, ops)?, term_value(b, tuple, ops)?);
            let e = ops_of(ops)?.times(annotation(&a)?, annotation(&b)?)?;
            Ok(Value::Annot(e))
        }
        Term::Monus(a, b) => {
            let (a, b) = (term_value(a, tuple, ops)?, term_value(b, tuple, ops)?);
            let e = ops_of(ops)?.monus(annotation(&a)?, annotation(&b)?)?;
            Ok(Value::Annot(e))
        }
        Term::Tensor(v, a) => {
            let (v, a) = (term_value(v, tuple, ops)?, term_value(a, tuple, ops)?);
            let m = ops_of(ops)?.tensor(&v, annotation(&a)?)?;
            Ok(Value::Module(Box::new(m)))
        }
    }
}

fn arith(op: ArithOp, a: &Value, b: &Value) -> Result<Value, QueryError> {
    let mismatch = || QueryError::TagMismatch {
        context: "arithmetic operands",
        left: a.tag(),
        right: b.tag(),
    };
    match (op, a, b) {
        (ArithOp::Concat, Value::Text(x), Value::Text(y)) => Ok(Value::text(format!("{x}{y}"))),
        (ArithOp::Concat, ..) => Err(mismatch()),
        (_, Value::Int(x), Value::Int(y)) => {
            let r = match op {
                ArithOp::Add => x.checked_add(*y),
                ArithOp::Sub => x.checked_sub(*y),
                ArithOp::Mul => x.checked_mul(*y),
                ArithOp::Div if *y == 0 => return Err(QueryError::DivideByZero),
                ArithOp::Div => x.checked_div(*y),
                ArithOp::Concat => unreachable!(),
            };
            r.map(Value::Int).ok_or(QueryError::Overflow)
        }
        (_, Value::Real(x), Value::Real(y)) => {
            let (x, y) = (x.0, y.0);
            let r = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div if y == 0.0 => return Err(QueryError::DivideByZero),
                ArithOp::Div => x / y,
                ArithOp::Concat => unreachable!(),
            };
            if r.is_finite() {
                Ok(Value::real(r))
            } else {
                Err(QueryError::Overflow)
            }
        }
        _ => Err(mismatch()),
    }
}

fn predicate_value(p: &Predicate, tuple: &Tuple, ops: &mut Ops<'_>) -> Result<bool, QueryError> {
    match p {
        Predicate::True => Ok(true),
        Predicate::False => Ok(false),
        Predicate::Cmp(op, a, b) => {
            let a = term_value(a, tuple, ops)?;
            let b = term_value(b, tuple, ops)?;
            if a.tag() != b.tag() || !a.tag().is_data() {
                return Err(QueryError::TagMismatch {
                    context: "comparison",
                    left: a.tag(),
                    right: b.tag(),
                });
            }
            let ord = a.cmp(&b);
            Ok(match op {
                CmpOp::Eq => ord.is_eq(),
                CmpOp::Ne => ord.is_ne(),
                CmpOp::Lt => ord.is_lt(),
                CmpOp::Le => ord.is_le(),
                CmpOp::Gt => ord.is_gt(),
                CmpOp::Ge => ord.is_ge(),
            })
        }
        Predicate::And(a, b) => {
            Ok(predicate_value(a, tuple, ops)? && predicate_value(b, tuple, ops)?)
        }
        Predicate::Or(a, b) => {
            Ok(predicate_value(a, tuple, ops)? || predicate_value(b, tuple, ops)?)
        }
        Predicate::Not(a) => Ok(!predicate_value(a, tuple, ops)?),
    }
}

struct Evaluator<'i, 'o> {
    instance: &'i Instance,
    ops: Ops<'o>,
}

impl<'i> Evaluator<'i, '_> {
    fn eval(&mut self, q: &Query) -> Result<Cow<'i, Relation>, QueryError> {
        Ok(match q {
            Query::Relation(r) => Cow::Borrowed(
                self.instance
                    .get(r)
                    .ok_or_else(|| QueryError::UnknownRelation(r.clone()))?,
            ),
            Query::Project(terms, input) => {
                let input = self.eval(input)?;
                let mut out = Relation::new(terms.len());
                for (t, n) in input.iter() {
                    let row = terms
                        .iter()
                        .map(|term| term_value(term, t, &mut self.ops))
                        .collect::<Result<Tuple, _>>()?;
                    out.insert(row, n)?;
                }
                Cow::Owned(out)
            }
            Query::Select(p, input) => Cow::Owned(self.select(p, input)?),
            Query::Product(a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                Cow::Owned(a.product(&b)?)
            }
            Query::Sum(a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                Cow::Owned(a.sum(&b)?)
            }
            Query::Dedup(input) => Cow::Owned(self.eval(input)?.dedup()),
            Query::Diff(a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                Cow::Owned(a.difference(&b)?)
            }
            Query::Aggregate {
                group,
                items,
                input,
            } => {
                let input = self.eval(input)?;
                Cow::Owned(self.aggregate(group, items, &input)?)
            }
        })
    }

    /// Selection, pushed through projections and turned into a hash join
    /// over products when equality conjuncts split across both sides.
    fn select(&mut self, p: &Predicate, input: &Query) -> Result<Relation, QueryError> {
        match input {
            Query::Select(inner, q) => self.select(&Predicate::and(inner.clone(), p.clone()), q),
            Query::Project(terms, q) => {
                // Only data columns can be compared, so the predicate reads
                // pure terms; substitute those and keep annotation terms lazy.
                let pushed = p.map_terms(&mut |t| Ok(t.substitute(terms)))?;
                let filtered = self.select(&pushed, q)?;
                let mut out = Relation::new(terms.len());
                for (t, n) in filtered.iter() {
                    let row = terms
                        .iter()
                        .map(|term| term_value(term, t, &mut self.ops))
                        .collect::<Result<Tuple, _>>()?;
                    out.insert(row, n)?;
                }
                Ok(out)
            }
            Query::Product(a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                self.join(p, &a, &b)
            }
            _ => {
                let rel = self.eval(input)?;
                let mut out = Relation::new(rel.arity());
                for (t, n) in rel.iter() {
                    if predicate_value(p, t, &mut self.ops)? {
                        out.insert(t.clone(), n)?;
                    }
                }
                Ok(out)
            }
        }
    }

    fn join(
        &mut self,
        p: &Predicate,
        left: &Relation,
        right: &Relation,
    ) -> Result<Relation, QueryError> {
        let kl = left.arity();
        let kr = right.arity();
        let mut left_keys = Vec::new();
        let mut right_keys = Vec::new();
        let mut residual = Vec::new();
        for c in p.conjuncts() {
            if let Predicate::Cmp(CmpOp::Eq, a, b) = c {
                let (sa, sb) = (side(a, kl), side(b, kl));
                match (sa, sb) {
                    (Side::Left, Side::Right) => {
                        left_keys.push(a.clone());
                        right_keys.push(shift(b, kl, kr));
                        continue;
                    }
                    (Side::Right, Side::Left) => {
                        left_keys.push(b.clone());
                        right_keys.push(shift(a, kl, kr));
                        continue;
                    }
                    _ => {}
                }
            }
            residual.push(c.clone());
        }
        let residual = Predicate::conjunction(residual);
        let mut out = Relation::new(kl + kr);
        if left_keys.is_empty() {
            for (l, m) in left.iter() {
                for (r, n) in right.iter() {
                    let t = l.concat(r);
                    if predicate_value(&residual, &t, &mut self.ops)? {
                        out.insert(t, m.checked_mul(n).ok_or(QueryError::Overflow)?)?;
                    }
                }
            }
            return Ok(out);
        }
        let mut index: HashMap<Vec<Value>, Vec<(&Tuple, u64)>> = HashMap::new();
        for (r, n) in right.iter() {
            let key = right_keys
                .iter()
                .map(|k| term_value(k, r, &mut self.ops))
                .collect::<Result<Vec<_>, _>>()?;
            index.entry(key).or_default().push((r, n));
        }
        for (l, m) in left.iter() {
            let key = left_keys
                .iter()
                .map(|k| term_value(k, l, &mut self.ops))
                .collect::<Result<Vec<_>, _>>()?;
            let Some(matches) = index.get(&key) else {
                continue;
            };
            for (r, n) in matches {
                let t = l.concat(r);
                if predicate_value(&residual, &t, &mut self.ops)? {
                    out.insert(t, m.checked_mul(*n).ok_or(QueryError::Overflow)?)?;
                }
            }
        }
        Ok(out)
    }

    fn aggregate(
        &mut self,
        group: &[usize],
        items: &[AggItem],
        input: &Relation,
    ) -> Result<Relation, QueryError> {
        let mut groups: BTreeMap<Tuple, Vec<Vec<(Value, u64)>>> = BTreeMap::new();
        for (t, n) in input.iter() {
            let key = group
                .iter()
                .map(|&i| {
                    t.at(i).cloned().ok_or(QueryError::IndexOutOfRange {
                        index: i,
                        arity: t.arity(),
                    })
                })
                .collect::<Result<Tuple, _>>()?;
            let cols = groups
                .entry(key)
                .or_insert_with(|| vec![Vec::new(); items.len()]);
            for (item, col) in items.iter().zip(cols.iter_mut()) {
                col.push((term_value(&item.term, t, &mut self.ops)?, n));
            }
        }
        let mut out = Relation::new(group.len() + items.len());
        for (key, cols) in groups {
            let mut row = key.into_vec();
            for (item, col) in items.iter().zip(&cols) {
                row.push(self.aggregate_column(item.func, col)?);
            }
            out.insert(Tuple::new(row), 1)?;
        }
        Ok(out)
    }

    fn aggregate_column(
        &mut self,
        func: AggFunc,
        col: &[(Value, u64)],
    ) -> Result<Value, QueryError> {
        let tag = col.first().map(|(v, _)| v.tag()).unwrap_or(Tag::Int);
        match func {
            AggFunc::Value(f) => {
                let r = f.apply(col.iter().map(|(v, n)| (v, *n)), tag)?;
                Ok(r.expect("groups are never empty"))
            }
            AggFunc::Lifted(f) => {
                let mods = col
                    .iter()
                    .map(|(v, n)| match v {
                        Value::Module(m) => Ok((&**m, *n)),
                        other => Err(QueryError::TagMismatch {
                            context: "lifted aggregate argument",
                            left: other.tag(),
                            right: Tag::Semimodule,
                        }),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let input = match mods.first() {
                    Some((SemimoduleElement::Tensor(v, _), _)) => v.tag(),
                    _ => Tag::Int,
                };
                let m = ops_of(&mut self.ops)?.lifted(f, &mods, input)?;
                Ok(Value::Module(Box::new(m)))
            }
            AggFunc::Oplus | AggFunc::DeltaOplus => {
                let elems = col
                    .iter()
                    .map(|(v, n)| Ok((annotation(v)?, *n)))
                    .collect::<Result<Vec<_>, QueryError>>()?;
                let ops = ops_of(&mut self.ops)?;
                let mut e = ops.plus_fold(&elems)?;
                if func == AggFunc::DeltaOplus {
                    e = ops.delta(&e)?;
                }
                Ok(Value::Annot(e))
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
    Both,
}

fn side(t: &Term, kl: usize) -> Side {
    fn walk(t: &Term, kl: usize, left: &mut bool, right: &mut bool) {
        match t {
            Term::Column(i) if *i <= kl => *left = true,
            Term::Column(_) => *right = true,
            Term::Const(_) | Term::Named(_) => {}
            Term::Arith(_, a, b) | Term::Times(a, b) | Term::Monus(a, b) | Term::Tensor(a, b) => {
                walk(a, kl, left, right);
                walk(b, kl, left, right);
            }
        }
    }
    let (mut l, mut r) = (false, false);
    walk(t, kl, &mut l, &mut r);
    match (l, r) {
        (true, false) => Side::Left,
        (false, true) => Side::Right,
        _ => Side::Both,
    }
}

/// Rewrites a term over the right operand's columns `#(kl+1)…` to `#1…`.
fn shift(t: &Term, kl: usize, kr: usize) -> Term {
    let cols: Vec<Term> = (1..=kl + kr)
        .map(|i| Term::Column(i.saturating_sub(kl).max(1)))
        .collect();
    t.substitute(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple;

    fn personnel() -> Instance {
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
        Instance::from([("Personnel".to_string(), r)])
    }

    fn city_join() -> Query {
        Query::project(
            vec![Term::col(4)],
            Query::join(
                Predicate::and(
                    Predicate::eq(Term::col(4), Term::col(8)),
                    Predicate::cmp(CmpOp::Lt, Term::col(1), Term::col(5)),
                ),
                Query::relation("Personnel"),
                Query::relation("Personnel"),
            ),
        )
    }

    #[test]
    fn term_examples() {
        let t = tuple![1i64, "John", "Director", "New York"];
        assert_eq!(eval_term(&Term::col(2), &t), Ok(Value::text("John")));
        assert_eq!(eval_term(&Term::lit(7i64), &t), Ok(Value::Int(7)));
        let double = Term::arith(ArithOp::Add, Term::col(1), Term::col(1));
        assert_eq!(eval_term(&double, &tuple![3i64]), Ok(Value::Int(6)));
        let div = Term::arith(ArithOp::Div, Term::col(1), Term::lit(0i64));
        assert_eq!(
            eval_term(&div, &tuple![3i64]),
            Err(QueryError::DivideByZero)
        );
    }

    #[test]
    fn q_city_standard() {
        let inst = personnel();
        let before = eval_query(&city_join().into(), &inst, None).unwrap();
        assert_eq!(before.count(&tuple!["New York"]), 1);
        assert_eq!(before.count(&tuple!["Paris"]), 3);
        assert_eq!(before.count(&tuple!["Berlin"]), 1);
        let after = eval_query(&Query::dedup(city_join()).into(), &inst, None).unwrap();
        assert_eq!(after.total(), 3);
        assert!(after.iter().all(|(_, n)| n == 1));
    }

    #[test]
    fn hash_join_matches_nested_loop() {
        let inst = personnel();
        let p = Predicate::and(
            Predicate::eq(Term::col(4), Term::col(8)),
            Predicate::cmp(CmpOp::Lt, Term::col(1), Term::col(5)),
        );
        let joined = eval_query(
            &Query::join(
                p.clone(),
                Query::relation("Personnel"),
                Query::relation("Personnel"),
            )
            .into(),
            &inst,
            None,
        )
        .unwrap();
        let product = eval_query(
            &Query::product(Query::relation("Personnel"), Query::relation("Personnel")).into(),
            &inst,
            None,
        )
        .unwrap();
        let mut expected = Relation::new(8);
        for (t, n) in product.iter() {
            if eval_predicate(&p, t).unwrap() {
                expected.insert(t.clone(), n).unwrap();
            }
        }
        assert_eq!(joined, expected);
    }

    #[test]
    fn aggregation_groups_once() {
        let inst = personnel();
        let q = Query::aggregate(
            vec![4],
            vec![
                AggItem::new(AggFunc::Value(MonoidAggregate::Count), Term::col(1)),
                AggItem::new(AggFunc::Value(MonoidAggregate::Max), Term::col(2)),
            ],
            Query::relation("Personnel"),
        );
        let r = eval_query(&q.into(), &inst, None).unwrap();
        assert_eq!(r.count(&tuple!["Paris", 3i64, "Nancy"]), 1);
        assert_eq!(r.total(), 3);
        let empty = Query::aggregate(
            vec![],
            vec![AggItem::new(
                AggFunc::Value(MonoidAggregate::Count),
                Term::col(1),
            )],
            Query::select(Predicate::False, Query::relation("Personnel")),
        );
        assert!(eval_query(&empty.into(), &inst, None).unwrap().is_empty());
    }

    #[test]
    fn annotation_terms_need_ops() {
        let q = Query::project(
            vec![Term::times(Term::col(1), Term::col(1))],
            Query::relation("R"),
        );
        let mut r = Relation::new(1);
        r.insert(Tuple::new(vec![Value::Annot(Element::Count(3))]), 1)
            .unwrap();
        let inst = Instance::from([("R".to_string(), r)]);
        assert_eq!(
            eval_query(&q.clone().into(), &inst, None),
            Err(QueryError::NoAnnotationStructure)
        );
        let mut ops = StructureOps::new(Arc::new(crate::semiring::Counting));
        let out = eval_query(&q.into(), &inst, Some(&mut ops)).unwrap();
        assert_eq!(
            out.count(&Tuple::new(vec![Value::Annot(Element::Count(9))])),
            1
        );
    }
}
