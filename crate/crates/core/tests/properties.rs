mod common;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use common::*;
use provdb::annotated::{AnnotatedInstance, AnnotatedRelation};
use provdb::query::validate;
use provdb::semiring::{AnnotationStructure, BooleanFunctions, Counting, WhyProvenance};
use provdb::{
    eval_annotated, eval_query, rewrite, CircuitOps, CircuitStore, Element, GateId, GateKind,
    Instance, Query, QueryAst, Relation, Tuple, Value,
};
use rand::seq::SliceRandom;
use rand::Rng;

type Rng8 = rand_chacha::ChaCha8Rng;
type Case = (Arc<dyn AnnotationStructure>, fn(&mut Rng8) -> Element);

fn random_relation(rng: &mut Rng8, arity: usize, max: usize) -> Relation {
    let mut r = Relation::new(arity);
    for _ in 0..rng.gen_range(0..=max) {
        let t = Tuple::new(
            (0..arity)
                .map(|_| Value::Int(rng.gen_range(0..3)))
                .collect(),
        );
        r.insert(t, rng.gen_range(1..=3)).unwrap();
    }
    r
}

#[test]
fn multiset_operator_laws() {
    let mut rng = rng(31);
    for _ in 0..300 {
        let (a, b, c) = (
            random_relation(&mut rng, 2, 5),
            random_relation(&mut rng, 2, 5),
            random_relation(&mut rng, 2, 5),
        );
        let d = a.dedup();
        assert_eq!(d.dedup(), d);
        assert!(d.iter().all(|(_, n)| n == 1));
        assert_eq!(a.sum(&b).unwrap(), b.sum(&a).unwrap());
        assert_eq!(
            a.sum(&b).unwrap().sum(&c).unwrap(),
            a.sum(&b.sum(&c).unwrap()).unwrap()
        );
        let p = a.product(&b).unwrap();
        for (u, m) in a.iter() {
            for (v, n) in b.iter() {
                assert_eq!(p.count(&u.concat(v)), m * n);
            }
        }
        assert_eq!(p.total(), a.total() * b.total());
    }
}

#[test]
fn dedup_of_difference_is_set_except() {
    let mut rng = rng(32);
    let q = QueryAst::new(Query::dedup(Query::diff(
        Query::relation("R"),
        Query::relation("S"),
    )));
    for _ in 0..300 {
        let mut inst = Instance::new();
        inst.insert("R".into(), random_relation(&mut rng, 2, 5));
        inst.insert("S".into(), random_relation(&mut rng, 2, 5));
        let got: BTreeSet<Tuple> = eval_query(&q, &inst, None).unwrap().support();
        let r: BTreeSet<Tuple> = inst["R"].tuples().cloned().collect();
        let s: BTreeSet<Tuple> = inst["S"].tuples().cloned().collect();
        let want: BTreeSet<Tuple> = r.difference(&s).cloned().collect();
        assert_eq!(got, want);
    }
}

#[test]
fn results_have_validated_arity_and_empty_aggregates_are_empty() {
    let schema = schema();
    let mut rng = rng(33);
    for _ in 0..500 {
        let q = gen_case_query(&mut rng, true);
        let inst = gen_instance(&mut rng, Arc::new(Counting), random_count).erase();
        let arity = validate(&q, &schema).unwrap();
        if let Ok(r) = eval_query(&q, &inst, None) {
            assert_eq!(r.arity(), arity, "{}", show(&q));
            assert!(r.tuples().all(|t| t.arity() == arity));
        }
    }
    let empty: Instance = [("R".to_string(), Relation::new(2))].into_iter().collect();
    for group in [vec![], vec![1]] {
        let q = QueryAst::new(Query::aggregate(
            group,
            vec![provdb::AggItem::new(
                provdb::AggFunc::Value(provdb::semiring::MonoidAggregate::Count),
                provdb::Term::col(2),
            )],
            Query::relation("R"),
        ));
        assert!(eval_query(&q, &empty, None).unwrap().is_empty());
    }
}

fn positive_count(rng: &mut Rng8) -> Element {
    Element::Count(rng.gen_range(1..4))
}

fn nonempty_why(rng: &mut Rng8) -> Element {
    let tokens = ["a", "b", "c", "d"];
    let n = rng.gen_range(1..3);
    Element::why_from((0..n).map(|_| {
        let k = rng.gen_range(1..3);
        (0..k)
            .map(|_| *tokens.choose(rng).unwrap())
            .collect::<Vec<_>>()
    }))
}

#[test]
fn erasing_annotations_keeps_the_support() {
    let cases: [Case; 2] = [
        (Arc::new(Counting), positive_count),
        (Arc::new(WhyProvenance), nonempty_why),
    ];
    for (k, draw) in cases {
        let mut rng = rng(34);
        let mut checked = 0;
        while checked < 300 {
            let arity = rng.gen_range(1..=3);
            let depth = rng.gen_range(1..=4);
            let q = QueryAst::new(gen_query(&mut rng, depth, arity, false));
            let mut inst = AnnotatedInstance::new(k.clone());
            let mut budget = 8;
            for (name, a) in [("R", 2), ("S", 2), ("T", 1)] {
                let mut rel = AnnotatedRelation::new(a);
                let n = rng.gen_range(0..=budget.min(4));
                budget -= n;
                for _ in 0..n {
                    let t = Tuple::new((0..a).map(|_| Value::Int(rng.gen_range(0..3))).collect());
                    rel.insert(t, draw(&mut rng), 1).unwrap();
                }
                inst.insert(name, rel);
            }
            let annotated = eval_annotated(&q, &inst).unwrap();
            let plain = eval_query(&q, &inst.erase(), None).unwrap();
            assert_eq!(
                annotated.erase().support(),
                plain.support(),
                "{} on {}",
                k.name(),
                show(&q)
            );
            checked += 1;
        }
    }
}

/// Gate definition kept outside the store, for the recursive oracle.
enum Def {
    Leaf(Element),
    Plus(Vec<GateId>),
    Times(Vec<GateId>),
    Monus(GateId, GateId),
    Delta(GateId),
}

fn recursive(defs: &HashMap<GateId, Def>, k: &dyn AnnotationStructure, g: GateId) -> Element {
    match &defs[&g] {
        Def::Leaf(e) => e.clone(),
        Def::Plus(c) => c.iter().fold(k.zero(), |acc, x| {
            k.plus(&acc, &recursive(defs, k, *x)).unwrap()
        }),
        Def::Times(c) => c.iter().fold(k.one(), |acc, x| {
            k.times(&acc, &recursive(defs, k, *x)).unwrap()
        }),
        Def::Monus(a, b) => k
            .monus(&recursive(defs, k, *a), &recursive(defs, k, *b))
            .unwrap(),
        Def::Delta(a) => k.delta(&recursive(defs, k, *a)).unwrap(),
    }
}

fn same(a: &Element, b: &Element) -> bool {
    match (a, b) {
        (Element::Bool(x), Element::Bool(y)) => x.equivalent(y),
        _ => a == b,
    }
}

#[test]
fn specialization_is_a_homomorphism() {
    let cases: [Case; 3] = [
        (Arc::new(Counting), random_count),
        (Arc::new(WhyProvenance), random_why),
        (Arc::new(BooleanFunctions), random_bool),
    ];
    let mut rng = rng(35);
    for (k, draw) in cases {
        for _ in 0..40 {
            let mut store = CircuitStore::in_memory_seeded(rng.gen());
            let mut defs = HashMap::new();
            let mut gates = Vec::new();
            for _ in 0..rng.gen_range(1..=5) {
                let g = store.create_input().unwrap();
                defs.insert(g, Def::Leaf(draw(&mut rng)));
                gates.push(g);
            }
            for _ in 0..15 {
                let pick = |rng: &mut Rng8| *gates.choose(rng).unwrap();
                let (g, def) = match rng.gen_range(0..4) {
                    0 => {
                        let c: Vec<GateId> =
                            (0..rng.gen_range(1..=3)).map(|_| pick(&mut rng)).collect();
                        (store.plus(c.clone()).unwrap(), Def::Plus(c))
                    }
                    1 => {
                        let c: Vec<GateId> =
                            (0..rng.gen_range(1..=3)).map(|_| pick(&mut rng)).collect();
                        (store.times(c.clone()).unwrap(), Def::Times(c))
                    }
                    2 => {
                        let (a, b) = (pick(&mut rng), pick(&mut rng));
                        (store.monus(a, b).unwrap(), Def::Monus(a, b))
                    }
                    _ => {
                        let a = pick(&mut rng);
                        (store.delta(a).unwrap(), Def::Delta(a))
                    }
                };
                defs.entry(g).or_insert(def);
                gates.push(g);
            }
            let leaf = |g: GateId| match defs.get(&g) {
                Some(Def::Leaf(e)) => Some(e.clone()),
                _ => None,
            };
            for &g in &gates {
                let got = store.specialize(g, &*k, &leaf).unwrap();
                let want = recursive(&defs, &*k, g);
                assert!(same(&got, &want), "{}: {got} vs {want}", k.name());
            }
        }
    }
}

#[test]
fn circuits_specialize_to_annotated_results() {
    let schema = schema();
    let cases: [Case; 2] = [
        (Arc::new(Counting), random_count),
        (Arc::new(WhyProvenance), random_why),
    ];
    for (k, draw) in cases {
        let mut rng = rng(36);
        for _ in 0..300 {
            let q = gen_case_query(&mut rng, false);
            let inst = gen_instance(&mut rng, k.clone(), draw);
            let Ok(want) = eval_annotated(&q, &inst) else {
                continue;
            };

            let mut store = CircuitStore::in_memory_seeded(rng.gen());
            let mut leaves = HashMap::new();
            let mut gated = Instance::new();
            for (name, rel) in &inst.relations {
                let mut out = Relation::new(rel.arity() + 1);
                for (t, e, n) in rel.iter() {
                    for _ in 0..n {
                        let g = store.create_input().unwrap();
                        leaves.insert(g, e.clone());
                        out.insert(t.extend_one(Value::Annot(Element::Gate(g))), 1)
                            .unwrap();
                    }
                }
                gated.insert(name.clone(), out);
            }
            let via = rewrite(&q, &schema).unwrap();
            let rel = eval_query(&via, &gated, Some(&mut CircuitOps::new(&mut store))).unwrap();
            let mut got = AnnotatedRelation::new(want.arity());
            for (t, n) in rel.iter() {
                let (data, annot) = t.split_last().unwrap();
                let g = annot.as_element().and_then(Element::as_gate).unwrap();
                assert_ne!(store.get(g).unwrap().kind, GateKind::Value);
                let e = store
                    .specialize(g, &*k, &|x| leaves.get(&x).cloned())
                    .unwrap();
                got.insert(data, e, n).unwrap();
            }
            assert_eq!(got, want, "{} on {}", k.name(), show(&q));
        }
    }
}

fn strip_dedup(q: &Query) -> Query {
    match q {
        Query::Relation(_) => q.clone(),
        Query::Project(t, c) => Query::project(t.clone(), strip_dedup(c)),
        Query::Select(p, c) => Query::select(p.clone(), strip_dedup(c)),
        Query::Product(a, b) => Query::product(strip_dedup(a), strip_dedup(b)),
        Query::Sum(a, b) => Query::sum(strip_dedup(a), strip_dedup(b)),
        Query::Dedup(c) => strip_dedup(c),
        Query::Diff(..) | Query::Aggregate { .. } => unreachable!("generated without"),
    }
}

#[test]
fn unit_counting_annotations_count_derivations() {
    let mut rng = rng(37);
    let k: Arc<dyn AnnotationStructure> = Arc::new(Counting);
    for _ in 0..300 {
        let (depth, arity) = (rng.gen_range(1..=4), rng.gen_range(1..=3));
        let q = QueryAst::new(gen_query(&mut rng, depth, arity, false));
        let mut inst = AnnotatedInstance::new(k.clone());
        let mut budget = 8;
        for (name, a) in [("R", 2), ("S", 2), ("T", 1)] {
            let mut rel = AnnotatedRelation::new(a);
            let n = rng.gen_range(0..=budget.min(4));
            budget -= n;
            for _ in 0..n {
                let t = Tuple::new((0..a).map(|_| Value::Int(rng.gen_range(0..3))).collect());
                rel.insert(t, Element::Count(1), 1).unwrap();
            }
            inst.insert(name, rel);
        }
        let annotated = eval_annotated(&q, &inst).unwrap();
        let ungrouped =
            eval_query(&QueryAst::new(strip_dedup(&q.root)), &inst.erase(), None).unwrap();
        for t in ungrouped.tuples() {
            let total: u64 = annotated
                .annotations_of(t)
                .map(|(e, n)| e.as_count().unwrap() * n)
                .sum();
            assert_eq!(total, ungrouped.count(t), "{} at {t:?}", show(&q));
        }
        assert_eq!(annotated.erase().support(), ungrouped.support());
    }
}
