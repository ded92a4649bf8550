//! Random queries, instances and circuits for the property suites.
#![allow(dead_code)]

use std::sync::Arc;

use provdb::annotated::{AnnotatedInstance, AnnotatedRelation};
use provdb::probability::{BoolCircuit, NodeId, ProbMap};
use provdb::query::{ArithOp, ColumnDecl};
use provdb::semiring::{AnnotationStructure, BoolFn, MonoidAggregate};
use provdb::{
    AggFunc, AggItem, CmpOp, Element, Predicate, Query, QueryAst, RelationSchema, Schema, Tag,
    Term, Tuple, Value,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// R(a, b), S(a, b), T(a), all integer columns.
pub fn schema() -> Schema {
    let col = |n: &str| ColumnDecl::new(n, Tag::Int);
    Schema::new()
        .with("R", RelationSchema::new(vec![col("a"), col("b")]))
        .with("S", RelationSchema::new(vec![col("a"), col("b")]))
        .with("T", RelationSchema::new(vec![col("a")]))
}

const BINARY: [&str; 2] = ["R", "S"];

/// A query of the given output arity using at most `depth` levels.
pub fn gen_query(rng: &mut ChaCha8Rng, depth: usize, arity: usize, allow_diff: bool) -> Query {
    if depth <= 1 {
        return leaf(rng, arity);
    }
    let d = depth - 1;
    match rng.gen_range(0..8) {
        0 => leaf(rng, arity),
        1 => {
            let inner_arity = rng.gen_range(1..=3);
            let input = gen_query(rng, d, inner_arity, allow_diff);
            let terms = (0..arity).map(|_| gen_term(rng, inner_arity)).collect();
            Query::project(terms, input)
        }
        2 => {
            let input = gen_query(rng, d, arity, allow_diff);
            Query::select(gen_pred(rng, arity), input)
        }
        3 if arity >= 2 => {
            let k1 = rng.gen_range(1..arity);
            Query::product(
                gen_query(rng, d, k1, allow_diff),
                gen_query(rng, d, arity - k1, allow_diff),
            )
        }
        4 => Query::sum(
            gen_query(rng, d, arity, allow_diff),
            gen_query(rng, d, arity, allow_diff),
        ),
        5 => Query::dedup(gen_query(rng, d, arity, allow_diff)),
        6 if allow_diff => Query::diff(
            gen_query(rng, d, arity, allow_diff),
            gen_query(rng, d, arity, allow_diff),
        ),
        _ => {
            // A join keeps product sizes small.
            if arity >= 2 {
                let k1 = rng.gen_range(1..arity);
                let p = Predicate::eq(
                    Term::col(rng.gen_range(1..=k1)),
                    Term::col(k1 + rng.gen_range(1..=arity - k1)),
                );
                Query::join(
                    p,
                    gen_query(rng, d, k1, allow_diff),
                    gen_query(rng, d, arity - k1, allow_diff),
                )
            } else {
                Query::dedup(gen_query(rng, d, arity, allow_diff))
            }
        }
    }
}

fn leaf(rng: &mut ChaCha8Rng, arity: usize) -> Query {
    match arity {
        1 if rng.gen_bool(0.5) => Query::relation("T"),
        2 => Query::relation(*BINARY.choose(rng).unwrap()),
        _ => {
            let r = *BINARY.choose(rng).unwrap();
            let terms = (0..arity)
                .map(|_| Term::col(rng.gen_range(1..=2)))
                .collect();
            Query::project(terms, Query::relation(r))
        }
    }
}

fn gen_term(rng: &mut ChaCha8Rng, arity: usize) -> Term {
    match rng.gen_range(0..6) {
        0 => Term::arith(
            ArithOp::Add,
            Term::col(rng.gen_range(1..=arity)),
            Term::lit(Value::Int(1)),
        ),
        1 => Term::lit(Value::Int(rng.gen_range(0..3))),
        _ => Term::col(rng.gen_range(1..=arity)),
    }
}

fn gen_pred(rng: &mut ChaCha8Rng, arity: usize) -> Predicate {
    let atom = |rng: &mut ChaCha8Rng| {
        let op = *[
            CmpOp::Eq,
            CmpOp::Ne,
            CmpOp::Lt,
            CmpOp::Le,
            CmpOp::Gt,
            CmpOp::Ge,
        ]
        .choose(rng)
        .unwrap();
        let b = if rng.gen_bool(0.5) {
            Term::col(rng.gen_range(1..=arity))
        } else {
            Term::lit(Value::Int(rng.gen_range(0..3)))
        };
        Predicate::cmp(op, Term::col(rng.gen_range(1..=arity)), b)
    };
    match rng.gen_range(0..5) {
        0 => Predicate::and(atom(rng), atom(rng)),
        1 => Predicate::or(atom(rng), atom(rng)),
        2 => Predicate::negate(atom(rng)),
        _ => atom(rng),
    }
}

/// Wraps `q` in a root aggregation.
pub fn gen_aggregate(rng: &mut ChaCha8Rng, q: Query, arity: usize) -> Query {
    let mut group: Vec<usize> = (1..=arity).filter(|_| rng.gen_bool(0.4)).collect();
    group.shuffle(rng);
    let n = rng.gen_range(1..=2);
    let items = (0..n)
        .map(|_| {
            let f = *[
                MonoidAggregate::Count,
                MonoidAggregate::Sum,
                MonoidAggregate::Min,
                MonoidAggregate::Max,
            ]
            .choose(rng)
            .unwrap();
            AggItem::new(AggFunc::Value(f), Term::col(rng.gen_range(1..=arity)))
        })
        .collect();
    Query::aggregate(group, items, q)
}

/// A query for the equivalence suites: depth at most 4, optionally with a
/// root aggregation.
pub fn gen_case_query(rng: &mut ChaCha8Rng, allow_aggregate: bool) -> QueryAst {
    let arity = rng.gen_range(1..=3);
    let depth = rng.gen_range(1..=4);
    let q = gen_query(rng, depth, arity, true);
    let q = if allow_aggregate && rng.gen_bool(0.25) {
        gen_aggregate(rng, q, arity)
    } else {
        q
    };
    QueryAst::new(q)
}

fn gen_tuples(rng: &mut ChaCha8Rng, arity: usize) -> Vec<Tuple> {
    let n = rng.gen_range(0..=6);
    (0..n)
        .map(|_| {
            Tuple::new(
                (0..arity)
                    .map(|_| Value::Int(rng.gen_range(0..3)))
                    .collect(),
            )
        })
        .collect()
}

/// Random annotated instance over [`schema`]. `element` draws annotations.
pub fn gen_instance(
    rng: &mut ChaCha8Rng,
    structure: Arc<dyn AnnotationStructure>,
    mut element: impl FnMut(&mut ChaCha8Rng) -> Element,
) -> AnnotatedInstance {
    let mut inst = AnnotatedInstance::new(structure);
    for (name, arity) in [("R", 2), ("S", 2), ("T", 1)] {
        let mut rel = AnnotatedRelation::new(arity);
        for t in gen_tuples(rng, arity) {
            rel.insert(t, element(rng), 1).unwrap();
        }
        inst.insert(name, rel);
    }
    inst
}

pub fn random_count(rng: &mut ChaCha8Rng) -> Element {
    Element::Count(rng.gen_range(0..4))
}

const TOKENS: [&str; 5] = ["t1", "t2", "t3", "t4", "t5"];

pub fn random_why(rng: &mut ChaCha8Rng) -> Element {
    let n = rng.gen_range(0..3);
    let witnesses: Vec<Vec<&str>> = (0..n)
        .map(|_| {
            let k = rng.gen_range(0..3);
            (0..k).map(|_| *TOKENS.choose(rng).unwrap()).collect()
        })
        .collect();
    Element::why_from(witnesses)
}

pub fn random_bool(rng: &mut ChaCha8Rng) -> Element {
    fn go(rng: &mut ChaCha8Rng, depth: u32) -> BoolFn {
        if depth == 0 || rng.gen_bool(0.3) {
            return match rng.gen_range(0..8) {
                0 => BoolFn::constant(false),
                1 => BoolFn::constant(true),
                _ => BoolFn::var(["x", "y", "z", "w"][rng.gen_range(0..4)]),
            };
        }
        match rng.gen_range(0..3) {
            0 => BoolFn::and([go(rng, depth - 1), go(rng, depth - 1)]),
            1 => BoolFn::or([go(rng, depth - 1), go(rng, depth - 1)]),
            _ => BoolFn::not(go(rng, depth - 1)),
        }
    }
    Element::Bool(go(rng, 3))
}

/// A random Boolean circuit over at most `max_vars` variables, with
/// probabilities in (0, 1) and occasionally 0 or 1.
pub fn random_circuit(
    rng: &mut ChaCha8Rng,
    max_vars: usize,
    monotone: bool,
) -> (BoolCircuit, ProbMap) {
    let vars = rng.gen_range(1..=max_vars);
    let mut c = BoolCircuit::new();
    let mut probs = ProbMap::new();
    let mut nodes: Vec<NodeId> = Vec::new();
    for i in 0..vars {
        let name = format!("v{i}");
        let p = match rng.gen_range(0..20) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.01..0.99),
        };
        probs.insert(name.as_str(), p).unwrap();
        nodes.push(c.var(name));
    }
    let gates = rng.gen_range(1..=vars + 8);
    for _ in 0..gates {
        let k = rng.gen_range(2..=4);
        let kids: Vec<NodeId> = (0..k).map(|_| *nodes.choose(rng).unwrap()).collect();
        let n = match rng.gen_range(0..5) {
            0 | 1 => c.and(kids),
            2 | 3 => c.or(kids),
            _ if monotone => c.or(kids),
            _ => c.not(kids[0]),
        };
        nodes.push(n);
    }
    // Root over the last few nodes, so most of the circuit stays reachable.
    let tail: Vec<NodeId> = nodes.iter().rev().take(3).copied().collect();
    let root = if rng.gen_bool(0.5) {
        c.or(tail)
    } else {
        c.and(tail)
    };
    c.set_root(root);
    (c, probs)
}

/// Value column of a tuple as an integer, for readable failure messages.
pub fn show(q: &QueryAst) -> String {
    provdb::frontend::print(q)
}
