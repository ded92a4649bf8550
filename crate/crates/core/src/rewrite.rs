//! Rewriting a query over annotated relations into a standard query whose
//! last output column carries the annotation.

use thiserror::Error;

use crate::error::QueryError;
use crate::query::{validate, AggFunc, AggItem, Predicate, Query, QueryAst, Schema, Term};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewriteError {
    #[error("query has already been rewritten")]
    AlreadyAnnotated,
    #[error("aggregate `{0}` cannot appear in a query before rewriting")]
    AnnotationAggregate(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Applies the rewrite rules bottom-up. The result is marked annotated and
/// has one more output column than `ast`.
pub fn rewrite(ast: &QueryAst, schema: &Schema) -> Result<QueryAst, RewriteError> {
    if ast.annotated {
        return Err(RewriteError::AlreadyAnnotated);
    }
    validate(ast, schema)?;
    let (root, _) = rewrite_query(&ast.root, schema)?;
    Ok(QueryAst {
        root,
        annotated: true,
    })
}

fn cols(range: impl IntoIterator<Item = usize>) -> Vec<Term> {
    range.into_iter().map(Term::Column).collect()
}

/// `#1 = #(off+1) ∧ … ∧ #k = #(off+k)`.
fn key_equality(k: usize, off: usize) -> Predicate {
    Predicate::conjunction((1..=k).map(|i| Predicate::eq(Term::col(i), Term::col(off + i))))
}

fn oplus_by_key(k: usize, q: Query) -> Query {
    Query::aggregate(
        (1..=k).collect(),
        vec![AggItem::new(AggFunc::Oplus, Term::col(k + 1))],
        q,
    )
}

/// Returns the rewritten query and the arity of the original.
fn rewrite_query(q: &Query, schema: &Schema) -> Result<(Query, usize), RewriteError> {
    Ok(match q {
        Query::Relation(r) => (q.clone(), schema.arity(r)?),
        Query::Project(terms, input) => {
            let (input, k) = rewrite_query(input, schema)?;
            let mut terms = terms.clone();
            terms.push(Term::col(k + 1));
            let n = terms.len() - 1;
            (Query::project(terms, input), n)
        }
        Query::Select(p, input) => {
            let (input, k) = rewrite_query(input, schema)?;
            (Query::select(p.clone(), input), k)
        }
        Query::Product(a, b) => {
            let (a, k1) = rewrite_query(a, schema)?;
            let (b, k2) = rewrite_query(b, schema)?;
            let mut terms = cols(1..=k1);
            terms.extend(cols(k1 + 2..=k1 + k2 + 1));
            terms.push(Term::times(Term::col(k1 + 1), Term::col(k1 + k2 + 2)));
            (Query::project(terms, Query::product(a, b)), k1 + k2)
        }
        Query::Sum(a, b) => {
            let (a, k) = rewrite_query(a, schema)?;
            let (b, _) = rewrite_query(b, schema)?;
            (Query::sum(a, b), k)
        }
        Query::Dedup(input) => {
            let (input, k) = rewrite_query(input, schema)?;
            (oplus_by_key(k, input), k)
        }
        Query::Diff(a, b) => {
            let (a, k) = rewrite_query(a, schema)?;
            let (b, _) = rewrite_query(b, schema)?;
            // Tuples of q1 absent from q2 keep their annotation.
            let absent = Query::dedup(Query::diff(
                Query::project(cols(1..=k), a.clone()),
                Query::project(cols(1..=k), b.clone()),
            ));
            let kept = Query::project(
                cols(1..=k + 1),
                Query::join(key_equality(k, k + 1), a.clone(), absent),
            );
            // Tuples present in both get α ⊖ ⊕β.
            let mut terms = cols(1..=k);
            terms.push(Term::monus(Term::col(k + 1), Term::col(2 * k + 2)));
            let reduced = Query::project(
                terms,
                Query::join(key_equality(k, k + 1), a, oplus_by_key(k, b)),
            );
            (Query::sum(kept, reduced), k)
        }
        Query::Aggregate {
            group,
            items,
            input,
        } => {
            let (input, k) = rewrite_query(input, schema)?;
            let mut lifted = Vec::with_capacity(items.len() + 1);
            for item in items {
                let AggFunc::Value(f) = item.func else {
                    return Err(RewriteError::AnnotationAggregate(item.func.name()));
                };
                lifted.push(AggItem {
                    func: AggFunc::Lifted(f),
                    term: Term::tensor(item.term.clone(), Term::col(k + 1)),
                    name: item.name.clone(),
                });
            }
            lifted.push(AggItem::new(AggFunc::DeltaOplus, Term::col(k + 1)));
            let n = group.len() + items.len();
            (Query::aggregate(group.clone(), lifted, input), n)
        }
    })
}
