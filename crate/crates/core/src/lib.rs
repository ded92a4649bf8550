//! Provenance-aware evaluation of a multiset relational algebra.
//!
//! Queries over relations annotated with elements of an annotation structure
//! are rewritten into ordinary queries that carry the annotation in an extra
//! column. Evaluating the rewritten query over a [`circuit::CircuitStore`]
//! records provenance as a shared circuit, which can later be specialized to
//! any structure or turned into a Boolean formula whose probability is
//! computed under tuple independence.
//!
//! ```
//! use provdb::frontend::{demo, QueryOptions};
//!
//! let mut cat = demo::personnel_catalog(7).unwrap();
//! let opts = QueryOptions { semiring: Some("counting".into()), ..Default::default() };
//! let out = cat.run_query(demo::Q_CITY, &opts).unwrap();
//! assert_eq!(out.rows.len(), 3);
//! ```

pub mod annotated;
pub mod circuit;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod probability;
pub mod query;
pub mod relation;
pub mod rewrite;
pub mod semiring;
pub mod value;

pub use annotated::{eval_annotated, AnnotatedInstance, AnnotatedRelation};
pub use circuit::{CircuitOps, CircuitStore, GateId, GateKind};
pub use error::{Error, QueryError, Result};
pub use eval::{eval_query, AnnotationOps, Instance, StructureOps};
pub use probability::{probability_evaluate, BoolCircuit, Method, ProbMap};
pub use query::{
    AggFunc, AggItem, CmpOp, Predicate, Query, QueryAst, RelationSchema, Schema, Term,
};
pub use relation::Relation;
pub use rewrite::rewrite;
pub use semiring::{AnnotationStructure, Element};
pub use value::{Tag, Tuple, Value};
