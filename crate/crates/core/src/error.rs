use thiserror::Error;

use crate::annotated::AnnotatedError;
use crate::circuit::CircuitError;
use crate::frontend::FrontendError;
use crate::probability::ProbabilityError;
use crate::rewrite::RewriteError;
use crate::semiring::SemiringError;
use crate::value::Tag;

/// Validation and evaluation errors of the relational algebra.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("positional index #{index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("type mismatch in {context}: {left} vs {right}")]
    TagMismatch {
        context: &'static str,
        left: Tag,
        right: Tag,
    },
    #[error("arity mismatch: {left} vs {right}")]
    ArityMismatch { left: usize, right: usize },
    #[error("aggregation must be the top-level operator")]
    AggregationNotTopLevel,
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown or ambiguous column `{0}`")]
    UnknownColumn(String),
    #[error("group index #{0} listed twice")]
    DuplicateGroupIndex(usize),
    #[error("aggregate `{0}` is not a monoid aggregate")]
    UnsupportedAggregate(String),
    #[error("division by zero")]
    DivideByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("annotation operators need an annotation structure")]
    NoAnnotationStructure,
    #[error(transparent)]
    Semiring(#[from] SemiringError),
}

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Semiring(#[from] SemiringError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Annotated(#[from] AnnotatedError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Probability(#[from] ProbabilityError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
