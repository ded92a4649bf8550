//! Monoid aggregates and aggregate values combined with annotations.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use super::{AnnotationStructure, Element, SemiringError};
use crate::circuit::GateId;
use crate::value::{Tag, Value};

/// Aggregate functions that are monoid homomorphisms from finite multisets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MonoidAggregate {
    Count,
    Sum,
    Min,
    Max,
}

impl MonoidAggregate {
    pub const ALL: [MonoidAggregate; 4] = [
        MonoidAggregate::Count,
        MonoidAggregate::Sum,
        MonoidAggregate::Min,
        MonoidAggregate::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MonoidAggregate::Count => "count",
            MonoidAggregate::Sum => "sum",
            MonoidAggregate::Min => "min",
            MonoidAggregate::Max => "max",
        }
    }

    /// Output tag for inputs of tag `input`.
    pub fn result_tag(self, input: Tag) -> Result<Tag, SemiringError> {
        match self {
            MonoidAggregate::Count => Ok(Tag::Int),
            MonoidAggregate::Sum if input.is_numeric() => Ok(input),
            MonoidAggregate::Min | MonoidAggregate::Max if input.is_data() => Ok(input),
            _ => Err(SemiringError::TagMismatch {
                aggregate: self.name(),
                tag: input,
            }),
        }
    }

    /// Image of the empty multiset. `None` for min and max, whose identity
    /// (an infinite bound) is not a value.
    pub fn identity(self, input: Tag) -> Option<Value> {
        match self {
            MonoidAggregate::Count => Some(Value::Int(0)),
            MonoidAggregate::Sum if input == Tag::Real => Some(Value::real(0.0)),
            MonoidAggregate::Sum => Some(Value::Int(0)),
            MonoidAggregate::Min | MonoidAggregate::Max => None,
        }
    }

    /// Applies the aggregate to a multiset given as `(value, multiplicity)`
    /// pairs. Zero multiplicities are ignored.
    pub fn apply<'a>(
        self,
        items: impl IntoIterator<Item = (&'a Value, u64)>,
        input: Tag,
    ) -> Result<Option<Value>, SemiringError> {
        self.result_tag(input)?;
        let mut acc = self.identity(input);
        for (v, n) in items {
            if n == 0 {
                continue;
            }
            if v.tag() != input {
                return Err(SemiringError::TagMismatch {
                    aggregate: self.name(),
                    tag: v.tag(),
                });
            }
            let part = match self {
                MonoidAggregate::Count => {
                    Value::Int(i64::try_from(n).map_err(|_| SemiringError::Overflow)?)
                }
                MonoidAggregate::Sum => scale(v, n)?,
                MonoidAggregate::Min | MonoidAggregate::Max => v.clone(),
            };
            acc = Some(match acc {
                None => part,
                Some(a) => self.combine(&a, &part)?,
            });
        }
        Ok(acc)
    }

    /// The monoid operation.
    pub fn combine(self, a: &Value, b: &Value) -> Result<Value, SemiringError> {
        match (self, a, b) {
            (MonoidAggregate::Count | MonoidAggregate::Sum, Value::Int(x), Value::Int(y)) => x
                .checked_add(*y)
                .map(Value::Int)
                .ok_or(SemiringError::Overflow),
            (MonoidAggregate::Sum, Value::Real(x), Value::Real(y)) => Ok(Value::real(x.0 + y.0)),
            (MonoidAggregate::Min | MonoidAggregate::Max, a, b) if a.tag() == b.tag() => {
                let pick_a = match self {
                    MonoidAggregate::Min => a.cmp(b) != Ordering::Greater,
                    _ => a.cmp(b) != Ordering::Less,
                };
                Ok(if pick_a { a.clone() } else { b.clone() })
            }
            _ => Err(SemiringError::TagMismatch {
                aggregate: self.name(),
                tag: b.tag(),
            }),
        }
    }
}

fn scale(v: &Value, n: u64) -> Result<Value, SemiringError> {
    match v {
        Value::Int(x) => i64::try_from(n)
            .ok()
            .and_then(|n| x.checked_mul(n))
            .map(Value::Int)
            .ok_or(SemiringError::Overflow),
        Value::Real(x) => Ok(Value::real(x.0 * n as f64)),
        other => Err(SemiringError::TagMismatch {
            aggregate: "sum",
            tag: other.tag(),
        }),
    }
}

impl FromStr for MonoidAggregate {
    type Err = SemiringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(MonoidAggregate::Count),
            "sum" => Ok(MonoidAggregate::Sum),
            "min" => Ok(MonoidAggregate::Min),
            "max" => Ok(MonoidAggregate::Max),
            _ => Err(SemiringError::UnsupportedAggregate(s.to_string())),
        }
    }
}

impl fmt::Display for MonoidAggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An aggregate value whose content may depend on annotations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SemimoduleElement {
    /// Fully resolved value.
    Scalar(Value),
    /// Min or max of nothing.
    Neutral(MonoidAggregate),
    /// A single value tensored with an annotation.
    Tensor(Value, Element),
    /// Lifted aggregate over tensors, kept symbolically. Terms are sorted.
    Symbolic {
        func: MonoidAggregate,
        terms: Vec<(Value, Element)>,
    },
    /// A semimodule or aggregate gate of a provenance circuit.
    Gate(GateId),
}

impl fmt::Display for SemimoduleElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemimoduleElement::Scalar(v) => write!(f, "{v}"),
            SemimoduleElement::Neutral(func) => write!(f, "{func}()"),
            SemimoduleElement::Tensor(v, e) => write!(f, "{v}∗{e}"),
            SemimoduleElement::Symbolic { func, terms } => {
                write!(f, "{func}(")?;
                for (i, (v, e)) in terms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}∗{e}")?;
                }
                f.write_str(")")
            }
            SemimoduleElement::Gate(g) => write!(f, "{g}"),
        }
    }
}

/// Lifted aggregation: combines `(value, annotation, multiplicity)` items
/// through `structure`. Structures that can resolve to a scalar (counting)
/// do; others keep the symbolic pair list.
pub fn sm_aggregate(
    func: MonoidAggregate,
    items: &[(Value, Element, u64)],
    structure: &dyn AnnotationStructure,
    input: Tag,
) -> Result<SemimoduleElement, SemiringError> {
    func.result_tag(input)?;
    for (v, e, _) in items {
        if v.tag() != input {
            return Err(SemiringError::TagMismatch {
                aggregate: func.name(),
                tag: v.tag(),
            });
        }
        if !structure.contains(e) {
            return Err(SemiringError::DomainMismatch {
                structure: structure.name().to_string(),
                element: e.to_string(),
            });
        }
    }
    structure.aggregate(func, items, input)
}

/// Symbolic lifting used by structures without scalar resolution.
pub(crate) fn symbolic_aggregate(
    func: MonoidAggregate,
    items: &[(Value, Element, u64)],
    input: Tag,
) -> SemimoduleElement {
    let mut terms: Vec<(Value, Element)> = items
        .iter()
        .flat_map(|(v, e, n)| std::iter::repeat_n((v.clone(), e.clone()), *n as usize))
        .collect();
    if terms.is_empty() {
        return match func.identity(input) {
            Some(v) => SemimoduleElement::Scalar(v),
            None => SemimoduleElement::Neutral(func),
        };
    }
    terms.sort();
    SemimoduleElement::Symbolic { func, terms }
}
