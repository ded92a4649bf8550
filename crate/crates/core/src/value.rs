//! Scalar values and tuples.
//!
//! Data values come in five tags (integer, real, text, boolean, date). Two
//! further variants carry annotation-domain content through the standard
//! evaluator once a query has been rewritten: an annotation element in the
//! provenance column, and a semimodule element for aggregate results.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use ordered_float::OrderedFloat;

use crate::semiring::{Element, SemimoduleElement};

/// Type tag of a [`Value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Int,
    Real,
    Text,
    Bool,
    Date,
    /// Provenance column of an annotated relation.
    Annotation,
    /// Aggregate value combined with annotations.
    Semimodule,
}

impl Tag {
    /// Whether this tag may appear in a base-relation schema.
    pub fn is_data(self) -> bool {
        !matches!(self, Tag::Annotation | Tag::Semimodule)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Tag::Int | Tag::Real)
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::Int => "int",
            Tag::Real => "real",
            Tag::Text => "text",
            Tag::Bool => "bool",
            Tag::Date => "date",
            Tag::Annotation => "annotation",
            Tag::Semimodule => "semimodule",
        }
    }

    /// Parses a data tag name as used in schema declarations.
    pub fn parse_data(s: &str) -> Option<Tag> {
        match s.trim().to_ascii_lowercase().as_str() {
            "int" | "integer" => Some(Tag::Int),
            "real" | "float" | "double" => Some(Tag::Real),
            "text" | "string" => Some(Tag::Text),
            "bool" | "boolean" => Some(Tag::Bool),
            "date" => Some(Tag::Date),
            _ => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single cell. There is no NULL.
///
/// The derived ordering sorts first by variant, then by content. It is used
/// only to give relations a canonical iteration order; predicate comparisons
/// between different tags are rejected during validation and evaluation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Real(OrderedFloat<f64>),
    Text(Arc<str>),
    Bool(bool),
    /// ISO-8601 text; ordered lexicographically.
    Date(Arc<str>),
    Annot(Element),
    Module(Box<SemimoduleElement>),
}

impl Value {
    pub fn real(x: f64) -> Value {
        Value::Real(OrderedFloat(x))
    }

    pub fn text(s: impl AsRef<str>) -> Value {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn date(s: impl AsRef<str>) -> Value {
        Value::Date(Arc::from(s.as_ref()))
    }

    pub fn tag(&self) -> Tag {
        match self {
            Value::Int(_) => Tag::Int,
            Value::Real(_) => Tag::Real,
            Value::Text(_) => Tag::Text,
            Value::Bool(_) => Tag::Bool,
            Value::Date(_) => Tag::Date,
            Value::Annot(_) => Tag::Annotation,
            Value::Module(_) => Tag::Semimodule,
        }
    }

    pub fn as_element(&self) -> Option<&Element> {
        match self {
            Value::Annot(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) | Value::Date(s) => Some(s),
            _ => None,
        }
    }

    /// Parses a CSV cell under a declared data tag.
    pub fn parse_as(tag: Tag, cell: &str) -> Option<Value> {
        match tag {
            Tag::Int => cell.trim().parse().ok().map(Value::Int),
            Tag::Real => cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::real),
            Tag::Text => Some(Value::text(cell)),
            Tag::Bool => match cell.trim().to_ascii_lowercase().as_str() {
                "true" | "t" | "1" => Some(Value::Bool(true)),
                "false" | "f" | "0" => Some(Value::Bool(false)),
                _ => None,
            },
            Tag::Date => {
                let s = cell.trim();
                is_iso_date(s).then(|| Value::date(s))
            }
            Tag::Annotation | Tag::Semimodule => None,
        }
    }

    /// Text suitable for a CSV cell; inverse of [`Value::parse_as`] for data tags.
    pub fn to_cell(&self) -> String {
        match self {
            Value::Real(x) => format!("{:?}", x.0),
            other => other.to_string(),
        }
    }
}

/// Accepts `YYYY-MM-DD` with an optional time suffix.
fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 10
        && b[..4].iter().all(u8::is_ascii_digit)
        && b[4] == b'-'
        && b[5..7].iter().all(u8::is_ascii_digit)
        && b[7] == b'-'
        && b[8..10].iter().all(u8::is_ascii_digit)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(x) => write!(f, "{}", x.0),
            Value::Text(s) | Value::Date(s) => f.write_str(s),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Annot(e) => write!(f, "{e}"),
            Value::Module(m) => write!(f, "{m}"),
        }
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::text(s)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// An ordered sequence of values with fixed arity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tuple(Box<[Value]>);

impl Tuple {
    pub fn new(values: Vec<Value>) -> Self {
        Tuple(values.into_boxed_slice())
    }

    pub fn empty() -> Self {
        Tuple::default()
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    /// One-based component access, as positional indices are written.
    pub fn at(&self, index: usize) -> Option<&Value> {
        index.checked_sub(1).and_then(|i| self.0.get(i))
    }

    pub fn concat(&self, other: &Tuple) -> Tuple {
        let mut v = Vec::with_capacity(self.arity() + other.arity());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Tuple::new(v)
    }

    /// Appends one value, e.g. an annotation column.
    pub fn extend_one(&self, value: Value) -> Tuple {
        let mut v = self.0.to_vec();
        v.push(value);
        Tuple::new(v)
    }

    /// Splits off the last component.
    pub fn split_last(&self) -> Option<(Tuple, &Value)> {
        let (last, rest) = self.0.split_last()?;
        Some((Tuple::new(rest.to_vec()), last))
    }

    pub fn into_vec(self) -> Vec<Value> {
        self.0.into_vec()
    }
}

impl Deref for Tuple {
    type Target = [Value];

    fn deref(&self) -> &[Value] {
        &self.0
    }
}

impl From<Vec<Value>> for Tuple {
    fn from(v: Vec<Value>) -> Self {
        Tuple::new(v)
    }
}

impl FromIterator<Value> for Tuple {
    fn from_iter<I: IntoIterator<Item = Value>>(iter: I) -> Self {
        Tuple::new(iter.into_iter().collect())
    }
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// Builds a tuple from heterogeneous literals: `tuple![1, "John", true]`.
#[macro_export]
macro_rules! tuple {
    ($($v:expr),* $(,)?) => {
        $crate::value::Tuple::new(vec![$($crate::value::Value::from($v)),*])
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_based_access() {
        let t = tuple![1, "John", "Director", "New York"];
        assert_eq!(t.at(2), Some(&Value::text("John")));
        assert_eq!(t.at(0), None);
        assert_eq!(t.at(5), None);
    }

    #[test]
    fn parse_cells() {
        assert_eq!(Value::parse_as(Tag::Int, " 42"), Some(Value::Int(42)));
        assert_eq!(Value::parse_as(Tag::Int, "x"), None);
        assert_eq!(Value::parse_as(Tag::Real, "0.5"), Some(Value::real(0.5)));
        assert_eq!(Value::parse_as(Tag::Real, "NaN"), None);
        assert_eq!(
            Value::parse_as(Tag::Date, "2021-03-04"),
            Some(Value::date("2021-03-04"))
        );
        assert_eq!(Value::parse_as(Tag::Date, "March 4"), None);
    }

    #[test]
    fn real_cells_round_trip() {
        for x in [0.1, 1.0, -3.25, 1e-300, 123456789.125] {
            let v = Value::real(x);
            assert_eq!(Value::parse_as(Tag::Real, &v.to_cell()), Some(v));
        }
    }
}
