//! The extended relational algebra: terms, predicates, query trees, schemas
//! and static validation.
//!
//! Columns are addressed positionally (`#1`, `#2`, …). Named columns are
//! accepted at the surface and bound to positions by [`bind_names`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::QueryError;
use crate::semiring::MonoidAggregate;
use crate::value::{Tag, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Concat,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Concat => "||",
        }
    }
}

/// An expression over the components of one tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Value),
    /// One-based positional index.
    Column(usize),
    /// Surface column name, bound to a position before validation.
    Named(String),
    Arith(ArithOp, Box<Term>, Box<Term>),
    /// `a ⊗ b` on annotation columns.
    Times(Box<Term>, Box<Term>),
    /// `a ⊖ b` on annotation columns.
    Monus(Box<Term>, Box<Term>),
    /// `value ∗ annotation`.
    Tensor(Box<Term>, Box<Term>),
}

impl Term {
    pub fn col(i: usize) -> Term {
        Term::Column(i)
    }

    pub fn lit(v: impl Into<Value>) -> Term {
        Term::Const(v.into())
    }

    pub fn arith(op: ArithOp, a: Term, b: Term) -> Term {
        Term::Arith(op, Box::new(a), Box::new(b))
    }

    pub fn times(a: Term, b: Term) -> Term {
        Term::Times(Box::new(a), Box::new(b))
    }

    pub fn monus(a: Term, b: Term) -> Term {
        Term::Monus(Box::new(a), Box::new(b))
    }

    pub fn tensor(v: Term, a: Term) -> Term {
        Term::Tensor(Box::new(v), Box::new(a))
    }

    /// Largest positional index used, or 0.
    pub fn max_index(&self) -> usize {
        match self {
            Term::Const(_) | Term::Named(_) => 0,
            Term::Column(i) => *i,
            Term::Arith(_, a, b) | Term::Times(a, b) | Term::Monus(a, b) | Term::Tensor(a, b) => {
                a.max_index().max(b.max_index())
            }
        }
    }

    fn map_columns(
        &self,
        f: &mut dyn FnMut(&str) -> Result<usize, QueryError>,
    ) -> Result<Term, QueryError> {
        let bin = |a: &Term, b: &Term, f: &mut dyn FnMut(&str) -> Result<usize, QueryError>| {
            Ok::<_, QueryError>((Box::new(a.map_columns(f)?), Box::new(b.map_columns(f)?)))
        };
        Ok(match self {
            Term::Named(n) => Term::Column(f(n)?),
            Term::Const(_) | Term::Column(_) => self.clone(),
            Term::Arith(op, a, b) => {
                let (a, b) = bin(a, b, f)?;
                Term::Arith(*op, a, b)
            }
            Term::Times(a, b) => {
                let (a, b) = bin(a, b, f)?;
                Term::Times(a, b)
            }
            Term::Monus(a, b) => {
                let (a, b) = bin(a, b, f)?;
                Term::Monus(a, b)
            }
            Term::Tensor(a, b) => {
                let (a, b) = bin(a, b, f)?;
                Term::Tensor(a, b)
            }
        })
    }

    /// Replaces every positional index `#i` with `columns[i-1]`.
    pub fn substitute(&self, columns: &[Term]) -> Term {
        match self {
            Term::Column(i) => columns[*i - 1].clone(),
            Term::Const(_) | Term::Named(_) => self.clone(),
            Term::Arith(op, a, b) => Term::arith(*op, a.substitute(columns), b.substitute(columns)),
            Term::Times(a, b) => Term::times(a.substitute(columns), b.substitute(columns)),
            Term::Monus(a, b) => Term::monus(a.substitute(columns), b.substitute(columns)),
            Term::Tensor(a, b) => Term::tensor(a.substitute(columns), b.substitute(columns)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Boolean combination of comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    True,
    False,
    Cmp(CmpOp, Term, Term),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn cmp(op: CmpOp, a: Term, b: Term) -> Predicate {
        Predicate::Cmp(op, a, b)
    }

    pub fn eq(a: Term, b: Term) -> Predicate {
        Predicate::Cmp(CmpOp::Eq, a, b)
    }

    pub fn and(a: Predicate, b: Predicate) -> Predicate {
        Predicate::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Predicate, b: Predicate) -> Predicate {
        Predicate::Or(Box::new(a), Box::new(b))
    }

    pub fn negate(a: Predicate) -> Predicate {
        Predicate::Not(Box::new(a))
    }

    /// Left-nested conjunction; `True` when empty.
    pub fn conjunction(items: impl IntoIterator<Item = Predicate>) -> Predicate {
        items
            .into_iter()
            .reduce(Predicate::and)
            .unwrap_or(Predicate::True)
    }

    pub fn max_index(&self) -> usize {
        match self {
            Predicate::True | Predicate::False => 0,
            Predicate::Cmp(_, a, b) => a.max_index().max(b.max_index()),
            Predicate::And(a, b) | Predicate::Or(a, b) => a.max_index().max(b.max_index()),
            Predicate::Not(a) => a.max_index(),
        }
    }

    pub fn map_terms(
        &self,
        f: &mut dyn FnMut(&Term) -> Result<Term, QueryError>,
    ) -> Result<Predicate, QueryError> {
        Ok(match self {
            Predicate::True | Predicate::False => self.clone(),
            Predicate::Cmp(op, a, b) => Predicate::Cmp(*op, f(a)?, f(b)?),
            Predicate::And(a, b) => Predicate::and(a.map_terms(f)?, b.map_terms(f)?),
            Predicate::Or(a, b) => Predicate::or(a.map_terms(f)?, b.map_terms(f)?),
            Predicate::Not(a) => Predicate::negate(a.map_terms(f)?),
        })
    }

    /// Top-level conjuncts.
    pub fn conjuncts(&self) -> Vec<&Predicate> {
        match self {
            Predicate::And(a, b) => {
                let mut v = a.conjuncts();
                v.extend(b.conjuncts());
                v
            }
            Predicate::True => Vec::new(),
            other => vec![other],
        }
    }
}

/// Aggregate function attached to one output column of an aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    /// Ordinary monoid aggregate over data values.
    Value(MonoidAggregate),
    /// Lifted aggregate over tensor values.
    Lifted(MonoidAggregate),
    /// ⊕-fold of an annotation column.
    Oplus,
    /// δ applied to the ⊕-fold of an annotation column.
    DeltaOplus,
}

impl AggFunc {
    pub fn is_annotation_only(self) -> bool {
        matches!(self, AggFunc::Oplus | AggFunc::DeltaOplus)
    }

    pub fn name(self) -> String {
        match self {
            AggFunc::Value(f) => f.name().to_string(),
            AggFunc::Lifted(f) => format!("hat_{}", f.name()),
            AggFunc::Oplus => "oplus".to_string(),
            AggFunc::DeltaOplus => "delta_oplus".to_string(),
        }
    }

    pub fn parse(name: &str) -> Result<AggFunc, QueryError> {
        let lower = name.to_ascii_lowercase();
        match lower.as_str() {
            "oplus" => Ok(AggFunc::Oplus),
            "delta_oplus" => Ok(AggFunc::DeltaOplus),
            _ => match lower.strip_prefix("hat_") {
                Some(rest) => rest
                    .parse()
                    .map(AggFunc::Lifted)
                    .map_err(|_| QueryError::UnsupportedAggregate(name.to_string())),
                None => lower
                    .parse()
                    .map(AggFunc::Value)
                    .map_err(|_| QueryError::UnsupportedAggregate(name.to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggItem {
    pub func: AggFunc,
    pub term: Term,
    pub name: Option<String>,
}

impl AggItem {
    pub fn new(func: AggFunc, term: Term) -> Self {
        AggItem {
            func,
            term,
            name: None,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }
}

/// A query tree over the eight operators. Join and set union are sugar and
/// have no node of their own.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Query {
    Relation(String),
    Project(Vec<Term>, Box<Query>),
    Select(Predicate, Box<Query>),
    Product(Box<Query>, Box<Query>),
    Sum(Box<Query>, Box<Query>),
    Dedup(Box<Query>),
    Diff(Box<Query>, Box<Query>),
    Aggregate {
        group: Vec<usize>,
        items: Vec<AggItem>,
        input: Box<Query>,
    },
}

impl Query {
    pub fn relation(name: impl Into<String>) -> Query {
        Query::Relation(name.into())
    }

    pub fn project(terms: Vec<Term>, q: Query) -> Query {
        Query::Project(terms, Box::new(q))
    }

    pub fn select(p: Predicate, q: Query) -> Query {
        Query::Select(p, Box::new(q))
    }

    pub fn product(a: Query, b: Query) -> Query {
        Query::Product(Box::new(a), Box::new(b))
    }

    pub fn sum(a: Query, b: Query) -> Query {
        Query::Sum(Box::new(a), Box::new(b))
    }

    pub fn dedup(q: Query) -> Query {
        Query::Dedup(Box::new(q))
    }

    pub fn diff(a: Query, b: Query) -> Query {
        Query::Diff(Box::new(a), Box::new(b))
    }

    pub fn aggregate(group: Vec<usize>, items: Vec<AggItem>, q: Query) -> Query {
        Query::Aggregate {
            group,
            items,
            input: Box::new(q),
        }
    }

    /// `q1 ⋈_φ q2 = σ_φ(q1 × q2)`.
    pub fn join(p: Predicate, a: Query, b: Query) -> Query {
        Query::select(p, Query::product(a, b))
    }

    /// `q1 ∪ q2 = ε(q1 ⊎ q2)`.
    pub fn set_union(a: Query, b: Query) -> Query {
        Query::dedup(Query::sum(a, b))
    }

    pub fn children(&self) -> Vec<&Query> {
        match self {
            Query::Relation(_) => vec![],
            Query::Project(_, q) | Query::Select(_, q) | Query::Dedup(q) => vec![q],
            Query::Aggregate { input, .. } => vec![input],
            Query::Product(a, b) | Query::Sum(a, b) | Query::Diff(a, b) => vec![a, b],
        }
    }

    fn any(&self, pred: &dyn Fn(&Query) -> bool) -> bool {
        pred(self) || self.children().into_iter().any(|c| c.any(pred))
    }

    pub fn contains_difference(&self) -> bool {
        self.any(&|q| matches!(q, Query::Diff(..)))
    }

    pub fn contains_aggregate(&self) -> bool {
        self.any(&|q| matches!(q, Query::Aggregate { .. }))
    }

    /// Whether any aggregation produces data values (as opposed to folding
    /// annotation columns only).
    pub fn contains_value_aggregate(&self) -> bool {
        self.any(&|q| match q {
            Query::Aggregate { items, .. } => items.iter().any(|i| !i.func.is_annotation_only()),
            _ => false,
        })
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Relation labels referenced, each once.
    pub fn relations(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_relations(&mut out);
        out
    }

    fn collect_relations<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        if let Query::Relation(r) = self {
            out.insert(r);
        }
        for c in self.children() {
            c.collect_relations(out);
        }
    }
}

/// A parsed or constructed query. `annotated` marks the output of the
/// rewriter: relation references then denote their annotated versions with
/// one extra provenance column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryAst {
    pub root: Query,
    pub annotated: bool,
}

impl QueryAst {
    pub fn new(root: Query) -> Self {
        QueryAst {
            root,
            annotated: false,
        }
    }
}

impl From<Query> for QueryAst {
    fn from(root: Query) -> Self {
        QueryAst::new(root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnDecl {
    pub name: String,
    pub tag: Tag,
}

impl ColumnDecl {
    pub fn new(name: impl Into<String>, tag: Tag) -> Self {
        ColumnDecl {
            name: name.into(),
            tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RelationSchema {
    pub columns: Vec<ColumnDecl>,
}

impl RelationSchema {
    pub fn new(columns: Vec<ColumnDecl>) -> Self {
        RelationSchema { columns }
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn tags(&self) -> Vec<Tag> {
        self.columns.iter().map(|c| c.tag).collect()
    }

    /// Parses `name:tag,name:tag,…`.
    pub fn parse_decl(decl: &str) -> Option<RelationSchema> {
        let mut columns = Vec::new();
        for part in decl.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, tag) = part.split_once(':')?;
            let tag = Tag::parse_data(tag)?;
            columns.push(ColumnDecl::new(name.trim(), tag));
        }
        Some(RelationSchema { columns })
    }

    pub fn decl(&self) -> String {
        self.columns
            .iter()
            .map(|c| format!("{}:{}", c.name, c.tag))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Relation labels with their column declarations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    relations: BTreeMap<String, RelationSchema>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    pub fn with(mut self, name: impl Into<String>, rel: RelationSchema) -> Self {
        self.insert(name, rel);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, rel: RelationSchema) {
        self.relations.insert(name.into(), rel);
    }

    pub fn get(&self, name: &str) -> Option<&RelationSchema> {
        self.relations.get(name)
    }

    pub fn arity(&self, name: &str) -> Result<usize, QueryError> {
        self.get(name)
            .map(RelationSchema::arity)
            .ok_or_else(|| QueryError::UnknownRelation(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &RelationSchema)> {
        self.relations.iter()
    }
}

/// Static type of one output column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnType {
    pub tag: Tag,
    pub name: Option<String>,
}

/// Checks `ast` against `schema` and returns its output arity.
pub fn validate(ast: &QueryAst, schema: &Schema) -> Result<usize, QueryError> {
    Ok(output_columns(ast, schema)?.len())
}

/// Output column types of a valid query.
pub fn output_columns(ast: &QueryAst, schema: &Schema) -> Result<Vec<ColumnType>, QueryError> {
    let ctx = Checker {
        schema,
        annotated: ast.annotated,
    };
    ctx.infer(&ast.root, true)
}

struct Checker<'a> {
    schema: &'a Schema,
    annotated: bool,
}

impl Checker<'_> {
    fn infer(&self, q: &Query, is_root: bool) -> Result<Vec<ColumnType>, QueryError> {
        match q {
            Query::Relation(r) => {
                let rel = self
                    .schema
                    .get(r)
                    .ok_or_else(|| QueryError::UnknownRelation(r.clone()))?;
                let mut cols: Vec<ColumnType> = rel
                    .columns
                    .iter()
                    .map(|c| ColumnType {
                        tag: c.tag,
                        name: Some(c.name.clone()),
                    })
                    .collect();
                if self.annotated {
                    cols.push(ColumnType {
                        tag: Tag::Annotation,
                        name: None,
                    });
                }
                Ok(cols)
            }
            Query::Project(terms, input) => {
                let cols = self.infer(input, false)?;
                terms
                    .iter()
                    .map(|t| {
                        Ok(ColumnType {
                            tag: term_tag(t, &cols)?,
                            name: match t {
                                Term::Column(i) => cols[*i - 1].name.clone(),
                                _ => None,
                            },
                        })
                    })
                    .collect()
            }
            Query::Select(p, input) => {
                let cols = self.infer(input, false)?;
                check_predicate(p, &cols)?;
                Ok(cols)
            }
            Query::Product(a, b) => {
                let mut cols = self.infer(a, false)?;
                cols.extend(self.infer(b, false)?);
                Ok(cols)
            }
            Query::Sum(a, b) | Query::Diff(a, b) => {
                let left = self.infer(a, false)?;
                let right = self.infer(b, false)?;
                if left.len() != right.len() {
                    return Err(QueryError::ArityMismatch {
                        left: left.len(),
                        right: right.len(),
                    });
                }
                for (l, r) in left.iter().zip(&right) {
                    if l.tag != r.tag {
                        return Err(QueryError::TagMismatch {
                            context: "union-compatible operands",
                            left: l.tag,
                            right: r.tag,
                        });
                    }
                }
                Ok(left)
            }
            Query::Dedup(input) => self.infer(input, false),
            Query::Aggregate {
                group,
                items,
                input,
            } => {
                let value_aggregate = items.iter().any(|i| !i.func.is_annotation_only());
                if value_aggregate && !is_root {
                    return Err(QueryError::AggregationNotTopLevel);
                }
                let cols = self.infer(input, false)?;
                let mut seen = BTreeSet::new();
                let mut out = Vec::with_capacity(group.len() + items.len());
                for &i in group {
                    if i == 0 || i > cols.len() {
                        return Err(QueryError::IndexOutOfRange {
                            index: i,
                            arity: cols.len(),
                        });
                    }
                    if !seen.insert(i) {
                        return Err(QueryError::DuplicateGroupIndex(i));
                    }
                    out.push(cols[i - 1].clone());
                }
                for item in items {
                    let tag = term_tag(&item.term, &cols)?;
                    let out_tag = match item.func {
                        AggFunc::Value(f) => {
                            if !tag.is_data() {
                                return Err(QueryError::TagMismatch {
                                    context: "aggregate argument",
                                    left: tag,
                                    right: Tag::Int,
                                });
                            }
                            f.result_tag(tag)?
                        }
                        AggFunc::Lifted(_) => {
                            expect_tag(tag, Tag::Semimodule, "lifted aggregate argument")?;
                            Tag::Semimodule
                        }
                        AggFunc::Oplus | AggFunc::DeltaOplus => {
                            expect_tag(tag, Tag::Annotation, "annotation aggregate argument")?;
                            Tag::Annotation
                        }
                    };
                    out.push(ColumnType {
                        tag: out_tag,
                        name: item.name.clone(),
                    });
                }
                Ok(out)
            }
        }
    }
}

fn expect_tag(found: Tag, expected: Tag, context: &'static str) -> Result<(), QueryError> {
    if found == expected {
        Ok(())
    } else {
        Err(QueryError::TagMismatch {
            context,
            left: found,
            right: expected,
        })
    }
}

/// Static tag of a term over input columns `cols`.
pub fn term_tag(t: &Term, cols: &[ColumnType]) -> Result<Tag, QueryError> {
    match t {
        Term::Const(v) => Ok(v.tag()),
        Term::Column(i) => {
            if *i == 0 || *i > cols.len() {
                Err(QueryError::IndexOutOfRange {
                    index: *i,
                    arity: cols.len(),
                })
            } else {
                Ok(cols[i - 1].tag)
            }
        }
        Term::Named(n) => Err(QueryError::UnknownColumn(n.clone())),
        Term::Arith(op, a, b) => {
            let (l, r) = (term_tag(a, cols)?, term_tag(b, cols)?);
            let ok = l == r
                && match op {
                    ArithOp::Concat => l == Tag::Text,
                    _ => l.is_numeric(),
                };
            if ok {
                Ok(l)
            } else {
                Err(QueryError::TagMismatch {
                    context: "arithmetic operands",
                    left: l,
                    right: r,
                })
            }
        }
        Term::Times(a, b) | Term::Monus(a, b) => {
            expect_tag(term_tag(a, cols)?, Tag::Annotation, "annotation operand")?;
            expect_tag(term_tag(b, cols)?, Tag::Annotation, "annotation operand")?;
            Ok(Tag::Annotation)
        }
        Term::Tensor(v, a) => {
            let vt = term_tag(v, cols)?;
            if !vt.is_data() {
                return Err(QueryError::TagMismatch {
                    context: "tensor value",
                    left: vt,
                    right: Tag::Int,
                });
            }
            expect_tag(term_tag(a, cols)?, Tag::Annotation, "tensor annotation")?;
            Ok(Tag::Semimodule)
        }
    }
}

fn check_predicate(p: &Predicate, cols: &[ColumnType]) -> Result<(), QueryError> {
    match p {
        Predicate::True | Predicate::False => Ok(()),
        Predicate::Cmp(_, a, b) => {
            let (l, r) = (term_tag(a, cols)?, term_tag(b, cols)?);
            if l != r || !l.is_data() {
                return Err(QueryError::TagMismatch {
                    context: "comparison",
                    left: l,
                    right: r,
                });
            }
            Ok(())
        }
        Predicate::And(a, b) | Predicate::Or(a, b) => {
            check_predicate(a, cols)?;
            check_predicate(b, cols)
        }
        Predicate::Not(a) => check_predicate(a, cols),
    }
}

/// Replaces named columns by positions, resolving each name against the
/// column names visible at that point of the tree.
pub fn bind_names(ast: &QueryAst, schema: &Schema) -> Result<QueryAst, QueryError> {
    let binder = Binder {
        schema,
        annotated: ast.annotated,
    };
    let (root, _) = binder.bind(&ast.root)?;
    Ok(QueryAst {
        root,
        annotated: ast.annotated,
    })
}

struct Binder<'a> {
    schema: &'a Schema,
    annotated: bool,
}

impl Binder<'_> {
    fn bind(&self, q: &Query) -> Result<(Query, Vec<Option<String>>), QueryError> {
        let lookup = |names: &[Option<String>]| {
            let names = names.to_vec();
            move |n: &str| {
                let mut hits = names
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.as_deref() == Some(n));
                match (hits.next(), hits.next()) {
                    (Some((i, _)), None) => Ok(i + 1),
                    _ => Err(QueryError::UnknownColumn(n.to_string())),
                }
            }
        };
        Ok(match q {
            Query::Relation(r) => {
                let rel = self
                    .schema
                    .get(r)
                    .ok_or_else(|| QueryError::UnknownRelation(r.clone()))?;
                let mut names: Vec<_> = rel.columns.iter().map(|c| Some(c.name.clone())).collect();
                if self.annotated {
                    names.push(None);
                }
                (q.clone(), names)
            }
            Query::Project(terms, input) => {
                let (input, names) = self.bind(input)?;
                let mut f = lookup(&names);
                let terms = terms
                    .iter()
                    .map(|t| t.map_columns(&mut f))
                    .collect::<Result<Vec<_>, _>>()?;
                let out = terms
                    .iter()
                    .map(|t| match t {
                        Term::Column(i) => names.get(i - 1).cloned().flatten(),
                        _ => None,
                    })
                    .collect();
                (Query::project(terms, input), out)
            }
            Query::Select(p, input) => {
                let (input, names) = self.bind(input)?;
                let mut f = lookup(&names);
                let p = p.map_terms(&mut |t| t.map_columns(&mut f))?;
                (Query::select(p, input), names)
            }
            Query::Product(a, b) => {
                let (a, mut left) = self.bind(a)?;
                let (b, right) = self.bind(b)?;
                left.extend(right);
                (Query::product(a, b), left)
            }
            Query::Sum(a, b) => {
                let (a, names) = self.bind(a)?;
                let (b, _) = self.bind(b)?;
                (Query::sum(a, b), names)
            }
            Query::Diff(a, b) => {
                let (a, names) = self.bind(a)?;
                let (b, _) = self.bind(b)?;
                (Query::diff(a, b), names)
            }
            Query::Dedup(input) => {
                let (input, names) = self.bind(input)?;
                (Query::dedup(input), names)
            }
            Query::Aggregate {
                group,
                items,
                input,
            } => {
                let (input, names) = self.bind(input)?;
                let mut f = lookup(&names);
                let items = items
                    .iter()
                    .map(|i| {
                        Ok(AggItem {
                            func: i.func,
                            term: i.term.map_columns(&mut f)?,
                            name: i.name.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, QueryError>>()?;
                let mut out: Vec<Option<String>> = group
                    .iter()
                    .map(|&i| names.get(i.wrapping_sub(1)).cloned().flatten())
                    .collect();
                out.extend(items.iter().map(|i| i.name.clone()));
                (Query::aggregate(group.clone(), items, input), out)
            }
        })
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::frontend::print(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn personnel_schema() -> Schema {
        Schema::new().with(
            "Personnel",
            RelationSchema::new(vec![
                ColumnDecl::new("id", Tag::Int),
                ColumnDecl::new("name", Tag::Text),
                ColumnDecl::new("position", Tag::Text),
                ColumnDecl::new("city", Tag::Text),
            ]),
        )
    }

    fn q_city() -> Query {
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
    }

    #[test]
    fn q_city_has_arity_one() {
        assert_eq!(validate(&q_city().into(), &personnel_schema()), Ok(1));
    }

    #[test]
    fn index_out_of_range() {
        let q = Query::select(
            Predicate::eq(Term::col(5), Term::lit(1)),
            Query::relation("Personnel"),
        );
        assert_eq!(
            validate(&q.into(), &personnel_schema()),
            Err(QueryError::IndexOutOfRange { index: 5, arity: 4 })
        );
    }

    #[test]
    fn aggregation_must_be_root() {
        let agg = Query::aggregate(
            vec![1],
            vec![AggItem::new(
                AggFunc::Value(MonoidAggregate::Sum),
                Term::col(1),
            )],
            Query::relation("Personnel"),
        );
        let q = Query::project(vec![Term::col(1)], agg.clone());
        assert_eq!(
            validate(&q.into(), &personnel_schema()),
            Err(QueryError::AggregationNotTopLevel)
        );
        assert_eq!(validate(&agg.into(), &personnel_schema()), Ok(2));
    }

    #[test]
    fn tag_and_arity_mismatches() {
        let s = personnel_schema();
        let p = Query::relation("Personnel");
        let bad_cmp = Query::select(Predicate::eq(Term::col(1), Term::col(2)), p.clone());
        assert!(matches!(
            validate(&bad_cmp.into(), &s),
            Err(QueryError::TagMismatch { .. })
        ));
        let bad_sum = Query::sum(p.clone(), Query::project(vec![Term::col(1)], p.clone()));
        assert_eq!(
            validate(&bad_sum.into(), &s),
            Err(QueryError::ArityMismatch { left: 4, right: 1 })
        );
        let bad_arith = Query::project(
            vec![Term::arith(ArithOp::Add, Term::col(1), Term::col(2))],
            p.clone(),
        );
        assert!(matches!(
            validate(&bad_arith.into(), &s),
            Err(QueryError::TagMismatch { .. })
        ));
        assert_eq!(
            validate(&Query::relation("Nope").into(), &s),
            Err(QueryError::UnknownRelation("Nope".into()))
        );
    }

    #[test]
    fn names_bind_to_positions() {
        let s = personnel_schema();
        let q = Query::project(
            vec![Term::Named("city".into())],
            Query::select(
                Predicate::eq(Term::Named("name".into()), Term::lit("Dave")),
                Query::relation("Personnel"),
            ),
        );
        let bound = bind_names(&q.into(), &s).unwrap();
        let expected = Query::project(
            vec![Term::col(4)],
            Query::select(
                Predicate::eq(Term::col(2), Term::lit("Dave")),
                Query::relation("Personnel"),
            ),
        );
        assert_eq!(bound.root, expected);
        let ambiguous = Query::project(
            vec![Term::Named("city".into())],
            Query::product(Query::relation("Personnel"), Query::relation("Personnel")),
        );
        assert_eq!(
            bind_names(&ambiguous.into(), &s),
            Err(QueryError::UnknownColumn("city".into()))
        );
    }

    #[test]
    fn annotated_relations_gain_a_column() {
        let s = personnel_schema();
        let ast = QueryAst {
            root: Query::relation("Personnel"),
            annotated: true,
        };
        assert_eq!(validate(&ast, &s), Ok(5));
    }
}
