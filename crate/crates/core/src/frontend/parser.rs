//! The textual query language.
//!
//! ```text
//! query  := NAME | relation NAME
//!         | project[term, ...](query) | select[pred](query)
//!         | times(query, query) | msum(query, query) | mdiff(query, query)
//!         | dedup(query) | agg[group #i, ...; func(term) as NAME, ...](query)
//!         | join[pred](query, query) | setunion(query, query)
//! term   := #i | NAME | INT | REAL | 'text' | true | false | date'YYYY-MM-DD'
//!         | term (+ - * / ||) term | otimes(t, t) | ominus(t, t) | tensor(t, t)
//! pred   := pred or pred | pred and pred | not pred | term CMP term
//!         | true | false | (pred)
//! ```
//!
//! A leading `annotated` marks a rewritten query. `--` starts a comment.

use std::fmt;

use thiserror::Error;

use crate::query::{AggFunc, AggItem, ArithOp, CmpOp, Predicate, Query, QueryAst, Term};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

const KEYWORDS: &[&str] = &[
    "relation",
    "project",
    "select",
    "times",
    "msum",
    "mdiff",
    "dedup",
    "agg",
    "join",
    "setunion",
    "and",
    "or",
    "not",
    "true",
    "false",
    "as",
    "group",
    "date",
    "otimes",
    "ominus",
    "tensor",
    "annotated",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Real(f64),
    Str(String),
    Col(usize),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(s) => write!(f, "`{s}`"),
            Tok::Real(x) => write!(f, "`{x}`"),
            Tok::Str(s) => write!(f, "string '{s}'"),
            Tok::Col(i) => write!(f, "`#{i}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "||", "!=", "<>", "<=", ">=", "(", ")", "[", "]", ",", ";", "=", "<", ">", "+", "-", "*", "/",
];

fn lex(text: &str) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, column, message: String| ParseError {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col, start) = (line, col, i);
        let tok = if c == '#' {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start + 1..i].iter().collect();
            match digits.parse::<usize>() {
                Ok(n) if n > 0 => Tok::Col(n),
                _ => {
                    return Err(err(
                        line,
                        col,
                        "expected a positive column number after `#`".into(),
                    ))
                }
            }
        } else if c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(err(start_line, start_col, "unterminated string".into())),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        if ch == '\n' {
                            line += 1;
                            col = 0;
                        }
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            Tok::Str(s)
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut real = false;
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(char::is_ascii_digit) {
                real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if matches!(chars.get(i), Some('e' | 'E')) {
                let mut j = i + 1;
                if matches!(chars.get(j), Some('+' | '-')) {
                    j += 1;
                }
                if chars.get(j).is_some_and(char::is_ascii_digit) {
                    real = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            if real {
                Tok::Real(
                    s.parse()
                        .map_err(|_| err(line, col, format!("bad number `{s}`")))?,
                )
            } else {
                Tok::Int(s)
            }
        } else if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(*s)) else {
                return Err(err(line, col, format!("unexpected character `{c}`")));
            };
            i += sym.chars().count();
            Tok::Sym(sym)
        };
        col += i - start;
        out.push((tok, start_line, start_col));
    }
    out.push((Tok::Eof, line, col));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let (_, line, column) = self.toks[self.pos];
        Err(ParseError {
            line,
            column,
            message: message.into(),
        })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.error(format!("expected {wanted}, found {}", self.peek()))
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x.eq_ignore_ascii_case(k))
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        let hit = self.is_sym(s);
        if hit {
            self.bump();
        }
        hit
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        let hit = self.is_kw(k);
        if hit {
            self.bump();
        }
        hit
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.unexpected(&format!("`{s}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.unexpected("a name"),
        }
    }

    fn query(&mut self) -> PResult<Query> {
        let Tok::Ident(word) = self.peek().clone() else {
            return self.unexpected("a query");
        };
        let op = word.to_ascii_lowercase();
        let callable = matches!(self.peek_at(1), Tok::Sym("(" | "["));
        if op == "relation" {
            self.bump();
            return Ok(Query::relation(self.ident()?));
        }
        if !callable || !KEYWORDS.contains(&op.as_str()) {
            self.bump();
            return Ok(Query::relation(word));
        }
        self.bump();
        match op.as_str() {
            "project" => {
                self.expect("[")?;
                let terms = self.list("]", Self::term)?;
                let q = self.unary_args()?;
                Ok(Query::project(terms, q))
            }
            "select" => {
                self.expect("[")?;
                let p = self.pred()?;
                self.expect("]")?;
                Ok(Query::select(p, self.unary_args()?))
            }
            "join" => {
                self.expect("[")?;
                let p = self.pred()?;
                self.expect("]")?;
                let (a, b) = self.binary_args()?;
                Ok(Query::join(p, a, b))
            }
            "dedup" => Ok(Query::dedup(self.unary_args()?)),
            "times" | "msum" | "mdiff" | "setunion" => {
                let (a, b) = self.binary_args()?;
                Ok(match op.as_str() {
                    "times" => Query::product(a, b),
                    "msum" => Query::sum(a, b),
                    "mdiff" => Query::diff(a, b),
                    _ => Query::set_union(a, b),
                })
            }
            "agg" => {
                self.expect("[")?;
                let mut group = Vec::new();
                if self.eat_kw("group") {
                    while let Tok::Col(i) = *self.peek() {
                        self.bump();
                        group.push(i);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect(";")?;
                }
                let items = self.list("]", Self::agg_item)?;
                if items.is_empty() {
                    return self.error("aggregation needs at least one function");
                }
                Ok(Query::aggregate(group, items, self.unary_args()?))
            }
            _ => {
                self.pos -= 1;
                self.unexpected("a query operator")
            }
        }
    }

    fn unary_args(&mut self) -> PResult<Query> {
        self.expect("(")?;
        let q = self.query()?;
        self.expect(")")?;
        Ok(q)
    }

    fn binary_args(&mut self) -> PResult<(Query, Query)> {
        self.expect("(")?;
        let a = self.query()?;
        self.expect(",")?;
        let b = self.query()?;
        self.expect(")")?;
        Ok((a, b))
    }

    /// Comma-separated items up to and including `close`.
    fn list<T>(
        &mut self,
        close: &str,
        mut item: impl FnMut(&mut Self) -> PResult<T>,
    ) -> PResult<Vec<T>> {
        let (_, open_line, open_col) = self.toks[self.pos.saturating_sub(1)];
        let mut out = Vec::new();
        if self.eat_sym(close) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat_sym(close) {
                return Ok(out);
            }
            if !self.eat_sym(",") {
                return self.unexpected(&format!(
                    "`,` or `{close}` to close the bracket at {open_line}:{open_col}"
                ));
            }
        }
    }

    fn agg_item(&mut self) -> PResult<AggItem> {
        let name = self.ident()?;
        let func = match AggFunc::parse(&name) {
            Ok(f) => f,
            Err(_) => {
                self.pos -= 1;
                return self.error(format!("unknown aggregate `{name}`"));
            }
        };
        self.expect("(")?;
        let term = self.term()?;
        self.expect(")")?;
        let mut item = AggItem::new(func, term);
        if self.eat_kw("as") {
            item.name = Some(self.ident()?);
        }
        Ok(item)
    }

    fn term(&mut self) -> PResult<Term> {
        let mut t = self.product_term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => ArithOp::Add,
                Tok::Sym("-") => ArithOp::Sub,
                Tok::Sym("||") => ArithOp::Concat,
                _ => return Ok(t),
            };
            self.bump();
            t = Term::arith(op, t, self.product_term()?);
        }
    }

    fn product_term(&mut self) -> PResult<Term> {
        let mut t = self.atom()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => ArithOp::Mul,
                Tok::Sym("/") => ArithOp::Div,
                _ => return Ok(t),
            };
            self.bump();
            t = Term::arith(op, t, self.atom()?);
        }
    }

    fn int(&mut self, digits: &str, negative: bool) -> PResult<Term> {
        let s = if negative {
            format!("-{digits}")
        } else {
            digits.to_string()
        };
        match s.parse::<i64>() {
            Ok(n) => Ok(Term::lit(Value::Int(n))),
            Err(_) => self.error(format!("integer `{s}` out of range")),
        }
    }

    fn atom(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Col(i) => {
                self.bump();
                Ok(Term::col(i))
            }
            Tok::Int(s) => {
                let t = self.int(&s, false)?;
                self.bump();
                Ok(t)
            }
            Tok::Real(x) => {
                self.bump();
                Ok(Term::lit(Value::real(x)))
            }
            Tok::Sym("-") => match self.peek_at(1).clone() {
                Tok::Int(s) => {
                    self.bump();
                    let t = self.int(&s, true)?;
                    self.bump();
                    Ok(t)
                }
                Tok::Real(x) => {
                    self.bump();
                    self.bump();
                    Ok(Term::lit(Value::real(-x)))
                }
                _ => self.unexpected("a term"),
            },
            Tok::Str(s) => {
                self.bump();
                Ok(Term::lit(Value::text(s)))
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.term()?;
                self.expect(")")?;
                Ok(t)
            }
            Tok::Ident(w) => {
                let lower = w.to_ascii_lowercase();
                match lower.as_str() {
                    "true" | "false" => {
                        self.bump();
                        Ok(Term::lit(Value::Bool(lower == "true")))
                    }
                    "date" if matches!(self.peek_at(1), Tok::Str(_)) => {
                        self.bump();
                        let Tok::Str(s) = self.bump() else {
                            unreachable!()
                        };
                        match Value::parse_as(crate::value::Tag::Date, &s) {
                            Some(v) => Ok(Term::lit(v)),
                            None => {
                                self.pos -= 1;
                                self.error(format!("bad date '{s}'"))
                            }
                        }
                    }
                    "otimes" | "ominus" | "tensor" if matches!(self.peek_at(1), Tok::Sym("(")) => {
                        self.bump();
                        self.expect("(")?;
                        let a = self.term()?;
                        self.expect(",")?;
                        let b = self.term()?;
                        self.expect(")")?;
                        Ok(match lower.as_str() {
                            "otimes" => Term::times(a, b),
                            "ominus" => Term::monus(a, b),
                            _ => Term::tensor(a, b),
                        })
                    }
                    _ => {
                        self.bump();
                        Ok(Term::Named(w))
                    }
                }
            }
            _ => self.unexpected("a term"),
        }
    }

    fn pred(&mut self) -> PResult<Predicate> {
        let mut p = self.conj()?;
        while self.eat_kw("or") {
            p = Predicate::or(p, self.conj()?);
        }
        Ok(p)
    }

    fn conj(&mut self) -> PResult<Predicate> {
        let mut p = self.unary_pred()?;
        while self.eat_kw("and") {
            p = Predicate::and(p, self.unary_pred()?);
        }
        Ok(p)
    }

    fn unary_pred(&mut self) -> PResult<Predicate> {
        if self.eat_kw("not") {
            return Ok(Predicate::negate(self.unary_pred()?));
        }
        let save = self.pos;
        let cmp_err = match self.comparison() {
            Ok(p) => return Ok(p),
            Err(e) => e,
        };
        self.pos = save;
        if self.eat_kw("true") {
            return Ok(Predicate::True);
        }
        if self.eat_kw("false") {
            return Ok(Predicate::False);
        }
        if self.eat_sym("(") {
            if let Ok(p) = self.pred().and_then(|p| self.expect(")").map(|_| p)) {
                return Ok(p);
            }
        }
        Err(cmp_err)
    }

    fn comparison(&mut self) -> PResult<Predicate> {
        let a = self.term()?;
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("!=" | "<>") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return self.unexpected("a comparison operator"),
        };
        self.bump();
        Ok(Predicate::cmp(op, a, self.term()?))
    }
}

/// Parses a query. Join and set union are desugared.
pub fn parse(text: &str) -> Result<QueryAst, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let annotated = matches!(p.peek_at(1), Tok::Ident(_)) && p.eat_kw("annotated");
    let root = p.query()?;
    if *p.peek() != Tok::Eof {
        return p.unexpected("end of input");
    }
    Ok(QueryAst { root, annotated })
}

/// Prints `ast` so that [`parse`] gives it back.
pub fn print(ast: &QueryAst) -> String {
    let mut s = String::new();
    if ast.annotated {
        s.push_str("annotated ");
    }
    print_query(&ast.root, &mut s);
    s
}

fn print_query(q: &Query, s: &mut String) {
    let args = |s: &mut String, qs: &[&Query]| {
        s.push('(');
        for (i, q) in qs.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            print_query(q, s);
        }
        s.push(')');
    };
    match q {
        Query::Relation(r) => {
            if KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(r)) {
                s.push_str("relation ");
            }
            s.push_str(r);
        }
        Query::Project(terms, input) => {
            s.push_str("project[");
            for (i, t) in terms.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                print_term(t, s);
            }
            s.push(']');
            args(s, &[input]);
        }
        Query::Select(p, input) => {
            s.push_str("select[");
            print_pred(p, s);
            s.push(']');
            args(s, &[input]);
        }
        Query::Product(a, b) => {
            s.push_str("times");
            args(s, &[a, b]);
        }
        Query::Sum(a, b) => {
            s.push_str("msum");
            args(s, &[a, b]);
        }
        Query::Diff(a, b) => {
            s.push_str("mdiff");
            args(s, &[a, b]);
        }
        Query::Dedup(input) => {
            s.push_str("dedup");
            args(s, &[input]);
        }
        Query::Aggregate {
            group,
            items,
            input,
        } => {
            s.push_str("agg[");
            if !group.is_empty() {
                s.push_str("group ");
                let cols: Vec<String> = group.iter().map(|i| format!("#{i}")).collect();
                s.push_str(&cols.join(", "));
                s.push_str("; ");
            }
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                s.push_str(&item.func.name());
                s.push('(');
                print_term(&item.term, s);
                s.push(')');
                if let Some(n) = &item.name {
                    s.push_str(" as ");
                    s.push_str(n);
                }
            }
            s.push(']');
            args(s, &[input]);
        }
    }
}

fn print_value(v: &Value, s: &mut String) {
    match v {
        Value::Text(t) => {
            s.push('\'');
            s.push_str(&t.replace('\'', "''"));
            s.push('\'');
        }
        Value::Date(d) => {
            s.push_str("date'");
            s.push_str(d);
            s.push('\'');
        }
        Value::Real(x) => s.push_str(&format!("{:?}", x.0)),
        other => s.push_str(&other.to_string()),
    }
}

fn print_term(t: &Term, s: &mut String) {
    let call = |s: &mut String, name: &str, a: &Term, b: &Term| {
        s.push_str(name);
        s.push('(');
        print_term(a, s);
        s.push_str(", ");
        print_term(b, s);
        s.push(')');
    };
    match t {
        Term::Const(v) => print_value(v, s),
        Term::Column(i) => s.push_str(&format!("#{i}")),
        Term::Named(n) => s.push_str(n),
        Term::Arith(op, a, b) => {
            s.push('(');
            print_term(a, s);
            s.push(' ');
            s.push_str(op.symbol());
            s.push(' ');
            print_term(b, s);
            s.push(')');
        }
        Term::Times(a, b) => call(s, "otimes", a, b),
        Term::Monus(a, b) => call(s, "ominus", a, b),
        Term::Tensor(a, b) => call(s, "tensor", a, b),
    }
}

fn print_pred(p: &Predicate, s: &mut String) {
    match p {
        Predicate::True => s.push_str("true"),
        Predicate::False => s.push_str("false"),
        Predicate::Cmp(op, a, b) => {
            print_term(a, s);
            s.push(' ');
            s.push_str(op.symbol());
            s.push(' ');
            print_term(b, s);
        }
        Predicate::And(a, b) | Predicate::Or(a, b) => {
            s.push('(');
            print_pred(a, s);
            s.push_str(if matches!(p, Predicate::And(..)) {
                " and "
            } else {
                " or "
            });
            print_pred(b, s);
            s.push(')');
        }
        Predicate::Not(a) => {
            s.push_str("not ");
            print_pred(a, s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn parses_q_city() {
        let ast = parse("dedup(project[#4](join[#4=#8 and #1<#5](Personnel, Personnel)))").unwrap();
        assert_eq!(ast.root, q_city());
        assert_eq!(parse(&print(&ast)).unwrap(), ast);
    }

    #[test]
    fn unclosed_bracket_is_positioned() {
        let e = parse("project[#1(").unwrap_err();
        assert_eq!((e.line, e.column), (1, 11));
    }

    #[test]
    fn setunion_desugars() {
        let ast = parse("setunion(R, S)").unwrap();
        assert_eq!(
            ast.root,
            Query::dedup(Query::sum(Query::relation("R"), Query::relation("S")))
        );
    }

    #[test]
    fn literals_and_aggregates_round_trip() {
        let text = "agg[group #1; sum((#2 * -3)) as total, max(#3)](select[(not #4 = 'O''Neil' or #5 >= date'2020-01-02')](relation select))";
        let ast = parse(text).unwrap();
        assert_eq!(print(&ast), text);
        let real = parse("project[1.5e-7, (#1 || 'x')](R)").unwrap();
        assert_eq!(parse(&print(&real)).unwrap(), real);
    }

    #[test]
    fn parenthesized_predicates_and_terms() {
        let a = parse("select[(#1 + 2) = #3 and (#1 = 1 or #2 = 2)](R)").unwrap();
        let b = parse("select[((#1 + 2) = #3 and (#1 = 1 or #2 = 2))](R)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn annotated_marker_round_trips() {
        let ast = parse("annotated project[#1, otimes(#2, #4)](times(R, S))").unwrap();
        assert!(ast.annotated);
        assert_eq!(parse(&print(&ast)).unwrap(), ast);
    }
}
