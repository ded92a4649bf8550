//! Boolean functions over named variables, kept as shared expression DAGs.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use super::Token;

/// Maximum number of variables [`BoolFn::equivalent`] will enumerate.
pub const MAX_EQUIVALENCE_VARS: usize = 20;

/// A Boolean function, represented by a hash-carrying expression node.
///
/// Equality is structural (with a pointer fast path). Use
/// [`BoolFn::equivalent`] for semantic comparison.
#[derive(Clone)]
pub struct BoolFn(Arc<Node>);

struct Node {
    hash: u64,
    expr: BoolExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoolExpr {
    False,
    True,
    Var(Token),
    And(Vec<BoolFn>),
    Or(Vec<BoolFn>),
    Not(BoolFn),
}

impl BoolFn {
    fn make(expr: BoolExpr) -> BoolFn {
        let mut h = DefaultHasher::new();
        expr.hash(&mut h);
        BoolFn(Arc::new(Node {
            hash: h.finish(),
            expr,
        }))
    }

    pub fn constant(b: bool) -> BoolFn {
        BoolFn::make(if b { BoolExpr::True } else { BoolExpr::False })
    }

    pub fn var(name: impl Into<Token>) -> BoolFn {
        BoolFn::make(BoolExpr::Var(name.into()))
    }

    pub fn expr(&self) -> &BoolExpr {
        &self.0.expr
    }

    pub fn is_const(&self, b: bool) -> bool {
        matches!(
            (&self.0.expr, b),
            (BoolExpr::True, true) | (BoolExpr::False, false)
        )
    }

    /// Conjunction with constant folding.
    pub fn and(items: impl IntoIterator<Item = BoolFn>) -> BoolFn {
        let mut kept: Vec<BoolFn> = Vec::new();
        for f in items {
            if f.is_const(false) {
                return BoolFn::constant(false);
            }
            if f.is_const(true) || kept.iter().any(|k| Arc::ptr_eq(&k.0, &f.0)) {
                continue;
            }
            kept.push(f);
        }
        match kept.len() {
            0 => BoolFn::constant(true),
            1 => kept.pop().unwrap(),
            _ => BoolFn::make(BoolExpr::And(kept)),
        }
    }

    /// Disjunction with constant folding.
    pub fn or(items: impl IntoIterator<Item = BoolFn>) -> BoolFn {
        let mut kept: Vec<BoolFn> = Vec::new();
        for f in items {
            if f.is_const(true) {
                return BoolFn::constant(true);
            }
            if f.is_const(false) || kept.iter().any(|k| Arc::ptr_eq(&k.0, &f.0)) {
                continue;
            }
            kept.push(f);
        }
        match kept.len() {
            0 => BoolFn::constant(false),
            1 => kept.pop().unwrap(),
            _ => BoolFn::make(BoolExpr::Or(kept)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: BoolFn) -> BoolFn {
        match &f.0.expr {
            BoolExpr::True => BoolFn::constant(false),
            BoolExpr::False => BoolFn::constant(true),
            BoolExpr::Not(inner) => inner.clone(),
            _ => BoolFn::make(BoolExpr::Not(f)),
        }
    }

    /// Variables occurring in the expression.
    pub fn vars(&self) -> BTreeSet<Token> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(f) = stack.pop() {
            if !seen.insert(Arc::as_ptr(&f.0)) {
                continue;
            }
            match &f.0.expr {
                BoolExpr::Var(v) => {
                    out.insert(v.clone());
                }
                BoolExpr::And(cs) | BoolExpr::Or(cs) => stack.extend(cs.iter()),
                BoolExpr::Not(c) => stack.push(c),
                BoolExpr::True | BoolExpr::False => {}
            }
        }
        out
    }

    /// Evaluates under a valuation; unmapped variables read as false.
    pub fn eval(&self, valuation: &dyn Fn(&str) -> bool) -> bool {
        let mut memo = HashMap::new();
        self.eval_memo(valuation, &mut memo)
    }

    fn eval_memo(
        &self,
        valuation: &dyn Fn(&str) -> bool,
        memo: &mut HashMap<*const Node, bool>,
    ) -> bool {
        let key = Arc::as_ptr(&self.0);
        if let Some(&b) = memo.get(&key) {
            return b;
        }
        let b = match &self.0.expr {
            BoolExpr::True => true,
            BoolExpr::False => false,
            BoolExpr::Var(v) => valuation(v),
            BoolExpr::And(cs) => cs.iter().all(|c| c.eval_memo(valuation, memo)),
            BoolExpr::Or(cs) => cs.iter().any(|c| c.eval_memo(valuation, memo)),
            BoolExpr::Not(c) => !c.eval_memo(valuation, memo),
        };
        memo.insert(key, b);
        b
    }

    /// Semantic equality by enumerating all valuations of the joint variables.
    ///
    /// Panics when more than [`MAX_EQUIVALENCE_VARS`] variables are involved.
    pub fn equivalent(&self, other: &BoolFn) -> bool {
        if self == other {
            return true;
        }
        let vars: Vec<Token> = self.vars().union(&other.vars()).cloned().collect();
        assert!(
            vars.len() <= MAX_EQUIVALENCE_VARS,
            "too many variables for exhaustive equivalence check"
        );
        (0u64..1 << vars.len()).all(|mask| {
            let val = |name: &str| {
                vars.iter()
                    .position(|v| &**v == name)
                    .is_some_and(|i| mask >> i & 1 == 1)
            };
            self.eval(&val) == other.eval(&val)
        })
    }

    pub(crate) fn node_ptr(&self) -> *const () {
        Arc::as_ptr(&self.0) as *const ()
    }
}

impl PartialEq for BoolFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.hash == other.0.hash && self.0.expr == other.0.expr)
    }
}

impl Eq for BoolFn {}

impl Hash for BoolFn {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for BoolFn {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BoolFn {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        self.0
            .hash
            .cmp(&other.0.hash)
            .then_with(|| self.0.expr.cmp(&other.0.expr))
    }
}

impl fmt::Debug for BoolFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for BoolFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, cs: &[BoolFn], op: &str) -> fmt::Result {
            f.write_str("(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(")")
        }
        match &self.0.expr {
            BoolExpr::True => f.write_str("⊤"),
            BoolExpr::False => f.write_str("⊥"),
            BoolExpr::Var(v) => f.write_str(v),
            BoolExpr::And(cs) => join(f, cs, "∧"),
            BoolExpr::Or(cs) => join(f, cs, "∨"),
            BoolExpr::Not(c) => write!(f, "¬{c}"),
        }
    }
}
