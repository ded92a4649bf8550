//! Hash-consed Boolean circuits with constant folding.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::circuit::{CircuitStore, GateId, GateKind};
use crate::semiring::{BoolExpr, BoolFn, Token};

use super::ProbabilityError;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolNode {
    Const(bool),
    Var(Token),
    And(Vec<NodeId>),
    Or(Vec<NodeId>),
    Not(NodeId),
}

impl BoolNode {
    pub fn children(&self) -> &[NodeId] {
        match self {
            BoolNode::And(cs) | BoolNode::Or(cs) => cs,
            BoolNode::Not(c) => std::slice::from_ref(c),
            BoolNode::Const(_) | BoolNode::Var(_) => &[],
        }
    }
}

/// A Boolean circuit. Nodes are stored children-first, so index order is a
/// topological order. Identical nodes are shared.
#[derive(Debug, Clone, Default)]
pub struct BoolCircuit {
    nodes: Vec<BoolNode>,
    index: HashMap<BoolNode, NodeId>,
    root: Option<NodeId>,
}

impl BoolCircuit {
    pub fn new() -> Self {
        BoolCircuit::default()
    }

    fn intern(&mut self, node: BoolNode) -> NodeId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node.clone());
        self.index.insert(node, id);
        id
    }

    pub fn constant(&mut self, b: bool) -> NodeId {
        self.intern(BoolNode::Const(b))
    }

    pub fn var(&mut self, name: impl Into<Token>) -> NodeId {
        self.intern(BoolNode::Var(name.into()))
    }

    fn nary(&mut self, children: Vec<NodeId>, is_and: bool) -> NodeId {
        let mut kept = Vec::with_capacity(children.len());
        for c in children {
            match self.nodes[c] {
                BoolNode::Const(b) if b == is_and => {}
                BoolNode::Const(_) => return self.constant(!is_and),
                _ => kept.push(c),
            }
        }
        kept.sort_unstable();
        kept.dedup();
        match kept.len() {
            0 => self.constant(is_and),
            1 => kept[0],
            _ if is_and => self.intern(BoolNode::And(kept)),
            _ => self.intern(BoolNode::Or(kept)),
        }
    }

    pub fn and(&mut self, children: Vec<NodeId>) -> NodeId {
        self.nary(children, true)
    }

    pub fn or(&mut self, children: Vec<NodeId>) -> NodeId {
        self.nary(children, false)
    }

    pub fn not(&mut self, c: NodeId) -> NodeId {
        match self.nodes[c] {
            BoolNode::Const(b) => self.constant(!b),
            BoolNode::Not(inner) => inner,
            _ => self.intern(BoolNode::Not(c)),
        }
    }

    pub fn set_root(&mut self, root: NodeId) {
        self.root = Some(root);
    }

    /// The root node. Panics if none was set.
    pub fn root(&self) -> NodeId {
        self.root.expect("circuit root not set")
    }

    pub fn node(&self, id: NodeId) -> &BoolNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes reachable from the root, in increasing (topological) order.
    pub fn reachable(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root()];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.nodes[n].children().iter().copied());
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }

    /// Variables reachable from the root, sorted.
    pub fn vars(&self) -> Vec<Token> {
        let set: BTreeSet<Token> = self
            .reachable()
            .into_iter()
            .filter_map(|n| match &self.nodes[n] {
                BoolNode::Var(v) => Some(v.clone()),
                _ => None,
            })
            .collect();
        set.into_iter().collect()
    }

    /// Root constant, if the circuit folded to one.
    pub fn as_const(&self) -> Option<bool> {
        match self.nodes[self.root()] {
            BoolNode::Const(b) => Some(b),
            _ => None,
        }
    }

    /// Evaluates under `valuation`, indexed like `vars`.
    pub fn eval_indexed(
        &self,
        order: &[NodeId],
        var_pos: &HashMap<NodeId, usize>,
        valuation: &[bool],
    ) -> bool {
        let mut val = vec![false; self.nodes.len()];
        for &n in order {
            val[n] = match &self.nodes[n] {
                BoolNode::Const(b) => *b,
                BoolNode::Var(_) => valuation[var_pos[&n]],
                BoolNode::And(cs) => cs.iter().all(|&c| val[c]),
                BoolNode::Or(cs) => cs.iter().any(|&c| val[c]),
                BoolNode::Not(c) => !val[*c],
            };
        }
        val[self.root()]
    }

    /// Evaluates with variables looked up by name; missing ones are false.
    pub fn eval(&self, valuation: &dyn Fn(&str) -> bool) -> bool {
        let order = self.reachable();
        let mut val = vec![false; self.nodes.len()];
        for &n in &order {
            val[n] = match &self.nodes[n] {
                BoolNode::Const(b) => *b,
                BoolNode::Var(v) => valuation(v),
                BoolNode::And(cs) => cs.iter().all(|&c| val[c]),
                BoolNode::Or(cs) => cs.iter().any(|&c| val[c]),
                BoolNode::Not(c) => !val[*c],
            };
        }
        val[self.root()]
    }

    /// Positions of variable nodes in `vars()` order.
    pub(crate) fn var_positions(&self) -> (Vec<NodeId>, HashMap<NodeId, usize>, Vec<Token>) {
        let order = self.reachable();
        let vars = self.vars();
        let lookup: BTreeMap<&Token, usize> =
            vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let pos = order
            .iter()
            .filter_map(|&n| match &self.nodes[n] {
                BoolNode::Var(v) => Some((n, lookup[v])),
                _ => None,
            })
            .collect();
        (order, pos, vars)
    }

    /// Builds a circuit for a Boolean function, sharing common subterms.
    pub fn from_bool_fn(f: &BoolFn) -> BoolCircuit {
        fn go(c: &mut BoolCircuit, f: &BoolFn, memo: &mut HashMap<*const (), NodeId>) -> NodeId {
            if let Some(&n) = memo.get(&f.node_ptr()) {
                return n;
            }
            let n = match f.expr() {
                BoolExpr::True => c.constant(true),
                BoolExpr::False => c.constant(false),
                BoolExpr::Var(v) => c.var(v.clone()),
                BoolExpr::And(cs) => {
                    let kids = cs.iter().map(|x| go(c, x, memo)).collect();
                    c.and(kids)
                }
                BoolExpr::Or(cs) => {
                    let kids = cs.iter().map(|x| go(c, x, memo)).collect();
                    c.or(kids)
                }
                BoolExpr::Not(x) => {
                    let k = go(c, x, memo);
                    c.not(k)
                }
            };
            memo.insert(f.node_ptr(), n);
            n
        }
        let mut c = BoolCircuit::new();
        let root = go(&mut c, f, &mut HashMap::new());
        c.set_root(root);
        c
    }
}

impl fmt::Display for BoolCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(c: &BoolCircuit, n: NodeId, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let join = |f: &mut fmt::Formatter<'_>, cs: &[NodeId], op: &str| -> fmt::Result {
                f.write_str("(")?;
                for (i, &k) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " {op} ")?;
                    }
                    go(c, k, f)?;
                }
                f.write_str(")")
            };
            match &c.nodes[n] {
                BoolNode::Const(true) => f.write_str("⊤"),
                BoolNode::Const(false) => f.write_str("⊥"),
                BoolNode::Var(v) => f.write_str(v),
                BoolNode::And(cs) => join(f, cs, "∧"),
                BoolNode::Or(cs) => join(f, cs, "∨"),
                BoolNode::Not(k) => {
                    f.write_str("¬")?;
                    go(c, *k, f)
                }
            }
        }
        go(self, self.root(), f)
    }
}

/// Boolean provenance of a gate: ⊕ ↦ ∨, ⊗ ↦ ∧, `a ⊖ b` ↦ `a ∧ ¬b`, δ ↦
/// identity. Input gates become variables named by `token`.
pub fn to_bool_circuit(
    store: &CircuitStore,
    root: GateId,
    token: &dyn Fn(GateId) -> Token,
) -> Result<BoolCircuit, ProbabilityError> {
    let mut c = BoolCircuit::new();
    let mut map: HashMap<GateId, NodeId> = HashMap::new();
    for id in store.reachable(root)? {
        let rec = store.get(id)?;
        let kids: Vec<NodeId> = rec.children.iter().map(|k| map[k]).collect();
        let n = match rec.kind {
            GateKind::Input => c.var(token(id)),
            GateKind::Zero => c.constant(false),
            GateKind::One => c.constant(true),
            GateKind::Plus => c.or(kids),
            GateKind::Times => c.and(kids),
            GateKind::Monus => {
                let neg = c.not(kids[1]);
                c.and(vec![kids[0], neg])
            }
            GateKind::Delta => kids[0],
            GateKind::Value | GateKind::Semimodule | GateKind::Aggregate => {
                return Err(ProbabilityError::AggregateInProbability)
            }
        };
        map.insert(id, n);
    }
    c.set_root(map[&root]);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_and_sharing() {
        let mut c = BoolCircuit::new();
        let x = c.var("x");
        let t = c.constant(true);
        let f = c.constant(false);
        assert_eq!(c.and(vec![x, t]), x);
        assert_eq!(c.and(vec![x, f]), f);
        assert_eq!(c.or(vec![x, t]), t);
        let nx = c.not(x);
        assert_eq!(c.not(nx), x);
        let y = c.var("y");
        assert_eq!(c.and(vec![x, y]), c.and(vec![y, x, x]));
    }

    #[test]
    fn monus_gate_becomes_and_not() {
        let mut s = CircuitStore::in_memory_seeded(9);
        let a = s.create_input().unwrap();
        let b = s.create_input().unwrap();
        let m = s.monus(a, b).unwrap();
        let name = |g: GateId| -> Token {
            if g == a {
                "a".into()
            } else {
                "b".into()
            }
        };
        let c = to_bool_circuit(&s, m, &name).unwrap();
        assert_eq!(c.to_string(), "(a ∧ ¬b)");
        let leaf = to_bool_circuit(&s, a, &name).unwrap();
        assert_eq!(leaf.node(leaf.root()), &BoolNode::Var("a".into()));
    }
}
