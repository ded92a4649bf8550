//! Min-fill tree decompositions of circuits and weighted counting over them.
//!
//! The graph has one vertex per reachable node and an edge between each gate
//! and each of its children. Gates are not moralized: the counting pass keeps,
//! for every gate in a bag, an accumulator bit holding the partial ∧ or ∨ of
//! the children already absorbed, so a gate and its children never have to
//! share a single bag.

use std::collections::{BTreeSet, HashMap};

use super::{BoolCircuit, BoolNode, NodeId, ProbMap, ProbabilityError};

/// Default width cap.
pub const DEFAULT_WIDTH_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    /// Each bag lists circuit node ids in increasing order.
    pub bags: Vec<Vec<NodeId>>,
    /// Parent bag of each bag; `None` for the root.
    pub parent: Vec<Option<usize>>,
}

impl TreeDecomposition {
    pub fn width(&self) -> usize {
        self.bags
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(1)
            .saturating_sub(1)
    }

    pub fn root(&self) -> Option<usize> {
        self.parent.iter().position(Option::is_none)
    }

    /// Checks that the bags form a single tree, cover every vertex and edge of
    /// the circuit graph, and that each vertex occupies a connected subtree.
    pub fn validate(&self, circuit: &BoolCircuit) -> Result<(), ProbabilityError> {
        let bad = |s: String| Err(ProbabilityError::InvalidDecomposition(s));
        let n = self.bags.len();
        if n == 0 || self.parent.len() != n {
            return bad("no bags".into());
        }
        if self.parent.iter().filter(|p| p.is_none()).count() != 1 {
            return bad("expected exactly one root bag".into());
        }
        for (b, p) in self.parent.iter().enumerate() {
            // Walk to the root; a cycle would exceed n steps.
            let (mut cur, mut steps) = (*p, 0);
            while let Some(c) = cur {
                if c >= n || steps > n {
                    return bad(format!("bag {b} does not reach the root"));
                }
                cur = self.parent[c];
                steps += 1;
            }
        }
        let sets: Vec<BTreeSet<NodeId>> = self
            .bags
            .iter()
            .map(|b| b.iter().copied().collect())
            .collect();
        let vertices = circuit.reachable();
        for &v in &vertices {
            let holding: Vec<usize> = (0..n).filter(|&b| sets[b].contains(&v)).collect();
            if holding.is_empty() {
                return bad(format!("node {v} is in no bag"));
            }
            // Connected iff exactly one holding bag has a parent outside the set.
            let tops = holding
                .iter()
                .filter(|&&b| self.parent[b].is_none_or(|p| !sets[p].contains(&v)))
                .count();
            if tops != 1 {
                return bad(format!("bags holding node {v} are not connected"));
            }
            for &c in circuit.node(v).children() {
                if !sets.iter().any(|s| s.contains(&v) && s.contains(&c)) {
                    return bad(format!("edge {v}-{c} is not covered"));
                }
            }
        }
        Ok(())
    }
}

/// Min-fill elimination over the circuit graph. Ties go to the lowest node
/// id. Fails as soon as a bag would exceed `cap + 1` vertices.
pub fn tree_decompose(
    circuit: &BoolCircuit,
    cap: usize,
) -> Result<TreeDecomposition, ProbabilityError> {
    let vertices = circuit.reachable();
    let mut adj: HashMap<NodeId, BTreeSet<NodeId>> =
        vertices.iter().map(|&v| (v, BTreeSet::new())).collect();
    for &v in &vertices {
        for &c in circuit.node(v).children() {
            adj.get_mut(&v).unwrap().insert(c);
            adj.get_mut(&c).unwrap().insert(v);
        }
    }
    let mut remaining: BTreeSet<NodeId> = vertices.iter().copied().collect();
    let mut order = Vec::with_capacity(vertices.len());
    let mut bags = Vec::with_capacity(vertices.len());
    while !remaining.is_empty() {
        let mut best: Option<(usize, NodeId)> = None;
        for &v in &remaining {
            let nb: Vec<NodeId> = adj[&v].iter().copied().collect();
            let mut fill = 0;
            for (i, a) in nb.iter().enumerate() {
                for b in &nb[i + 1..] {
                    if !adj[a].contains(b) {
                        fill += 1;
                    }
                }
            }
            if best.is_none_or(|(f, _)| fill < f) {
                best = Some((fill, v));
                if fill == 0 {
                    break;
                }
            }
        }
        let (_, v) = best.expect("remaining is non-empty");
        let nb: Vec<NodeId> = adj[&v].iter().copied().collect();
        if nb.len() > cap {
            return Err(ProbabilityError::TooWide {
                width: nb.len(),
                cap,
            });
        }
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                adj.get_mut(&a).unwrap().insert(b);
                adj.get_mut(&b).unwrap().insert(a);
            }
            adj.get_mut(&a).unwrap().remove(&v);
        }
        adj.remove(&v);
        remaining.remove(&v);
        let mut bag = nb;
        bag.push(v);
        bag.sort_unstable();
        order.push(v);
        bags.push(bag);
    }
    // The parent of v's bag is the bag of its earliest-eliminated neighbour.
    let step: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let last = order.len() - 1;
    let parent = order
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == last {
                return None;
            }
            let next = bags[i].iter().filter(|&&u| u != v).map(|u| step[u]).min();
            // A disconnected piece hangs off the final bag.
            Some(next.unwrap_or(last))
        })
        .collect();
    Ok(TreeDecomposition { bags, parent })
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Var,
    And,
    Or,
    Not,
}

/// Table keyed by `val | acc << 32`, bit i standing for the i-th vertex of
/// the bag it is laid out against.
type Table = HashMap<u64, f64>;

/// Weighted counting by message passing from the leaves of the decomposition
/// to its root.
pub fn prob_treedec(
    circuit: &BoolCircuit,
    td: &TreeDecomposition,
    probs: &ProbMap,
) -> Result<f64, ProbabilityError> {
    if let Some(b) = circuit.as_const() {
        return Ok(if b { 1.0 } else { 0.0 });
    }
    td.validate(circuit)?;
    if td.bags.iter().any(|b| b.len() > 31) {
        return Err(ProbabilityError::TooWide {
            width: td.width(),
            cap: 30,
        });
    }
    let root = circuit.root();
    let mut kind = HashMap::new();
    let mut weight = HashMap::new();
    for n in circuit.reachable() {
        let k = match circuit.node(n) {
            BoolNode::Var(v) => {
                weight.insert(n, probs.require(v)?);
                Kind::Var
            }
            BoolNode::And(_) => Kind::And,
            BoolNode::Or(_) => Kind::Or,
            BoolNode::Not(_) => Kind::Not,
            BoolNode::Const(_) => unreachable!("constants fold away below a gate"),
        };
        kind.insert(n, k);
    }

    // Each edge is absorbed once, in the first bag holding both ends.
    let mut edges: Vec<Vec<(NodeId, NodeId)>> = vec![Vec::new(); td.bags.len()];
    for &g in kind.keys() {
        for &c in circuit.node(g).children() {
            let b = td
                .bags
                .iter()
                .position(|bag| bag.contains(&g) && bag.contains(&c))
                .expect("validated");
            edges[b].push((g, c));
        }
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); td.bags.len()];
    for (b, p) in td.parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(b);
        }
    }
    let top = td.root().expect("validated");
    let mut post = Vec::with_capacity(td.bags.len());
    let mut stack = vec![(top, false)];
    while let Some((b, done)) = stack.pop() {
        if done {
            post.push(b);
        } else {
            stack.push((b, true));
            stack.extend(children[b].iter().map(|&c| (c, false)));
        }
    }

    let mut messages: Vec<Option<Table>> = vec![None; td.bags.len()];
    let mut total = 0.0;
    for b in post {
        let bag = &td.bags[b];
        let pos: HashMap<NodeId, usize> = bag.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut or_mask = 0u64;
        let mut and_mask = 0u64;
        for (i, v) in bag.iter().enumerate() {
            match kind[v] {
                Kind::Or => or_mask |= 1 << i,
                Kind::And | Kind::Not => and_mask |= 1 << i,
                Kind::Var => {}
            }
        }

        let mut table = Table::new();
        for val in 0u64..1 << bag.len() {
            let mut acc = and_mask;
            for &(g, c) in &edges[b] {
                let (gi, ci) = (pos[&g], pos[&c]);
                let mut bit = val >> ci & 1 == 1;
                if kind[&g] == Kind::Not {
                    bit = !bit;
                }
                let cur = acc >> gi & 1 == 1;
                let next = if kind[&g] == Kind::Or {
                    cur || bit
                } else {
                    cur && bit
                };
                acc = acc & !(1 << gi) | u64::from(next) << gi;
            }
            table.insert(val | acc << 32, 1.0);
        }

        for &c in &children[b] {
            let msg = messages[c].take().expect("child processed first");
            let shared: u64 = td.bags[c]
                .iter()
                .filter_map(|v| pos.get(v))
                .fold(0, |m, &i| m | 1 << i);
            let mut by_val: HashMap<u64, Vec<(u64, f64)>> = HashMap::new();
            for (k, w) in msg {
                by_val
                    .entry(k & 0xffff_ffff)
                    .or_default()
                    .push((k >> 32, w));
            }
            let mut next = Table::new();
            for (k, w) in table {
                let (val, acc) = (k & 0xffff_ffff, k >> 32);
                let Some(list) = by_val.get(&(val & shared)) else {
                    continue;
                };
                for &(macc, mw) in list {
                    let merged =
                        ((acc | macc) & or_mask | (acc & macc) & and_mask) & shared | acc & !shared;
                    *next.entry(val | merged << 32).or_insert(0.0) += w * mw;
                }
            }
            table = next;
        }

        // Forget the vertices missing from the parent bag.
        let parent_pos: HashMap<NodeId, usize> = match td.parent[b] {
            Some(p) => td.bags[p]
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, i))
                .collect(),
            None => HashMap::new(),
        };
        let mut out = Table::new();
        'state: for (k, mut w) in table {
            let (val, acc) = (k & 0xffff_ffff, k >> 32);
            let mut key_val = 0u64;
            let mut key_acc = 0u64;
            for (i, v) in bag.iter().enumerate() {
                let bit = val >> i & 1 == 1;
                if let Some(&j) = parent_pos.get(v) {
                    key_val |= u64::from(bit) << j;
                    key_acc |= (acc >> i & 1) << j;
                    continue;
                }
                match kind[v] {
                    Kind::Var => w *= if bit { weight[v] } else { 1.0 - weight[v] },
                    _ if (acc >> i & 1 == 1) != bit => continue 'state,
                    _ => {}
                }
                if *v == root && !bit {
                    continue 'state;
                }
            }
            if w != 0.0 {
                *out.entry(key_val | key_acc << 32).or_insert(0.0) += w;
            }
        }
        if td.parent[b].is_none() {
            total = out.values().sum();
        } else {
            messages[b] = Some(out);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_has_width_one() {
        let mut c = BoolCircuit::new();
        let x = c.var("x");
        let y = c.var("y");
        let z = c.var("z");
        let a = c.and(vec![x, y]);
        let r = c.or(vec![a, z]);
        c.set_root(r);
        let td = tree_decompose(&c, DEFAULT_WIDTH_CAP).unwrap();
        assert_eq!(td.width(), 1);
        td.validate(&c).unwrap();
        let mut p = ProbMap::new();
        for v in ["x", "y", "z"] {
            p.insert(v, 0.5).unwrap();
        }
        let got = prob_treedec(&c, &td, &p).unwrap();
        assert!((got - (1.0 - 0.75 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn clique_is_too_wide() {
        // Node i has every earlier node as a child: the graph is K13.
        let mut c = BoolCircuit::new();
        let mut nodes = vec![c.var("v0")];
        for i in 1..13 {
            let v = c.var(format!("v{i}"));
            let mut kids = nodes.clone();
            kids.push(v);
            nodes.push(if i % 2 == 0 { c.and(kids) } else { c.or(kids) });
        }
        c.set_root(*nodes.last().unwrap());
        assert!(matches!(
            tree_decompose(&c, 10),
            Err(ProbabilityError::TooWide { .. })
        ));
    }

    #[test]
    fn invalid_decomposition_is_rejected() {
        let mut c = BoolCircuit::new();
        let x = c.var("x");
        let y = c.var("y");
        let r = c.and(vec![x, y]);
        c.set_root(r);
        let td = TreeDecomposition {
            bags: vec![vec![x, r]],
            parent: vec![None],
        };
        assert!(matches!(
            prob_treedec(&c, &td, &ProbMap::new()),
            Err(ProbabilityError::InvalidDecomposition(_))
        ));
    }
}
