//! Tseitin encoding and an exact weighted model counter.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::semiring::Token;

use super::{BoolCircuit, BoolNode, NodeId, ProbMap, ProbabilityError};

/// A literal: variable index (from 1) with sign.
pub type Lit = i32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CnfVar {
    Original(Token),
    /// Auxiliary variable standing for the given circuit node.
    Auxiliary(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    /// `vars[i]` describes variable `i + 1`.
    pub vars: Vec<CnfVar>,
    pub clauses: Vec<Vec<Lit>>,
    /// Literal asserted by the root unit clause, if any.
    pub root: Option<Lit>,
}

impl CnfFormula {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn originals(&self) -> impl Iterator<Item = (usize, &Token)> {
        self.vars.iter().enumerate().filter_map(|(i, v)| match v {
            CnfVar::Original(t) => Some((i + 1, t)),
            CnfVar::Auxiliary(_) => None,
        })
    }

    /// Whether a full assignment (indexed from 1; slot 0 unused) satisfies
    /// every clause.
    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().all(|cl| {
            cl.iter()
                .any(|&l| assignment[l.unsigned_abs() as usize] == (l > 0))
        })
    }
}

impl fmt::Display for CnfFormula {
    /// DIMACS.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p cnf {} {}", self.vars.len(), self.clauses.len())?;
        for cl in &self.clauses {
            for l in cl {
                write!(f, "{l} ")?;
            }
            writeln!(f, "0")?;
        }
        Ok(())
    }
}

/// One auxiliary per internal node, its defining clauses, and a unit clause
/// for the root. Originals take the lowest indices in token order.
pub fn tseitin(circuit: &BoolCircuit) -> CnfFormula {
    let mut vars: Vec<CnfVar> = circuit.vars().into_iter().map(CnfVar::Original).collect();
    let index: BTreeMap<Token, Lit> = vars
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            CnfVar::Original(t) => (t.clone(), i as Lit + 1),
            CnfVar::Auxiliary(_) => unreachable!(),
        })
        .collect();
    let mut lit: HashMap<NodeId, Lit> = HashMap::new();
    let mut clauses = Vec::new();
    let mut root = None;
    for n in circuit.reachable() {
        let l = match circuit.node(n) {
            BoolNode::Const(b) => {
                // Only a constant root survives folding.
                if !*b {
                    clauses.push(Vec::new());
                }
                continue;
            }
            BoolNode::Var(t) => index[t],
            node => {
                vars.push(CnfVar::Auxiliary(n));
                let g = vars.len() as Lit;
                match node {
                    BoolNode::And(cs) => {
                        let mut big = vec![g];
                        for c in cs {
                            clauses.push(vec![-g, lit[c]]);
                            big.push(-lit[c]);
                        }
                        clauses.push(big);
                    }
                    BoolNode::Or(cs) => {
                        let mut big = vec![-g];
                        for c in cs {
                            clauses.push(vec![g, -lit[c]]);
                            big.push(lit[c]);
                        }
                        clauses.push(big);
                    }
                    BoolNode::Not(c) => {
                        clauses.push(vec![g, lit[c]]);
                        clauses.push(vec![-g, -lit[c]]);
                    }
                    _ => unreachable!(),
                }
                g
            }
        };
        lit.insert(n, l);
    }
    if let Some(&r) = lit.get(&circuit.root()) {
        clauses.push(vec![r]);
        root = Some(r);
    }
    CnfFormula {
        vars,
        clauses,
        root,
    }
}

/// Weighted model count with original variables weighted by `probs` and
/// auxiliaries weighted 1 on both polarities. Because each auxiliary is
/// determined by the originals, this equals the circuit's probability.
///
/// DPLL with unit propagation, connected components and a component cache.
/// Exponential in the worst case.
pub fn prob_wmc(cnf: &CnfFormula, probs: &ProbMap) -> Result<f64, ProbabilityError> {
    let mut w = vec![(1.0, 1.0); cnf.vars.len() + 1];
    for (i, t) in cnf.originals() {
        let p = probs.require(t)?;
        w[i] = (p, 1.0 - p);
    }
    let mut counter = Counter {
        w,
        cache: HashMap::new(),
    };
    let all: Vec<u32> = (1..=cnf.vars.len() as u32).collect();
    Ok(counter.count(cnf.clauses.clone(), &all))
}

struct Counter {
    /// (weight of true, weight of false) per variable.
    w: Vec<(f64, f64)>,
    cache: HashMap<Vec<Vec<Lit>>, f64>,
}

impl Counter {
    fn free(&self, v: u32) -> f64 {
        let (a, b) = self.w[v as usize];
        a + b
    }

    /// Count over `scope`, a superset of the variables of `clauses`.
    fn count(&mut self, mut clauses: Vec<Vec<Lit>>, scope: &[u32]) -> f64 {
        let mut assigned: HashMap<u32, bool> = HashMap::new();
        let mut weight = 1.0;
        loop {
            if clauses.iter().any(Vec::is_empty) {
                return 0.0;
            }
            let Some(unit) = clauses.iter().find(|c| c.len() == 1).map(|c| c[0]) else {
                break;
            };
            let v = unit.unsigned_abs();
            assigned.insert(v, unit > 0);
            let (t, f) = self.w[v as usize];
            weight *= if unit > 0 { t } else { f };
            clauses = assign(clauses, unit);
        }
        if weight == 0.0 {
            return 0.0;
        }
        let mut occurs: HashMap<u32, usize> = HashMap::new();
        for c in &clauses {
            for l in c {
                *occurs.entry(l.unsigned_abs()).or_insert(0) += 1;
            }
        }
        for &v in scope {
            if !assigned.contains_key(&v) && !occurs.contains_key(&v) {
                weight *= self.free(v);
            }
        }
        for comp in components(clauses) {
            weight *= self.component(comp);
            if weight == 0.0 {
                return 0.0;
            }
        }
        weight
    }

    fn component(&mut self, mut clauses: Vec<Vec<Lit>>) -> f64 {
        for c in &mut clauses {
            c.sort_unstable();
        }
        clauses.sort();
        if let Some(&hit) = self.cache.get(&clauses) {
            return hit;
        }
        let mut occurs: BTreeMap<u32, usize> = BTreeMap::new();
        for c in &clauses {
            for l in c {
                *occurs.entry(l.unsigned_abs()).or_insert(0) += 1;
            }
        }
        let v = occurs
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&v, _)| v)
            .expect("component has a variable");
        let scope: Vec<u32> = occurs.keys().copied().filter(|&u| u != v).collect();
        let (t, f) = self.w[v as usize];
        let lit = v as Lit;
        let mut total = 0.0;
        if t != 0.0 {
            total += t * self.count(assign(clauses.clone(), lit), &scope);
        }
        if f != 0.0 {
            total += f * self.count(assign(clauses.clone(), -lit), &scope);
        }
        self.cache.insert(clauses, total);
        total
    }
}

/// Sets `lit` true: drops satisfied clauses and the opposite literal.
fn assign(clauses: Vec<Vec<Lit>>, lit: Lit) -> Vec<Vec<Lit>> {
    clauses
        .into_iter()
        .filter(|c| !c.contains(&lit))
        .map(|mut c| {
            c.retain(|&l| l != -lit);
            c
        })
        .collect()
}

/// Splits clauses into groups sharing no variable.
fn components(clauses: Vec<Vec<Lit>>) -> Vec<Vec<Vec<Lit>>> {
    let mut parent: HashMap<u32, u32> = HashMap::new();
    fn find(p: &mut HashMap<u32, u32>, x: u32) -> u32 {
        let up = *p.entry(x).or_insert(x);
        if up == x {
            return x;
        }
        let r = find(p, up);
        p.insert(x, r);
        r
    }
    for c in &clauses {
        let first = c[0].unsigned_abs();
        for l in &c[1..] {
            let (a, b) = (
                find(&mut parent, first),
                find(&mut parent, l.unsigned_abs()),
            );
            if a != b {
                parent.insert(a, b);
            }
        }
    }
    let mut groups: BTreeMap<u32, Vec<Vec<Lit>>> = BTreeMap::new();
    for c in clauses {
        let r = find(&mut parent, c[0].unsigned_abs());
        groups.entry(r).or_default().push(c);
    }
    groups.into_values().collect()
}
