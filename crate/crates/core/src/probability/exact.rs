//! Possible-worlds enumeration and read-once evaluation.

use super::{BoolCircuit, BoolNode, ProbMap, ProbabilityError};

/// Largest variable count [`prob_enumerate`] accepts.
pub const MAX_ENUMERATION_VARS: usize = 25;

/// Sums `Pr(ν)` over every satisfying valuation.
pub fn prob_enumerate(circuit: &BoolCircuit, probs: &ProbMap) -> Result<f64, ProbabilityError> {
    if let Some(b) = circuit.as_const() {
        return Ok(if b { 1.0 } else { 0.0 });
    }
    let (order, pos, vars) = circuit.var_positions();
    if vars.len() > MAX_ENUMERATION_VARS {
        return Err(ProbabilityError::TooManyVariables {
            count: vars.len(),
            max: MAX_ENUMERATION_VARS,
        });
    }
    let p = vars
        .iter()
        .map(|v| probs.require(v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = 0.0;
    let mut valuation = vec![false; vars.len()];
    for mask in 0u64..1 << vars.len() {
        let mut w = 1.0;
        for (i, slot) in valuation.iter_mut().enumerate() {
            *slot = mask >> i & 1 == 1;
            w *= if *slot { p[i] } else { 1.0 - p[i] };
        }
        if w != 0.0 && circuit.eval_indexed(&order, &pos, &valuation) {
            total += w;
        }
    }
    Ok(total)
}

/// Whether the reachable circuit is a tree: no node has two parents. With
/// hash-consed variables this also means each variable occurs once.
pub fn is_read_once(circuit: &BoolCircuit) -> bool {
    let mut parents = vec![0u32; circuit.len()];
    for n in circuit.reachable() {
        for &c in circuit.node(n).children() {
            parents[c] += 1;
            if parents[c] > 1 {
                return false;
            }
        }
    }
    true
}

/// Compositional evaluation of a read-once circuit.
pub fn prob_read_once(circuit: &BoolCircuit, probs: &ProbMap) -> Result<f64, ProbabilityError> {
    if !is_read_once(circuit) {
        return Err(ProbabilityError::NotReadOnce);
    }
    let order = circuit.reachable();
    let mut p = vec![0.0; circuit.len()];
    for n in order {
        p[n] = match circuit.node(n) {
            BoolNode::Const(b) => f64::from(u8::from(*b)),
            BoolNode::Var(v) => probs.require(v)?,
            BoolNode::And(cs) => cs.iter().map(|&c| p[c]).product(),
            BoolNode::Or(cs) => 1.0 - cs.iter().map(|&c| 1.0 - p[c]).product::<f64>(),
            BoolNode::Not(c) => 1.0 - p[*c],
        };
    }
    Ok(p[circuit.root()])
}
