//! Marginal probabilities of Boolean provenance over tuple-independent
//! databases.

mod circuit;
mod exact;
mod treedec;
mod wmc;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::annotated::AnnotatedInstance;
use crate::circuit::{CircuitError, CircuitStore, GateId};
use crate::error::QueryError;
use crate::eval::{eval_query, Instance};
use crate::query::QueryAst;
use crate::relation::Relation;
use crate::semiring::{Element, Token};
use crate::value::Tuple;

pub use circuit::{to_bool_circuit, BoolCircuit, BoolNode, NodeId};
pub use exact::{is_read_once, prob_enumerate, prob_read_once, MAX_ENUMERATION_VARS};
pub use treedec::{prob_treedec, tree_decompose, TreeDecomposition, DEFAULT_WIDTH_CAP};
pub use wmc::{prob_wmc, tseitin, CnfFormula, CnfVar, Lit};

/// Largest token count [`marginal_brute`] accepts.
pub const MAX_BRUTE_TOKENS: usize = 20;

#[derive(Debug, Error)]
pub enum ProbabilityError {
    #[error("circuit is not read-once")]
    NotReadOnce,
    #[error("decomposition width {width} exceeds cap {cap}")]
    TooWide { width: usize, cap: usize },
    #[error("{count} variables exceed the limit of {max}")]
    TooManyVariables { count: usize, max: usize },
    #[error("probability of aggregate values is not supported")]
    AggregateInProbability,
    #[error("no probability for token `{0}`")]
    MissingProbability(Token),
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("invalid tree decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("annotation `{0}` is not a Boolean function")]
    NotBoolean(String),
    #[error("sample count must be positive")]
    NoSamples,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Independent probabilities of Boolean variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbMap(BTreeMap<Token, f64>);

impl ProbMap {
    pub fn new() -> Self {
        ProbMap::default()
    }

    pub fn insert(&mut self, token: impl Into<Token>, p: f64) -> Result<(), ProbabilityError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ProbabilityError::BadProbability(p));
        }
        self.0.insert(token.into(), p);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<f64> {
        self.0.get(token).copied()
    }

    pub fn require(&self, token: &str) -> Result<f64, ProbabilityError> {
        self.get(token)
            .ok_or_else(|| ProbabilityError::MissingProbability(token.into()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Token, f64)> + '_ {
        self.0.iter().map(|(k, &v)| (k, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Mean of `samples` valuations drawn independently from `probs`. Uses
/// ChaCha8 seeded with `seed`, drawing one `f64` per variable in token order.
pub fn prob_monte_carlo(
    circuit: &BoolCircuit,
    probs: &ProbMap,
    samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate, ProbabilityError> {
    if samples == 0 {
        return Err(ProbabilityError::NoSamples);
    }
    let (order, pos, vars) = circuit.var_positions();
    let p = vars
        .iter()
        .map(|v| probs.require(v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut valuation = vec![false; vars.len()];
    let mut hits = 0u64;
    for _ in 0..samples {
        for (slot, &pi) in valuation.iter_mut().zip(&p) {
            *slot = rng.gen::<f64>() < pi;
        }
        if circuit.eval_indexed(&order, &pos, &valuation) {
            hits += 1;
        }
    }
    Ok(MonteCarloEstimate {
        estimate: hits as f64 / samples as f64,
        samples,
        seed,
    })
}

/// Samples needed for additive error `epsilon` with the given confidence,
/// by Hoeffding's inequality.
pub fn hoeffding_samples(epsilon: f64, confidence: f64) -> u64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * epsilon * epsilon)).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    ReadOnce,
    TreeDec,
    Wmc,
    Enumerate,
    MonteCarlo { samples: u64, seed: u64 },
}

impl Method {
    pub const DEFAULT_SAMPLES: u64 = 100_000;

    pub fn name(&self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::ReadOnce => "readonce",
            Method::TreeDec => "treedec",
            Method::Wmc => "wmc",
            Method::Enumerate => "enumerate",
            Method::MonteCarlo { .. } => "montecarlo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "auto" => Method::Auto,
            "readonce" => Method::ReadOnce,
            "treedec" => Method::TreeDec,
            "wmc" => Method::Wmc,
            "enumerate" => Method::Enumerate,
            "montecarlo" => Method::MonteCarlo {
                samples: Method::DEFAULT_SAMPLES,
                seed: 0,
            },
            _ => return Err(format!("unknown method `{s}`")),
        })
    }
}

/// A probability and the method that produced it. `Auto` never appears in
/// `method`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub probability: f64,
    pub method: Method,
}

/// Runs `method` on a Boolean circuit. `Auto` tries read-once evaluation,
/// then a decomposition of width at most [`DEFAULT_WIDTH_CAP`], then model
/// counting.
pub fn evaluate_circuit(
    circuit: &BoolCircuit,
    probs: &ProbMap,
    method: Method,
) -> Result<Evaluation, ProbabilityError> {
    let done = |probability, method| {
        Ok(Evaluation {
            probability,
            method,
        })
    };
    match method {
        Method::Auto => {
            match prob_read_once(circuit, probs) {
                Ok(p) => return done(p, Method::ReadOnce),
                Err(ProbabilityError::NotReadOnce) => log::debug!("not read-once"),
                Err(e) => return Err(e),
            }
            match tree_decompose(circuit, DEFAULT_WIDTH_CAP) {
                Ok(td) => return done(prob_treedec(circuit, &td, probs)?, Method::TreeDec),
                Err(ProbabilityError::TooWide { width, .. }) => {
                    log::debug!("decomposition too wide ({width})")
                }
                Err(e) => return Err(e),
            }
            done(prob_wmc(&tseitin(circuit), probs)?, Method::Wmc)
        }
        Method::ReadOnce => done(prob_read_once(circuit, probs)?, method),
        Method::TreeDec => {
            let td = tree_decompose(circuit, DEFAULT_WIDTH_CAP)?;
            done(prob_treedec(circuit, &td, probs)?, method)
        }
        Method::Wmc => done(prob_wmc(&tseitin(circuit), probs)?, method),
        Method::Enumerate => done(prob_enumerate(circuit, probs)?, method),
        Method::MonteCarlo { samples, seed } => done(
            prob_monte_carlo(circuit, probs, samples, seed)?.estimate,
            method,
        ),
    }
}

/// Probability that the provenance at `root` holds, input gates being named
/// by their hyphenated id.
pub fn probability_evaluate(
    store: &CircuitStore,
    root: GateId,
    probs: &ProbMap,
    method: Method,
) -> Result<Evaluation, ProbabilityError> {
    let circuit = to_bool_circuit(store, root, &|g| Token::from(g.to_string()))?;
    evaluate_circuit(&circuit, probs, method)
}

/// Probability that `tuple` is in the answer of `query`, by summing over all
/// subinstances. Annotations must be Boolean functions; a tuple belongs to
/// the subinstance of a valuation when its annotation is true there.
pub fn marginal_brute(
    query: &QueryAst,
    inst: &AnnotatedInstance,
    probs: &ProbMap,
    tuple: &Tuple,
) -> Result<f64, ProbabilityError> {
    let mut vars = std::collections::BTreeSet::new();
    for rel in inst.relations.values() {
        for (_, e, _) in rel.iter() {
            match e {
                Element::Bool(f) => vars.extend(f.vars()),
                other => return Err(ProbabilityError::NotBoolean(other.to_string())),
            }
        }
    }
    let vars: Vec<Token> = vars.into_iter().collect();
    if vars.len() > MAX_BRUTE_TOKENS {
        return Err(ProbabilityError::TooManyVariables {
            count: vars.len(),
            max: MAX_BRUTE_TOKENS,
        });
    }
    let p = vars
        .iter()
        .map(|v| probs.require(v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = 0.0;
    for mask in 0u64..1 << vars.len() {
        let mut w = 1.0;
        for (i, pi) in p.iter().enumerate() {
            w *= if mask >> i & 1 == 1 { *pi } else { 1.0 - pi };
        }
        if w == 0.0 {
            continue;
        }
        let truth = |t: &str| {
            vars.binary_search_by(|v| (**v).cmp(t))
                .is_ok_and(|i| mask >> i & 1 == 1)
        };
        let mut world = Instance::new();
        for (name, rel) in &inst.relations {
            let mut kept = Relation::new(rel.arity());
            for (t, e, n) in rel.iter() {
                if let Element::Bool(f) = e {
                    if f.eval(&truth) {
                        kept.insert(t.clone(), n)?;
                    }
                }
            }
            world.insert(name.clone(), kept);
        }
        if eval_query(query, &world, None)?.contains(tuple) {
            total += w;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoeffding_sizing() {
        assert_eq!(hoeffding_samples(0.01, 0.95), 18445);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let mut c = BoolCircuit::new();
        let x = c.var("x");
        let y = c.var("y");
        let r = c.or(vec![x, y]);
        c.set_root(r);
        let mut p = ProbMap::new();
        p.insert("x", 0.3).unwrap();
        p.insert("y", 0.4).unwrap();
        let a = prob_monte_carlo(&c, &p, 5000, 7).unwrap();
        let b = prob_monte_carlo(&c, &p, 5000, 7).unwrap();
        assert_eq!(a, b);
        assert!((a.estimate - 0.58).abs() < 0.05);
    }

    #[test]
    fn bad_probability() {
        assert!(matches!(
            ProbMap::new().insert("t", 1.5),
            Err(ProbabilityError::BadProbability(_))
        ));
    }
}
