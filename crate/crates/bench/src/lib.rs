//! Workloads shared by the benchmarks.

use provdb::frontend::{Catalog, FrontendError};
use provdb::probability::{BoolCircuit, NodeId, ProbMap};
use provdb::RelationSchema;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CITIES: [&str; 8] = [
    "New York", "Paris", "Berlin", "London", "Rome", "Madrid", "Oslo", "Vienna",
];

/// A Personnel-shaped table with `rows` employees spread over eight cities,
/// with provenance and probability 0.5 on every token.
pub fn personnel(rows: usize, seed: u64) -> Result<Catalog, FrontendError> {
    let mut csv = String::from("id,name,position,city\n");
    for i in 0..rows {
        csv.push_str(&format!(
            "{},e{i},Analyst,{}\n",
            i + 1,
            CITIES[i % CITIES.len()]
        ));
    }
    let mut cat = Catalog::in_memory(seed);
    let schema = RelationSchema::parse_decl(provdb::frontend::demo::PERSONNEL_SCHEMA)
        .expect("valid declaration");
    cat.load_table_from("Personnel", csv.as_bytes(), schema)?;
    cat.add_provenance("Personnel", None)?;
    cat.set_prob_all("Personnel", 0.5)?;
    Ok(cat)
}

/// A random circuit over `vars` variables with `gates` internal gates, and
/// probabilities for its variables.
pub fn random_circuit(vars: usize, gates: usize, seed: u64) -> (BoolCircuit, ProbMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = BoolCircuit::new();
    let mut probs = ProbMap::new();
    let mut nodes: Vec<NodeId> = Vec::new();
    for i in 0..vars {
        let name = format!("x{i}");
        probs
            .insert(name.as_str(), rng.gen_range(0.05..0.95))
            .expect("in range");
        nodes.push(c.var(name));
    }
    for _ in 0..gates {
        let k = rng.gen_range(2..=3);
        let kids: Vec<NodeId> = (0..k)
            .map(|_| nodes[rng.gen_range(0..nodes.len())])
            .collect();
        let n = match rng.gen_range(0..5) {
            0 | 1 => c.and(kids),
            2 | 3 => c.or(kids),
            _ => c.not(kids[0]),
        };
        nodes.push(n);
    }
    let root = *nodes.last().expect("at least one node");
    c.set_root(root);
    (c, probs)
}
