//! The personnel example database.

use crate::query::RelationSchema;

use super::{Catalog, FrontendError};

pub const PERSONNEL_SCHEMA: &str = "id:int,name:text,position:text,city:text";

pub const PERSONNEL_CSV: &str = "\
id,name,position,city
1,John,Director,New York
2,Paul,Janitor,New York
3,Dave,Analyst,Paris
4,Ellen,Field agent,Berlin
5,Magdalen,Double agent,Paris
6,Nancy,HR,Paris
7,Susan,Analyst,Berlin
";

/// Cities with at least two employees.
pub const Q_CITY: &str = "dedup(project[#4](join[#4 = #8 and #1 < #5](Personnel, Personnel)))";

/// Probability of each employee's tuple, by id.
pub const PERSONNEL_PROBABILITIES: [f64; 7] = [0.5, 0.7, 0.3, 0.2, 1.0, 0.8, 0.2];

/// An in-memory catalog holding Personnel with provenance and
/// probabilities.
pub fn personnel_catalog(seed: u64) -> Result<Catalog, FrontendError> {
    let mut cat = Catalog::in_memory(seed);
    load_personnel(&mut cat)?;
    Ok(cat)
}

/// Loads Personnel into `cat`, adds provenance and sets probabilities.
pub fn load_personnel(cat: &mut Catalog) -> Result<(), FrontendError> {
    let schema = RelationSchema::parse_decl(PERSONNEL_SCHEMA).expect("valid declaration");
    cat.load_table_from("Personnel", PERSONNEL_CSV.as_bytes(), schema)?;
    cat.add_provenance("Personnel", None)?;
    let tokens = cat.table("Personnel")?.tokens.clone();
    for (g, p) in tokens.into_iter().zip(PERSONNEL_PROBABILITIES) {
        cat.set_prob("Personnel", g, p)?;
    }
    Ok(())
}
