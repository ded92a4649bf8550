//! Query text, CSV files and the catalog.

mod catalog;
pub mod demo;
mod parser;
mod table;

use std::path::PathBuf;

use thiserror::Error;

use crate::circuit::CircuitError;
use crate::error::QueryError;
use crate::probability::ProbabilityError;
use crate::rewrite::RewriteError;
use crate::value::Tag;

pub use catalog::{
    format_probability, Catalog, QueryOptions, QueryOutput, Table, CIRCUIT_FILE,
    DEFAULT_TOKEN_COLUMN, MANIFEST, MANIFEST_VERSION,
};
pub use parser::{parse, print, ParseError};
pub use table::{load_csv, load_csv_from, read_rows, save_csv, write_csv};

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("CSV header {found:?} does not match {expected:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}, column {column}: `{cell}` is not a valid {tag}")]
    BadCell {
        row: usize,
        column: usize,
        tag: Tag,
        cell: String,
    },
    #[error("row {row}, column {column}: empty cell")]
    EmptyCell { row: usize, column: usize },
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no catalog in {0}: {1}")]
    NoCatalog(PathBuf, std::io::Error),
    #[error("a catalog already exists in {0}")]
    CatalogExists(PathBuf),
    #[error("catalog manifest: {0}")]
    Manifest(String),
    #[error("bad schema declaration `{0}`")]
    BadSchema(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("table `{0}` already exists")]
    TableExists(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("table `{0}` already has provenance tokens")]
    AlreadyProvenanced(String),
    #[error("table `{0}` has no provenance tokens")]
    NotProvenanced(String),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("`{0}` is not a token")]
    BadToken(String),
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("unknown semiring `{0}`")]
    UnknownSemiring(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Probability(#[from] ProbabilityError),
}
