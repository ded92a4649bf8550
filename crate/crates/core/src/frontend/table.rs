//! CSV ingestion and export.
//!
//! Comma separated, double-quote quoting with doubled quotes as escape,
//! mandatory header row, UTF-8. Empty cells are rejected since there is no
//! NULL.

use std::io::{Read, Write};
use std::path::Path;

use crate::query::RelationSchema;
use crate::relation::Relation;
use crate::value::{Tuple, Value};

use super::FrontendError;

/// Reads CSV rows, one tuple occurrence per row, in file order. `extra`
/// names trailing header columns returned raw rather than typed.
pub fn read_rows<R: Read>(
    reader: R,
    schema: &RelationSchema,
    extra: &[&str],
) -> Result<Vec<(Tuple, Vec<String>)>, FrontendError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut expected: Vec<String> = schema.columns.iter().map(|c| c.name.clone()).collect();
    expected.extend(extra.iter().map(|s| s.to_string()));
    if header != expected {
        return Err(FrontendError::HeaderMismatch {
            expected,
            found: header,
        });
    }
    let n = schema.arity();
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // Row 1 is the header.
        let row = r + 2;
        let mut values = Vec::with_capacity(n);
        for (c, cell) in record.iter().enumerate().take(n) {
            if cell.is_empty() {
                return Err(FrontendError::EmptyCell { row, column: c + 1 });
            }
            let tag = schema.columns[c].tag;
            let v = Value::parse_as(tag, cell).ok_or_else(|| FrontendError::BadCell {
                row,
                column: c + 1,
                tag,
                cell: cell.to_string(),
            })?;
            values.push(v);
        }
        let rest: Vec<String> = record.iter().skip(n).map(str::to_string).collect();
        if let Some(c) = rest.iter().position(String::is_empty) {
            return Err(FrontendError::EmptyCell {
                row,
                column: n + c + 1,
            });
        }
        rows.push((Tuple::new(values), rest));
    }
    Ok(rows)
}

/// Loads a CSV file whose header matches `schema`. Repeated rows add
/// multiplicity.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &RelationSchema,
) -> Result<Relation, FrontendError> {
    let file = std::fs::File::open(path)?;
    load_csv_from(file, schema)
}

pub fn load_csv_from<R: Read>(
    reader: R,
    schema: &RelationSchema,
) -> Result<Relation, FrontendError> {
    let mut rel = Relation::new(schema.arity());
    for (t, _) in read_rows(reader, schema, &[])? {
        rel.insert(t, 1)?;
    }
    Ok(rel)
}

/// Writes one row per tuple occurrence.
pub fn write_csv<W: Write>(
    writer: W,
    rel: &Relation,
    schema: &RelationSchema,
) -> Result<(), FrontendError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.columns.iter().map(|c| c.name.as_str()))?;
    for (t, n) in rel.iter() {
        let cells: Vec<String> = t.iter().map(Value::to_cell).collect();
        for _ in 0..n {
            w.write_record(&cells)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(
    path: impl AsRef<Path>,
    rel: &Relation,
    schema: &RelationSchema,
) -> Result<(), FrontendError> {
    write_csv(std::fs::File::create(path)?, rel, schema)
}
