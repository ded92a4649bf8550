//! Tables, their provenance tokens and probabilities, persisted beside a
//! circuit file.
//!
//! A catalog directory holds `catalog.toml`, `circuit.pvc` and one CSV per
//! table. Manifest format, version 1:
//!
//! ```toml
//! version = 1
//! circuit = "circuit.pvc"
//!
//! [tables.Personnel]
//! csv = "Personnel.csv"
//! schema = "id:int,name:text,position:text,city:text"
//! token_column = "provsql"        # absent until add-provenance
//!
//! [tables.Personnel.probabilities]
//! "2f1c…" = 0.5
//! ```
//!
//! When a table has a token column, its CSV carries it last, holding the
//! hyphenated id of each row's input gate.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitOps, CircuitStore, GateId};
use crate::eval::{eval_query, Instance};
use crate::probability::{probability_evaluate, Method, ProbMap, ProbabilityError};
use crate::query::{bind_names, validate, QueryAst, RelationSchema, Schema};
use crate::relation::Relation;
use crate::rewrite::rewrite;
use crate::semiring::{
    structure_by_name, AnnotationStructure, BoolFn, Element, Formula, SemimoduleElement,
};
use crate::value::{Tuple, Value};

use super::{parse, print, read_rows, FrontendError};

pub const MANIFEST: &str = "catalog.toml";
pub const CIRCUIT_FILE: &str = "circuit.pvc";
pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_TOKEN_COLUMN: &str = "provsql";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    circuit: String,
    #[serde(default)]
    tables: BTreeMap<String, TableEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableEntry {
    csv: String,
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_column: Option<String>,
    #[serde(default)]
    probabilities: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub schema: RelationSchema,
    /// One entry per tuple occurrence, in load order.
    pub rows: Vec<Tuple>,
    pub token_column: Option<String>,
    /// Parallel to `rows` once provenance is enabled.
    pub tokens: Vec<GateId>,
    pub probabilities: BTreeMap<GateId, f64>,
}

impl Table {
    pub fn relation(&self) -> Relation {
        let mut rel = Relation::new(self.schema.arity());
        for t in &self.rows {
            rel.insert(t.clone(), 1).expect("rows match the schema");
        }
        rel
    }

    /// Relation with each occurrence's gate appended as an annotation.
    pub fn annotated_relation(&self) -> Relation {
        let mut rel = Relation::new(self.schema.arity() + 1);
        for (t, g) in self.rows.iter().zip(&self.tokens) {
            let t = t.extend_one(Value::Annot(Element::Gate(*g)));
            rel.insert(t, 1).expect("rows match the schema");
        }
        rel
    }

    pub fn is_provenanced(&self) -> bool {
        self.token_column.is_some()
    }
}

/// What to compute for a query besides its tuples.
#[derive(Debug, Clone, Default)]
pub struct QueryOptions {
    /// Structure to specialize provenance to.
    pub semiring: Option<String>,
    /// Column whose value labels each token in displayed provenance.
    pub mapping: Option<String>,
    pub probability: Option<Method>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// The rewritten query, when provenance was tracked.
    pub rewritten: Option<QueryAst>,
    /// Method that produced each row's probability.
    pub methods: Vec<Method>,
}

pub struct Catalog {
    dir: Option<PathBuf>,
    tables: BTreeMap<String, Table>,
    store: CircuitStore,
}

impl Catalog {
    /// A catalog that is never written to disk.
    pub fn in_memory(seed: u64) -> Catalog {
        Catalog {
            dir: None,
            tables: BTreeMap::new(),
            store: CircuitStore::in_memory_seeded(seed),
        }
    }

    /// Creates an empty catalog in `dir`.
    pub fn init(dir: impl AsRef<Path>) -> Result<Catalog, FrontendError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        if dir.join(MANIFEST).exists() {
            return Err(FrontendError::CatalogExists(dir.to_path_buf()));
        }
        let cat = Catalog {
            dir: Some(dir.to_path_buf()),
            tables: BTreeMap::new(),
            store: CircuitStore::open(dir.join(CIRCUIT_FILE))?,
        };
        cat.write_manifest()?;
        Ok(cat)
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Catalog, FrontendError> {
        Catalog::open_with(dir, None)
    }

    /// Opens `dir`; new input gates draw from a generator seeded with
    /// `seed` when one is given.
    pub fn open_with(dir: impl AsRef<Path>, seed: Option<u64>) -> Result<Catalog, FrontendError> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| FrontendError::NoCatalog(dir.to_path_buf(), e))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| FrontendError::Manifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(FrontendError::Manifest(format!(
                "unsupported version {}",
                manifest.version
            )));
        }
        let circuit = dir.join(&manifest.circuit);
        let store = match seed {
            Some(s) => CircuitStore::open_seeded(circuit, s)?,
            None => CircuitStore::open(circuit)?,
        };
        let mut tables = BTreeMap::new();
        for (name, entry) in manifest.tables {
            let schema = RelationSchema::parse_decl(&entry.schema)
                .ok_or_else(|| FrontendError::BadSchema(entry.schema.clone()))?;
            let extra: Vec<&str> = entry.token_column.iter().map(String::as_str).collect();
            let file = fs::File::open(dir.join(&entry.csv))?;
            let mut rows = Vec::new();
            let mut tokens = Vec::new();
            for (t, rest) in read_rows(file, &schema, &extra)? {
                rows.push(t);
                if let Some(cell) = rest.first() {
                    let g = GateId::from_str(cell)
                        .map_err(|_| FrontendError::BadToken(cell.clone()))?;
                    tokens.push(g);
                }
            }
            let mut probabilities = BTreeMap::new();
            for (k, p) in entry.probabilities {
                let g = GateId::from_str(&k).map_err(|_| FrontendError::BadToken(k.clone()))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(FrontendError::BadProbability(p));
                }
                probabilities.insert(g, p);
            }
            let table = Table {
                schema,
                rows,
                token_column: entry.token_column,
                tokens,
                probabilities,
            };
            tables.insert(name, table);
        }
        Ok(Catalog {
            dir: Some(dir.to_path_buf()),
            tables,
            store,
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn store(&self) -> &CircuitStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut CircuitStore {
        &mut self.store
    }

    pub fn table(&self, name: &str) -> Result<&Table, FrontendError> {
        self.tables
            .get(name)
            .ok_or_else(|| FrontendError::UnknownTable(name.to_string()))
    }

    fn table_mut(&mut self, name: &str) -> Result<&mut Table, FrontendError> {
        self.tables
            .get_mut(name)
            .ok_or_else(|| FrontendError::UnknownTable(name.to_string()))
    }

    pub fn tables(&self) -> impl Iterator<Item = (&String, &Table)> {
        self.tables.iter()
    }

    /// Adds a table from CSV text whose header matches `schema`.
    pub fn load_table_from<R: std::io::Read>(
        &mut self,
        name: &str,
        reader: R,
        schema: RelationSchema,
    ) -> Result<(), FrontendError> {
        if self.tables.contains_key(name) {
            return Err(FrontendError::TableExists(name.to_string()));
        }
        let rows = read_rows(reader, &schema, &[])?
            .into_iter()
            .map(|(t, _)| t)
            .collect();
        let table = Table {
            schema,
            rows,
            token_column: None,
            tokens: Vec::new(),
            probabilities: BTreeMap::new(),
        };
        self.tables.insert(name.to_string(), table);
        self.save()
    }

    pub fn load_table(
        &mut self,
        name: &str,
        csv: impl AsRef<Path>,
        schema: RelationSchema,
    ) -> Result<(), FrontendError> {
        let file = fs::File::open(csv)?;
        self.load_table_from(name, file, schema)
    }

    /// Creates one input gate per tuple occurrence.
    pub fn add_provenance(
        &mut self,
        name: &str,
        column: Option<&str>,
    ) -> Result<(), FrontendError> {
        let column = column.unwrap_or(DEFAULT_TOKEN_COLUMN).to_string();
        let table = self
            .tables
            .get_mut(name)
            .ok_or_else(|| FrontendError::UnknownTable(name.to_string()))?;
        if table.is_provenanced() {
            return Err(FrontendError::AlreadyProvenanced(name.to_string()));
        }
        if table.schema.columns.iter().any(|c| c.name == column) {
            return Err(FrontendError::BadSchema(format!(
                "column `{column}` already exists"
            )));
        }
        let mut tokens = Vec::with_capacity(table.rows.len());
        for _ in &table.rows {
            tokens.push(self.store.create_input()?);
        }
        table.tokens = tokens;
        table.token_column = Some(column);
        self.save()
    }

    pub fn set_prob(&mut self, name: &str, token: GateId, p: f64) -> Result<(), FrontendError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(FrontendError::BadProbability(p));
        }
        let table = self.table_mut(name)?;
        if !table.tokens.contains(&token) {
            return Err(FrontendError::UnknownToken(token.to_string()));
        }
        table.probabilities.insert(token, p);
        self.save()
    }

    /// Sets every token of `name` to `p`.
    pub fn set_prob_all(&mut self, name: &str, p: f64) -> Result<(), FrontendError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(FrontendError::BadProbability(p));
        }
        let table = self.table_mut(name)?;
        if !table.is_provenanced() {
            return Err(FrontendError::NotProvenanced(name.to_string()));
        }
        for g in table.tokens.clone() {
            table.probabilities.insert(g, p);
        }
        self.save()
    }

    /// Reads each token's probability from a numeric column of its row.
    pub fn set_prob_column(&mut self, name: &str, column: &str) -> Result<(), FrontendError> {
        let table = self.table_mut(name)?;
        if !table.is_provenanced() {
            return Err(FrontendError::NotProvenanced(name.to_string()));
        }
        let c = table
            .schema
            .columns
            .iter()
            .position(|c| c.name == column)
            .ok_or_else(|| FrontendError::UnknownColumn(column.to_string()))?;
        let mut updates = Vec::with_capacity(table.rows.len());
        for (t, g) in table.rows.iter().zip(&table.tokens) {
            let p = match &t[c] {
                Value::Real(x) => x.0,
                Value::Int(i) => *i as f64,
                other => {
                    return Err(FrontendError::BadSchema(format!(
                        "`{other}` is not a probability"
                    )))
                }
            };
            if !(0.0..=1.0).contains(&p) {
                return Err(FrontendError::BadProbability(p));
            }
            updates.push((*g, p));
        }
        table.probabilities.extend(updates);
        self.save()
    }

    /// Data columns of every table.
    pub fn schema(&self) -> Schema {
        let mut s = Schema::new();
        for (name, t) in &self.tables {
            s.insert(name.clone(), t.schema.clone());
        }
        s
    }

    pub fn instance(&self) -> Instance {
        self.tables
            .iter()
            .map(|(k, t)| (k.clone(), t.relation()))
            .collect()
    }

    /// Probabilities of every token, keyed by hyphenated gate id.
    pub fn probabilities(&self) -> ProbMap {
        let mut m = ProbMap::new();
        for t in self.tables.values() {
            for (g, p) in &t.probabilities {
                m.insert(g.to_string(), *p).expect("checked on insert");
            }
        }
        m
    }

    /// Display label of each token: the value of `column` in its row, for
    /// tables that have that column.
    pub fn token_labels(&self, column: &str) -> Result<HashMap<GateId, String>, FrontendError> {
        let mut out = HashMap::new();
        let mut found = false;
        for t in self.tables.values() {
            let Some(c) = t.schema.columns.iter().position(|c| c.name == column) else {
                continue;
            };
            found = true;
            for (row, g) in t.rows.iter().zip(&t.tokens) {
                out.insert(*g, row[c].to_string());
            }
        }
        if !found {
            return Err(FrontendError::UnknownColumn(column.to_string()));
        }
        Ok(out)
    }

    /// Writes the manifest, the CSV files and pending gates.
    pub fn save(&mut self) -> Result<(), FrontendError> {
        let Some(dir) = self.dir.clone() else {
            return Ok(());
        };
        self.store.flush()?;
        for (name, t) in &self.tables {
            let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
            let mut header: Vec<&str> = t.schema.columns.iter().map(|c| c.name.as_str()).collect();
            header.extend(t.token_column.as_deref());
            w.write_record(&header)?;
            for (i, row) in t.rows.iter().enumerate() {
                let mut cells: Vec<String> = row.iter().map(Value::to_cell).collect();
                if t.is_provenanced() {
                    cells.push(t.tokens[i].to_string());
                }
                w.write_record(&cells)?;
            }
            w.flush()?;
        }
        self.write_manifest()
    }

    fn write_manifest(&self) -> Result<(), FrontendError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            circuit: CIRCUIT_FILE.to_string(),
            tables: self
                .tables
                .iter()
                .map(|(name, t)| {
                    let entry = TableEntry {
                        csv: format!("{name}.csv"),
                        schema: t.schema.decl(),
                        token_column: t.token_column.clone(),
                        probabilities: t
                            .probabilities
                            .iter()
                            .map(|(g, p)| (g.to_string(), *p))
                            .collect(),
                    };
                    (name.clone(), entry)
                })
                .collect(),
        };
        let text =
            toml::to_string(&manifest).map_err(|e| FrontendError::Manifest(e.to_string()))?;
        fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }

    /// Parses, binds and validates query text against the catalog.
    pub fn prepare(&self, text: &str) -> Result<QueryAst, FrontendError> {
        let ast = parse(text)?;
        let schema = self.schema();
        let ast = bind_names(&ast, &schema)?;
        validate(&ast, &schema)?;
        Ok(ast)
    }

    /// Evaluates query text. Without options the output is the plain
    /// multiset answer, one row per occurrence. With a semiring or a
    /// probability method, every table the query reads must have
    /// provenance; the query is rewritten, evaluated over the circuit, and
    /// each row's provenance is specialized or weighed.
    pub fn run_query(
        &mut self,
        text: &str,
        opts: &QueryOptions,
    ) -> Result<QueryOutput, FrontendError> {
        let ast = self.prepare(text)?;
        let schema = self.schema();
        let mut columns: Vec<String> = crate::query::output_columns(&ast, &schema)?
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.name.unwrap_or_else(|| format!("#{}", i + 1)))
            .collect();
        if opts.semiring.is_none() && opts.probability.is_none() {
            let rel = eval_query(&ast, &self.instance(), None)?;
            let mut rows = Vec::new();
            for (t, n) in rel.iter() {
                let cells: Vec<String> = t.iter().map(Value::to_cell).collect();
                rows.extend(std::iter::repeat_n(cells, n as usize));
            }
            return Ok(QueryOutput {
                columns,
                rows,
                rewritten: None,
                methods: Vec::new(),
            });
        }

        let structure: Option<Arc<dyn AnnotationStructure>> = match &opts.semiring {
            Some(name) => Some(
                structure_by_name(name)
                    .ok_or_else(|| FrontendError::UnknownSemiring(name.clone()))?,
            ),
            None => None,
        };
        if opts.probability.is_some() && ast.root.contains_value_aggregate() {
            return Err(ProbabilityError::AggregateInProbability.into());
        }
        let mut instance = Instance::new();
        for r in ast.root.relations() {
            let t = self.table(r)?;
            if !t.is_provenanced() {
                return Err(FrontendError::NotProvenanced(r.to_string()));
            }
            instance.insert(r.to_string(), t.annotated_relation());
        }
        let rewritten = rewrite(&ast, &schema)?;
        let rel = {
            let mut ops = CircuitOps::new(&mut self.store);
            eval_query(&rewritten, &instance, Some(&mut ops))?
        };
        self.store.flush()?;

        let labels = match &opts.mapping {
            Some(col) => self.token_labels(col)?,
            None => HashMap::new(),
        };
        let label = |g: GateId| labels.get(&g).cloned().unwrap_or_else(|| g.to_string());
        let leaf = |g: GateId| -> Option<Element> {
            let s = structure.as_ref()?;
            Some(match s.name() {
                "counting" => Element::Count(1),
                "why" => Element::why_token(label(g)),
                "boolean" => Element::Bool(BoolFn::var(label(g))),
                _ => Element::Formula(Formula::token(label(g))),
            })
        };
        let probs = self.probabilities();

        if let Some(s) = &structure {
            columns.push(s.name().to_string());
        }
        if opts.probability.is_some() {
            columns.push("probability".to_string());
        }
        let mut rows = Vec::new();
        let mut methods = Vec::new();
        for (t, n) in rel.iter() {
            let (data, annot) = t
                .split_last()
                .expect("rewritten output carries an annotation");
            let gate = annot
                .as_element()
                .and_then(Element::as_gate)
                .ok_or_else(|| FrontendError::BadToken(annot.to_string()))?;
            let mut cells = Vec::with_capacity(columns.len());
            for v in data.iter() {
                cells.push(match (v, &structure) {
                    (Value::Module(m), Some(s)) => match **m {
                        SemimoduleElement::Gate(g) => {
                            self.store.specialize_module(g, &**s, &leaf)?.to_string()
                        }
                        ref other => other.to_string(),
                    },
                    (other, _) => other.to_cell(),
                });
            }
            if let Some(s) = &structure {
                cells.push(self.store.specialize(gate, &**s, &leaf)?.to_string());
            }
            if let Some(method) = opts.probability {
                let ev = probability_evaluate(&self.store, gate, &probs, method)?;
                cells.push(format_probability(ev.probability));
                methods.push(ev.method);
            }
            rows.extend(std::iter::repeat_n(cells, n as usize));
        }
        Ok(QueryOutput {
            columns,
            rows,
            rewritten: Some(rewritten),
            methods,
        })
    }

    /// The rewritten form of query text, in the query language.
    pub fn explain(&self, text: &str) -> Result<String, FrontendError> {
        let ast = self.prepare(text)?;
        Ok(print(&rewrite(&ast, &self.schema())?))
    }
}

/// Up to ten decimals, trailing zeros dropped.
pub fn format_probability(p: f64) -> String {
    let s = format!("{p:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_formatting() {
        assert_eq!(format_probability(0.35000000000000003), "0.35");
        assert_eq!(format_probability(1.0), "1");
        assert_eq!(format_probability(0.0), "0");
    }
}
