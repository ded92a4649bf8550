//! Persistent provenance circuits.
//!
//! Input gates get random v4 UUIDs; every other gate is content-addressed by
//! a v5 UUID over its kind, children and payload, so the same computation
//! over the same inputs always yields the same gate. Gates are appended to a
//! log file and never modified.
//!
//! File layout (little-endian): `PVC1`, format version `u32`, then records
//! `uuid[16] kind:u8 nchildren:u32 child[16]* payload_len:u32 payload`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use uuid::Uuid;

use crate::error::QueryError;
use crate::eval::AnnotationOps;
use crate::semiring::{
    sm_aggregate, AnnotationStructure, Element, MonoidAggregate, SemimoduleElement, SemiringError,
};
use crate::value::{Tag, Value};

pub const MAGIC: &[u8; 4] = b"PVC1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 8;

/// Namespace of derived gate ids.
pub const NAMESPACE: Uuid = Uuid::nil();

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GateId(pub Uuid);

impl GateId {
    pub fn as_bytes(&self) -> &[u8; 16] {
        self.0.as_bytes()
    }

    pub fn version(&self) -> usize {
        self.0.get_version_num()
    }
}

impl fmt::Display for GateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.hyphenated())
    }
}

impl FromStr for GateId {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s.trim()).map(GateId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum GateKind {
    Input = 0,
    Zero = 1,
    One = 2,
    Plus = 3,
    Times = 4,
    Monus = 5,
    Delta = 6,
    Value = 7,
    Semimodule = 8,
    Aggregate = 9,
}

impl GateKind {
    pub const ALL: [GateKind; 10] = [
        GateKind::Input,
        GateKind::Zero,
        GateKind::One,
        GateKind::Plus,
        GateKind::Times,
        GateKind::Monus,
        GateKind::Delta,
        GateKind::Value,
        GateKind::Semimodule,
        GateKind::Aggregate,
    ];

    pub fn from_byte(b: u8) -> Option<GateKind> {
        GateKind::ALL.get(b as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Input => "input",
            GateKind::Zero => "zero",
            GateKind::One => "one",
            GateKind::Plus => "plus",
            GateKind::Times => "times",
            GateKind::Monus => "monus",
            GateKind::Delta => "delta",
            GateKind::Value => "value",
            GateKind::Semimodule => "semimodule",
            GateKind::Aggregate => "aggregate",
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            GateKind::Input | GateKind::Zero | GateKind::One | GateKind::Value => n == 0,
            GateKind::Monus | GateKind::Semimodule => n == 2,
            GateKind::Delta => n == 1,
            GateKind::Plus | GateKind::Times | GateKind::Aggregate => n >= 1,
        }
    }

    fn has_payload(self) -> bool {
        matches!(self, GateKind::Value | GateKind::Aggregate)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt circuit header: {0}")]
    CorruptHeader(String),
    #[error("corrupt record at offset {offset}: {reason}")]
    CorruptRecord { offset: u64, reason: String },
    #[error("unknown child gate {0}")]
    UnknownChild(GateId),
    #[error("gate {0} not found")]
    NotFound(GateId),
    #[error("{kind} gate cannot have {count} children")]
    BadArity { kind: GateKind, count: usize },
    #[error("bad payload for {kind} gate: {reason}")]
    BadPayload { kind: GateKind, reason: String },
    #[error("input gate {0} has no leaf value")]
    UnmappedLeaf(GateId),
    #[error("fresh input id {0} already exists")]
    IdCollision(GateId),
    #[error("{0} gate reached where an annotation was expected")]
    NotAnnotation(GateKind),
    #[error(transparent)]
    Semiring(#[from] SemiringError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateRecord {
    pub id: GateId,
    pub kind: GateKind,
    pub children: Vec<GateId>,
    /// Scalar for value gates; function name (text) for aggregate gates.
    pub payload: Option<Value>,
}

impl GateRecord {
    fn encode(&self) -> Vec<u8> {
        let payload = self.payload.as_ref().map(encode_value).unwrap_or_default();
        let mut out = Vec::with_capacity(16 + 1 + 4 + 16 * self.children.len() + 4 + payload.len());
        out.extend_from_slice(self.id.as_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.children.len() as u32).to_le_bytes());
        for c in &self.children {
            out.extend_from_slice(c.as_bytes());
        }
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }
}

/// Encodes a scalar payload: tag byte then data.
pub fn encode_value(v: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    match v {
        Value::Int(i) => {
            out.push(0);
            out.extend_from_slice(&i.to_le_bytes());
        }
        Value::Real(x) => {
            out.push(1);
            out.extend_from_slice(&x.0.to_bits().to_le_bytes());
        }
        Value::Text(s) => {
            out.push(2);
            out.extend_from_slice(s.as_bytes());
        }
        Value::Bool(b) => out.extend_from_slice(&[3, *b as u8]),
        Value::Date(s) => {
            out.push(4);
            out.extend_from_slice(s.as_bytes());
        }
        Value::Annot(_) | Value::Module(_) => {
            unreachable!("only data values are stored as payloads")
        }
    }
    out
}

pub fn decode_value(bytes: &[u8]) -> Option<Value> {
    let (&tag, rest) = bytes.split_first()?;
    Some(match tag {
        0 => Value::Int(i64::from_le_bytes(rest.try_into().ok()?)),
        1 => Value::real(f64::from_bits(u64::from_le_bytes(rest.try_into().ok()?))),
        2 => Value::text(std::str::from_utf8(rest).ok()?),
        3 if rest.len() == 1 => Value::Bool(rest[0] != 0),
        4 => Value::date(std::str::from_utf8(rest).ok()?),
        _ => return None,
    })
}

struct Entry {
    offset: u64,
    record: GateRecord,
}

/// Append-only gate store, optionally backed by a file.
///
/// One writer appends through `&mut self`; any number of readers may share
/// `&self` since records never change once indexed.
pub struct CircuitStore {
    path: Option<PathBuf>,
    writer: Option<BufWriter<File>>,
    index: HashMap<GateId, Entry>,
    order: Vec<GateId>,
    cursor: u64,
    rng: ChaCha8Rng,
    times_commutative: bool,
}

impl fmt::Debug for CircuitStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CircuitStore")
            .field("path", &self.path)
            .field("gates", &self.order.len())
            .finish()
    }
}

impl Default for CircuitStore {
    fn default() -> Self {
        CircuitStore::in_memory()
    }
}

impl CircuitStore {
    /// A store without a backing file, seeded from OS entropy.
    pub fn in_memory() -> Self {
        CircuitStore {
            path: None,
            writer: None,
            index: HashMap::new(),
            order: Vec::new(),
            cursor: HEADER_LEN,
            rng: ChaCha8Rng::from_entropy(),
            times_commutative: true,
        }
    }

    pub fn in_memory_seeded(seed: u64) -> Self {
        let mut s = CircuitStore::in_memory();
        s.set_seed(seed);
        s
    }

    /// Opens or creates the store at `path`. A torn trailing record is cut
    /// off with a warning; every complete record before it is kept.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CircuitError> {
        let path = path.as_ref();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut store = CircuitStore::in_memory();
        store.path = Some(path.to_path_buf());
        if bytes.is_empty() {
            file.write_all(MAGIC)?;
            file.write_all(&FORMAT_VERSION.to_le_bytes())?;
            file.flush()?;
        } else {
            if bytes.len() < HEADER_LEN as usize || &bytes[..4] != MAGIC {
                return Err(CircuitError::CorruptHeader("missing PVC1 magic".into()));
            }
            let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
            if version != FORMAT_VERSION {
                return Err(CircuitError::CorruptHeader(format!(
                    "unsupported version {version}"
                )));
            }
            let valid = store.scan(&bytes)?;
            if valid < bytes.len() as u64 {
                log::warn!(
                    "{}: dropping {} bytes of torn trailing record",
                    path.display(),
                    bytes.len() as u64 - valid
                );
                file.set_len(valid)?;
            }
            store.cursor = valid;
        }
        file.seek(SeekFrom::Start(store.cursor))?;
        store.writer = Some(BufWriter::new(file));
        Ok(store)
    }

    pub fn open_seeded(path: impl AsRef<Path>, seed: u64) -> Result<Self, CircuitError> {
        let mut s = CircuitStore::open(path)?;
        s.set_seed(seed);
        Ok(s)
    }

    /// Returns the length of the valid prefix.
    fn scan(&mut self, bytes: &[u8]) -> Result<u64, CircuitError> {
        let mut pos = HEADER_LEN as usize;
        loop {
            let start = pos;
            let Some(rec) = parse_record(bytes, &mut pos, start as u64)? else {
                return Ok(start as u64);
            };
            for c in &rec.children {
                if !self.index.contains_key(c) {
                    return Err(CircuitError::CorruptRecord {
                        offset: start as u64,
                        reason: format!("child {c} precedes its definition"),
                    });
                }
            }
            self.order.push(rec.id);
            self.index.insert(
                rec.id,
                Entry {
                    offset: start as u64,
                    record: rec,
                },
            );
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Reseeds the generator used for input ids.
    pub fn set_seed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// When false, children of times gates keep their order in ids.
    pub fn set_times_commutative(&mut self, commutative: bool) {
        self.times_commutative = commutative;
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Bytes written so far, header included.
    pub fn byte_len(&self) -> u64 {
        self.cursor
    }

    pub fn contains(&self, id: GateId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn get(&self, id: GateId) -> Result<&GateRecord, CircuitError> {
        self.index
            .get(&id)
            .map(|e| &e.record)
            .ok_or(CircuitError::NotFound(id))
    }

    /// File offset of a gate's record.
    pub fn offset(&self, id: GateId) -> Option<u64> {
        self.index.get(&id).map(|e| e.offset)
    }

    /// Gates in append order.
    pub fn iter(&self) -> impl Iterator<Item = &GateRecord> + '_ {
        self.order.iter().map(|id| &self.index[id].record)
    }

    fn append(&mut self, record: GateRecord) -> Result<(), CircuitError> {
        let bytes = record.encode();
        if let Some(w) = self.writer.as_mut() {
            w.write_all(&bytes)?;
        }
        let id = record.id;
        self.index.insert(
            id,
            Entry {
                offset: self.cursor,
                record,
            },
        );
        self.order.push(id);
        self.cursor += bytes.len() as u64;
        Ok(())
    }

    /// Appends a fresh input gate with a random v4 id.
    pub fn create_input(&mut self) -> Result<GateId, CircuitError> {
        let mut bytes = [0u8; 16];
        self.rng.fill_bytes(&mut bytes);
        let id = GateId(uuid::Builder::from_random_bytes(bytes).into_uuid());
        if self.contains(id) {
            return Err(CircuitError::IdCollision(id));
        }
        self.append(GateRecord {
            id,
            kind: GateKind::Input,
            children: Vec::new(),
            payload: None,
        })?;
        Ok(id)
    }

    /// The id `derive` would assign, without touching the store.
    pub fn derived_id(
        &self,
        kind: GateKind,
        children: &[GateId],
        payload: Option<&Value>,
    ) -> GateId {
        derived_id(kind, children, payload, self.times_commutative)
    }

    /// Appends a derived gate unless an identical one exists. No constant
    /// folding happens here; see [`CircuitStore::plus`] and friends.
    pub fn derive(
        &mut self,
        kind: GateKind,
        children: Vec<GateId>,
        payload: Option<Value>,
    ) -> Result<GateId, CircuitError> {
        if kind == GateKind::Input || !kind.arity_ok(children.len()) {
            return Err(CircuitError::BadArity {
                kind,
                count: children.len(),
            });
        }
        match (&payload, kind.has_payload()) {
            (None, true) | (Some(_), false) => {
                return Err(CircuitError::BadPayload {
                    kind,
                    reason: "payload presence does not match kind".into(),
                })
            }
            (Some(v), true) if !v.tag().is_data() => {
                return Err(CircuitError::BadPayload {
                    kind,
                    reason: format!("{} is not a data value", v.tag()),
                })
            }
            _ => {}
        }
        for c in &children {
            if !self.contains(*c) {
                return Err(CircuitError::UnknownChild(*c));
            }
        }
        let id = self.derived_id(kind, &children, payload.as_ref());
        if self.contains(id) {
            return Ok(id);
        }
        let children = canonical_children(kind, children, self.times_commutative);
        self.append(GateRecord {
            id,
            kind,
            children,
            payload,
        })?;
        Ok(id)
    }

    pub fn zero(&mut self) -> Result<GateId, CircuitError> {
        self.derive(GateKind::Zero, vec![], None)
    }

    pub fn one(&mut self) -> Result<GateId, CircuitError> {
        self.derive(GateKind::One, vec![], None)
    }

    fn is_kind(&self, id: GateId, kind: GateKind) -> bool {
        self.index.get(&id).is_some_and(|e| e.record.kind == kind)
    }

    /// ⊕ with zero children dropped; one child is returned as is.
    pub fn plus(&mut self, children: Vec<GateId>) -> Result<GateId, CircuitError> {
        let kept: Vec<GateId> = children
            .into_iter()
            .filter(|c| !self.is_kind(*c, GateKind::Zero))
            .collect();
        match kept.len() {
            0 => self.zero(),
            1 => Ok(kept[0]),
            _ => self.derive(GateKind::Plus, kept, None),
        }
    }

    /// ⊗ with one children dropped and zero absorbing.
    pub fn times(&mut self, children: Vec<GateId>) -> Result<GateId, CircuitError> {
        if children.iter().any(|c| self.is_kind(*c, GateKind::Zero)) {
            return self.zero();
        }
        let kept: Vec<GateId> = children
            .into_iter()
            .filter(|c| !self.is_kind(*c, GateKind::One))
            .collect();
        match kept.len() {
            0 => self.one(),
            1 => Ok(kept[0]),
            _ => self.derive(GateKind::Times, kept, None),
        }
    }

    pub fn monus(&mut self, a: GateId, b: GateId) -> Result<GateId, CircuitError> {
        if self.is_kind(a, GateKind::Zero) {
            return Ok(a);
        }
        if self.is_kind(b, GateKind::Zero) {
            return Ok(a);
        }
        self.derive(GateKind::Monus, vec![a, b], None)
    }

    pub fn delta(&mut self, a: GateId) -> Result<GateId, CircuitError> {
        if self.is_kind(a, GateKind::Zero) || self.is_kind(a, GateKind::One) {
            return Ok(a);
        }
        self.derive(GateKind::Delta, vec![a], None)
    }

    pub fn value(&mut self, v: Value) -> Result<GateId, CircuitError> {
        self.derive(GateKind::Value, vec![], Some(v))
    }

    /// `v ∗ a` as a semimodule gate over a value gate.
    pub fn tensor(&mut self, v: Value, a: GateId) -> Result<GateId, CircuitError> {
        let vg = self.value(v)?;
        self.derive(GateKind::Semimodule, vec![vg, a], None)
    }

    pub fn aggregate(
        &mut self,
        func: MonoidAggregate,
        children: Vec<GateId>,
    ) -> Result<GateId, CircuitError> {
        self.derive(
            GateKind::Aggregate,
            children,
            Some(Value::text(func.name())),
        )
    }

    pub fn flush(&mut self) -> Result<(), CircuitError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
            w.get_ref().sync_data()?;
        }
        Ok(())
    }

    pub fn close(mut self) -> Result<(), CircuitError> {
        self.flush()?;
        self.writer = None;
        Ok(())
    }

    /// Gates reachable from `root`, children before parents.
    pub fn reachable(&self, root: GateId) -> Result<Vec<GateId>, CircuitError> {
        let mut out = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                out.push(id);
                continue;
            }
            if !seen.insert(id) {
                continue;
            }
            let rec = self.get(id)?;
            stack.push((id, true));
            for c in rec.children.iter().rev() {
                if !seen.contains(c) {
                    stack.push((*c, false));
                }
            }
        }
        Ok(out)
    }

    /// Image of the gate `root` in `structure`, with input gates mapped by
    /// `leaf`. Each reachable gate is evaluated once.
    pub fn specialize(
        &self,
        root: GateId,
        structure: &dyn AnnotationStructure,
        leaf: &dyn Fn(GateId) -> Option<Element>,
    ) -> Result<Element, CircuitError> {
        let mut memo = HashMap::new();
        self.specialize_memo(root, structure, leaf, &mut memo)
    }

    fn specialize_memo(
        &self,
        root: GateId,
        structure: &dyn AnnotationStructure,
        leaf: &dyn Fn(GateId) -> Option<Element>,
        memo: &mut HashMap<GateId, Element>,
    ) -> Result<Element, CircuitError> {
        for id in self.reachable(root)? {
            if memo.contains_key(&id) {
                continue;
            }
            let rec = self.get(id)?;
            let kids = |memo: &HashMap<GateId, Element>| -> Vec<Element> {
                rec.children.iter().map(|c| memo[c].clone()).collect()
            };
            let e = match rec.kind {
                GateKind::Input => leaf(id).ok_or(CircuitError::UnmappedLeaf(id))?,
                GateKind::Zero => structure.zero(),
                GateKind::One => structure.one(),
                GateKind::Plus => {
                    let mut acc = structure.zero();
                    for k in kids(memo) {
                        acc = structure.plus(&acc, &k)?;
                    }
                    acc
                }
                GateKind::Times => {
                    let mut acc = structure.one();
                    for k in kids(memo) {
                        acc = structure.times(&acc, &k)?;
                    }
                    acc
                }
                GateKind::Monus => {
                    let k = kids(memo);
                    structure.monus(&k[0], &k[1])?
                }
                GateKind::Delta => structure.delta(&kids(memo)[0])?,
                kind @ (GateKind::Value | GateKind::Semimodule | GateKind::Aggregate) => {
                    if id == root {
                        return Err(CircuitError::NotAnnotation(kind));
                    }
                    // Annotation gates never sit above value gates; the
                    // semimodule parent reads the value directly.
                    continue;
                }
            };
            memo.insert(id, e);
        }
        Ok(memo[&root].clone())
    }

    /// Image of a value, semimodule or aggregate gate.
    pub fn specialize_module(
        &self,
        root: GateId,
        structure: &dyn AnnotationStructure,
        leaf: &dyn Fn(GateId) -> Option<Element>,
    ) -> Result<SemimoduleElement, CircuitError> {
        let mut memo = HashMap::new();
        let rec = self.get(root)?;
        match rec.kind {
            GateKind::Value => Ok(SemimoduleElement::Scalar(payload_value(rec)?)),
            GateKind::Semimodule => {
                let (v, e) = self.tensor_parts(rec, structure, leaf, &mut memo)?;
                Ok(SemimoduleElement::Tensor(v, e))
            }
            GateKind::Aggregate => {
                let func: MonoidAggregate = match &rec.payload {
                    Some(Value::Text(name)) => name.parse()?,
                    _ => {
                        return Err(CircuitError::BadPayload {
                            kind: GateKind::Aggregate,
                            reason: "missing function name".into(),
                        })
                    }
                };
                let mut items = Vec::with_capacity(rec.children.len());
                for c in &rec.children {
                    let child = self.get(*c)?;
                    let (v, e) = self.tensor_parts(child, structure, leaf, &mut memo)?;
                    items.push((v, e, 1));
                }
                let input = items.first().map(|(v, _, _)| v.tag()).unwrap_or(Tag::Int);
                Ok(sm_aggregate(func, &items, structure, input)?)
            }
            other => Err(CircuitError::BadPayload {
                kind: other,
                reason: "not a value-carrying gate".into(),
            }),
        }
    }

    fn tensor_parts(
        &self,
        rec: &GateRecord,
        structure: &dyn AnnotationStructure,
        leaf: &dyn Fn(GateId) -> Option<Element>,
        memo: &mut HashMap<GateId, Element>,
    ) -> Result<(Value, Element), CircuitError> {
        if rec.kind != GateKind::Semimodule {
            return Err(CircuitError::BadPayload {
                kind: rec.kind,
                reason: "expected a semimodule gate".into(),
            });
        }
        let v = payload_value(self.get(rec.children[0])?)?;
        let e = self.specialize_memo(rec.children[1], structure, leaf, memo)?;
        Ok((v, e))
    }

    /// Number of gates of each kind.
    pub fn stats(&self) -> BTreeMap<GateKind, usize> {
        let mut out = BTreeMap::new();
        for r in self.iter() {
            *out.entry(r.kind).or_insert(0) += 1;
        }
        out
    }

    /// Graphviz rendering of the sub-circuit below `root`.
    pub fn export_dot(
        &self,
        root: GateId,
        label: &dyn Fn(GateId) -> Option<String>,
    ) -> Result<String, CircuitError> {
        let mut out = String::from("digraph provenance {\n  rankdir=BT;\n");
        for id in self.reachable(root)? {
            let rec = self.get(id)?;
            let text = match rec.kind {
                GateKind::Input => label(id).unwrap_or_else(|| id.to_string()),
                GateKind::Zero => "0".into(),
                GateKind::One => "1".into(),
                GateKind::Plus => "⊕".into(),
                GateKind::Times => "⊗".into(),
                GateKind::Monus => "⊖".into(),
                GateKind::Delta => "δ".into(),
                GateKind::Value => rec
                    .payload
                    .as_ref()
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                GateKind::Semimodule => "∗".into(),
                GateKind::Aggregate => rec
                    .payload
                    .as_ref()
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            };
            let text = text.replace('\\', "\\\\").replace('"', "\\\"");
            let _ = writeln!(out, "  \"{id}\" [label=\"{text}\"];");
            for (i, c) in rec.children.iter().enumerate() {
                let _ = writeln!(out, "  \"{c}\" -> \"{id}\" [label=\"{}\"];", i + 1);
            }
        }
        out.push_str("}\n");
        Ok(out)
    }
}

impl Drop for CircuitStore {
    fn drop(&mut self) {
        if let Some(w) = self.writer.as_mut() {
            let _ = w.flush();
        }
    }
}

fn payload_value(rec: &GateRecord) -> Result<Value, CircuitError> {
    rec.payload.clone().ok_or(CircuitError::BadPayload {
        kind: rec.kind,
        reason: "missing value".into(),
    })
}

fn canonical_children(
    kind: GateKind,
    mut children: Vec<GateId>,
    times_commutative: bool,
) -> Vec<GateId> {
    if kind == GateKind::Plus || (kind == GateKind::Times && times_commutative) {
        children.sort();
    }
    children
}

/// v5 id of a derived gate over the canonical byte description.
pub fn derived_id(
    kind: GateKind,
    children: &[GateId],
    payload: Option<&Value>,
    times_commutative: bool,
) -> GateId {
    let children = canonical_children(kind, children.to_vec(), times_commutative);
    let mut bytes = Vec::with_capacity(5 + 16 * children.len() + 16);
    bytes.push(kind as u8);
    bytes.extend_from_slice(&(children.len() as u32).to_le_bytes());
    for c in &children {
        bytes.extend_from_slice(c.as_bytes());
    }
    if let Some(v) = payload {
        bytes.extend_from_slice(&encode_value(v));
    }
    GateId(Uuid::new_v5(&NAMESPACE, &bytes))
}

fn parse_record(
    bytes: &[u8],
    pos: &mut usize,
    offset: u64,
) -> Result<Option<GateRecord>, CircuitError> {
    fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Option<&'a [u8]> {
        let s = bytes.get(*pos..pos.checked_add(n)?)?;
        *pos += n;
        Some(s)
    }
    let corrupt = |reason: String| CircuitError::CorruptRecord { offset, reason };
    if *pos == bytes.len() {
        return Ok(None);
    }
    let Some(id) = take(bytes, pos, 16) else {
        return Ok(None);
    };
    let id = GateId(Uuid::from_slice(id).unwrap());
    let Some(kind) = take(bytes, pos, 1) else {
        return Ok(None);
    };
    let kind = GateKind::from_byte(kind[0])
        .ok_or_else(|| corrupt(format!("unknown kind byte {}", kind[0])))?;
    let Some(n) = take(bytes, pos, 4) else {
        return Ok(None);
    };
    let n = u32::from_le_bytes(n.try_into().unwrap()) as usize;
    if (kind == GateKind::Input && n != 0) || (kind != GateKind::Input && !kind.arity_ok(n)) {
        return Err(corrupt(format!("{kind} gate with {n} children")));
    }
    let mut children = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let Some(c) = take(bytes, pos, 16) else {
            return Ok(None);
        };
        children.push(GateId(Uuid::from_slice(c).unwrap()));
    }
    let Some(len) = take(bytes, pos, 4) else {
        return Ok(None);
    };
    let len = u32::from_le_bytes(len.try_into().unwrap()) as usize;
    let Some(payload) = take(bytes, pos, len) else {
        return Ok(None);
    };
    let payload = if len == 0 {
        None
    } else {
        Some(decode_value(payload).ok_or_else(|| corrupt("undecodable payload".into()))?)
    };
    Ok(Some(GateRecord {
        id,
        kind,
        children,
        payload,
    }))
}

/// Annotation operators that build circuit gates; elements are
/// [`Element::Gate`] references into the store.
pub struct CircuitOps<'s> {
    store: &'s mut CircuitStore,
}

impl<'s> CircuitOps<'s> {
    pub fn new(store: &'s mut CircuitStore) -> Self {
        CircuitOps { store }
    }
}

fn gate_of(e: &Element) -> Result<GateId, QueryError> {
    e.as_gate().ok_or_else(|| {
        QueryError::Semiring(SemiringError::DomainMismatch {
            structure: "circuit".into(),
            element: e.to_string(),
        })
    })
}

fn circuit_err(e: CircuitError) -> QueryError {
    match e {
        CircuitError::Semiring(s) => QueryError::Semiring(s),
        other => QueryError::Semiring(SemiringError::DomainMismatch {
            structure: "circuit".into(),
            element: other.to_string(),
        }),
    }
}

impl AnnotationOps for CircuitOps<'_> {
    fn times(&mut self, a: &Element, b: &Element) -> Result<Element, QueryError> {
        let g = self
            .store
            .times(vec![gate_of(a)?, gate_of(b)?])
            .map_err(circuit_err)?;
        Ok(Element::Gate(g))
    }

    fn monus(&mut self, a: &Element, b: &Element) -> Result<Element, QueryError> {
        let g = self
            .store
            .monus(gate_of(a)?, gate_of(b)?)
            .map_err(circuit_err)?;
        Ok(Element::Gate(g))
    }

    fn plus_fold(&mut self, items: &[(&Element, u64)]) -> Result<Element, QueryError> {
        let mut children = Vec::new();
        for (e, n) in items {
            let g = gate_of(e)?;
            children.extend(std::iter::repeat_n(g, *n as usize));
        }
        Ok(Element::Gate(
            self.store.plus(children).map_err(circuit_err)?,
        ))
    }

    fn delta(&mut self, a: &Element) -> Result<Element, QueryError> {
        Ok(Element::Gate(
            self.store.delta(gate_of(a)?).map_err(circuit_err)?,
        ))
    }

    fn tensor(&mut self, v: &Value, a: &Element) -> Result<SemimoduleElement, QueryError> {
        let g = self
            .store
            .tensor(v.clone(), gate_of(a)?)
            .map_err(circuit_err)?;
        Ok(SemimoduleElement::Gate(g))
    }

    fn lifted(
        &mut self,
        func: MonoidAggregate,
        items: &[(&SemimoduleElement, u64)],
        _input: Tag,
    ) -> Result<SemimoduleElement, QueryError> {
        let mut children = Vec::new();
        for (m, n) in items {
            let SemimoduleElement::Gate(g) = m else {
                return Err(QueryError::UnsupportedAggregate(format!(
                    "hat_{func} over {m}"
                )));
            };
            children.extend(std::iter::repeat_n(*g, *n as usize));
        }
        let g = self.store.aggregate(func, children).map_err(circuit_err)?;
        Ok(SemimoduleElement::Gate(g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::{Counting, WhyProvenance};

    #[test]
    fn input_ids_are_v4_and_distinct() {
        let mut s = CircuitStore::in_memory_seeded(1);
        let a = s.create_input().unwrap();
        let b = s.create_input().unwrap();
        assert_ne!(a, b);
        assert_eq!(a.version(), 4);
        assert_eq!(a.0.get_variant(), uuid::Variant::RFC4122);
        let rec = s.get(a).unwrap();
        assert_eq!(rec.kind, GateKind::Input);
        assert!(rec.children.is_empty());
    }

    #[test]
    fn derive_is_canonical_and_idempotent() {
        let mut s = CircuitStore::in_memory_seeded(2);
        let a = s.create_input().unwrap();
        let b = s.create_input().unwrap();
        let p1 = s.derive(GateKind::Plus, vec![a, b], None).unwrap();
        let len = s.byte_len();
        let p2 = s.derive(GateKind::Plus, vec![b, a], None).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s.byte_len(), len);
        assert_eq!(p1.version(), 5);
        let m1 = s.derive(GateKind::Monus, vec![a, b], None).unwrap();
        let m2 = s.derive(GateKind::Monus, vec![b, a], None).unwrap();
        assert_ne!(m1, m2);
    }

    #[test]
    fn non_commutative_times_keeps_order() {
        let mut s = CircuitStore::in_memory_seeded(3);
        let a = s.create_input().unwrap();
        let b = s.create_input().unwrap();
        assert_eq!(
            s.derived_id(GateKind::Times, &[a, b], None),
            s.derived_id(GateKind::Times, &[b, a], None)
        );
        s.set_times_commutative(false);
        assert_ne!(
            s.derived_id(GateKind::Times, &[a, b], None),
            s.derived_id(GateKind::Times, &[b, a], None)
        );
    }

    #[test]
    fn unknown_child_and_missing_gate() {
        let mut s = CircuitStore::in_memory_seeded(4);
        let ghost = GateId(Uuid::from_u128(42));
        assert!(matches!(
            s.derive(GateKind::Delta, vec![ghost], None),
            Err(CircuitError::UnknownChild(_))
        ));
        assert!(matches!(s.get(ghost), Err(CircuitError::NotFound(_))));
        assert!(matches!(
            s.derive(GateKind::Monus, vec![], None),
            Err(CircuitError::BadArity { .. })
        ));
    }

    #[test]
    fn specialize_leaf_and_sum() {
        let mut s = CircuitStore::in_memory_seeded(5);
        let x = s.create_input().unwrap();
        let y = s.create_input().unwrap();
        let leaf = |g: GateId| Some(Element::Count(if g == x { 5 } else { 2 }));
        assert_eq!(
            s.specialize(x, &Counting, &leaf).unwrap(),
            Element::Count(5)
        );
        let t = s.times(vec![x, y]).unwrap();
        let p = s.plus(vec![t, x, x]).unwrap();
        assert_eq!(
            s.specialize(p, &Counting, &leaf).unwrap(),
            Element::Count(20)
        );
        let why = |g: GateId| Some(Element::why_token(if g == x { "x" } else { "y" }));
        assert_eq!(
            s.specialize(p, &WhyProvenance, &why).unwrap(),
            Element::why_from([vec!["x", "y"], vec!["x"]])
        );
        assert!(matches!(
            s.specialize(p, &Counting, &|_| None),
            Err(CircuitError::UnmappedLeaf(_))
        ));
    }

    #[test]
    fn value_payloads_round_trip() {
        for v in [
            Value::Int(-3),
            Value::real(2.5),
            Value::text("Paris"),
            Value::Bool(true),
            Value::date("2020-01-31"),
        ] {
            assert_eq!(decode_value(&encode_value(&v)), Some(v));
        }
    }
}
