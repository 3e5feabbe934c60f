//! Typed tables and CSV conventions.
//!
//! Files are UTF-8 CSV with a mandatory header row. Dates are `YYYY-MM-DD`,
//! booleans `true`/`false`, numbers use `.` as the decimal point, and an empty
//! field is a null. Whether a null is unknown or not applicable is decided by
//! the binder, never by the file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::diag::Diagnostic;
use crate::eer::{rewrite_many_to_many, AttributeKind, EerSchema, Membership};
use crate::expr::lexer::parse_iso_date;
use crate::value::{Key, Scalar};

pub type Cell = Option<Scalar>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: AttributeKind,
}

impl Column {
    pub fn new(name: &str, kind: AttributeKind) -> Self {
        Column {
            name: name.to_string(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    pub key_columns: Vec<String>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<Column>) -> Self {
        Table {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
            key_columns: Vec::new(),
        }
    }

    pub fn with_key(mut self, key: &[&str]) -> Self {
        self.key_columns = key.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Cells of one column, top to bottom. Panics on an unknown column.
    pub fn column(&self, name: &str) -> impl Iterator<Item = &Cell> {
        let i = self.column_index(name).unwrap_or_else(|| panic!("no column `{name}` in {}", self.name));
        self.rows.iter().map(move |r| &r[i])
    }

    fn key_indices(&self) -> Vec<usize> {
        self.key_columns
            .iter()
            .map(|k| self.column_index(k).unwrap_or_else(|| panic!("key column `{k}` missing from {}", self.name)))
            .collect()
    }

    /// Key tuple of a row; `None` when any key cell is null.
    pub fn row_key(&self, row: usize) -> Option<Key> {
        self.key_indices().into_iter().map(|i| self.rows[row][i].clone()).collect()
    }

    pub fn keys(&self) -> Vec<Option<Key>> {
        let idx = self.key_indices();
        self.rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Number of distinct key tuples. Rows with a null key cell are ignored.
pub fn distinct_key_count(table: &Table) -> usize {
    table.keys().into_iter().flatten().collect::<BTreeSet<_>>().len()
}

/// Loaded tables keyed by entity or membership-table name, plus the SHA-256
/// of each source file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataBundle {
    pub tables: BTreeMap<String, Table>,
    pub hashes: BTreeMap<String, String>,
}

impl DataBundle {
    pub fn insert(&mut self, table: Table) {
        let bytes = to_csv_bytes(&table);
        self.hashes.insert(table.name.clone(), sha256_hex(&bytes));
        self.tables.insert(table.name.clone(), table);
    }

    pub fn get(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_cell(raw: &str, kind: AttributeKind) -> Result<Cell, String> {
    if raw.is_empty() {
        return Ok(None);
    }
    let v = match kind {
        AttributeKind::Identifier | AttributeKind::Nominal | AttributeKind::Text => Scalar::Text(raw.to_string()),
        AttributeKind::Numeric => match raw.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Scalar::Number(x),
            _ => return Err(format!("`{raw}` is not a number")),
        },
        AttributeKind::Boolean => match raw.trim() {
            "true" => Scalar::Bool(true),
            "false" => Scalar::Bool(false),
            _ => return Err(format!("`{raw}` is not a boolean (expected true or false)")),
        },
        AttributeKind::Date => match parse_iso_date(raw.trim()) {
            Some(d) => Scalar::Date(d),
            None => return Err(format!("`{raw}` is not an ISO date (expected YYYY-MM-DD)")),
        },
    };
    Ok(Some(v))
}

/// Parses CSV bytes. Columns come out in `declared` order whatever the header
/// order; a missing or undeclared header column is an error.
pub fn parse_csv(name: &str, bytes: &[u8], declared: &[Column]) -> Result<Table, Vec<Diagnostic>> {
    let file = format!("{name}.csv");
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(vec![Diagnostic::error("csv", e.to_string()).at(&file)]),
    };
    let mut diags = Vec::new();
    let mut positions = Vec::with_capacity(declared.len());
    for c in declared {
        match header.iter().position(|h| h == c.name) {
            Some(p) => positions.push(p),
            None => diags.push(Diagnostic::error("missing-column", format!("{file} has no column `{}`", c.name)).at(&file)),
        }
    }
    let mut seen = BTreeSet::new();
    for h in header.iter() {
        if !seen.insert(h) {
            diags.push(Diagnostic::error("duplicate-column", format!("{file} repeats column `{h}`")).at(&file));
        } else if !declared.iter().any(|c| c.name == h) {
            diags.push(Diagnostic::error("extra-column", format!("{file} has undeclared column `{h}`")).at(&file));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let mut table = Table::new(name, declared.to_vec());
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                diags.push(Diagnostic::error("csv", e.to_string()).at(format!("{file}:row {row_no}")));
                continue;
            }
        };
        let mut row = Vec::with_capacity(declared.len());
        for (c, &p) in declared.iter().zip(&positions) {
            let raw = record.get(p).unwrap_or("");
            match parse_cell(raw, c.kind) {
                Ok(cell) => row.push(cell),
                Err(msg) => {
                    diags.push(Diagnostic::error("bad-cell", msg).at(format!("{file}:row {row_no}, column {}", c.name)));
                    row.push(None);
                }
            }
        }
        table.rows.push(row);
    }
    if diags.is_empty() {
        Ok(table)
    } else {
        Err(diags)
    }
}

/// Reads `path` as a table named after the file stem.
pub fn read_csv(path: &Path, declared: &[Column]) -> Result<Table, Vec<Diagnostic>> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let bytes = std::fs::read(path)
        .map_err(|e| vec![Diagnostic::error("io", format!("cannot read {}: {e}", path.display()))])?;
    parse_csv(&name, &bytes, declared)
}

pub fn to_csv_bytes(table: &Table) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(table.columns.iter().map(|c| c.name.as_str())).expect("in-memory write");
    for row in &table.rows {
        let fields: Vec<String> = row.iter().map(|c| c.as_ref().map(ToString::to_string).unwrap_or_default()).collect();
        w.write_record(&fields).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_csv(table: &Table, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, to_csv_bytes(table))
}

/// Loads `<NAME>.csv` for every entity (including the associative entities
/// replacing many-to-many relationships) and every `from table` subtype of
/// `schema` from `dir`. Stored hashes are of the file bytes.
pub fn load_bundle(schema: &EerSchema, dir: &Path) -> Result<DataBundle, Vec<Diagnostic>> {
    let rewritten = rewrite_many_to_many(schema).map_err(|e| vec![Diagnostic::error("rewrite", e.to_string())])?;
    let schema = &rewritten;
    let mut wanted: Vec<(String, Vec<Column>, Vec<String>)> = Vec::new();
    for e in &schema.entities {
        let cols = schema.table_columns(&e.name).into_iter().map(|(n, k)| Column { name: n, kind: k }).collect();
        wanted.push((e.name.clone(), cols, e.key_names()));
    }
    for g in &schema.generalizations {
        let key = schema.entity(&g.supertype).map(|e| e.key_names()).unwrap_or_default();
        for s in g.subtypes.iter().filter(|s| s.membership == Membership::Table) {
            let cols = schema
                .membership_table_columns(&g.name, &s.name)
                .into_iter()
                .map(|(n, k)| Column { name: n, kind: k })
                .collect();
            wanted.push((s.name.clone(), cols, key.clone()));
        }
    }

    let mut bundle = DataBundle::default();
    let mut diags = Vec::new();
    for (name, cols, key) in wanted {
        let path = dir.join(format!("{name}.csv"));
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(_) => {
                diags.push(Diagnostic::error("missing-table", format!("no table for {name}: {} not found", path.display())));
                continue;
            }
        };
        match parse_csv(&name, &bytes, &cols) {
            Ok(mut t) => {
                t.key_columns = key;
                bundle.hashes.insert(name.clone(), sha256_hex(&bytes));
                bundle.tables.insert(name, t);
            }
            Err(d) => diags.extend(d),
        }
    }
    if diags.is_empty() {
        Ok(bundle)
    } else {
        Err(diags)
    }
}
