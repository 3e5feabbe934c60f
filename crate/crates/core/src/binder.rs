//! Binding tables to a schema: key and foreign-key integrity, participation
//! checks, subtype membership and null classification.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::diag::{has_errors, Diagnostic};
use crate::eer::{
    rewrite_many_to_many, validate_schema, EerSchema, GeneralizationMode, MaxCard, MinCard, Membership, RelKind,
};
use crate::expr::{eval, Clock, Expr, RowContext};
use crate::tabular::{Cell, DataBundle, Table};
use crate::value::{key_to_string, Key, NullKind, Scalar, Value};

/// Foreign-key resolution of one non-N:M relationship.
#[derive(Debug, Clone, PartialEq)]
pub struct FkIndex {
    /// Per holder row, the referenced row (absent for a null foreign key).
    pub parent_of: Vec<Option<usize>>,
    /// Per referenced row, holder rows in holder-key order.
    pub children_of: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct BoundModel {
    /// The schema with many-to-many relationships rewritten.
    pub schema: EerSchema,
    pub bundle: DataBundle,
    pub clock: Clock,
    /// Per entity, the key of every row.
    pub keys: BTreeMap<String, Vec<Key>>,
    pub row_of: BTreeMap<String, BTreeMap<Key, usize>>,
    pub fk_index: BTreeMap<String, FkIndex>,
    /// Per generalization, per supertype row, the subtypes it belongs to.
    pub subtype_membership: BTreeMap<String, Vec<BTreeSet<String>>>,
    /// Per `from table` subtype, supertype row to membership-table row.
    pub membership_rows: BTreeMap<String, BTreeMap<usize, usize>>,
    /// Classification of every null cell: (table, row, column).
    pub null_class: BTreeMap<(String, usize, String), NullKind>,
    pub warnings: Vec<Diagnostic>,
}

struct StoredRow<'a> {
    tables: Vec<(&'a Table, usize)>,
}

impl RowContext for StoredRow<'_> {
    fn attribute(&self, name: &str) -> Value {
        for (t, row) in &self.tables {
            if let Some(i) = t.column_index(name) {
                return match &t.rows[*row][i] {
                    Some(s) => Value::Present(s.clone()),
                    None => Value::UNKNOWN,
                };
            }
        }
        Value::UNKNOWN
    }

    fn related(&self, _: &str, _: Option<&str>) -> Vec<Value> {
        Vec::new()
    }
}

fn eval_on(expr: &Expr, ctx: &StoredRow<'_>, clock: &Clock) -> Value {
    let mut notes = Vec::new();
    eval(expr, ctx, clock, &mut notes)
}

/// Binds `bundle` to `schema`, failing on any error diagnostic. Warnings are
/// kept on the model.
pub fn bind(schema: &EerSchema, bundle: &DataBundle, clock: &Clock) -> Result<BoundModel, Vec<Diagnostic>> {
    match bind_report(schema, bundle, clock) {
        (Some(model), diags) if !has_errors(&diags) => Ok(model),
        (_, diags) => Err(diags),
    }
}

/// Like [`bind`], but returns the model whenever the indices could be built,
/// together with every diagnostic, so that participation problems can still
/// be inspected with [`cardinality_report`].
pub fn bind_report(schema: &EerSchema, bundle: &DataBundle, clock: &Clock) -> (Option<BoundModel>, Vec<Diagnostic>) {
    let schema = match rewrite_many_to_many(schema) {
        Ok(s) => s,
        Err(e) => return (None, vec![Diagnostic::error("rewrite", e.to_string())]),
    };
    let mut diags: Vec<Diagnostic> = validate_schema(&schema);
    if has_errors(&diags) {
        return (None, diags);
    }

    // Tables and columns.
    for e in &schema.entities {
        check_table(bundle, &e.name, &schema.table_columns(&e.name), &mut diags);
    }
    for g in &schema.generalizations {
        for s in g.subtypes.iter().filter(|s| s.membership == Membership::Table) {
            check_table(bundle, &s.name, &schema.membership_table_columns(&g.name, &s.name), &mut diags);
        }
    }
    if has_errors(&diags) {
        return (None, diags);
    }

    // Keys.
    let mut keys = BTreeMap::new();
    let mut row_of = BTreeMap::new();
    for e in &schema.entities {
        let t = entity_table(bundle, &e.name, &e.key_names());
        let (k, idx) = index_keys(&t, &mut diags);
        keys.insert(e.name.clone(), k);
        row_of.insert(e.name.clone(), idx);
    }
    if has_errors(&diags) {
        return (None, diags);
    }

    // Foreign keys.
    let mut fk_index = BTreeMap::new();
    for r in schema.relationships.iter().filter(|r| r.kind() != RelKind::ManyToMany) {
        let holder = &r.holder().entity;
        let parent = &r.referenced().entity;
        let t = &bundle.tables[holder];
        let cols: Vec<usize> = r.fk_columns.iter().map(|c| t.column_index(c).expect("checked")).collect();
        let mut parent_of = Vec::with_capacity(t.len());
        let mut children_of = vec![Vec::new(); keys[parent].len()];
        for (row, cells) in t.rows.iter().enumerate() {
            let fk: Option<Key> = cols.iter().map(|&c| cells[c].clone()).collect();
            let loc = format!("{holder}.csv:row {}", row + 1);
            match fk {
                None => {
                    if r.fk_required() {
                        diags.push(Diagnostic::error(
                            "mandatory-participation",
                            format!("{holder} {} has no {parent} via {} but participation is mandatory", key_to_string(&keys[holder][row]), r.name),
                        ).at(loc));
                    }
                    parent_of.push(None);
                }
                Some(k) => match row_of[parent].get(&k) {
                    Some(&p) => {
                        parent_of.push(Some(p));
                        children_of[p].push(row);
                    }
                    None => {
                        diags.push(Diagnostic::error(
                            "dangling-fk",
                            format!("{holder} {} references missing {parent} {} via {}", key_to_string(&keys[holder][row]), key_to_string(&k), r.name),
                        ).at(loc));
                        parent_of.push(None);
                    }
                },
            }
        }
        for kids in &mut children_of {
            kids.sort_by(|a, b| keys[holder][*a].cmp(&keys[holder][*b]));
        }
        fk_index.insert(r.name.clone(), FkIndex { parent_of, children_of });
    }
    if has_errors(&diags) {
        return (None, diags);
    }

    // Participation and 1:1 fan-out.
    for r in schema.relationships.iter() {
        let idx = &fk_index[&r.name];
        let parent = &r.referenced().entity;
        let holder_end = r.holder();
        for (p, kids) in idx.children_of.iter().enumerate() {
            let key = key_to_string(&keys[parent][p]);
            if holder_end.min == MinCard::One && kids.is_empty() {
                diags.push(Diagnostic::error(
                    "mandatory-participation",
                    format!("{parent} {key} has no {} via {} but participation is mandatory", holder_end.entity, r.name),
                ));
            }
            if holder_end.max == MaxCard::One && kids.len() > 1 {
                diags.push(Diagnostic::error(
                    "fan-out",
                    format!("{parent} {key} has {} {} rows via one-to-one {}", kids.len(), holder_end.entity, r.name),
                ));
            }
        }
    }

    // Subtype membership.
    let mut subtype_membership = BTreeMap::new();
    let mut membership_rows = BTreeMap::new();
    for g in &schema.generalizations {
        let sup = &bundle.tables[&g.supertype];
        let mut sets = vec![BTreeSet::new(); sup.len()];
        for s in &g.subtypes {
            match &s.membership {
                Membership::Predicate(p) => {
                    let mut null_rows = 0;
                    for (row, set) in sets.iter_mut().enumerate() {
                        let ctx = StoredRow { tables: vec![(sup, row)] };
                        match eval_on(p, &ctx, clock).scalar() {
                            Some(Scalar::Bool(true)) => {
                                set.insert(s.name.clone());
                            }
                            Some(_) => {}
                            None => null_rows += 1,
                        }
                    }
                    if null_rows > 0 {
                        diags.push(Diagnostic::warning(
                            "null-membership",
                            format!("membership predicate of {} is null on {null_rows} {} row(s); treated as non-members", s.name, g.supertype),
                        ));
                    }
                }
                Membership::Table => {
                    let mt = entity_table(bundle, &s.name, &keys_of_entity(&schema, &g.supertype));
                    let mut map = BTreeMap::new();
                    for (mrow, k) in mt.keys().into_iter().enumerate() {
                        let loc = format!("{}.csv:row {}", s.name, mrow + 1);
                        let Some(k) = k else {
                            diags.push(Diagnostic::error("null-key", format!("{} row has a null key", s.name)).at(loc));
                            continue;
                        };
                        match row_of[&g.supertype].get(&k) {
                            None => diags.push(Diagnostic::error(
                                "dangling-membership",
                                format!("{} lists {} {} which does not exist", s.name, g.supertype, key_to_string(&k)),
                            ).at(loc)),
                            Some(&row) => {
                                if map.insert(row, mrow).is_some() {
                                    diags.push(Diagnostic::error(
                                        "duplicate-key",
                                        format!("{} lists {} twice", s.name, key_to_string(&k)),
                                    ).at(loc));
                                }
                                sets[row].insert(s.name.clone());
                            }
                        }
                    }
                    membership_rows.insert(s.name.clone(), map);
                }
            }
        }
        let mut orphans = 0;
        for (row, set) in sets.iter().enumerate() {
            if g.mode == GeneralizationMode::Disjoint && set.len() > 1 {
                let names: Vec<&str> = set.iter().map(String::as_str).collect();
                diags.push(Diagnostic::error(
                    "disjointness",
                    format!(
                        "{} {} belongs to {} in disjoint generalization {}",
                        g.supertype,
                        key_to_string(&keys[&g.supertype][row]),
                        names.join(" and "),
                        g.name
                    ),
                ));
            }
            if set.is_empty() {
                orphans += 1;
            }
        }
        if orphans > 0 {
            diags.push(Diagnostic::warning(
                "no-subtype",
                format!("{orphans} {} instance(s) belong to no subtype of {}", g.supertype, g.name),
            ));
        }
        subtype_membership.insert(g.name.clone(), sets);
    }

    let mut model = BoundModel {
        schema,
        bundle: bundle.clone(),
        clock: *clock,
        keys,
        row_of,
        fk_index,
        subtype_membership,
        membership_rows,
        null_class: BTreeMap::new(),
        warnings: Vec::new(),
    };
    classify_nulls(&mut model, &mut diags);
    model.warnings = diags.iter().filter(|d| !d.is_error()).cloned().collect();
    (Some(model), diags)
}

fn keys_of_entity(schema: &EerSchema, entity: &str) -> Vec<String> {
    schema.entity(entity).map(|e| e.key_names()).unwrap_or_default()
}

fn entity_table(bundle: &DataBundle, name: &str, key: &[String]) -> Table {
    let mut t = bundle.tables[name].clone();
    t.key_columns = key.to_vec();
    t
}

fn check_table(bundle: &DataBundle, name: &str, columns: &[(String, crate::eer::AttributeKind)], diags: &mut Vec<Diagnostic>) {
    let Some(t) = bundle.get(name) else {
        diags.push(Diagnostic::error("missing-table", format!("no table for {name} ({name}.csv)")));
        return;
    };
    for (c, kind) in columns {
        match t.columns.iter().find(|x| &x.name == c) {
            None => diags.push(Diagnostic::error("missing-column", format!("table {name} lacks column `{c}`"))),
            Some(col) if col.kind != *kind && !(col.kind.is_textual() && kind.is_textual()) => diags.push(Diagnostic::error(
                "column-type",
                format!("column {name}.{c} is {} but the schema expects {kind}", col.kind),
            )),
            Some(_) => {}
        }
    }
}

fn index_keys(t: &Table, diags: &mut Vec<Diagnostic>) -> (Vec<Key>, BTreeMap<Key, usize>) {
    let mut keys = Vec::with_capacity(t.len());
    let mut idx = BTreeMap::new();
    for (row, k) in t.keys().into_iter().enumerate() {
        let loc = format!("{}.csv:row {}", t.name, row + 1);
        match k {
            None => {
                diags.push(Diagnostic::error("null-key", format!("{} row has a null key", t.name)).at(loc));
                keys.push(Vec::new());
            }
            Some(k) => {
                if idx.insert(k.clone(), row).is_some() {
                    diags.push(Diagnostic::error("duplicate-key", format!("{} key {} appears more than once", t.name, key_to_string(&k))).at(loc));
                }
                keys.push(k);
            }
        }
    }
    (keys, idx)
}

fn classify_nulls(model: &mut BoundModel, diags: &mut Vec<Diagnostic>) {
    let schema = &model.schema;
    let mut classes = BTreeMap::new();
    for e in &schema.entities {
        let t = &model.bundle.tables[&e.name];
        let fk_cols: BTreeSet<&str> = schema
            .held_relationships(&e.name)
            .flat_map(|r| r.fk_columns.iter().map(String::as_str))
            .collect();
        let mut unknown_guards = 0;
        for (row, cells) in t.rows.iter().enumerate() {
            for (ci, cell) in cells.iter().enumerate() {
                if cell.is_some() {
                    continue;
                }
                let col = &t.columns[ci].name;
                let class = if let Some((g, s)) = schema.subtype_owner(&e.name, col) {
                    if !model.subtype_membership[&g.name][row].contains(&s.name) {
                        NullKind::NotApplicable
                    } else {
                        let a = s.attributes.iter().find(|a| &a.name == col).expect("owner");
                        guard(a.applicable_when.as_ref(), &StoredRow { tables: vec![(t, row)] }, &model.clock, &mut unknown_guards)
                    }
                } else if let Some(a) = e.attribute(col) {
                    guard(a.applicable_when.as_ref(), &StoredRow { tables: vec![(t, row)] }, &model.clock, &mut unknown_guards)
                } else if fk_cols.contains(col.as_str()) {
                    // an optional relationship with no partner
                    NullKind::NotApplicable
                } else {
                    NullKind::Unknown
                };
                classes.insert((e.name.clone(), row, col.clone()), class);
            }
        }
        if unknown_guards > 0 {
            diags.push(Diagnostic::warning(
                "null-applicability",
                format!("applicable_when evaluated to null on {unknown_guards} {} cell(s); classified unknown", e.name),
            ));
        }
    }
    for g in &schema.generalizations {
        let sup = &model.bundle.tables[&g.supertype];
        for s in g.subtypes.iter().filter(|s| s.membership == Membership::Table) {
            let mt = &model.bundle.tables[&s.name];
            let mut unknown_guards = 0;
            for (&sup_row, &mrow) in &model.membership_rows[&s.name] {
                for (ci, cell) in mt.rows[mrow].iter().enumerate() {
                    if cell.is_some() {
                        continue;
                    }
                    let col = &mt.columns[ci].name;
                    let a = s.attributes.iter().find(|a| &a.name == col);
                    let ctx = StoredRow { tables: vec![(mt, mrow), (sup, sup_row)] };
                    let class = guard(a.and_then(|a| a.applicable_when.as_ref()), &ctx, &model.clock, &mut unknown_guards);
                    classes.insert((s.name.clone(), mrow, col.clone()), class);
                }
            }
            if unknown_guards > 0 {
                diags.push(Diagnostic::warning(
                    "null-applicability",
                    format!("applicable_when evaluated to null on {unknown_guards} {} cell(s); classified unknown", s.name),
                ));
            }
        }
    }
    model.null_class = classes;
}

fn guard(cond: Option<&Expr>, ctx: &StoredRow<'_>, clock: &Clock, unknown_guards: &mut usize) -> NullKind {
    let Some(cond) = cond else {
        return NullKind::Unknown;
    };
    match eval_on(cond, ctx, clock).scalar() {
        Some(Scalar::Bool(false)) => NullKind::NotApplicable,
        Some(_) => NullKind::Unknown,
        None => {
            *unknown_guards += 1;
            NullKind::Unknown
        }
    }
}

impl BoundModel {
    pub fn table(&self, entity: &str) -> &Table {
        &self.bundle.tables[entity]
    }

    pub fn row_count(&self, entity: &str) -> usize {
        self.keys[entity].len()
    }

    pub fn key(&self, entity: &str, row: usize) -> &Key {
        &self.keys[entity][row]
    }

    pub fn null_class(&self, table: &str, row: usize, column: &str) -> Option<NullKind> {
        self.null_class.get(&(table.to_string(), row, column.to_string())).copied()
    }

    fn cell_value(&self, table: &str, row: usize, column: &str) -> Option<Value> {
        let t = self.bundle.get(table)?;
        let i = t.column_index(column)?;
        Some(cell_to_value(&t.rows[row][i], || {
            self.null_class(table, row, column).unwrap_or(NullKind::Unknown)
        }))
    }

    /// Stored value of `attr` for one row of `entity`, including attributes of
    /// `from table` subtypes; nulls carry their classification.
    pub fn stored_value(&self, entity: &str, row: usize, attr: &str) -> Value {
        if let Some(v) = self.cell_value(entity, row, attr) {
            return v;
        }
        if let Some((_, s)) = self.schema.subtype_owner(entity, attr) {
            if s.membership == Membership::Table {
                return match self.membership_rows[&s.name].get(&row) {
                    Some(&mrow) => self.cell_value(&s.name, mrow, attr).unwrap_or(Value::UNKNOWN),
                    None => Value::NOT_APPLICABLE,
                };
            }
        }
        Value::UNKNOWN
    }

    /// Subtypes of `generalization` that the row belongs to.
    pub fn subtypes_of(&self, generalization: &str, row: usize) -> &BTreeSet<String> {
        &self.subtype_membership[generalization][row]
    }

    /// Membership keyed by instance key.
    pub fn membership_by_key(&self, generalization: &str) -> BTreeMap<Key, BTreeSet<String>> {
        let g = self.schema.generalization(generalization).expect("known generalization");
        self.subtype_membership[generalization]
            .iter()
            .enumerate()
            .map(|(row, set)| (self.keys[&g.supertype][row].clone(), set.clone()))
            .collect()
    }
}

fn cell_to_value(cell: &Cell, null: impl FnOnce() -> NullKind) -> Value {
    match cell {
        Some(s) => Value::Present(s.clone()),
        None => Value::Null(null()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CardinalityRecord {
    pub relationship: String,
    pub parent: String,
    pub child: String,
    /// Declared (min, max) of children per parent.
    pub declared: (u8, Option<u8>),
    pub observed_min: usize,
    pub observed_max: usize,
    pub conformant: bool,
    pub violations: Vec<String>,
}

/// Observed fan-out of every relationship against its declared cardinality.
pub fn cardinality_report(bound: &BoundModel) -> Vec<CardinalityRecord> {
    let mut out = Vec::new();
    for r in &bound.schema.relationships {
        let Some(idx) = bound.fk_index.get(&r.name) else { continue };
        let parent = &r.referenced().entity;
        let holder = r.holder();
        let counts: Vec<usize> = idx.children_of.iter().map(Vec::len).collect();
        let mut violations = Vec::new();
        for (p, &n) in counts.iter().enumerate() {
            let key = key_to_string(&bound.keys[parent][p]);
            if holder.min == MinCard::One && n == 0 {
                violations.push(format!("{parent} {key} has no {} (minimum 1)", holder.entity));
            }
            if holder.max == MaxCard::One && n > 1 {
                violations.push(format!("{parent} {key} has {n} {} (maximum 1)", holder.entity));
            }
        }
        let unlinked = idx.parent_of.iter().filter(|p| p.is_none()).count();
        if r.fk_required() && unlinked > 0 {
            violations.push(format!("{unlinked} {} row(s) have no {parent} (minimum 1)", holder.entity));
        }
        out.push(CardinalityRecord {
            relationship: r.name.clone(),
            parent: parent.clone(),
            child: holder.entity.clone(),
            declared: (
                if holder.min == MinCard::One { 1 } else { 0 },
                if holder.max == MaxCard::One { Some(1) } else { None },
            ),
            observed_min: counts.iter().copied().min().unwrap_or(0),
            observed_max: counts.iter().copied().max().unwrap_or(0),
            conformant: violations.is_empty(),
            violations,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use chrono::NaiveDate;

    use super::*;
    use crate::dsl::{parse_schema, SchemaSource};
    use crate::tabular::{load_bundle, parse_csv, Column};

    fn clock() -> Clock {
        Clock::fixed(NaiveDate::from_ymd_opt(2019, 6, 30).unwrap())
    }

    fn reference() -> (EerSchema, DataBundle) {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples");
        let src = SchemaSource::from_file(&dir.join("customer_order.cmml")).unwrap();
        let schema = rewrite_many_to_many(&parse_schema(&src).unwrap()).unwrap();
        let bundle = load_bundle(&schema, &dir.join("data")).unwrap();
        (schema, bundle)
    }

    fn replace(bundle: &mut DataBundle, name: &str, csv: &str) {
        let cols: Vec<Column> = bundle.tables[name].columns.clone();
        let t = parse_csv(name, csv.as_bytes(), &cols).unwrap();
        bundle.tables.insert(name.into(), t);
    }

    fn order_row(b: &BoundModel, id: &str) -> usize {
        b.row_of["ORDER"][&vec![Scalar::Text(id.into())]]
    }

    #[test]
    fn reference_data_binds() {
        let (s, b) = reference();
        let bound = bind(&s, &b, &clock()).unwrap();
        // 8717 is a small order with an unrecorded surcharge; 2778 is large
        let small = order_row(&bound, "8717");
        let large = order_row(&bound, "2778");
        assert_eq!(bound.stored_value("ORDER", small, "surcharge"), Value::UNKNOWN);
        assert_eq!(bound.stored_value("ORDER", large, "surcharge"), Value::NOT_APPLICABLE);
        assert_eq!(bound.stored_value("ORDER", small, "discount"), Value::NOT_APPLICABLE);
        assert_eq!(bound.subtypes_of("ORDER_SIZE", large).iter().collect::<Vec<_>>(), ["LARGE_ORDER"]);
    }

    #[test]
    fn every_null_classified_once() {
        let (s, b) = reference();
        let bound = bind(&s, &b, &clock()).unwrap();
        let mut nulls = 0;
        for (name, t) in &bound.bundle.tables {
            for (r, row) in t.rows.iter().enumerate() {
                for (c, cell) in row.iter().enumerate() {
                    if cell.is_none() {
                        nulls += 1;
                        assert!(bound.null_class(name, r, &t.columns[c].name).is_some());
                    }
                }
            }
        }
        assert_eq!(nulls, bound.null_class.len());
    }

    #[test]
    fn dangling_fk() {
        let (s, mut b) = reference();
        let text = String::from_utf8(crate::tabular::to_csv_bytes(&b.tables["ORDER"])).unwrap().replace(",398\n", ",999\n");
        replace(&mut b, "ORDER", &text);
        let d = bind(&s, &b, &clock()).unwrap_err();
        assert!(d.iter().any(|x| x.code == "dangling-fk" && x.message.contains("999")), "{d:?}");
    }

    #[test]
    fn overlapping_disjoint_predicates() {
        let src = "entity P { key id: identifier\n attr x: numeric }\n\
                   generalization G of P disjoint { subtype A when (x > 1) subtype B when (x < 5) }";
        let s = parse_schema(&SchemaSource::inline(src)).unwrap();
        let mut b = DataBundle::default();
        let cols = [Column::new("id", crate::eer::AttributeKind::Identifier), Column::new("x", crate::eer::AttributeKind::Numeric)];
        b.tables.insert("P".into(), parse_csv("P", b"id,x\n1,0\n2,3\n3,9\n", &cols).unwrap());
        let d = bind(&s, &b, &clock()).unwrap_err();
        let dis: Vec<_> = d.iter().filter(|x| x.code == "disjointness").collect();
        assert_eq!(dis.len(), 1);
        assert!(dis[0].message.contains("P 2"));
        // the same data under overlap is fine
        let s2 = parse_schema(&SchemaSource::inline(&src.replace("disjoint", "overlap"))).unwrap();
        let bound = bind(&s2, &b, &clock()).unwrap();
        assert_eq!(bound.subtypes_of("G", 1).len(), 2);
    }

    #[test]
    fn reference_fan_out() {
        let (s, b) = reference();
        let bound = bind(&s, &b, &clock()).unwrap();
        let rep = cardinality_report(&bound);
        let places = rep.iter().find(|r| r.relationship == "PLACES").unwrap();
        assert_eq!((places.observed_min, places.observed_max, places.conformant), (1, 4, true));
    }

    #[test]
    fn customer_without_orders() {
        let (s, mut b) = reference();
        replace(&mut b, "CUSTOMER", "cust_id,gender,dob\n101,M,1997-01-15\n400,F,1992-03-02\n223,F,1975-05-20\n398,M,1931-11-11\n777,F,1980-01-01\n");
        let (model, d) = bind_report(&s, &b, &clock());
        assert!(d.iter().any(|x| x.code == "mandatory-participation"));
        let rep = cardinality_report(&model.unwrap());
        let places = rep.iter().find(|r| r.relationship == "PLACES").unwrap();
        assert!(!places.conformant);
        assert_eq!(places.violations.len(), 1);
        assert!(places.violations[0].contains("777"));
    }

    #[test]
    fn one_to_one_fan_out_violation() {
        use crate::eer::AttributeKind::Identifier;
        let src = "entity A { key id: identifier }\nentity B { key id: identifier }\n\
                   relationship R { A (0,1) -- (0,1) B via a_id }";
        let s = parse_schema(&SchemaSource::inline(src)).unwrap();
        let mut b = DataBundle::default();
        b.tables.insert("A".into(), parse_csv("A", b"id\n1\n2\n", &[Column::new("id", Identifier)]).unwrap());
        let bcols = [Column::new("id", Identifier), Column::new("a_id", Identifier)];
        b.tables.insert("B".into(), parse_csv("B", b"id,a_id\nx,1\ny,1\nz,\n", &bcols).unwrap());
        let (model, d) = bind_report(&s, &b, &clock());
        assert!(d.iter().any(|x| x.code == "fan-out"));
        let rep = cardinality_report(&model.unwrap());
        assert_eq!(rep[0].violations.len(), 1);
        assert_eq!(rep[0].observed_max, 2);
    }

    #[test]
    fn applicability_rules() {
        use crate::eer::AttributeKind::*;
        let src = "entity P { key id: identifier\n attr kind: nominal\n attr y: numeric applicable_when (kind = 'a') }";
        let s = parse_schema(&SchemaSource::inline(src)).unwrap();
        let cols = [Column::new("id", Identifier), Column::new("kind", Nominal), Column::new("y", Numeric)];
        let mut b = DataBundle::default();
        b.tables.insert("P".into(), parse_csv("P", b"id,kind,y\n1,a,\n2,b,\n3,,\n", &cols).unwrap());
        let bound = bind(&s, &b, &clock()).unwrap();
        assert_eq!(bound.stored_value("P", 0, "y"), Value::UNKNOWN);
        assert_eq!(bound.stored_value("P", 1, "y"), Value::NOT_APPLICABLE);
        assert_eq!(bound.stored_value("P", 2, "y"), Value::UNKNOWN);
        assert!(bound.warnings.iter().any(|w| w.code == "null-applicability"));
    }

    #[test]
    fn membership_table() {
        use crate::eer::AttributeKind::*;
        let src = "entity P { key id: identifier }\n\
                   generalization G of P overlap { subtype A from table { attr a: numeric } subtype B from table }";
        let s = parse_schema(&SchemaSource::inline(src)).unwrap();
        let mut b = DataBundle::default();
        b.tables.insert("P".into(), parse_csv("P", b"id\n1\n2\n3\n", &[Column::new("id", Identifier)]).unwrap());
        b.tables.insert("A".into(), parse_csv("A", b"id,a\n1,\n2,5\n", &[Column::new("id", Identifier), Column::new("a", Numeric)]).unwrap());
        b.tables.insert("B".into(), parse_csv("B", b"id\n2\n", &[Column::new("id", Identifier)]).unwrap());
        let bound = bind(&s, &b, &clock()).unwrap();
        assert_eq!(bound.stored_value("P", 0, "a"), Value::UNKNOWN);
        assert_eq!(bound.stored_value("P", 1, "a"), Value::number(5.0));
        assert_eq!(bound.stored_value("P", 2, "a"), Value::NOT_APPLICABLE);
        assert!(bound.warnings.iter().any(|w| w.code == "no-subtype"));

        b.tables.insert("B".into(), parse_csv("B", b"id\n9\n", &[Column::new("id", Identifier)]).unwrap());
        let d = bind(&s, &b, &clock()).unwrap_err();
        assert!(d.iter().any(|x| x.code == "dangling-membership"));
    }

    #[test]
    fn missing_table_and_duplicate_key() {
        let (s, mut b) = reference();
        let mut b2 = b.clone();
        b2.tables.remove("PRODUCT");
        assert!(bind(&s, &b2, &clock()).unwrap_err().iter().any(|x| x.code == "missing-table"));
        replace(&mut b, "PRODUCT", "product_id,name,list_price\nP1,Widget,20\nP1,Gadget,45\nP3,Gizmo,120\n");
        assert!(bind(&s, &b, &clock()).unwrap_err().iter().any(|x| x.code == "duplicate-key"));
    }
}
