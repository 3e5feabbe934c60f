//! In-memory extended entity-relationship model, structural validation,
//! many-to-many rewriting and target resolution.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::expr::{type_of, AggKind, Expr, Literal, TypeEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Identifier,
    Numeric,
    Nominal,
    Boolean,
    Date,
    Text,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 6] = [
        AttributeKind::Identifier,
        AttributeKind::Numeric,
        AttributeKind::Nominal,
        AttributeKind::Boolean,
        AttributeKind::Date,
        AttributeKind::Text,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            AttributeKind::Identifier => "identifier",
            AttributeKind::Numeric => "numeric",
            AttributeKind::Nominal => "nominal",
            AttributeKind::Boolean => "boolean",
            AttributeKind::Date => "date",
            AttributeKind::Text => "text",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        AttributeKind::ALL.into_iter().find(|k| k.keyword() == s)
    }

    /// Identifiers, nominals and text all hold strings.
    pub fn is_textual(self) -> bool {
        matches!(self, AttributeKind::Identifier | AttributeKind::Nominal | AttributeKind::Text)
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
    pub is_key: bool,
    pub optional: bool,
    pub applicable_when: Option<Expr>,
    /// Present iff the attribute is derived.
    pub derivation: Option<Expr>,
}

impl Attribute {
    pub fn stored(name: &str, kind: AttributeKind) -> Self {
        Attribute {
            name: name.to_string(),
            kind,
            is_key: false,
            optional: false,
            applicable_when: None,
            derivation: None,
        }
    }

    pub fn key(name: &str, kind: AttributeKind) -> Self {
        Attribute {
            is_key: true,
            ..Attribute::stored(name, kind)
        }
    }

    pub fn derived(name: &str, kind: AttributeKind, expr: Expr) -> Self {
        Attribute {
            derivation: Some(expr),
            ..Attribute::stored(name, kind)
        }
    }

    pub fn is_derived(&self) -> bool {
        self.derivation.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityType {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl EntityType {
    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn key_attributes(&self) -> impl Iterator<Item = &Attribute> {
        self.attributes.iter().filter(|a| a.is_key)
    }

    pub fn key_names(&self) -> Vec<String> {
        self.key_attributes().map(|a| a.name.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinCard {
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxCard {
    One,
    Many,
}

/// One end of a relationship. Cardinalities read "look-across": in
/// `CUSTOMER (1,1) -- (1,N) ORDER` each ORDER has exactly one CUSTOMER and
/// each CUSTOMER has one or more ORDERs.
#[derive(Debug, Clone, PartialEq)]
pub struct RelEnd {
    pub entity: String,
    pub min: MinCard,
    pub max: MaxCard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelKind {
    OneToOne,
    OneToMany,
    ManyToMany,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relationship {
    pub name: String,
    pub left: RelEnd,
    pub right: RelEnd,
    pub fk_columns: Vec<String>,
    pub attributes: Vec<Attribute>,
}

impl Relationship {
    pub fn kind(&self) -> RelKind {
        match (self.left.max, self.right.max) {
            (MaxCard::One, MaxCard::One) => RelKind::OneToOne,
            (MaxCard::Many, MaxCard::Many) => RelKind::ManyToMany,
            _ => RelKind::OneToMany,
        }
    }

    /// End whose table is referenced by the foreign key. For 1:N this is the
    /// "one" side; for 1:1 it is the left end.
    pub fn referenced(&self) -> &RelEnd {
        match (self.left.max, self.right.max) {
            (MaxCard::Many, MaxCard::One) => &self.right,
            _ => &self.left,
        }
    }

    /// End whose table carries the foreign-key columns.
    pub fn holder(&self) -> &RelEnd {
        match (self.left.max, self.right.max) {
            (MaxCard::Many, MaxCard::One) => &self.left,
            _ => &self.right,
        }
    }

    /// The foreign key must be non-null on every holder row.
    pub fn fk_required(&self) -> bool {
        self.referenced().min == MinCard::One
    }

    pub fn involves(&self, entity: &str) -> bool {
        self.left.entity == entity || self.right.entity == entity
    }

    pub fn other_end(&self, entity: &str) -> Option<&RelEnd> {
        if self.left.entity == entity {
            Some(&self.right)
        } else if self.right.entity == entity {
            Some(&self.left)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneralizationMode {
    Disjoint,
    Overlap,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    /// `when (<expr>)` over supertype attributes.
    Predicate(Expr),
    /// `from table`: a `<SUBTYPE>.csv` keyed by the supertype key.
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subtype {
    pub name: String,
    pub membership: Membership,
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generalization {
    pub name: String,
    pub supertype: String,
    pub mode: GeneralizationMode,
    pub subtypes: Vec<Subtype>,
}

impl Generalization {
    pub fn subtype(&self, name: &str) -> Option<&Subtype> {
        self.subtypes.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ImputeStrategy {
    MeanMode,
    Constant(Literal),
    None,
}

impl fmt::Display for ImputeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImputeStrategy::MeanMode => f.write_str("mean_mode"),
            ImputeStrategy::None => f.write_str("none"),
            ImputeStrategy::Constant(lit) => {
                write!(f, "constant({})", Expr::Literal(lit.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDecl {
    pub name: String,
    pub target_entity: String,
    pub target_attr: String,
    pub split_by: Option<String>,
    pub agg: Option<Vec<AggKind>>,
    pub top_k: Option<usize>,
    pub impute: Option<ImputeStrategy>,
}

pub const DEFAULT_AGGS: [AggKind; 4] = [AggKind::Mean, AggKind::Sum, AggKind::Min, AggKind::Max];
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EerSchema {
    pub entities: Vec<EntityType>,
    pub relationships: Vec<Relationship>,
    pub generalizations: Vec<Generalization>,
    pub tasks: Vec<TaskDecl>,
}

impl EerSchema {
    pub fn entity(&self, name: &str) -> Option<&EntityType> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn relationship(&self, name: &str) -> Option<&Relationship> {
        self.relationships.iter().find(|r| r.name == name)
    }

    pub fn generalization(&self, name: &str) -> Option<&Generalization> {
        self.generalizations.iter().find(|g| g.name == name)
    }

    pub fn task(&self, name: &str) -> Option<&TaskDecl> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn generalizations_of<'a>(&'a self, entity: &'a str) -> impl Iterator<Item = &'a Generalization> + 'a {
        self.generalizations.iter().filter(move |g| g.supertype == entity)
    }

    /// Generalization and subtype that declare `attr` on `entity`, if any.
    pub fn subtype_owner(&self, entity: &str, attr: &str) -> Option<(&Generalization, &Subtype)> {
        self.generalizations.iter().filter(|g| g.supertype == entity).find_map(|g| {
            g.subtypes
                .iter()
                .find(|s| s.attributes.iter().any(|a| a.name == attr))
                .map(|s| (g, s))
        })
    }

    /// Relationships where `entity` holds the foreign key.
    pub fn held_relationships<'a>(&'a self, entity: &'a str) -> impl Iterator<Item = &'a Relationship> + 'a {
        self.relationships
            .iter()
            .filter(move |r| r.kind() != RelKind::ManyToMany && r.holder().entity == entity)
    }

    /// Column names and kinds a stored table for `entity` must carry: stored
    /// attributes, attributes of `when` subtypes, then foreign-key columns.
    pub fn table_columns(&self, entity: &str) -> Vec<(String, AttributeKind)> {
        let Some(e) = self.entity(entity) else {
            return Vec::new();
        };
        let mut cols: Vec<(String, AttributeKind)> = e
            .attributes
            .iter()
            .filter(|a| !a.is_derived())
            .map(|a| (a.name.clone(), a.kind))
            .collect();
        for g in self.generalizations_of(entity) {
            for s in &g.subtypes {
                if matches!(s.membership, Membership::Predicate(_)) {
                    cols.extend(s.attributes.iter().filter(|a| !a.is_derived()).map(|a| (a.name.clone(), a.kind)));
                }
            }
        }
        for r in self.held_relationships(entity) {
            if let Some(parent) = self.entity(&r.referenced().entity) {
                for (col, key) in r.fk_columns.iter().zip(parent.key_attributes()) {
                    if !cols.iter().any(|(c, _)| c == col) {
                        cols.push((col.clone(), key.kind));
                    }
                }
            }
        }
        cols
    }

    /// Columns of a `from table` subtype membership table.
    pub fn membership_table_columns(&self, generalization: &str, subtype: &str) -> Vec<(String, AttributeKind)> {
        let Some(g) = self.generalization(generalization) else {
            return Vec::new();
        };
        let Some(sup) = self.entity(&g.supertype) else {
            return Vec::new();
        };
        let mut cols: Vec<(String, AttributeKind)> = sup.key_attributes().map(|a| (a.name.clone(), a.kind)).collect();
        if let Some(s) = g.subtype(subtype) {
            cols.extend(s.attributes.iter().filter(|a| !a.is_derived()).map(|a| (a.name.clone(), a.kind)));
        }
        cols
    }

    /// Type environment for expressions owned by `entity`.
    pub fn type_env(&self, entity: &str) -> TypeEnv {
        let mut env = TypeEnv::default();
        if let Some(e) = self.entity(entity) {
            for a in &e.attributes {
                env.attributes.insert(a.name.clone(), a.kind);
            }
        }
        for g in self.generalizations_of(entity) {
            for s in &g.subtypes {
                for a in &s.attributes {
                    env.attributes.insert(a.name.clone(), a.kind);
                }
            }
        }
        for r in &self.relationships {
            let Some(other) = r.other_end(entity) else { continue };
            let mut attrs = BTreeMap::new();
            if r.kind() == RelKind::ManyToMany {
                for a in &r.attributes {
                    attrs.insert(a.name.clone(), a.kind);
                }
            } else if let Some(o) = self.entity(&other.entity) {
                for a in &o.attributes {
                    if !a.derivation.as_ref().is_some_and(Expr::has_aggregate) {
                        attrs.insert(a.name.clone(), a.kind);
                    }
                }
            }
            env.relationships.insert(r.name.clone(), attrs);
        }
        env
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EerError {
    #[error("name collision: `{0}` already exists")]
    NameCollision(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("attribute `{attr}` does not exist on entity `{entity}`")]
    MissingTargetAttribute { entity: String, attr: String },
    #[error("relationship `{0}` is many-to-many; rewrite it before resolving targets")]
    UnrewrittenManyToMany(String),
}

fn kinds_compatible(declared: AttributeKind, actual: AttributeKind) -> bool {
    declared == actual || (declared.is_textual() && actual.is_textual())
}

/// Structural validation. The schema is valid iff no diagnostic is an error.
pub fn validate_schema(schema: &EerSchema) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for e in &schema.entities {
        if !seen.insert(e.name.as_str()) {
            out.push(Diagnostic::error("duplicate-entity", format!("entity `{}` declared twice", e.name)));
        }
    }
    for g in &schema.generalizations {
        for s in &g.subtypes {
            if !seen.insert(s.name.as_str()) {
                out.push(Diagnostic::error(
                    "duplicate-name",
                    format!("subtype `{}` reuses an existing entity or subtype name", s.name),
                ));
            }
        }
    }
    for (what, names) in [
        ("relationship", schema.relationships.iter().map(|r| r.name.as_str()).collect::<Vec<_>>()),
        ("generalization", schema.generalizations.iter().map(|g| g.name.as_str()).collect()),
        ("task", schema.tasks.iter().map(|t| t.name.as_str()).collect()),
    ] {
        let mut s = BTreeSet::new();
        for n in names {
            if !s.insert(n) {
                out.push(Diagnostic::error(&format!("duplicate-{what}"), format!("{what} `{n}` declared twice")));
            }
        }
    }

    for e in &schema.entities {
        validate_entity(schema, e, &mut out);
    }
    for r in &schema.relationships {
        validate_relationship(schema, r, &mut out);
    }
    for g in &schema.generalizations {
        validate_generalization(schema, g, &mut out);
    }
    for t in &schema.tasks {
        validate_task(schema, t, &mut out);
    }
    out
}

fn validate_entity(schema: &EerSchema, e: &EntityType, out: &mut Vec<Diagnostic>) {
    let loc = format!("entity {}", e.name);
    if e.key_attributes().next().is_none() {
        out.push(Diagnostic::error("missing-key", format!("entity {} lacks a key", e.name)).at(&loc));
    }
    let mut names = BTreeSet::new();
    let sub_attrs = schema
        .generalizations_of(&e.name)
        .flat_map(|g| g.subtypes.iter().flat_map(|s| s.attributes.iter()));
    for a in e.attributes.iter().chain(sub_attrs) {
        if !names.insert(a.name.as_str()) {
            out.push(Diagnostic::error("duplicate-attribute", format!("attribute `{}` declared twice", a.name)).at(&loc));
        }
    }
    let env = schema.type_env(&e.name);
    let stored: BTreeSet<&str> = e.attributes.iter().filter(|a| !a.is_derived()).map(|a| a.name.as_str()).collect();
    for (i, a) in e.attributes.iter().enumerate() {
        let aloc = format!("{}.{}", e.name, a.name);
        if a.is_key && (a.is_derived() || a.optional || a.applicable_when.is_some()) {
            out.push(Diagnostic::error(
                "key-attribute",
                format!("key attribute `{}` cannot be derived, optional or conditional", a.name),
            ).at(&aloc));
        }
        if let Some(cond) = &a.applicable_when {
            match type_of(cond, &env) {
                Ok(AttributeKind::Boolean) => {}
                Ok(k) => out.push(Diagnostic::error("type-error", format!("applicable_when must be boolean, found {k}")).at(&aloc)),
                Err(err) => out.push(Diagnostic::error("type-error", err.to_string()).at(&aloc)),
            }
            if cond.has_aggregate() || cond.attribute_refs().iter().any(|r| !stored.contains(r)) {
                out.push(Diagnostic::error(
                    "applicability-scope",
                    "applicable_when may reference only stored attributes of its entity",
                ).at(&aloc));
            }
        }
        if let Some(d) = &a.derivation {
            match type_of(d, &env) {
                Ok(k) if kinds_compatible(a.kind, k) => {}
                Ok(k) => out.push(Diagnostic::error(
                    "type-error",
                    format!("derivation of `{}` yields {k} but the attribute is declared {}", a.name, a.kind),
                ).at(&aloc)),
                Err(err) => out.push(Diagnostic::error("type-error", err.to_string()).at(&aloc)),
            }
            for r in d.attribute_refs() {
                let pos = e.attributes.iter().position(|x| x.name == r);
                if let Some(p) = pos {
                    if e.attributes[p].is_derived() && p >= i {
                        out.push(Diagnostic::error(
                            "derivation-order",
                            format!("`{}` references derived attribute `{r}` declared at or after it", a.name),
                        ).at(&aloc));
                    }
                }
            }
        }
    }
}

fn validate_relationship(schema: &EerSchema, r: &Relationship, out: &mut Vec<Diagnostic>) {
    let loc = format!("relationship {}", r.name);
    let mut ok = true;
    for end in [&r.left, &r.right] {
        if schema.entity(&end.entity).is_none() {
            out.push(Diagnostic::error("unknown-entity", format!("relationship {} references undeclared entity {}", r.name, end.entity)).at(&loc));
            ok = false;
        }
    }
    if r.left.entity == r.right.entity {
        out.push(Diagnostic::error("self-relationship", "recursive relationships are not supported").at(&loc));
        ok = false;
    }
    if !r.attributes.is_empty() && r.kind() != RelKind::ManyToMany {
        out.push(Diagnostic::error("relationship-attributes", "only many-to-many relationships may carry attributes").at(&loc));
    }
    if !ok {
        return;
    }
    match r.kind() {
        RelKind::ManyToMany => {
            let single = |n: &str| schema.entity(n).map_or(0, |e| e.key_attributes().count()) == 1;
            if r.fk_columns.len() != 2 {
                out.push(Diagnostic::error("fk-arity", "many-to-many relationships name one key column per side: `via left_col, right_col`").at(&loc));
            } else if r.fk_columns[0] == r.fk_columns[1] {
                out.push(Diagnostic::error("fk-arity", "the two key columns of a many-to-many relationship must differ").at(&loc));
            }
            if !single(&r.left.entity) || !single(&r.right.entity) {
                out.push(Diagnostic::error("fk-arity", "many-to-many ends must have single-column keys").at(&loc));
            }
        }
        _ => {
            let parent = schema.entity(&r.referenced().entity).expect("checked");
            let holder = schema.entity(&r.holder().entity).expect("checked");
            let arity = parent.key_attributes().count();
            if r.fk_columns.len() != arity {
                out.push(Diagnostic::error(
                    "fk-arity",
                    format!("`via` lists {} column(s) but {} has a {arity}-column key", r.fk_columns.len(), parent.name),
                ).at(&loc));
            }
            for col in &r.fk_columns {
                if let Some(a) = holder.attribute(col) {
                    if !a.is_key {
                        out.push(Diagnostic::error(
                            "fk-column",
                            format!("foreign-key column `{col}` is declared as a non-key attribute of {}", holder.name),
                        ).at(&loc));
                    }
                }
            }
        }
    }
}

fn validate_generalization(schema: &EerSchema, g: &Generalization, out: &mut Vec<Diagnostic>) {
    let loc = format!("generalization {}", g.name);
    let Some(sup) = schema.entity(&g.supertype) else {
        out.push(Diagnostic::error("unknown-entity", format!("generalization {} references undeclared entity {}", g.name, g.supertype)).at(&loc));
        return;
    };
    if g.subtypes.len() < 2 {
        out.push(Diagnostic::error("subtype-count", "a generalization needs at least two subtypes").at(&loc));
    }
    let mut names = BTreeSet::new();
    for s in &g.subtypes {
        if !names.insert(s.name.as_str()) {
            out.push(Diagnostic::error("duplicate-subtype", format!("subtype `{}` declared twice", s.name)).at(&loc));
        }
        for a in &s.attributes {
            if a.is_key || a.is_derived() {
                out.push(Diagnostic::error(
                    "subtype-attribute",
                    format!("subtype attribute `{}` must be stored and non-key", a.name),
                ).at(&loc));
            }
        }
        if let Membership::Predicate(p) = &s.membership {
            let mut env = TypeEnv::default();
            for a in sup.attributes.iter().filter(|a| !a.is_derived()) {
                env.attributes.insert(a.name.clone(), a.kind);
            }
            match type_of(p, &env) {
                Ok(AttributeKind::Boolean) => {}
                Ok(k) => out.push(Diagnostic::error("type-error", format!("membership predicate of {} must be boolean, found {k}", s.name)).at(&loc)),
                Err(err) => out.push(Diagnostic::error("type-error", format!("membership predicate of {}: {err}", s.name)).at(&loc)),
            }
        }
    }
}

fn validate_task(schema: &EerSchema, t: &TaskDecl, out: &mut Vec<Diagnostic>) {
    let loc = format!("task {}", t.name);
    match schema.entity(&t.target_entity) {
        None => out.push(Diagnostic::error("unknown-entity", format!("task {} targets undeclared entity {}", t.name, t.target_entity)).at(&loc)),
        Some(e) => match e.attribute(&t.target_attr) {
            None => out.push(Diagnostic::error(
                "unknown-attribute",
                format!("target attribute {}.{} does not exist", t.target_entity, t.target_attr),
            ).at(&loc)),
            Some(a) if a.is_key => out.push(Diagnostic::error("target-key", "the target cannot be a key attribute").at(&loc)),
            Some(_) => {}
        },
    }
    if let Some(g) = &t.split_by {
        if schema.generalization(g).is_none() {
            out.push(Diagnostic::error("unknown-generalization", format!("split_by names undeclared generalization {g}")).at(&loc));
        }
    }
    if t.top_k == Some(0) {
        out.push(Diagnostic::error("top-k", "top_k must be positive").at(&loc));
    }
    if t.agg.as_ref().is_some_and(Vec::is_empty) {
        out.push(Diagnostic::error("agg", "agg list must not be empty").at(&loc));
    }
}

/// Replaces every many-to-many relationship by an associative entity
/// `<LEFT>_<RIGHT>` and two one-to-many links `<REL>_<LEFT>`, `<REL>_<RIGHT>`.
/// Aggregates over the original relationship are redirected to the link
/// owned by the aggregating entity. Idempotent.
pub fn rewrite_many_to_many(schema: &EerSchema) -> Result<EerSchema, EerError> {
    let mut out = schema.clone();
    out.relationships.clear();
    // (entity, old relationship) -> new link name
    let mut redirects: BTreeMap<(String, String), String> = BTreeMap::new();

    for r in &schema.relationships {
        if r.kind() != RelKind::ManyToMany {
            out.relationships.push(r.clone());
            continue;
        }
        let assoc = format!("{}_{}", r.left.entity, r.right.entity);
        if out.entity(&assoc).is_some() {
            return Err(EerError::NameCollision(assoc));
        }
        let key_kind = |entity: &str| {
            schema
                .entity(entity)
                .and_then(|e| e.key_attributes().next().map(|a| a.kind))
                .unwrap_or(AttributeKind::Identifier)
        };
        let (lcol, rcol) = (r.fk_columns[0].clone(), r.fk_columns[1].clone());
        let mut attributes = vec![
            Attribute::key(&lcol, key_kind(&r.left.entity)),
            Attribute::key(&rcol, key_kind(&r.right.entity)),
        ];
        attributes.extend(r.attributes.iter().cloned());
        out.entities.push(EntityType {
            name: assoc.clone(),
            attributes,
        });
        // Each associative row belongs to exactly one instance of each side;
        // each side's participation keeps the original minimum.
        for (end, other, col) in [(&r.left, &r.right, lcol), (&r.right, &r.left, rcol)] {
            let name = format!("{}_{}", r.name, end.entity);
            if schema.relationship(&name).is_some() {
                return Err(EerError::NameCollision(name));
            }
            out.relationships.push(Relationship {
                name: name.clone(),
                left: RelEnd {
                    entity: end.entity.clone(),
                    min: MinCard::One,
                    max: MaxCard::One,
                },
                right: RelEnd {
                    entity: assoc.clone(),
                    min: other.min,
                    max: MaxCard::Many,
                },
                fk_columns: vec![col],
                attributes: Vec::new(),
            });
            redirects.insert((end.entity.clone(), r.name.clone()), name);
        }
    }

    if !redirects.is_empty() {
        for e in &mut out.entities {
            for a in &mut e.attributes {
                if let Some(d) = &mut a.derivation {
                    redirect_aggregates(d, &e.name, &redirects);
                }
            }
        }
    }
    Ok(out)
}

fn redirect_aggregates(expr: &mut Expr, entity: &str, redirects: &BTreeMap<(String, String), String>) {
    match expr {
        Expr::Aggregate { relationship, .. } => {
            if let Some(new) = redirects.get(&(entity.to_string(), relationship.clone())) {
                *relationship = new.clone();
            }
        }
        Expr::Unary(_, e) => redirect_aggregates(e, entity, redirects),
        Expr::Binary(_, l, r) => {
            redirect_aggregates(l, entity, redirects);
            redirect_aggregates(r, entity, redirects);
        }
        Expr::Call(_, args) => args.iter_mut().for_each(|a| redirect_aggregates(a, entity, redirects)),
        Expr::Literal(_) | Expr::Attr(_) => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Parent is the "one" side of a 1:N relationship: many child rows per
    /// parent row.
    Summarize,
    /// At most one child row per parent row (1:1, or walking N:1 towards
    /// the referenced entity).
    JoinOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub parent: String,
    pub child: String,
    pub relationship: String,
    pub kind: EdgeKind,
    /// True when the parent's table carries the foreign key.
    pub parent_holds_fk: bool,
    /// Depth of the child; the root has depth 0.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBinding {
    pub target_entity: String,
    pub target_attr: String,
    /// Tree entities in breadth-first order, root first.
    pub predictor_entities: Vec<String>,
    /// Tree edges in breadth-first discovery order.
    pub spanning_tree: Vec<TreeEdge>,
    /// Relationships that would close a cycle.
    pub skipped_relationships: Vec<String>,
    /// Entities unreachable from the target-bearing entity.
    pub excluded_entities: Vec<String>,
}

impl TargetBinding {
    pub fn children_of<'a>(&'a self, entity: &'a str) -> impl Iterator<Item = &'a TreeEdge> + 'a {
        self.spanning_tree.iter().filter(move |e| e.parent == entity)
    }

    pub fn edge_to(&self, child: &str) -> Option<&TreeEdge> {
        self.spanning_tree.iter().find(|e| e.child == child)
    }

    pub fn depth_of(&self, entity: &str) -> usize {
        self.edge_to(entity).map_or(0, |e| e.depth)
    }

    pub fn contains(&self, entity: &str) -> bool {
        self.predictor_entities.iter().any(|e| e == entity)
    }

    pub fn warnings(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for e in &self.excluded_entities {
            out.push(Diagnostic::warning(
                "unreachable-entity",
                format!("entity {e} is not reachable from {} and is excluded", self.target_entity),
            ));
        }
        for r in &self.skipped_relationships {
            out.push(Diagnostic::warning(
                "cycle-edge",
                format!("relationship {r} closes a cycle and is skipped"),
            ));
        }
        out
    }
}

/// Breadth-first spanning tree from the target-bearing entity. Neighbours
/// are visited in relationship declaration order; the first visit wins.
pub fn resolve_target(schema: &EerSchema, task: &TaskDecl) -> Result<TargetBinding, EerError> {
    let root = schema
        .entity(&task.target_entity)
        .ok_or_else(|| EerError::UnknownEntity(task.target_entity.clone()))?;
    if root.attribute(&task.target_attr).is_none() {
        return Err(EerError::MissingTargetAttribute {
            entity: root.name.clone(),
            attr: task.target_attr.clone(),
        });
    }
    if let Some(r) = schema.relationships.iter().find(|r| r.kind() == RelKind::ManyToMany) {
        return Err(EerError::UnrewrittenManyToMany(r.name.clone()));
    }

    let mut visited = vec![root.name.clone()];
    let mut depth: BTreeMap<String, usize> = BTreeMap::from([(root.name.clone(), 0)]);
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut skipped = Vec::new();
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([root.name.clone()]);

    while let Some(node) = queue.pop_front() {
        for r in &schema.relationships {
            let Some(other) = r.other_end(&node) else { continue };
            if used.contains(r.name.as_str()) {
                continue;
            }
            used.insert(&r.name);
            if visited.contains(&other.entity) {
                skipped.push(r.name.clone());
                continue;
            }
            let parent_holds_fk = r.holder().entity == node;
            let kind = if !parent_holds_fk && r.kind() == RelKind::OneToMany {
                EdgeKind::Summarize
            } else {
                EdgeKind::JoinOne
            };
            let d = depth[&node] + 1;
            depth.insert(other.entity.clone(), d);
            visited.push(other.entity.clone());
            queue.push_back(other.entity.clone());
            edges.push(TreeEdge {
                parent: node.clone(),
                child: other.entity.clone(),
                relationship: r.name.clone(),
                kind,
                parent_holds_fk,
                depth: d,
            });
        }
    }

    let excluded = schema
        .entities
        .iter()
        .filter(|e| !visited.contains(&e.name))
        .map(|e| e.name.clone())
        .collect();
    Ok(TargetBinding {
        target_entity: root.name.clone(),
        target_attr: task.target_attr.clone(),
        predictor_entities: visited,
        spanning_tree: edges,
        skipped_relationships: skipped,
        excluded_entities: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_schema, SchemaSource};

    pub(crate) const CUSTOMER_ORDER: &str = include_str!("../examples/customer_order.cmml");

    fn schema(text: &str) -> EerSchema {
        parse_schema(&SchemaSource::inline(text)).unwrap()
    }

    fn task(s: &EerSchema, name: &str) -> TaskDecl {
        s.task(name).unwrap().clone()
    }

    #[test]
    fn reference_schema_is_valid() {
        let s = schema(CUSTOMER_ORDER);
        let diags = validate_schema(&s);
        assert!(diags.is_empty(), "{diags:?}");
        let rewritten = rewrite_many_to_many(&s).unwrap();
        assert!(validate_schema(&rewritten).is_empty());
    }

    #[test]
    fn undeclared_entity_in_relationship() {
        let s = schema("entity A { key id: identifier }\nrelationship R { A (1,1) -- (0,N) GHOST via a_id }");
        let errs: Vec<_> = validate_schema(&s).into_iter().filter(|d| d.is_error()).collect();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("GHOST"));
    }

    #[test]
    fn derivation_with_missing_attribute() {
        let s = schema("entity A { key id: identifier\n derived attr x: numeric = missing + 1 }");
        let errs: Vec<_> = validate_schema(&s).into_iter().filter(|d| d.is_error()).collect();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, "type-error");
    }

    #[test]
    fn derived_forward_reference_rejected() {
        let s = schema("entity A { key id: identifier\n derived attr x: numeric = y + 1\n derived attr y: numeric = 2 }");
        assert!(validate_schema(&s).iter().any(|d| d.code == "derivation-order"));
    }

    #[test]
    fn many_to_many_rewrite() {
        let s = schema(CUSTOMER_ORDER);
        assert_eq!(s.entities.len(), 3);
        let r = rewrite_many_to_many(&s).unwrap();
        let assoc = r.entity("ORDER_PRODUCT").expect("associative entity");
        let names: Vec<_> = assoc.attributes.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["order_id", "product_id", "quantity", "handling", "shipping"]);
        assert_eq!(assoc.key_names(), ["order_id", "product_id"]);
        assert!(r.relationships.iter().all(|r| r.kind() != RelKind::ManyToMany));
        let links: Vec<_> = r.relationships.iter().filter(|x| x.involves("ORDER_PRODUCT")).collect();
        assert_eq!(links.len(), 2);
        for l in links {
            assert_eq!(l.kind(), RelKind::OneToMany);
            assert_eq!(l.holder().entity, "ORDER_PRODUCT");
            assert_eq!(l.referenced().min, MinCard::One);
        }
    }

    #[test]
    fn rewrite_identity_and_idempotence() {
        let one_to_n = schema("entity A { key id: identifier }\nentity B { key id: identifier }\nrelationship R { A (1,1) -- (0,N) B via a_id }");
        assert_eq!(rewrite_many_to_many(&one_to_n).unwrap(), one_to_n);
        let s = schema(CUSTOMER_ORDER);
        let once = rewrite_many_to_many(&s).unwrap();
        let twice = rewrite_many_to_many(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn rewrite_collision() {
        let s = schema(
            "entity A { key id: identifier }\nentity B { key id: identifier }\nentity A_B { key id: identifier }\n\
             relationship R { A (0,N) -- (0,N) B via a_id, b_id }",
        );
        assert_eq!(rewrite_many_to_many(&s), Err(EerError::NameCollision("A_B".into())));
    }

    #[test]
    fn aggregate_over_many_to_many_is_redirected() {
        let s = schema(
            "entity A { key id: identifier\n derived attr q: numeric = sum(R.qty) }\nentity B { key id: identifier }\n\
             relationship R { A (0,N) -- (1,N) B via a_id, b_id { attr qty: numeric } }",
        );
        let r = rewrite_many_to_many(&s).unwrap();
        assert_eq!(r.entity("A").unwrap().attributes[1].derivation.as_ref().unwrap().to_string(), "sum(R_A.qty)");
        assert!(validate_schema(&r).is_empty(), "{:?}", validate_schema(&r));
    }

    #[test]
    fn customer_tree_is_breadth_first() {
        let s = rewrite_many_to_many(&schema(CUSTOMER_ORDER)).unwrap();
        let b = resolve_target(&s, &task(&s, "PREDICT_LTV")).unwrap();
        assert_eq!(b.predictor_entities, ["CUSTOMER", "ORDER", "ORDER_PRODUCT", "PRODUCT"]);
        let shape: Vec<_> = b.spanning_tree.iter().map(|e| (e.parent.as_str(), e.child.as_str(), e.kind, e.depth)).collect();
        assert_eq!(
            shape,
            [
                ("CUSTOMER", "ORDER", EdgeKind::Summarize, 1),
                ("ORDER", "ORDER_PRODUCT", EdgeKind::Summarize, 2),
                ("ORDER_PRODUCT", "PRODUCT", EdgeKind::JoinOne, 3),
            ]
        );
        assert!(b.skipped_relationships.is_empty());
    }

    #[test]
    fn single_entity_tree() {
        let s = schema("entity A { key id: identifier\n attr y: numeric\n attr x: numeric }\ntask T { target A.y }");
        let b = resolve_target(&s, &task(&s, "T")).unwrap();
        assert_eq!(b.predictor_entities, ["A"]);
        assert!(b.spanning_tree.is_empty());
    }

    #[test]
    fn cycle_edge_is_skipped() {
        let s = schema(
            "entity A { key id: identifier\n attr y: numeric }\nentity B { key id: identifier }\nentity C { key id: identifier }\n\
             relationship AB { A (1,1) -- (0,N) B via a_id }\nrelationship BC { B (1,1) -- (0,N) C via b_id }\n\
             relationship CA { A (1,1) -- (0,N) C via a_id }\ntask T { target A.y }",
        );
        let b = resolve_target(&s, &task(&s, "T")).unwrap();
        assert_eq!(b.predictor_entities, ["A", "B", "C"]);
        assert_eq!(b.spanning_tree.len(), 2);
        assert_eq!(b.spanning_tree[1].relationship, "CA");
        assert_eq!(b.skipped_relationships, ["BC"]);
        assert_eq!(b.warnings().len(), 1);
    }

    #[test]
    fn unreachable_entity_excluded() {
        let s = schema("entity A { key id: identifier\n attr y: numeric }\nentity Z { key id: identifier }\ntask T { target A.y }");
        let b = resolve_target(&s, &task(&s, "T")).unwrap();
        assert_eq!(b.excluded_entities, ["Z"]);
    }

    #[test]
    fn missing_target_attribute() {
        let s = schema("entity A { key id: identifier }");
        let t = TaskDecl {
            name: "T".into(),
            target_entity: "A".into(),
            target_attr: "nope".into(),
            split_by: None,
            agg: None,
            top_k: None,
            impute: None,
        };
        assert!(matches!(resolve_target(&s, &t), Err(EerError::MissingTargetAttribute { .. })));
    }
}
