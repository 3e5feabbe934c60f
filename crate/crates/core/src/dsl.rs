//! The `.cmml` schema language: parser with per-declaration error recovery,
//! and a canonical printer.
//!
//! ```text
//! entity CUSTOMER {
//!   key cust_id: identifier
//!   attr dob: date
//!   derived attr age: numeric = years_between(dob, today())
//! }
//! relationship PLACES { CUSTOMER (1,1) -- (1,N) ORDER via cust_id }
//! task PREDICT_LTV { target CUSTOMER.ltv }
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::diag::{line_col, Diagnostic};
use crate::eer::{
    Attribute, AttributeKind, EerSchema, EntityType, Generalization, GeneralizationMode, ImputeStrategy, MaxCard,
    Membership, MinCard, RelEnd, Relationship, Subtype, TaskDecl,
};
use crate::expr::lexer::{tokenize, Tok};
use crate::expr::parser::{Cursor, PError, PResult};
use crate::expr::{AggKind, Expr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaSource {
    pub text: String,
    /// File path, or `<inline>`.
    pub origin: String,
}

impl SchemaSource {
    pub fn inline(text: &str) -> Self {
        SchemaSource {
            text: text.to_string(),
            origin: "<inline>".to_string(),
        }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(SchemaSource {
            text: std::fs::read_to_string(path)?,
            origin: path.display().to_string(),
        })
    }
}

const TOP_LEVEL: [&str; 4] = ["entity", "relationship", "generalization", "task"];

/// Parses a schema. On failure every recoverable error is reported, each with
/// `origin:line:column`.
pub fn parse_schema(source: &SchemaSource) -> Result<EerSchema, Vec<Diagnostic>> {
    let locate = |offset: usize| {
        let (line, col) = line_col(&source.text, offset);
        format!("{}:{line}:{col}", source.origin)
    };
    let toks = match tokenize(&source.text) {
        Ok(t) => t,
        Err(e) => return Err(vec![Diagnostic::error("syntax", e.message).at(locate(e.offset))]),
    };
    let mut cur = Cursor::new(&toks);
    let mut schema = EerSchema::default();
    let mut diags = Vec::new();

    while !cur.at_eof() {
        let start = cur.pos;
        let offset = cur.offset();
        let result = declaration(&mut cur, &mut schema);
        match result {
            Ok(Some(dup)) => diags.push(Diagnostic::error("duplicate-declaration", dup).at(locate(offset))),
            Ok(None) => {}
            Err(e) => {
                diags.push(Diagnostic::error("syntax", e.message).at(locate(e.offset)));
                recover(&mut cur, start);
            }
        }
    }

    for e in &schema.entities {
        if e.key_attributes().next().is_none() {
            diags.push(Diagnostic::error("missing-key", format!("entity {} lacks a key", e.name)).at(format!("{}: entity {}", source.origin, e.name)));
        }
    }

    if diags.is_empty() {
        Ok(schema)
    } else {
        Err(diags)
    }
}

/// Skips to the end of the declaration that began at token `start`: past its
/// balanced closing brace, or to the next top-level keyword.
fn recover(cur: &mut Cursor<'_>, start: usize) {
    cur.pos = start;
    cur.bump();
    let mut depth = 0usize;
    while !cur.at_eof() {
        match cur.peek() {
            Tok::LBrace => depth += 1,
            Tok::RBrace => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    cur.bump();
                    return;
                }
            }
            Tok::Ident(s) if depth == 0 && TOP_LEVEL.contains(&s.as_str()) => return,
            _ => {}
        }
        cur.bump();
    }
}

/// Parses one declaration into `schema`. Returns a message when the
/// declaration's name duplicates an earlier one.
fn declaration(cur: &mut Cursor<'_>, schema: &mut EerSchema) -> PResult<Option<String>> {
    let dup = |kind: &str, name: &str| Some(format!("{kind} `{name}` is declared more than once"));
    if cur.eat_keyword("entity") {
        let e = entity(cur)?;
        let d = schema.entity(&e.name).is_some().then(|| dup("entity", &e.name)).flatten();
        schema.entities.push(e);
        Ok(d)
    } else if cur.eat_keyword("relationship") {
        let r = relationship(cur)?;
        let d = schema.relationship(&r.name).is_some().then(|| dup("relationship", &r.name)).flatten();
        schema.relationships.push(r);
        Ok(d)
    } else if cur.eat_keyword("generalization") {
        let g = generalization(cur)?;
        let d = schema.generalization(&g.name).is_some().then(|| dup("generalization", &g.name)).flatten();
        schema.generalizations.push(g);
        Ok(d)
    } else if cur.eat_keyword("task") {
        let t = task(cur)?;
        let d = schema.task(&t.name).is_some().then(|| dup("task", &t.name)).flatten();
        schema.tasks.push(t);
        Ok(d)
    } else {
        cur.unexpected("`entity`, `relationship`, `generalization` or `task`")
    }
}

fn entity(cur: &mut Cursor<'_>) -> PResult<EntityType> {
    let name = cur.ident("an entity name")?;
    let attributes = attr_block(cur)?;
    Ok(EntityType { name, attributes })
}

fn attr_block(cur: &mut Cursor<'_>) -> PResult<Vec<Attribute>> {
    cur.expect(&Tok::LBrace)?;
    let mut attrs = Vec::new();
    while !cur.eat(&Tok::RBrace) {
        attrs.push(attribute(cur)?);
    }
    Ok(attrs)
}

fn attribute(cur: &mut Cursor<'_>) -> PResult<Attribute> {
    let (is_key, derived) = if cur.eat_keyword("key") {
        (true, false)
    } else if cur.eat_keyword("attr") {
        (false, false)
    } else if cur.eat_keyword("derived") {
        cur.expect_keyword("attr")?;
        (false, true)
    } else {
        return cur.unexpected("`key`, `attr`, `derived attr` or `}`");
    };
    let name = cur.ident("an attribute name")?;
    cur.expect(&Tok::Colon)?;
    let kind = kind(cur)?;
    let optional = cur.eat_keyword("optional");
    let applicable_when = if cur.eat_keyword("applicable_when") {
        Some(parenthesized(cur)?)
    } else {
        None
    };
    let derivation = if cur.peek() == &Tok::Eq {
        if !derived {
            return cur.error(format!("attribute `{name}` has a derivation but is not declared `derived attr`"));
        }
        cur.bump();
        Some(cur.expr()?)
    } else {
        None
    };
    if derived && derivation.is_none() {
        return cur.unexpected(&format!("`=` and a derivation for derived attribute `{name}`"));
    }
    Ok(Attribute {
        name,
        kind,
        is_key,
        optional,
        applicable_when,
        derivation,
    })
}

fn kind(cur: &mut Cursor<'_>) -> PResult<AttributeKind> {
    if let Tok::Ident(s) = cur.peek() {
        if let Some(k) = AttributeKind::from_keyword(s) {
            cur.bump();
            return Ok(k);
        }
    }
    cur.unexpected("an attribute kind (identifier, numeric, nominal, boolean, date, text)")
}

fn parenthesized(cur: &mut Cursor<'_>) -> PResult<Expr> {
    cur.expect(&Tok::LParen)?;
    let e = cur.expr()?;
    cur.expect(&Tok::RParen)?;
    Ok(e)
}

fn relationship(cur: &mut Cursor<'_>) -> PResult<Relationship> {
    let name = cur.ident("a relationship name")?;
    cur.expect(&Tok::LBrace)?;
    let left_entity = cur.ident("an entity name")?;
    let (lmin, lmax) = card(cur)?;
    cur.expect(&Tok::DashDash)?;
    let (rmin, rmax) = card(cur)?;
    let right_entity = cur.ident("an entity name")?;
    cur.expect_keyword("via")?;
    let mut fk_columns = vec![cur.ident("a foreign-key column")?];
    if cur.eat(&Tok::Comma) {
        fk_columns.push(cur.ident("a foreign-key column")?);
    }
    let attributes = if cur.peek() == &Tok::LBrace {
        attr_block(cur)?
    } else {
        Vec::new()
    };
    cur.expect(&Tok::RBrace)?;
    Ok(Relationship {
        name,
        left: RelEnd {
            entity: left_entity,
            min: lmin,
            max: lmax,
        },
        right: RelEnd {
            entity: right_entity,
            min: rmin,
            max: rmax,
        },
        fk_columns,
        attributes,
    })
}

fn card(cur: &mut Cursor<'_>) -> PResult<(MinCard, MaxCard)> {
    cur.expect(&Tok::LParen)?;
    let min = match cur.peek() {
        Tok::Number(x) if *x == 0.0 => MinCard::Zero,
        Tok::Number(x) if *x == 1.0 => MinCard::One,
        _ => return cur.unexpected("minimum cardinality 0 or 1"),
    };
    cur.bump();
    cur.expect(&Tok::Comma)?;
    let max = match cur.peek() {
        Tok::Number(x) if *x == 1.0 => MaxCard::One,
        Tok::Ident(s) if s == "N" => MaxCard::Many,
        _ => return cur.unexpected("maximum cardinality 1 or N"),
    };
    cur.bump();
    cur.expect(&Tok::RParen)?;
    Ok((min, max))
}

fn generalization(cur: &mut Cursor<'_>) -> PResult<Generalization> {
    let name = cur.ident("a generalization name")?;
    cur.expect_keyword("of")?;
    let supertype = cur.ident("a supertype entity name")?;
    let mode = if cur.eat_keyword("disjoint") {
        GeneralizationMode::Disjoint
    } else if cur.eat_keyword("overlap") {
        GeneralizationMode::Overlap
    } else {
        return cur.unexpected("`disjoint` or `overlap`");
    };
    cur.expect(&Tok::LBrace)?;
    let mut subtypes = Vec::new();
    while !cur.eat(&Tok::RBrace) {
        cur.expect_keyword("subtype")?;
        let sname = cur.ident("a subtype name")?;
        let membership = if cur.eat_keyword("when") {
            Membership::Predicate(parenthesized(cur)?)
        } else if cur.eat_keyword("from") {
            cur.expect_keyword("table")?;
            Membership::Table
        } else {
            return cur.unexpected("`when (...)` or `from table`");
        };
        let attributes = if cur.peek() == &Tok::LBrace {
            attr_block(cur)?
        } else {
            Vec::new()
        };
        subtypes.push(Subtype {
            name: sname,
            membership,
            attributes,
        });
    }
    if subtypes.is_empty() {
        return cur.error(format!("generalization {name} declares no subtypes"));
    }
    Ok(Generalization {
        name,
        supertype,
        mode,
        subtypes,
    })
}

fn task(cur: &mut Cursor<'_>) -> PResult<TaskDecl> {
    let name = cur.ident("a task name")?;
    cur.expect(&Tok::LBrace)?;
    cur.expect_keyword("target")?;
    let target_entity = cur.ident("the target entity")?;
    cur.expect(&Tok::Dot)?;
    let target_attr = cur.ident("the target attribute")?;
    let mut t = TaskDecl {
        name,
        target_entity,
        target_attr,
        split_by: None,
        agg: None,
        top_k: None,
        impute: None,
    };
    let mut seen = BTreeSet::new();
    while !cur.eat(&Tok::RBrace) {
        let offset = cur.offset();
        let clause = cur.ident("a task clause or `}`")?;
        if !seen.insert(clause.clone()) {
            return Err(PError {
                offset,
                message: format!("task clause `{clause}` given twice"),
            });
        }
        match clause.as_str() {
            "split_by" => t.split_by = Some(cur.ident("a generalization name")?),
            "agg" => {
                let mut list = vec![agg_kind(cur)?];
                while cur.eat(&Tok::Comma) {
                    list.push(agg_kind(cur)?);
                }
                t.agg = Some(list);
            }
            "top_k" => match cur.peek() {
                Tok::Number(x) if x.fract() == 0.0 && *x >= 1.0 => {
                    t.top_k = Some(*x as usize);
                    cur.bump();
                }
                _ => return cur.unexpected("a positive integer"),
            },
            "impute" => t.impute = Some(impute(cur)?),
            _ => {
                return Err(PError {
                    offset,
                    message: format!("unknown task clause `{clause}` (expected split_by, agg, top_k or impute)"),
                })
            }
        }
    }
    Ok(t)
}

fn agg_kind(cur: &mut Cursor<'_>) -> PResult<AggKind> {
    if let Tok::Ident(s) = cur.peek() {
        if let Some(k) = AggKind::from_name(s) {
            cur.bump();
            return Ok(k);
        }
    }
    cur.unexpected("an aggregate (count, mean, sum, min, max)")
}

fn impute(cur: &mut Cursor<'_>) -> PResult<ImputeStrategy> {
    if cur.eat_keyword("mean_mode") {
        Ok(ImputeStrategy::MeanMode)
    } else if cur.eat_keyword("none") {
        Ok(ImputeStrategy::None)
    } else if cur.eat_keyword("constant") {
        match parenthesized(cur)? {
            Expr::Literal(lit) => Ok(ImputeStrategy::Constant(lit)),
            other => cur.error(format!("constant imputation needs a literal, found `{other}`")),
        }
    } else {
        cur.unexpected("`mean_mode`, `none` or `constant(<literal>)`")
    }
}

/// Canonical text: entities, relationships, generalizations, then tasks,
/// each group in declaration order.
pub fn print_schema(schema: &EerSchema) -> SchemaSource {
    let mut blocks = Vec::new();
    for e in &schema.entities {
        let mut s = format!("entity {} {{\n", e.name);
        for a in &e.attributes {
            print_attr(&mut s, a, "  ");
        }
        s.push('}');
        blocks.push(s);
    }
    for r in &schema.relationships {
        let mut s = format!(
            "relationship {} {{\n  {} {} -- {} {} via {}",
            r.name,
            r.left.entity,
            card_text(r.left.min, r.left.max),
            card_text(r.right.min, r.right.max),
            r.right.entity,
            r.fk_columns.join(", ")
        );
        if r.attributes.is_empty() {
            s.push('\n');
        } else {
            s.push_str(" {\n");
            for a in &r.attributes {
                print_attr(&mut s, a, "    ");
            }
            s.push_str("  }\n");
        }
        s.push('}');
        blocks.push(s);
    }
    for g in &schema.generalizations {
        let mode = match g.mode {
            GeneralizationMode::Disjoint => "disjoint",
            GeneralizationMode::Overlap => "overlap",
        };
        let mut s = format!("generalization {} of {} {mode} {{\n", g.name, g.supertype);
        for st in &g.subtypes {
            let _ = write!(s, "  subtype {} ", st.name);
            match &st.membership {
                Membership::Predicate(p) => {
                    let _ = write!(s, "when ({p})");
                }
                Membership::Table => s.push_str("from table"),
            }
            if st.attributes.is_empty() {
                s.push('\n');
            } else {
                s.push_str(" {\n");
                for a in &st.attributes {
                    print_attr(&mut s, a, "    ");
                }
                s.push_str("  }\n");
            }
        }
        s.push('}');
        blocks.push(s);
    }
    for t in &schema.tasks {
        let mut s = format!("task {} {{\n  target {}.{}\n", t.name, t.target_entity, t.target_attr);
        if let Some(g) = &t.split_by {
            let _ = writeln!(s, "  split_by {g}");
        }
        if let Some(aggs) = &t.agg {
            let names: Vec<&str> = aggs.iter().map(|a| a.name()).collect();
            let _ = writeln!(s, "  agg {}", names.join(", "));
        }
        if let Some(k) = t.top_k {
            let _ = writeln!(s, "  top_k {k}");
        }
        if let Some(i) = &t.impute {
            let _ = writeln!(s, "  impute {i}");
        }
        s.push('}');
        blocks.push(s);
    }
    let mut text = blocks.join("\n\n");
    if !text.is_empty() {
        text.push('\n');
    }
    SchemaSource {
        text,
        origin: "<printed>".to_string(),
    }
}

fn print_attr(out: &mut String, a: &Attribute, indent: &str) {
    let lead = if a.is_key {
        "key"
    } else if a.is_derived() {
        "derived attr"
    } else {
        "attr"
    };
    let _ = write!(out, "{indent}{lead} {}: {}", a.name, a.kind);
    if a.optional {
        out.push_str(" optional");
    }
    if let Some(w) = &a.applicable_when {
        let _ = write!(out, " applicable_when ({w})");
    }
    if let Some(d) = &a.derivation {
        let _ = write!(out, " = {d}");
    }
    out.push('\n');
}

fn card_text(min: MinCard, max: MaxCard) -> &'static str {
    match (min, max) {
        (MinCard::Zero, MaxCard::One) => "(0,1)",
        (MinCard::Zero, MaxCard::Many) => "(0,N)",
        (MinCard::One, MaxCard::One) => "(1,1)",
        (MinCard::One, MaxCard::Many) => "(1,N)",
    }
}
