//! Which attributes of an entity become columns of its frame, and what a
//! summarized column turns into. Shared by the planner, which works on names
//! only, and the executor.

use std::collections::BTreeSet;

use crate::eer::{AttributeKind, EerSchema};
use crate::expr::AggKind;

use super::naming::TransformKind;

#[derive(Debug, Clone, PartialEq)]
pub struct OwnColumn {
    pub attr: String,
    pub kind: AttributeKind,
    pub derived: bool,
    /// Subtype declaring the attribute, for attributes of a subtype.
    pub subtype: Option<String>,
}

/// Attributes referenced by a derivation on the same entity. They are
/// represented by the derived feature and are not emitted themselves.
pub fn superseded(schema: &EerSchema, entity: &str) -> BTreeSet<String> {
    let Some(e) = schema.entity(entity) else {
        return BTreeSet::new();
    };
    e.attributes
        .iter()
        .filter_map(|a| a.derivation.as_ref())
        .flat_map(|d| d.attribute_refs())
        .map(str::to_string)
        .collect()
}

/// Feature columns contributed by `entity` itself, in declaration order:
/// attributes, then subtype attributes. Keys, the target and superseded
/// inputs are left out; entities other than the root also drop identifiers.
pub fn own_columns(schema: &EerSchema, entity: &str, root: bool, target: Option<&str>) -> Vec<OwnColumn> {
    let Some(e) = schema.entity(entity) else {
        return Vec::new();
    };
    let dropped = superseded(schema, entity);
    let keep = |name: &str, kind: AttributeKind| {
        Some(name) != target && !dropped.contains(name) && (root || kind != AttributeKind::Identifier)
    };
    let mut out: Vec<OwnColumn> = e
        .attributes
        .iter()
        .filter(|a| !a.is_key && keep(&a.name, a.kind))
        .map(|a| OwnColumn {
            attr: a.name.clone(),
            kind: a.kind,
            derived: a.is_derived(),
            subtype: None,
        })
        .collect();
    for g in schema.generalizations_of(entity) {
        for s in &g.subtypes {
            for a in s.attributes.iter().filter(|a| keep(&a.name, a.kind)) {
                out.push(OwnColumn {
                    attr: a.name.clone(),
                    kind: a.kind,
                    derived: false,
                    subtype: Some(s.name.clone()),
                });
            }
        }
    }
    out
}

/// Base used when summarizing a child column: own columns already carry the
/// child's name, anything folded into the child gets it prepended.
pub fn summary_base(child: &str, column: &str, own: bool) -> String {
    if own {
        column.to_string()
    } else {
        format!("{child}_{column}")
    }
}

/// Summaries produced for a child column of `kind`, as (suffix, transform,
/// result kind). Nominal columns expand into per-category counts at run time
/// and are not listed here.
pub fn summaries_for(kind: AttributeKind, aggs: &[AggKind]) -> Vec<(&'static str, TransformKind, AttributeKind)> {
    match kind {
        AttributeKind::Numeric => aggs
            .iter()
            .filter_map(|a| match a {
                AggKind::Count => None,
                AggKind::Mean => Some(("mean", TransformKind::Mean, AttributeKind::Numeric)),
                AggKind::Sum => Some(("sum", TransformKind::Sum, AttributeKind::Numeric)),
                AggKind::Min => Some(("min", TransformKind::Min, AttributeKind::Numeric)),
                AggKind::Max => Some(("max", TransformKind::Max, AttributeKind::Numeric)),
            })
            .collect(),
        AttributeKind::Date => vec![
            ("min", TransformKind::Min, AttributeKind::Date),
            ("max", TransformKind::Max, AttributeKind::Date),
        ],
        AttributeKind::Boolean => vec![("true_count", TransformKind::TrueCount, AttributeKind::Numeric)],
        AttributeKind::Text => vec![("concat", TransformKind::Concat, AttributeKind::Text)],
        AttributeKind::Nominal | AttributeKind::Identifier => Vec::new(),
    }
}
