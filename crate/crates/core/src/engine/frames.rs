//! Per-entity working frames and the two folding operations: summarizing a
//! many-side child into its parent and joining an at-most-one child.

use std::collections::{BTreeMap, BTreeSet};

use super::layout::{own_columns, summaries_for, summary_base};
use super::manifest::{FeatureRecord, Role, Transform};
use super::naming::{category_count_name, NameAllocator, TransformKind};
use crate::binder::BoundModel;
use crate::eer::{AttributeKind, EdgeKind, TargetBinding};
use crate::expr::{eval, AggKind, Expr, RowContext};
use crate::planner::Guideline;
use crate::value::{NullKind, Scalar, Value};

/// Values of derived attributes, computed per entity on first use.
pub(crate) struct Derived<'a> {
    bound: &'a BoundModel,
    values: BTreeMap<(String, String), Vec<Value>>,
    done: BTreeSet<String>,
    busy: BTreeSet<String>,
    pub notes: Vec<String>,
}

struct RowCtx<'x, 'a> {
    derived: &'x Derived<'a>,
    entity: &'x str,
    row: usize,
}

impl RowContext for RowCtx<'_, '_> {
    fn attribute(&self, name: &str) -> Value {
        self.derived.value(self.entity, self.row, name)
    }

    fn related(&self, relationship: &str, attribute: Option<&str>) -> Vec<Value> {
        let bound = self.derived.bound;
        let (Some(r), Some(fk)) = (bound.schema.relationship(relationship), bound.fk_index.get(relationship)) else {
            return Vec::new();
        };
        let Some(other) = r.other_end(self.entity) else {
            return Vec::new();
        };
        let rows: Vec<usize> = if r.referenced().entity == self.entity {
            fk.children_of[self.row].clone()
        } else {
            fk.parent_of[self.row].into_iter().collect()
        };
        rows.into_iter()
            .map(|c| match attribute {
                Some(a) => self.derived.value(&other.entity, c, a),
                None => Value::boolean(true),
            })
            .collect()
    }
}

impl<'a> Derived<'a> {
    pub fn new(bound: &'a BoundModel) -> Self {
        Derived {
            bound,
            values: BTreeMap::new(),
            done: BTreeSet::new(),
            busy: BTreeSet::new(),
            notes: Vec::new(),
        }
    }

    pub fn value(&self, entity: &str, row: usize, attr: &str) -> Value {
        match self.values.get(&(entity.to_string(), attr.to_string())) {
            Some(col) => col[row].clone(),
            None => self.bound.stored_value(entity, row, attr),
        }
    }

    /// Evaluates every derived attribute of `entity` in declaration order.
    /// Entities reached through aggregates are evaluated first; a cycle of
    /// aggregate references reads `null(unknown)`.
    pub fn ensure(&mut self, entity: &str) {
        if self.done.contains(entity) || !self.busy.insert(entity.to_string()) {
            return;
        }
        let schema = &self.bound.schema;
        let Some(e) = schema.entity(entity) else {
            return;
        };
        let clock = self.bound.clock;
        let rows = self.bound.row_count(entity);
        for a in &e.attributes {
            let Some(expr) = &a.derivation else { continue };
            for (rel, attr) in expr.aggregate_refs() {
                let other = schema.relationship(rel).and_then(|r| r.other_end(entity)).map(|o| o.entity.clone());
                if let (Some(other), Some(attr)) = (other, attr) {
                    if schema.entity(&other).and_then(|o| o.attribute(attr)).is_some_and(|x| x.is_derived()) {
                        self.ensure(&other);
                    }
                }
            }
            let mut notes = Vec::new();
            let col: Vec<Value> = (0..rows)
                .map(|row| {
                    let ctx = RowCtx {
                        derived: self,
                        entity,
                        row,
                    };
                    eval(expr, &ctx, &clock, &mut notes)
                })
                .collect();
            self.notes.extend(notes.into_iter().map(|n| format!("{entity}.{}: {n}", a.name)));
            self.values.insert((entity.to_string(), a.name.clone()), col);
        }
        self.busy.remove(entity);
        self.done.insert(entity.to_string());
    }

    pub fn column(&mut self, entity: &str, attr: &str) -> Vec<Value> {
        self.ensure(entity);
        (0..self.bound.row_count(entity)).map(|r| self.value(entity, r, attr)).collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FrameCol {
    pub kind: AttributeKind,
    pub values: Vec<Value>,
    pub record: FeatureRecord,
    /// Contributed by the frame's own entity rather than folded in.
    pub own: bool,
    pub subtype: Option<String>,
}

impl FrameCol {
    pub fn name(&self) -> &str {
        &self.record.name
    }
}

#[derive(Debug)]
pub(crate) struct Frame {
    pub entity: String,
    pub rows: usize,
    pub columns: Vec<FrameCol>,
    pub names: NameAllocator,
}

/// Inputs of a derivation as `ENTITY.attr`.
pub(crate) fn derivation_sources(bound: &BoundModel, entity: &str, expr: &Expr) -> Vec<String> {
    let mut out: Vec<String> = expr.attribute_refs().iter().map(|a| format!("{entity}.{a}")).collect();
    for (rel, attr) in expr.aggregate_refs() {
        let other = bound.schema.relationship(rel).and_then(|r| r.other_end(entity));
        if let (Some(o), Some(a)) = (other, attr) {
            let s = format!("{}.{a}", o.entity);
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}

pub(crate) fn attribute_record(bound: &BoundModel, entity: &str, attr: &str, name: String, role: Role) -> FeatureRecord {
    let a = bound
        .schema
        .entity(entity)
        .and_then(|e| e.attribute(attr))
        .or_else(|| bound.schema.subtype_owner(entity, attr).and_then(|(_, s)| s.attributes.iter().find(|a| a.name == attr)));
    let (transform, sources, guidelines) = match a.and_then(|a| a.derivation.as_ref()) {
        Some(expr) => (
            Transform::new(TransformKind::Derived).with("expression", expr.to_string()),
            derivation_sources(bound, entity, expr),
            BTreeSet::from([Guideline::G1, Guideline::G2]),
        ),
        None => (
            Transform::new(TransformKind::Raw),
            vec![format!("{entity}.{attr}")],
            BTreeSet::from([Guideline::G1]),
        ),
    };
    FeatureRecord {
        name,
        role,
        origin_entities: vec![entity.to_string()],
        source_attributes: sources,
        transform,
        guidelines,
        imputed_cells: 0,
    }
}

/// Frame holding the entity's own feature columns. Column names are claimed
/// in the same order the planner uses: root keys and target first.
pub(crate) fn build_frame(derived: &mut Derived<'_>, binding: &TargetBinding, entity: &str) -> Frame {
    let bound = derived.bound;
    let is_root = entity == binding.target_entity;
    let mut names = NameAllocator::default();
    if is_root {
        for k in bound.schema.entity(entity).expect("tree entity").key_names() {
            names.claim(&format!("{entity}_{k}"));
        }
        names.claim(&format!("{entity}_{}", binding.target_attr));
    }
    let rows = bound.row_count(entity);
    let columns = own_columns(&bound.schema, entity, is_root, is_root.then_some(binding.target_attr.as_str()))
        .into_iter()
        .map(|c| {
            let name = names.claim(&format!("{entity}_{}", c.attr));
            let values = if c.derived {
                derived.column(entity, &c.attr)
            } else {
                (0..rows).map(|r| bound.stored_value(entity, r, &c.attr)).collect()
            };
            FrameCol {
                kind: c.kind,
                values,
                record: attribute_record(bound, entity, &c.attr, name, Role::Predictor),
                own: true,
                subtype: c.subtype,
            }
        })
        .collect();
    Frame {
        entity: entity.to_string(),
        rows,
        columns,
        names,
    }
}

fn tree_order(binding: &TargetBinding, entities: impl IntoIterator<Item = String>) -> Vec<String> {
    let set: BTreeSet<String> = entities.into_iter().collect();
    let mut out: Vec<String> = binding.predictor_entities.iter().filter(|e| set.contains(*e)).cloned().collect();
    out.extend(set.into_iter().filter(|e| !binding.contains(e)));
    out
}

/// Null produced by an aggregate over children with no usable value.
fn empty_summary(values: &[&Value], kind: TransformKind) -> Value {
    if values.is_empty() {
        return if kind == TransformKind::Sum { Value::number(0.0) } else { Value::UNKNOWN };
    }
    if values.iter().all(|v| v.null_kind() == Some(NullKind::NotApplicable)) {
        Value::NOT_APPLICABLE
    } else {
        Value::UNKNOWN
    }
}

pub(crate) fn summarize_values(kind: TransformKind, values: &[&Value]) -> Value {
    if kind == TransformKind::TrueCount {
        return Value::number(values.iter().filter(|v| v.scalar() == Some(&Scalar::Bool(true))).count() as f64);
    }
    let present: Vec<&Scalar> = values.iter().filter_map(|v| v.scalar()).collect();
    if present.is_empty() {
        return empty_summary(values, kind);
    }
    let nums = || present.iter().filter_map(|s| s.as_f64());
    match kind {
        TransformKind::Sum => Value::number(nums().sum()),
        TransformKind::Mean => Value::number(nums().sum::<f64>() / present.len() as f64),
        TransformKind::Min => Value::Present((*present.iter().min().expect("nonempty")).clone()),
        TransformKind::Max => Value::Present((*present.iter().max().expect("nonempty")).clone()),
        TransformKind::Concat => Value::text(present.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("\n")),
        k => unreachable!("{k:?} is not a column summary"),
    }
}

/// Categories kept for a nominal column: the `top_k` most frequent over all
/// child rows (ties broken lexically), returned in lexical order, and
/// whether any category was pooled.
pub(crate) fn top_categories(values: &[Value], top_k: usize) -> (Vec<String>, bool) {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for v in values.iter().filter_map(Value::scalar) {
        *freq.entry(v.to_string()).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let pooled = ranked.len() > top_k;
    let mut kept: Vec<String> = ranked.into_iter().take(top_k).map(|(c, _)| c).collect();
    kept.sort();
    (kept, pooled)
}

/// Folds `child` into `parent` across a one-to-many relationship whose
/// referenced side is the parent. Returns the names of the new columns.
pub(crate) fn summarize_child(
    bound: &BoundModel,
    binding: &TargetBinding,
    parent: &mut Frame,
    child: &Frame,
    relationship: &str,
    aggs: &[AggKind],
    top_k: usize,
) -> Vec<String> {
    let groups = &bound.fk_index[relationship].children_of;
    let c = &child.entity;
    let mut new = Vec::new();
    let key_sources: Vec<String> = bound
        .schema
        .entity(c)
        .map(|e| e.key_names().iter().map(|k| format!("{c}.{k}")).collect())
        .unwrap_or_default();
    let base_record = |name: String, origins: Vec<String>, sources: Vec<String>, transform: Transform, mut g: BTreeSet<Guideline>| {
        g.extend([Guideline::G1, Guideline::G4]);
        FeatureRecord {
            name,
            role: Role::Predictor,
            origin_entities: origins,
            source_attributes: sources,
            transform,
            guidelines: g,
            imputed_cells: 0,
        }
    };

    new.push(FrameCol {
        kind: AttributeKind::Numeric,
        values: groups.iter().map(|g| Value::number(g.len() as f64)).collect(),
        record: base_record(
            parent.names.claim(&format!("{c}_count")),
            vec![c.clone()],
            key_sources,
            Transform::new(TransformKind::Count).with("relationship", relationship),
            BTreeSet::new(),
        ),
        own: false,
        subtype: None,
    });

    for col in &child.columns {
        let base = summary_base(c, col.name(), col.own);
        let origins = tree_order(binding, std::iter::once(c.clone()).chain(col.record.origin_entities.iter().cloned()));
        let inner = |t: Transform| {
            let t = t.with("relationship", relationship).with("of", col.name());
            if col.record.transform.kind == TransformKind::Raw {
                t
            } else {
                t.with("of_transform", serde_json::to_value(col.record.transform.kind).expect("serializes"))
            }
        };
        if col.kind == AttributeKind::Nominal {
            let (kept, pooled) = top_categories(&col.values, top_k);
            let mut specs: Vec<(String, Option<String>)> = kept.iter().map(|k| (category_count_name(&base, k), Some(k.clone()))).collect();
            if pooled {
                specs.push((format!("{base}_OTHER_count"), None));
            }
            for (name, category) in specs {
                let values = groups
                    .iter()
                    .map(|g| {
                        let n = g
                            .iter()
                            .filter_map(|&r| col.values[r].scalar())
                            .filter(|s| {
                                let s = s.to_string();
                                match &category {
                                    Some(k) => s == *k,
                                    None => !kept.contains(&s),
                                }
                            })
                            .count();
                        Value::number(n as f64)
                    })
                    .collect();
                let t = Transform::new(TransformKind::CategoryCount).with("top_k", top_k);
                let t = match &category {
                    Some(k) => t.with("category", k.as_str()),
                    None => t.with("other", true),
                };
                new.push(FrameCol {
                    kind: AttributeKind::Numeric,
                    values,
                    record: base_record(
                        parent.names.claim(&name),
                        origins.clone(),
                        col.record.source_attributes.clone(),
                        inner(t),
                        col.record.guidelines.clone(),
                    ),
                    own: false,
                    subtype: None,
                });
            }
            continue;
        }
        for (suffix, kind, result) in summaries_for(col.kind, aggs) {
            let values = groups
                .iter()
                .map(|g| {
                    let vals: Vec<&Value> = g.iter().map(|&r| &col.values[r]).collect();
                    summarize_values(kind, &vals)
                })
                .collect();
            new.push(FrameCol {
                kind: result,
                values,
                record: base_record(
                    parent.names.claim(&format!("{base}_{suffix}")),
                    origins.clone(),
                    col.record.source_attributes.clone(),
                    inner(Transform::new(kind)),
                    col.record.guidelines.clone(),
                ),
                own: false,
                subtype: None,
            });
        }
    }
    let names = new.iter().map(|c| c.name().to_string()).collect();
    parent.columns.extend(new);
    names
}

/// Appends the columns of an at-most-one child. Parents without a partner
/// get `null(not_applicable)`.
pub(crate) fn join_one(bound: &BoundModel, binding: &TargetBinding, parent: &mut Frame, child: &Frame, relationship: &str) -> Vec<String> {
    let fk = &bound.fk_index[relationship];
    let edge = binding.edge_to(&child.entity).expect("tree edge");
    debug_assert_eq!(edge.kind, EdgeKind::JoinOne);
    let partner: Vec<Option<usize>> = (0..parent.rows)
        .map(|p| {
            if edge.parent_holds_fk {
                fk.parent_of[p]
            } else {
                fk.children_of[p].first().copied()
            }
        })
        .collect();
    let mut names = Vec::new();
    for col in &child.columns {
        let mut record = col.record.clone();
        record.name = parent.names.claim(col.name());
        names.push(record.name.clone());
        parent.columns.push(FrameCol {
            kind: col.kind,
            values: partner
                .iter()
                .map(|c| c.map_or(Value::NOT_APPLICABLE, |c| col.values[c].clone()))
                .collect(),
            record,
            own: false,
            subtype: None,
        });
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_nulls() {
        let na = Value::NOT_APPLICABLE;
        let unk = Value::UNKNOWN;
        assert_eq!(summarize_values(TransformKind::Sum, &[]), Value::number(0.0));
        assert_eq!(summarize_values(TransformKind::Mean, &[]), Value::UNKNOWN);
        assert_eq!(summarize_values(TransformKind::Mean, &[&na, &na]), Value::NOT_APPLICABLE);
        assert_eq!(summarize_values(TransformKind::Max, &[&na, &unk]), Value::UNKNOWN);
        assert_eq!(summarize_values(TransformKind::TrueCount, &[&na]), Value::number(0.0));
        let x = Value::number(3.0);
        let y = Value::number(5.0);
        assert_eq!(summarize_values(TransformKind::Mean, &[&x, &na, &y]), Value::number(4.0));
        assert_eq!(summarize_values(TransformKind::Min, &[&x, &na, &y]), Value::number(3.0));
    }

    #[test]
    fn concat_joins_with_newlines() {
        let a = Value::text("first visit");
        let b = Value::text("second visit");
        assert_eq!(summarize_values(TransformKind::Concat, &[&a, &Value::UNKNOWN, &b]), Value::text("first visit\nsecond visit"));
    }

    #[test]
    fn top_k_ranks_by_frequency_then_name() {
        let vals: Vec<Value> = ["b", "a", "c", "c", "b", "d"].iter().map(|s| Value::text(*s)).collect();
        assert_eq!(top_categories(&vals, 2), (vec!["b".to_string(), "c".to_string()], true));
        assert_eq!(top_categories(&vals, 3), (vec!["a".to_string(), "b".to_string(), "c".to_string()], true));
        assert!(!top_categories(&vals, 4).1);
    }
}
