//! The naive flat dataset: a left-join chain along the spanning tree at the
//! deepest grain, with no summarization.

use super::frames::Derived;
use super::naming::NameAllocator;
use crate::binder::BoundModel;
use crate::eer::{AttributeKind, TargetBinding};
use crate::tabular::{Column, Table};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct FlatDataset {
    pub table: Table,
    pub key_columns: Vec<String>,
    pub target_column: String,
}

struct Block {
    columns: Vec<(String, AttributeKind, Vec<Value>)>,
}

/// Every attribute of `entity`, keys first in declaration order, then
/// subtype attributes; the root's target is left out.
fn entity_block(bound: &BoundModel, derived: &mut Derived<'_>, entity: &str, skip: Option<&str>) -> Block {
    let e = bound.schema.entity(entity).expect("tree entity");
    let rows = bound.row_count(entity);
    let mut attrs: Vec<(String, AttributeKind, bool)> =
        e.attributes.iter().filter(|a| a.is_key).map(|a| (a.name.clone(), a.kind, false)).collect();
    attrs.extend(e.attributes.iter().filter(|a| !a.is_key).map(|a| (a.name.clone(), a.kind, a.is_derived())));
    for g in bound.schema.generalizations_of(entity) {
        for s in &g.subtypes {
            attrs.extend(s.attributes.iter().map(|a| (a.name.clone(), a.kind, false)));
        }
    }
    let columns = attrs
        .into_iter()
        .filter(|(a, _, _)| Some(a.as_str()) != skip)
        .map(|(a, kind, is_derived)| {
            let values = if is_derived {
                derived.column(entity, &a)
            } else {
                (0..rows).map(|r| bound.stored_value(entity, r, &a)).collect()
            };
            (a, kind, values)
        })
        .collect();
    Block { columns }
}

struct Tree<'b> {
    bound: &'b BoundModel,
    binding: &'b TargetBinding,
    blocks: std::collections::BTreeMap<String, Block>,
}

impl Tree<'_> {
    fn width(&self, entity: &str) -> usize {
        self.blocks[entity].columns.len() + self.binding.children_of(entity).map(|e| self.width(&e.child)).sum::<usize>()
    }

    /// Rows contributed by one instance of `entity` and its subtree.
    fn expand(&self, entity: &str, row: usize) -> Vec<Vec<Value>> {
        let own: Vec<Value> = self.blocks[entity].columns.iter().map(|(_, _, v)| v[row].clone()).collect();
        let mut acc = vec![own];
        for edge in self.binding.children_of(entity) {
            let fk = &self.bound.fk_index[&edge.relationship];
            let related: Vec<usize> = if edge.parent_holds_fk {
                fk.parent_of[row].into_iter().collect()
            } else {
                fk.children_of[row].clone()
            };
            let mut sub: Vec<Vec<Value>> = related.iter().flat_map(|&c| self.expand(&edge.child, c)).collect();
            if sub.is_empty() {
                sub.push(vec![Value::NOT_APPLICABLE; self.width(&edge.child)]);
            }
            acc = acc
                .iter()
                .flat_map(|left| {
                    sub.iter().map(move |right| {
                        let mut r = left.clone();
                        r.extend(right.iter().cloned());
                        r
                    })
                })
                .collect();
        }
        acc
    }

    fn names(&self, entity: &str, out: &mut Vec<(String, AttributeKind)>) {
        out.extend(self.blocks[entity].columns.iter().map(|(a, k, _)| (format!("{entity}_{a}"), *k)));
        for edge in self.binding.children_of(entity) {
            self.names(&edge.child, out);
        }
    }
}

/// Joins every tree entity onto the target-bearing entity at the deepest
/// grain. Parents without related rows are kept once with empty cells.
pub fn flatten_naive(bound: &BoundModel, binding: &TargetBinding) -> FlatDataset {
    let mut derived = Derived::new(bound);
    let root = &binding.target_entity;
    let blocks = binding
        .predictor_entities
        .iter()
        .map(|e| {
            let skip = (e == root).then_some(binding.target_attr.as_str());
            (e.clone(), entity_block(bound, &mut derived, e, skip))
        })
        .collect();
    let target = derived.column(root, &binding.target_attr);
    let target_kind = bound
        .schema
        .entity(root)
        .and_then(|e| e.attribute(&binding.target_attr))
        .map_or(AttributeKind::Numeric, |a| a.kind);
    let tree = Tree { bound, binding, blocks };

    let mut names = NameAllocator::default();
    let mut cols = Vec::new();
    tree.names(root, &mut cols);
    let target_column = format!("{root}_{}", binding.target_attr);
    cols.push((target_column.clone(), target_kind));
    let columns: Vec<Column> = cols.iter().map(|(n, k)| Column::new(&names.claim(n), *k)).collect();
    let target_column = columns.last().expect("target column").name.clone();

    let mut order: Vec<usize> = (0..bound.row_count(root)).collect();
    order.sort_by(|a, b| bound.key(root, *a).cmp(bound.key(root, *b)));
    let mut table = Table::new(&format!("{root}_ds0"), columns);
    for r in order {
        for mut row in tree.expand(root, r) {
            row.push(target[r].clone());
            table.rows.push(row.into_iter().map(Value::into_cell).collect());
        }
    }
    let key_columns = bound
        .schema
        .entity(root)
        .expect("root")
        .key_names()
        .iter()
        .map(|k| format!("{root}_{k}"))
        .collect();
    FlatDataset {
        table,
        key_columns,
        target_column,
    }
}
