//! Compiles a task into an ordered, guideline-tagged transformation plan and
//! renders it as prose.
//!
//! Step order: non-aggregate derivations on every tree entity; then the
//! spanning tree is folded bottom-up, deepest level first, and at each level
//! the children's aggregate derivations run, then summaries, then one-to-one
//! joins; then aggregate derivations on the target entity; then the optional
//! subtype split; then imputation and emission per output dataset.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eer::{
    resolve_target, rewrite_many_to_many, AttributeKind, EdgeKind, EerError, EerSchema, GeneralizationMode,
    ImputeStrategy, TargetBinding, TaskDecl, DEFAULT_AGGS, DEFAULT_TOP_K,
};
use crate::engine::layout::{own_columns, summaries_for, summary_base};
use crate::engine::naming::NameAllocator;
use crate::expr::AggKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Guideline {
    G1,
    G2,
    G3,
    G4,
    G5,
}

impl Guideline {
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn title(self) -> &'static str {
        match self {
            Guideline::G1 => "feature labeling",
            Guideline::G2 => "derive features",
            Guideline::G3 => "impute features",
            Guideline::G4 => "entity summarization",
            Guideline::G5 => "multiple training datasets",
        }
    }
}

impl fmt::Display for Guideline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Guideline {} ({})", self.number(), self.title())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanOptions {
    pub agg: Vec<AggKind>,
    pub top_k: usize,
    pub impute: ImputeStrategy,
    pub split_by: Option<String>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            agg: DEFAULT_AGGS.to_vec(),
            top_k: DEFAULT_TOP_K,
            impute: ImputeStrategy::MeanMode,
            split_by: None,
        }
    }
}

impl PlanOptions {
    /// Defaults overridden by the task's own clauses.
    pub fn from_task(task: &TaskDecl) -> Self {
        let d = PlanOptions::default();
        PlanOptions {
            agg: task.agg.clone().unwrap_or(d.agg),
            top_k: task.top_k.unwrap_or(d.top_k),
            impute: task.impute.clone().unwrap_or(d.impute),
            split_by: task.split_by.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanStep {
    DeriveAttr {
        entity: String,
        attribute: String,
        expression: String,
        aggregate: bool,
        guidelines: Vec<Guideline>,
        produces: Vec<String>,
    },
    SummarizeChild {
        parent: String,
        child: String,
        relationship: String,
        aggregates: Vec<AggKind>,
        top_k: usize,
        guidelines: Vec<Guideline>,
        produces: Vec<String>,
    },
    JoinOneToOne {
        left: String,
        right: String,
        relationship: String,
        guidelines: Vec<Guideline>,
        produces: Vec<String>,
    },
    SubtypeSplit {
        generalization: String,
        mode: GeneralizationMode,
        subtypes: Vec<String>,
        automatic: bool,
        guidelines: Vec<Guideline>,
    },
    ImputeColumns {
        dataset: String,
        strategy: ImputeStrategy,
        guidelines: Vec<Guideline>,
    },
    EmitDataset {
        name: String,
        guidelines: Vec<Guideline>,
        columns: Vec<String>,
    },
}

impl PlanStep {
    pub fn guidelines(&self) -> &[Guideline] {
        match self {
            PlanStep::DeriveAttr { guidelines, .. }
            | PlanStep::SummarizeChild { guidelines, .. }
            | PlanStep::JoinOneToOne { guidelines, .. }
            | PlanStep::SubtypeSplit { guidelines, .. }
            | PlanStep::ImputeColumns { guidelines, .. }
            | PlanStep::EmitDataset { guidelines, .. } => guidelines,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PlanStep::DeriveAttr { .. } => "derive_attr",
            PlanStep::SummarizeChild { .. } => "summarize_child",
            PlanStep::JoinOneToOne { .. } => "join_one_to_one",
            PlanStep::SubtypeSplit { .. } => "subtype_split",
            PlanStep::ImputeColumns { .. } => "impute_columns",
            PlanStep::EmitDataset { .. } => "emit_dataset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformationPlan {
    pub task: String,
    /// `ENTITY.attr`
    pub target: String,
    /// Guidelines applied globally; feature labeling always is.
    pub guidelines: Vec<Guideline>,
    pub binding: TargetBinding,
    pub steps: Vec<PlanStep>,
    pub outputs: Vec<String>,
    pub options: PlanOptions,
    #[serde(default)]
    pub notices: Vec<String>,
}

impl TransformationPlan {
    /// Every guideline tag appearing on the header or any step.
    pub fn guideline_set(&self) -> std::collections::BTreeSet<Guideline> {
        self.guidelines
            .iter()
            .chain(self.steps.iter().flat_map(|s| s.guidelines().iter()))
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Schema(#[from] EerError),
    #[error("target {0} is derived by aggregation but is not numeric")]
    NonNumericAggregateTarget(String),
    #[error("split_by names `{generalization}`, which is not a generalization of target entity {entity}")]
    SplitNotOnTarget { generalization: String, entity: String },
    #[error("dataset {0} would have no predictor columns")]
    NoPredictors(String),
}

/// Symbolic column used while compiling: names only, categories unexpanded.
#[derive(Debug, Clone)]
struct SymCol {
    name: String,
    kind: AttributeKind,
    own: bool,
    subtype: Option<String>,
}

/// Compiles `task` against `schema`. The plan depends on the schema and
/// options only, never on data.
pub fn compile_plan(schema: &EerSchema, task: &str, options: &PlanOptions) -> Result<TransformationPlan, PlanError> {
    let schema = rewrite_many_to_many(schema)?;
    let decl = schema.task(task).ok_or_else(|| EerError::UnknownTask(task.to_string()))?.clone();
    let binding = resolve_target(&schema, &decl)?;
    let root = binding.target_entity.clone();
    let target = schema.entity(&root).and_then(|e| e.attribute(&decl.target_attr)).expect("resolved").clone();
    let target_label = format!("{root}.{}", target.name);
    if target.derivation.as_ref().is_some_and(|d| d.has_aggregate()) && target.kind != AttributeKind::Numeric {
        return Err(PlanError::NonNumericAggregateTarget(target_label));
    }

    let mut notices: Vec<String> = binding.warnings().iter().map(|d| d.message.clone()).collect();
    let split = match &options.split_by {
        Some(g) => match schema.generalization(g) {
            Some(gen) if gen.supertype == root => Some((gen.clone(), false)),
            _ => {
                return Err(PlanError::SplitNotOnTarget {
                    generalization: g.clone(),
                    entity: root,
                })
            }
        },
        None => {
            let gens: Vec<_> = schema.generalizations_of(&root).collect();
            match gens.len() {
                0 => None,
                1 => {
                    notices.push(format!(
                        "split_by not set; using {}, the only generalization of {root}",
                        gens[0].name
                    ));
                    Some((gens[0].clone(), true))
                }
                n => {
                    notices.push(format!("split_by not set and {root} has {n} generalizations; emitting a single dataset"));
                    None
                }
            }
        }
    };

    let mut steps = Vec::new();
    let derive = |entity: &str, aggregate: bool| -> Vec<PlanStep> {
        let e = schema.entity(entity).expect("tree entity");
        e.attributes
            .iter()
            .filter_map(|a| a.derivation.as_ref().map(|d| (a, d)))
            .filter(|(_, d)| d.has_aggregate() == aggregate)
            .map(|(a, d)| PlanStep::DeriveAttr {
                entity: entity.to_string(),
                attribute: a.name.clone(),
                expression: d.to_string(),
                aggregate,
                guidelines: vec![Guideline::G2],
                produces: Vec::new(),
            })
            .collect()
    };

    for e in &binding.predictor_entities {
        steps.extend(derive(e, false));
    }
    let max_depth = binding.spanning_tree.iter().map(|e| e.depth).max().unwrap_or(0);
    for depth in (1..=max_depth).rev() {
        let level: Vec<_> = binding.spanning_tree.iter().filter(|e| e.depth == depth).collect();
        for edge in &level {
            steps.extend(derive(&edge.child, true));
        }
        for edge in level.iter().filter(|e| e.kind == EdgeKind::Summarize) {
            steps.push(PlanStep::SummarizeChild {
                parent: edge.parent.clone(),
                child: edge.child.clone(),
                relationship: edge.relationship.clone(),
                aggregates: options.agg.clone(),
                top_k: options.top_k,
                guidelines: vec![Guideline::G4],
                produces: Vec::new(),
            });
        }
        for edge in level.iter().filter(|e| e.kind == EdgeKind::JoinOne) {
            steps.push(PlanStep::JoinOneToOne {
                left: edge.parent.clone(),
                right: edge.child.clone(),
                relationship: edge.relationship.clone(),
                guidelines: vec![Guideline::G1],
                produces: Vec::new(),
            });
        }
    }
    steps.extend(derive(&root, true));

    let outputs: Vec<String> = match &split {
        None => vec![decl.name.clone()],
        Some((g, automatic)) => {
            steps.push(PlanStep::SubtypeSplit {
                generalization: g.name.clone(),
                mode: g.mode,
                subtypes: g.subtypes.iter().map(|s| s.name.clone()).collect(),
                automatic: *automatic,
                guidelines: vec![Guideline::G5],
            });
            g.subtypes.iter().map(|s| format!("{}_{}", decl.name, s.name)).collect()
        }
    };
    if options.impute != ImputeStrategy::None {
        for o in &outputs {
            steps.push(PlanStep::ImputeColumns {
                dataset: o.clone(),
                strategy: options.impute.clone(),
                guidelines: vec![Guideline::G3],
            });
        }
    }
    for o in &outputs {
        steps.push(PlanStep::EmitDataset {
            name: o.clone(),
            guidelines: Vec::new(),
            columns: Vec::new(),
        });
    }

    let mut plan = TransformationPlan {
        task: decl.name.clone(),
        target: target_label,
        guidelines: vec![Guideline::G1],
        binding,
        steps,
        outputs,
        options: options.clone(),
        notices,
    };
    annotate(&schema, &mut plan)?;
    Ok(plan)
}

/// Fills in the columns each step produces by walking the steps over
/// symbolic frames, and checks every dataset keeps a predictor.
fn annotate(schema: &EerSchema, plan: &mut TransformationPlan) -> Result<(), PlanError> {
    let root = plan.binding.target_entity.clone();
    let target_attr = plan.binding.target_attr.clone();
    let mut frames: BTreeMap<String, Vec<SymCol>> = BTreeMap::new();
    let mut allocators: BTreeMap<String, NameAllocator> = BTreeMap::new();
    for e in &plan.binding.predictor_entities {
        let is_root = *e == root;
        let mut names = NameAllocator::default();
        if is_root {
            for k in schema.entity(e).expect("tree entity").key_names() {
                names.claim(&format!("{e}_{k}"));
            }
            names.claim(&format!("{e}_{target_attr}"));
        }
        let cols = own_columns(schema, e, is_root, is_root.then_some(target_attr.as_str()))
            .into_iter()
            .map(|c| SymCol {
                name: names.claim(&format!("{e}_{}", c.attr)),
                kind: c.kind,
                own: true,
                subtype: c.subtype,
            })
            .collect();
        frames.insert(e.clone(), cols);
        allocators.insert(e.clone(), names);
    }

    let mut split_subtypes: Option<Vec<String>> = None;
    for step in &mut plan.steps {
        match step {
            PlanStep::DeriveAttr {
                entity,
                attribute,
                produces,
                ..
            } => {
                let name = format!("{entity}_{attribute}");
                *produces = if frames[entity.as_str()].iter().any(|c| c.name == name) || (*entity == root && *attribute == target_attr) {
                    vec![name]
                } else {
                    Vec::new()
                };
            }
            PlanStep::SummarizeChild {
                parent,
                child,
                aggregates,
                produces,
                ..
            } => {
                let names = allocators.get_mut(parent.as_str()).expect("tree entity");
                let mut new = vec![SymCol {
                    name: names.claim(&format!("{child}_count")),
                    kind: AttributeKind::Numeric,
                    own: false,
                    subtype: None,
                }];
                for c in &frames[child.as_str()] {
                    let base = summary_base(child, &c.name, c.own);
                    if c.kind == AttributeKind::Nominal {
                        new.push(SymCol {
                            name: names.claim(&format!("{base}_*_count")),
                            kind: AttributeKind::Numeric,
                            own: false,
                            subtype: None,
                        });
                    }
                    for (suffix, _, kind) in summaries_for(c.kind, aggregates) {
                        new.push(SymCol {
                            name: names.claim(&format!("{base}_{suffix}")),
                            kind,
                            own: false,
                            subtype: None,
                        });
                    }
                }
                *produces = new.iter().map(|c| c.name.clone()).collect();
                frames.get_mut(parent.as_str()).expect("tree entity").extend(new);
            }
            PlanStep::JoinOneToOne {
                left,
                right,
                produces,
                ..
            } => {
                let names = allocators.get_mut(left.as_str()).expect("tree entity");
                let new: Vec<SymCol> = frames[right.as_str()]
                    .iter()
                    .map(|c| SymCol {
                        name: names.claim(&c.name),
                        kind: c.kind,
                        own: false,
                        subtype: None,
                    })
                    .collect();
                *produces = new.iter().map(|c| c.name.clone()).collect();
                frames.get_mut(left.as_str()).expect("tree entity").extend(new);
            }
            PlanStep::SubtypeSplit { subtypes, .. } => split_subtypes = Some(subtypes.clone()),
            PlanStep::ImputeColumns { .. } => {}
            PlanStep::EmitDataset { name, columns, .. } => {
                let subtype = split_subtypes.as_ref().and_then(|subs| {
                    subs.iter().find(|s| *name == format!("{}_{s}", plan.task)).cloned()
                });
                let siblings: Vec<&String> = match (&split_subtypes, &subtype) {
                    (Some(subs), Some(this)) => subs.iter().filter(|s| *s != this).collect(),
                    _ => Vec::new(),
                };
                let feats: Vec<String> = frames[&root]
                    .iter()
                    .filter(|c| !c.subtype.as_ref().is_some_and(|s| siblings.contains(&s)))
                    .map(|c| c.name.clone())
                    .collect();
                if feats.is_empty() {
                    return Err(PlanError::NoPredictors(name.clone()));
                }
                let keys = schema.entity(&root).expect("root").key_names();
                *columns = keys.iter().map(|k| format!("{root}_{k}")).collect();
                columns.extend(feats);
                columns.push(format!("{root}_{target_attr}"));
            }
        }
    }
    Ok(())
}

/// One numbered paragraph per step. Each output dataset name appears exactly
/// once, in its emit paragraph.
pub fn explain_plan(plan: &TransformationPlan) -> String {
    let b = &plan.binding;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Plan for target {} on target-bearing entity {}.",
        plan.target, b.target_entity
    );
    let _ = writeln!(
        out,
        "{} applies throughout: every feature name keeps its entities of origin.",
        Guideline::G1
    );
    let _ = writeln!(out, "Predictor entities in breadth-first order: {}.", b.predictor_entities.join(", "));
    for n in &plan.notices {
        let _ = writeln!(out, "Notice: {n}.");
    }
    let emit_step: BTreeMap<&str, usize> = plan
        .steps
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            PlanStep::EmitDataset { name, .. } => Some((name.as_str(), i + 1)),
            _ => None,
        })
        .collect();
    for (i, step) in plan.steps.iter().enumerate() {
        out.push('\n');
        let n = i + 1;
        let tags: Vec<String> = step.guidelines().iter().map(ToString::to_string).collect();
        let tag = if tags.is_empty() { String::new() } else { format!(" [{}]", tags.join("; ")) };
        let text = match step {
            PlanStep::DeriveAttr {
                entity,
                attribute,
                expression,
                aggregate,
                produces,
                ..
            } => {
                let when = if *aggregate { " after its related rows are available" } else { "" };
                let cols = if produces.is_empty() {
                    "used by other steps, not emitted itself".to_string()
                } else {
                    format!("produces {}", produces.join(", "))
                };
                format!("Derive {entity}.{attribute} = {expression} on entity {entity}{when}; {cols}.")
            }
            PlanStep::SummarizeChild {
                parent,
                child,
                relationship,
                aggregates,
                top_k,
                produces,
                ..
            } => {
                let aggs: Vec<&str> = aggregates.iter().filter(|a| **a != AggKind::Count).map(|a| a.name()).collect();
                format!(
                    "Entity summarization of {child} into {parent} across one-to-many {relationship}: one row per {parent}, \
                     counting {child} rows, taking {} of numeric columns, min and max of dates, counts of the {top_k} most \
                     frequent categories of nominal columns (others pooled as OTHER), true counts of booleans and \
                     concatenations of text; produces {}.",
                    if aggs.is_empty() { "no statistics".to_string() } else { aggs.join("/") },
                    produces.join(", ")
                )
            }
            PlanStep::JoinOneToOne {
                left,
                right,
                relationship,
                produces,
                ..
            } => format!(
                "Join {right} onto {left} across {relationship}; each {left} row has at most one {right} row; \
                 missing partners give not-applicable values; produces {}.",
                if produces.is_empty() { "no columns".to_string() } else { produces.join(", ") }
            ),
            PlanStep::SubtypeSplit {
                generalization,
                mode,
                subtypes,
                automatic,
                ..
            } => format!(
                "Split {} by {mode:?} generalization {generalization}{} into one dataset per subtype ({}); \
                 each keeps the shared columns plus only its own subtype's columns.",
                b.target_entity,
                if *automatic { " (the only generalization of the target entity)" } else { "" },
                subtypes.join(", ")
            )
            .replace("Disjoint", "disjoint")
            .replace("Overlap", "overlap"),
            PlanStep::ImputeColumns { dataset, strategy, .. } => {
                let how = match strategy {
                    ImputeStrategy::MeanMode => {
                        "numeric columns by their mean, nominal and boolean columns by their mode, dates by their median".to_string()
                    }
                    ImputeStrategy::Constant(_) => format!("compatible columns with {strategy}"),
                    ImputeStrategy::None => "nothing".to_string(),
                };
                format!(
                    "Impute unknown values in the dataset emitted by step {}: {how}, with statistics from that dataset \
                     only; not-applicable values are never filled.",
                    emit_step.get(dataset.as_str()).copied().unwrap_or(0)
                )
            }
            PlanStep::EmitDataset { name, columns, .. } => {
                format!("Emit dataset {name} sorted by key; columns {}.", columns.join(", "))
            }
        };
        let _ = writeln!(out, "{n}.{tag} {text}");
    }
    out
}

pub fn plan_to_json(plan: &TransformationPlan) -> String {
    serde_json::to_string_pretty(plan).expect("plan serializes")
}

pub fn plan_from_json(text: &str) -> Result<TransformationPlan, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_schema, SchemaSource};

    const REFERENCE: &str = include_str!("../examples/customer_order.cmml");

    fn schema(text: &str) -> EerSchema {
        parse_schema(&SchemaSource::inline(text)).unwrap()
    }

    fn compile(text: &str, task: &str) -> TransformationPlan {
        let s = schema(text);
        let opts = PlanOptions::from_task(s.task(task).unwrap());
        compile_plan(&s, task, &opts).unwrap()
    }

    fn kinds(plan: &TransformationPlan) -> Vec<&'static str> {
        plan.steps.iter().map(PlanStep::kind_name).collect()
    }

    #[test]
    fn customer_order_plan() {
        let plan = compile(REFERENCE, "PREDICT_LTV");
        assert!(plan.steps.iter().any(|s| matches!(s,
            PlanStep::SummarizeChild { parent, child, .. } if parent == "CUSTOMER" && child == "ORDER")));
        assert!(!plan.steps.iter().any(|s| matches!(s, PlanStep::SubtypeSplit { .. })));
        assert_eq!(plan.outputs, ["PREDICT_LTV"]);
        // age; PRODUCT onto ORDER_PRODUCT; ORDER_PRODUCT into ORDER; ORDER
        // into CUSTOMER; ltv; impute; emit
        assert_eq!(
            kinds(&plan),
            [
                "derive_attr",
                "join_one_to_one",
                "summarize_child",
                "summarize_child",
                "derive_attr",
                "impute_columns",
                "emit_dataset",
            ]
        );
    }

    #[test]
    fn bottom_up_order() {
        let plan = compile(REFERENCE, "PREDICT_LTV");
        let pos = |p: &str, c: &str| {
            plan.steps
                .iter()
                .position(|s| match s {
                    PlanStep::SummarizeChild { parent, child, .. } | PlanStep::JoinOneToOne { left: parent, right: child, .. } => {
                        parent == p && c == child
                    }
                    _ => false,
                })
                .unwrap()
        };
        assert!(pos("ORDER_PRODUCT", "PRODUCT") < pos("ORDER", "ORDER_PRODUCT"));
        assert!(pos("ORDER", "ORDER_PRODUCT") < pos("CUSTOMER", "ORDER"));
    }

    #[test]
    fn single_entity_plan() {
        let plan = compile(
            "entity A { key id: identifier\n attr y: numeric\n attr x: numeric\n attr d: date\n derived attr yr: numeric = years_between(d, today()) }\ntask T { target A.y }",
            "T",
        );
        assert_eq!(kinds(&plan), ["derive_attr", "impute_columns", "emit_dataset"]);
        let text = explain_plan(&plan);
        assert!(text.contains("1. [Guideline 2 (derive features)] Derive A.yr"));
        assert!(text.contains("2. [Guideline 3 (impute features)]"));
        assert!(text.contains("3. Emit dataset T"));
    }

    #[test]
    fn explicit_split_emits_per_subtype() {
        let src = "entity CHILD { key id: identifier\n attr age: numeric\n attr days: numeric\n attr sex: nominal }\n\
                   generalization AGE_GROUP of CHILD disjoint { subtype YOUNGER when (age <= 7) subtype OLDER when (age >= 8) }\n\
                   task LOS { target CHILD.days split_by AGE_GROUP }";
        let plan = compile(src, "LOS");
        let emits: Vec<_> = plan.steps.iter().filter(|s| matches!(s, PlanStep::EmitDataset { .. })).collect();
        assert_eq!(emits.len(), 2);
        assert_eq!(plan.outputs, ["LOS_YOUNGER", "LOS_OLDER"]);
        assert!(plan.guideline_set().contains(&Guideline::G5));
    }

    #[test]
    fn split_errors() {
        let s = schema(REFERENCE);
        let opts = PlanOptions {
            split_by: Some("ORDER_SIZE".into()),
            ..PlanOptions::default()
        };
        assert!(matches!(compile_plan(&s, "PREDICT_LTV", &opts), Err(PlanError::SplitNotOnTarget { .. })));
    }

    #[test]
    fn non_numeric_aggregate_target() {
        let src = "entity A { key id: identifier\n attr x: numeric\n derived attr y: date = max(R.d) }\n\
                   entity B { key id: identifier\n attr d: date }\nrelationship R { A (1,1) -- (0,N) B via a_id }\ntask T { target A.y }";
        let s = schema(src);
        assert!(matches!(
            compile_plan(&s, "T", &PlanOptions::default()),
            Err(PlanError::NonNumericAggregateTarget(_))
        ));
    }

    #[test]
    fn no_predictors() {
        let s = schema("entity A { key id: identifier\n attr y: numeric }\ntask T { target A.y }");
        assert_eq!(compile_plan(&s, "T", &PlanOptions::default()), Err(PlanError::NoPredictors("T".into())));
    }

    #[test]
    fn guideline_tags_follow_triggers() {
        let plan = compile(REFERENCE, "PREDICT_LTV");
        let set = plan.guideline_set();
        assert!(set.contains(&Guideline::G1) && set.contains(&Guideline::G2) && set.contains(&Guideline::G3) && set.contains(&Guideline::G4));
        assert!(!set.contains(&Guideline::G5));
        let s = schema("entity A { key id: identifier\n attr y: numeric\n attr x: numeric }\ntask T { target A.y impute none }");
        let plan = compile_plan(&s, "T", &PlanOptions::from_task(&s.tasks[0])).unwrap();
        assert_eq!(plan.guideline_set().into_iter().collect::<Vec<_>>(), [Guideline::G1]);
    }

    #[test]
    fn explain_mentions_summarization_and_outputs_once() {
        let plan = compile(REFERENCE, "PREDICT_LTV");
        let text = explain_plan(&plan);
        assert!(text.contains("Guideline 4"));
        assert!(text.contains("entity summarization"));
        let para = text.lines().find(|l| l.contains("summarization of ORDER into CUSTOMER")).unwrap();
        assert!(para.contains("Guideline 4"));
        for name in &plan.outputs {
            let count = text
                .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .filter(|t| t == name)
                .count();
            assert_eq!(count, 1, "{name}");
        }
    }

    #[test]
    fn json_round_trip() {
        let plan = compile(REFERENCE, "PREDICT_LTV");
        let back = plan_from_json(&plan_to_json(&plan)).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn empty_options_echo_defaults() {
        let o: PlanOptions = serde_json::from_str("{}").unwrap();
        assert_eq!(o, PlanOptions::default());
    }

    #[test]
    fn unknown_field_rejected() {
        let plan = compile(REFERENCE, "PREDICT_LTV");
        let mut v: serde_json::Value = serde_json::from_str(&plan_to_json(&plan)).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(plan_from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&plan_to_json(&plan)).unwrap();
        v["steps"][0]["surprise"] = serde_json::json!(1);
        assert!(plan_from_json(&v.to_string()).is_err());
    }

    #[test]
    fn emitted_columns_of_reference_plan() {
        let plan = compile(REFERENCE, "PREDICT_LTV");
        let PlanStep::EmitDataset { columns, .. } = plan.steps.last().unwrap() else { panic!() };
        assert_eq!(columns.first().unwrap(), "CUSTOMER_cust_id");
        assert_eq!(columns.last().unwrap(), "CUSTOMER_ltv");
        assert!(columns.contains(&"ORDER_channel_*_count".to_string()));
        assert!(columns.contains(&"ORDER_ORDER_PRODUCT_quantity_sum_mean".to_string()));
        assert!(!columns.iter().any(|c| c == "CUSTOMER_dob"));
    }
}
