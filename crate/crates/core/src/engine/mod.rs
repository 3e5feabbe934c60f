//! Executes a transformation plan against bound data.
//!
//! Each tree entity gets a frame of its own feature columns. Steps fold child
//! frames into parents until only the target-bearing entity's frame is left;
//! that frame is then split, filtered, imputed and emitted.

pub mod flatten;
mod frames;
mod impute;
pub mod layout;
pub mod manifest;
pub mod naming;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use flatten::{flatten_naive, FlatDataset};
pub use manifest::{DatasetManifest, ExecutedStep, FeatureRecord, LineageManifest, Provenance, Role, Transform};
pub use naming::{category_count_name, feature_name, TransformKind};

use self::frames::{attribute_record, build_frame, join_one, summarize_child, Derived, Frame};
use crate::binder::BoundModel;
use crate::eer::{AttributeKind, ImputeStrategy};
use crate::planner::{Guideline, PlanStep, TransformationPlan};
use crate::tabular::{to_csv_bytes, Column, Table};
use crate::value::{key_to_string, Key, NullKind, Value};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecuteOptions {
    /// Directory for `<dataset>.csv` files and `manifest.json`; nothing is
    /// written when absent.
    pub out_dir: Option<PathBuf>,
    /// Fraction of target-bearing instances written to a separate test file.
    pub holdout: Option<f64>,
    /// Recorded in the manifest only.
    pub seed: Option<u64>,
    /// SHA-256 of the schema source, recorded in the manifest.
    pub schema_sha256: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("plan does not match the bound model: {0}")]
    PlanMismatch(String),
    #[error("holdout fraction {0} is outside [0, 1)")]
    BadHoldout(f64),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One column of an assembled dataset.
#[derive(Debug, Clone)]
pub(crate) struct DatasetColumn {
    pub kind: AttributeKind,
    pub values: Vec<Value>,
    pub record: FeatureRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDataset {
    pub name: String,
    /// One row per target-bearing instance, sorted by key.
    pub table: Table,
    pub key_columns: Vec<String>,
    pub target_column: String,
    /// Per cell, the null class of an empty cell.
    pub nulls: Vec<Vec<Option<NullKind>>>,
    /// Instance key of every row.
    pub keys: Vec<Key>,
    pub features: Vec<FeatureRecord>,
    pub dropped_null_target: usize,
}

impl TrainingDataset {
    pub fn column_values(&self, name: &str) -> Vec<Value> {
        let i = self.table.column_index(name).unwrap_or_else(|| panic!("no column `{name}` in {}", self.name));
        self.table
            .rows
            .iter()
            .zip(&self.nulls)
            .map(|(r, n)| match (&r[i], n[i]) {
                (Some(s), _) => Value::Present(s.clone()),
                (None, kind) => Value::Null(kind.unwrap_or(NullKind::Unknown)),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub datasets: Vec<TrainingDataset>,
    pub manifest: LineageManifest,
    /// Files written under `out_dir`, in write order.
    pub written: Vec<PathBuf>,
}

impl Execution {
    pub fn dataset(&self, name: &str) -> Option<&TrainingDataset> {
        self.datasets.iter().find(|d| d.name == name)
    }
}

/// Whether an instance falls in the holdout set. Membership depends only on
/// the key, so it is stable across runs and datasets.
pub fn in_holdout(key: &Key, fraction: f64) -> bool {
    let digest = Sha256::digest(key_to_string(key).as_bytes());
    let head: [u8; 8] = digest[..8].try_into().expect("digest is 32 bytes");
    (u64::from_be_bytes(head) as f64 / 2f64.powi(64)) < fraction
}

fn check_plan(plan: &TransformationPlan, bound: &BoundModel) -> Result<(), EngineError> {
    for e in &plan.binding.predictor_entities {
        if bound.schema.entity(e).is_none() {
            return Err(EngineError::PlanMismatch(format!("entity {e} is not in the bound schema")));
        }
    }
    for edge in &plan.binding.spanning_tree {
        if !bound.fk_index.contains_key(&edge.relationship) {
            return Err(EngineError::PlanMismatch(format!(
                "relationship {} is not in the bound schema",
                edge.relationship
            )));
        }
    }
    Ok(())
}

fn describe(step: &PlanStep) -> String {
    match step {
        PlanStep::DeriveAttr { entity, attribute, expression, .. } => format!("derive {entity}.{attribute} = {expression}"),
        PlanStep::SummarizeChild { parent, child, relationship, .. } => format!("summarize {child} into {parent} via {relationship}"),
        PlanStep::JoinOneToOne { left, right, relationship, .. } => format!("join {right} onto {left} via {relationship}"),
        PlanStep::SubtypeSplit { generalization, .. } => format!("split by {generalization}"),
        PlanStep::ImputeColumns { dataset, strategy, .. } => format!("impute {dataset} ({strategy})"),
        PlanStep::EmitDataset { name, .. } => format!("emit {name}"),
    }
}

struct Split {
    generalization: String,
    subtypes: Vec<String>,
}

/// Runs `plan` on `bound`. With an output directory, writes every dataset
/// and `manifest.json`; a failed write removes whatever was written.
pub fn execute(plan: &TransformationPlan, bound: &BoundModel, options: &ExecuteOptions) -> Result<Execution, EngineError> {
    check_plan(plan, bound)?;
    if let Some(h) = options.holdout {
        if !(0.0..1.0).contains(&h) {
            return Err(EngineError::BadHoldout(h));
        }
    }
    let binding = &plan.binding;
    let root = binding.target_entity.clone();
    let mut derived = Derived::new(bound);
    let mut frames: BTreeMap<String, Frame> = binding
        .predictor_entities
        .iter()
        .map(|e| (e.clone(), build_frame(&mut derived, binding, e)))
        .collect();
    let mut warnings: Vec<String> = bound.warnings.iter().map(|d| d.message.clone()).collect();
    warnings.extend(plan.notices.iter().cloned());

    let mut steps = Vec::new();
    let mut split: Option<Split> = None;
    let mut strategies: BTreeMap<String, ImputeStrategy> = BTreeMap::new();
    let mut datasets = Vec::new();
    for (i, step) in plan.steps.iter().enumerate() {
        let produced = match step {
            PlanStep::DeriveAttr { entity, attribute, .. } => {
                derived.ensure(entity);
                let name = format!("{entity}_{attribute}");
                let visible = frames.get(entity).is_some_and(|f| f.columns.iter().any(|c| c.name() == name))
                    || (*entity == root && *attribute == binding.target_attr);
                if visible {
                    vec![name]
                } else {
                    Vec::new()
                }
            }
            PlanStep::SummarizeChild {
                parent,
                child,
                relationship,
                aggregates,
                top_k,
                ..
            } => {
                let c = frames.remove(child).ok_or_else(|| EngineError::PlanMismatch(format!("{child} folded twice")))?;
                let p = frames.get_mut(parent).ok_or_else(|| EngineError::PlanMismatch(format!("{parent} already folded")))?;
                summarize_child(bound, binding, p, &c, relationship, aggregates, *top_k)
            }
            PlanStep::JoinOneToOne { left, right, relationship, .. } => {
                let c = frames.remove(right).ok_or_else(|| EngineError::PlanMismatch(format!("{right} folded twice")))?;
                let p = frames.get_mut(left).ok_or_else(|| EngineError::PlanMismatch(format!("{left} already folded")))?;
                join_one(bound, binding, p, &c, relationship)
            }
            PlanStep::SubtypeSplit { generalization, subtypes, .. } => {
                if bound.schema.generalization(generalization).is_none() {
                    return Err(EngineError::PlanMismatch(format!("unknown generalization {generalization}")));
                }
                split = Some(Split {
                    generalization: generalization.clone(),
                    subtypes: subtypes.clone(),
                });
                Vec::new()
            }
            PlanStep::ImputeColumns { dataset, strategy, .. } => {
                strategies.insert(dataset.clone(), strategy.clone());
                Vec::new()
            }
            PlanStep::EmitDataset { name, .. } => {
                let frame = frames.get(&root).ok_or_else(|| EngineError::PlanMismatch(format!("{root} already folded")))?;
                let (ds, w) = assemble(plan, bound, &mut derived, frame, name, split.as_ref(), strategies.get(name));
                warnings.extend(w);
                let cols = ds.table.column_names().iter().map(|s| s.to_string()).collect();
                datasets.push(ds);
                cols
            }
        };
        steps.push(ExecutedStep {
            index: i + 1,
            kind: step.kind_name().to_string(),
            guidelines: step.guidelines().to_vec(),
            description: describe(step),
            produced,
        });
    }
    for f in frames.values() {
        warnings.extend(f.names.warnings.iter().map(|d| d.message.clone()));
    }
    warnings.extend(derived.notes.iter().cloned());
    warnings.extend(leakage_warning(plan, bound, &datasets));

    let mut manifest = LineageManifest {
        task: plan.task.clone(),
        target: plan.target.clone(),
        provenance: Provenance {
            schema_sha256: options.schema_sha256.clone(),
            tables: bound.bundle.hashes.clone(),
            tool_version: crate::TOOL_VERSION.to_string(),
            seed: options.seed,
            today: bound.clock.today,
        },
        steps,
        datasets: datasets
            .iter()
            .map(|d| DatasetManifest {
                name: d.name.clone(),
                files: Vec::new(),
                rows: d.table.len(),
                test_rows: None,
                dropped_null_target: d.dropped_null_target,
                features: d.features.clone(),
            })
            .collect(),
        warnings,
    };
    let outputs = render_outputs(&datasets, &mut manifest, options.holdout);
    let written = match &options.out_dir {
        Some(dir) => write_all(dir, &outputs, &manifest)?,
        None => Vec::new(),
    };
    Ok(Execution {
        datasets,
        manifest,
        written,
    })
}

/// Builds one output dataset from the root frame.
fn assemble(
    plan: &TransformationPlan,
    bound: &BoundModel,
    derived: &mut Derived<'_>,
    frame: &Frame,
    name: &str,
    split: Option<&Split>,
    strategy: Option<&ImputeStrategy>,
) -> (TrainingDataset, Vec<String>) {
    let binding = &plan.binding;
    let root = &binding.target_entity;
    let mut warnings = Vec::new();
    let subtype = split.and_then(|s| s.subtypes.iter().find(|t| format!("{}_{t}", plan.task) == name).cloned());
    let mut rows: Vec<usize> = (0..frame.rows)
        .filter(|&r| match (split, &subtype) {
            (Some(s), Some(t)) => bound.subtypes_of(&s.generalization, r).contains(t),
            _ => true,
        })
        .collect();
    if let (Some(s), Some(t)) = (split, &subtype) {
        if rows.is_empty() {
            warnings.push(format!("subtype {t} of {} has no members; {name} is empty", s.generalization));
        }
    }
    rows.sort_by(|a, b| bound.key(root, *a).cmp(bound.key(root, *b)));
    let target = derived.column(root, &binding.target_attr);
    let before = rows.len();
    rows.retain(|&r| !target[r].is_null());
    let dropped = before - rows.len();
    if dropped > 0 {
        warnings.push(format!("{name}: dropped {dropped} rows with a null target"));
    }

    let pick = |values: &[Value]| rows.iter().map(|&r| values[r].clone()).collect::<Vec<_>>();
    let e = bound.schema.entity(root).expect("root entity");
    let mut columns: Vec<DatasetColumn> = Vec::new();
    for (i, k) in e.key_attributes().enumerate() {
        columns.push(DatasetColumn {
            kind: k.kind,
            values: rows.iter().map(|&r| Value::Present(bound.key(root, r)[i].clone())).collect(),
            record: attribute_record(bound, root, &k.name, format!("{root}_{}", k.name), Role::Key),
        });
    }
    let siblings: BTreeSet<&String> = match (split, &subtype) {
        (Some(s), Some(t)) => s.subtypes.iter().filter(|x| *x != t).collect(),
        _ => BTreeSet::new(),
    };
    for col in &frame.columns {
        if col.subtype.as_ref().is_some_and(|s| siblings.contains(s)) {
            continue;
        }
        columns.push(DatasetColumn {
            kind: col.kind,
            values: pick(&col.values),
            record: col.record.clone(),
        });
    }
    let target_attr = e.attribute(&binding.target_attr).expect("target attribute");
    columns.push(DatasetColumn {
        kind: target_attr.kind,
        values: pick(&target),
        record: attribute_record(bound, root, &binding.target_attr, format!("{root}_{}", binding.target_attr), Role::Target),
    });

    if let Some(strategy) = strategy {
        warnings.extend(impute::impute_columns(name, &mut columns, strategy));
    }
    if split.is_some() {
        for c in &mut columns {
            c.record.guidelines.insert(Guideline::G5);
        }
    }

    let keys: Vec<Key> = rows.iter().map(|&r| bound.key(root, r).clone()).collect();
    let mut table = Table::new(name, columns.iter().map(|c| Column::new(&c.record.name, c.kind)).collect());
    table.key_columns = columns.iter().filter(|c| c.record.role == Role::Key).map(|c| c.record.name.clone()).collect();
    let mut nulls = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        table.rows.push(columns.iter().map(|c| c.values[i].clone().into_cell()).collect());
        nulls.push(columns.iter().map(|c| c.values[i].null_kind()).collect());
    }
    let ds = TrainingDataset {
        name: name.to_string(),
        key_columns: table.key_columns.clone(),
        target_column: columns.last().expect("target").record.name.clone(),
        table,
        nulls,
        keys,
        features: columns.into_iter().map(|c| c.record).collect(),
        dropped_null_target: dropped,
    };
    (ds, warnings)
}

/// Warns when the target is derived from attributes that also feed emitted
/// predictors.
fn leakage_warning(plan: &TransformationPlan, bound: &BoundModel, datasets: &[TrainingDataset]) -> Option<String> {
    let root = &plan.binding.target_entity;
    let expr = bound.schema.entity(root)?.attribute(&plan.binding.target_attr)?.derivation.as_ref()?;
    let inputs: BTreeSet<String> = frames::derivation_sources(bound, root, expr).into_iter().collect();
    let leaking: BTreeSet<&str> = datasets
        .iter()
        .flat_map(|d| d.features.iter())
        .filter(|f| f.role == Role::Predictor && f.source_attributes.iter().any(|s| inputs.contains(s)))
        .map(|f| f.name.as_str())
        .collect();
    if leaking.is_empty() {
        return None;
    }
    Some(format!(
        "possible target leakage: {} is derived from {}, which also feed predictors {}",
        plan.target,
        inputs.into_iter().collect::<Vec<_>>().join(", "),
        leaking.into_iter().collect::<Vec<_>>().join(", ")
    ))
}

/// CSV bytes per file name, recording file names and holdout sizes in the
/// manifest.
fn render_outputs(datasets: &[TrainingDataset], manifest: &mut LineageManifest, holdout: Option<f64>) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for (d, m) in datasets.iter().zip(&mut manifest.datasets) {
        match holdout {
            None => {
                let file = format!("{}.csv", d.name);
                m.files.push(file.clone());
                out.push((file, to_csv_bytes(&d.table)));
            }
            Some(fraction) => {
                let (mut train, mut test) = (d.table.clone(), d.table.clone());
                train.rows.clear();
                test.rows.clear();
                for (row, key) in d.table.rows.iter().zip(&d.keys) {
                    if in_holdout(key, fraction) {
                        test.rows.push(row.clone());
                    } else {
                        train.rows.push(row.clone());
                    }
                }
                m.test_rows = Some(test.len());
                for (suffix, t) in [("train", train), ("test", test)] {
                    let file = format!("{}_{suffix}.csv", d.name);
                    m.files.push(file.clone());
                    out.push((file, to_csv_bytes(&t)));
                }
            }
        }
    }
    out
}

fn write_all(dir: &Path, outputs: &[(String, Vec<u8>)], manifest: &LineageManifest) -> Result<Vec<PathBuf>, EngineError> {
    let mut written = Vec::new();
    let result = (|| {
        std::fs::create_dir_all(dir).map_err(|source| EngineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let manifest_bytes = manifest.to_json().into_bytes();
        for (file, bytes) in outputs.iter().map(|(f, b)| (f.as_str(), b)).chain([("manifest.json", &manifest_bytes)]) {
            let path = dir.join(file);
            std::fs::write(&path, bytes).map_err(|source| EngineError::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            Err(e)
        }
    }
}
