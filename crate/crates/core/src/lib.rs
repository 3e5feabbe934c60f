//! Schema-compiled preparation of machine-learning training datasets.
//!
//! The pipeline takes two inputs, an extended entity-relationship model written
//! in the `.cmml` schema language and one CSV table per entity, and produces
//! one or more flat training datasets plus a lineage manifest describing where
//! every output column came from.
//!
//! ```text
//! .cmml text ──dsl──▶ EerSchema ──rewrite N:M──▶ EerSchema
//!                                   │
//! CSV tables ──tabular──▶ DataBundle ─┴─binder──▶ BoundModel
//!                                                  │
//!                     planner::compile_plan ───────┤
//!                                                  ▼
//!                                engine::execute ──▶ datasets + manifest
//! ```

pub mod binder;
pub mod diag;
pub mod dsl;
pub mod eer;
pub mod engine;
pub mod expr;
pub mod planner;
pub mod tabular;
pub mod value;

pub use binder::{bind, cardinality_report, BoundModel};
pub use diag::{Diagnostic, Severity};
pub use dsl::{parse_schema, print_schema, SchemaSource};
pub use eer::{resolve_target, rewrite_many_to_many, validate_schema, EerSchema, TargetBinding};
pub use engine::{execute, flatten_naive, ExecuteOptions, Execution, FlatDataset, LineageManifest, TrainingDataset};
pub use planner::{compile_plan, explain_plan, plan_from_json, plan_to_json, PlanOptions, TransformationPlan};
pub use tabular::{read_csv, write_csv, DataBundle, Table};
pub use value::{NullKind, Scalar, Value};

/// Version string recorded in manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
