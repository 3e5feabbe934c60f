//! Lineage manifest: one record per output column plus provenance.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::naming::TransformKind;
use crate::planner::Guideline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Key,
    Target,
    Predictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub kind: TransformKind,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl Transform {
    pub fn new(kind: TransformKind) -> Self {
        Transform {
            kind,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub name: String,
    pub role: Role,
    /// Entities the feature came from, in spanning-tree order.
    pub origin_entities: Vec<String>,
    /// `ENTITY.attr` inputs.
    pub source_attributes: Vec<String>,
    pub transform: Transform,
    pub guidelines: BTreeSet<Guideline>,
    pub imputed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_sha256: Option<String>,
    /// Table name to SHA-256 of the loaded file bytes.
    pub tables: BTreeMap<String, String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub today: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedStep {
    pub index: usize,
    pub kind: String,
    pub guidelines: Vec<Guideline>,
    pub description: String,
    pub produced: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub files: Vec<String>,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_rows: Option<usize>,
    /// Rows removed because the target was null.
    pub dropped_null_target: usize,
    pub features: Vec<FeatureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageManifest {
    pub task: String,
    pub target: String,
    pub provenance: Provenance,
    pub steps: Vec<ExecutedStep>,
    pub datasets: Vec<DatasetManifest>,
    pub warnings: Vec<String>,
}

impl LineageManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetManifest> {
        self.datasets.iter().find(|d| d.name == name)
    }
}
