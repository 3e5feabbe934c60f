//! Invariant checks for prepared datasets, run against [`random_case`]
//! bundles. Expected values come from the raw CSV text of the case, never
//! from the engine.
//!
//! [`random_case`]: crate::synth::random_case

use std::collections::{BTreeMap, BTreeSet};

use cmml_core::eer::ImputeStrategy;
use cmml_core::engine::{feature_name, Role, TransformKind};
use cmml_core::planner::PlanOptions;
use cmml_core::value::key_to_string;
use cmml_core::{Execution, FlatDataset, NullKind, Value};

use crate::synth::{CaseShape, SynthBundle};

/// A case run through the pipeline twice: once without imputation and once
/// with mean/mode imputation.
pub struct PreparedCase {
    pub shape: CaseShape,
    pub raw: Execution,
    pub imputed: Execution,
    pub flat: FlatDataset,
    tables: BTreeMap<String, Vec<BTreeMap<String, String>>>,
}

fn rows(csv: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    lines
        .map(|l| header.iter().zip(l.split(',')).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

pub fn prepare_case(bundle: &SynthBundle, shape: &CaseShape) -> Result<PreparedCase, String> {
    let run = |impute: ImputeStrategy| {
        bundle.prepare(&PlanOptions {
            impute,
            ..PlanOptions::default()
        })
    };
    let (raw, _) = run(ImputeStrategy::None)?;
    let (imputed, flat) = run(ImputeStrategy::MeanMode)?;
    Ok(PreparedCase {
        shape: shape.clone(),
        raw,
        imputed,
        flat,
        tables: bundle.tables.iter().map(|(k, v)| (k.clone(), rows(v))).collect(),
    })
}

impl PreparedCase {
    fn table(&self, name: &str) -> &[BTreeMap<String, String>] {
        self.tables.get(name).map_or(&[], Vec::as_slice)
    }

    fn count_by(&self, table: &str, fk: &str) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in self.table(table) {
            *out.entry(r[fk].clone()).or_default() += 1;
        }
        out
    }

    /// Parent keys with a present target that belong to each output dataset.
    pub fn expected_members(&self) -> BTreeMap<String, BTreeSet<String>> {
        let cut = self.shape.cut;
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let names: Vec<String> = if self.shape.subtypes.is_empty() {
            vec!["T".to_string()]
        } else {
            self.shape.subtypes.iter().map(|s| format!("T_{s}")).collect()
        };
        for n in &names {
            out.insert(n.clone(), BTreeSet::new());
        }
        for p in self.table("PARENT").iter().filter(|p| !p["y"].is_empty()) {
            let z: i64 = p["z"].parse().expect("z is always present");
            for (i, n) in names.iter().enumerate() {
                let member = match (self.shape.subtypes.len(), i) {
                    (0, _) => true,
                    (2, 0) => z < cut,
                    (2, _) => z >= cut,
                    (_, 0) => z <= cut,
                    (_, 1) => z >= 4,
                    _ => p["c"] == "p",
                };
                if member {
                    out.get_mut(n).expect("named").insert(p["pid"].clone());
                }
            }
        }
        out
    }

    /// Rows of the naive left-join chain, counted from the raw tables.
    pub fn expected_flat_rows(&self) -> usize {
        let grand = self.count_by("GRANDCHILD", "cid");
        let detail = self.count_by("DETAIL", "pid");
        let mut per_parent: BTreeMap<String, usize> = BTreeMap::new();
        for c in self.table("CHILD") {
            let g = if self.shape.has_grandchild { grand.get(&c["cid"]).copied().unwrap_or(0).max(1) } else { 1 };
            *per_parent.entry(c["pid"].clone()).or_default() += g;
        }
        self.table("PARENT")
            .iter()
            .map(|p| {
                let c = per_parent.get(&p["pid"]).copied().unwrap_or(0).max(1);
                let d = if self.shape.has_detail { detail.get(&p["pid"]).copied().unwrap_or(0).max(1) } else { 1 };
                c * d
            })
            .sum()
    }

    fn subtype_attrs(&self) -> BTreeMap<String, &'static str> {
        let names: &[(&str, &str)] = if self.shape.overlap {
            &[("SMALLZ", "sz_v"), ("BIGZ", "bz_v"), ("PCAT", "pc_v")]
        } else {
            &[("LOW", "low_v"), ("HIGH", "high_v")]
        };
        if self.shape.subtypes.is_empty() {
            return BTreeMap::new();
        }
        names.iter().map(|(s, a)| (s.to_string(), *a)).collect()
    }
}

/// One row per target-bearing key in every dataset, the expected key sets,
/// and the naive dataset's join size.
pub fn check_row_counts(case: &PreparedCase) -> Result<(), String> {
    let want = case.expected_members();
    for (name, keys) in &want {
        let got = case.imputed.dataset(name);
        let got_keys: Vec<String> = got.map(|d| d.keys.iter().map(|k| key_to_string(k)).collect()).unwrap_or_default();
        let distinct: BTreeSet<&String> = got_keys.iter().collect();
        if got_keys.len() != distinct.len() {
            return Err(format!("{name}: {} rows but {} distinct keys", got_keys.len(), distinct.len()));
        }
        if got_keys.len() != keys.len() {
            return Err(format!("{name}: {} rows, expected {}", got_keys.len(), keys.len()));
        }
        if let Some(d) = got {
            if d.table.rows.len() != d.keys.len() {
                return Err(format!("{name}: table and key list disagree"));
            }
        }
    }
    if case.imputed.datasets.len() != want.len() {
        return Err(format!("{} datasets, expected {}", case.imputed.datasets.len(), want.len()));
    }
    let flat = case.flat.table.rows.len();
    let oracle = case.expected_flat_rows();
    if flat != oracle {
        return Err(format!("flat dataset has {flat} rows, join-size oracle {oracle}"));
    }
    Ok(())
}

/// Disjoint splits partition members, overlap splits copy multi-members, and
/// no dataset carries a sibling subtype's attributes.
pub fn check_splits(case: &PreparedCase) -> Result<(), String> {
    let want = case.expected_members();
    for (name, keys) in &want {
        let got: BTreeSet<String> = case
            .imputed
            .dataset(name)
            .map(|d| d.keys.iter().map(|k| key_to_string(k)).collect())
            .unwrap_or_default();
        if &got != keys {
            return Err(format!("{name}: keys {got:?}, expected {keys:?}"));
        }
    }
    if !case.shape.overlap {
        let mut seen = BTreeSet::new();
        for d in &case.imputed.datasets {
            for k in &d.keys {
                if !seen.insert(key_to_string(k)) {
                    return Err(format!("key {} appears in two disjoint subtype datasets", key_to_string(k)));
                }
            }
        }
    }
    let attrs = case.subtype_attrs();
    for d in &case.imputed.datasets {
        let own = d.name.strip_prefix("T_").unwrap_or_default();
        for (sub, attr) in attrs.iter().filter(|(s, _)| s.as_str() != own) {
            let source = format!("PARENT.{attr}");
            if let Some(f) = d.features.iter().find(|f| f.source_attributes.contains(&source) || f.name.contains(attr)) {
                return Err(format!("{}: column {} comes from sibling subtype {sub}", d.name, f.name));
            }
        }
    }
    Ok(())
}

/// Imputation touches only unknown cells, and each fill equals the statistic
/// of the same dataset's column.
pub fn check_imputation(case: &PreparedCase) -> Result<(), String> {
    for raw in &case.raw.datasets {
        let imp = case.imputed.dataset(&raw.name).ok_or_else(|| format!("{} missing after imputation", raw.name))?;
        for rec in &imp.features {
            let before = raw.column_values(&rec.name);
            let after = imp.column_values(&rec.name);
            let mut filled = Vec::new();
            for (b, a) in before.iter().zip(&after) {
                match b.null_kind() {
                    Some(NullKind::NotApplicable) if a != b => {
                        return Err(format!("{}.{}: not-applicable cell changed to {a:?}", raw.name, rec.name));
                    }
                    Some(NullKind::Unknown) if a != b => filled.push(a.clone()),
                    None if a != b => return Err(format!("{}.{}: present value changed", raw.name, rec.name)),
                    _ => {}
                }
            }
            if filled.len() != rec.imputed_cells {
                return Err(format!("{}.{}: {} cells filled, manifest says {}", raw.name, rec.name, filled.len(), rec.imputed_cells));
            }
            if rec.transform.kind == TransformKind::ImputedMean && rec.transform.params.get("statistic") == Some(&"mean".into()) {
                let xs: Vec<f64> = before.iter().filter_map(Value::as_f64).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                if let Some(bad) = filled.iter().find(|v| v.as_f64().is_none_or(|x| (x - mean).abs() > 1e-9 * mean.abs().max(1.0))) {
                    return Err(format!("{}.{}: filled {bad:?}, dataset mean {mean}", raw.name, rec.name));
                }
            }
        }
    }
    Ok(())
}

fn param<'a>(t: &'a cmml_core::engine::Transform, key: &str) -> Option<&'a str> {
    t.params.get(key).and_then(|v| v.as_str())
}

/// The name a record should carry under the naming rules, rebuilt from its
/// transform and origins.
fn expected_name(rec: &cmml_core::engine::FeatureRecord) -> Option<String> {
    let origin = rec.origin_entities.first()?;
    let mut t = rec.transform.clone();
    if matches!(t.kind, TransformKind::ImputedMean | TransformKind::ImputedMode | TransformKind::ImputedConst) {
        t = serde_json::from_value(t.params.get("of")?.clone()).ok()?;
    }
    let base = |of: &str| {
        if of.starts_with(&format!("{origin}_")) {
            of.to_string()
        } else {
            format!("{origin}_{of}")
        }
    };
    Some(match t.kind {
        TransformKind::Raw | TransformKind::Derived => {
            let attr = rec.source_attributes.first()?.split_once('.')?.1;
            let attr = if t.kind == TransformKind::Derived { rec.name.strip_prefix(&format!("{origin}_"))? } else { attr };
            feature_name(attr, &[origin.as_str()], t.kind)
        }
        TransformKind::Count => feature_name("", &[origin.as_str()], TransformKind::Count),
        TransformKind::CategoryCount => {
            let b = base(param(&t, "of")?);
            match param(&t, "category") {
                Some(k) => cmml_core::engine::category_count_name(&b, k),
                None => format!("{b}_OTHER_count"),
            }
        }
        k => format!("{}_{}", base(param(&t, "of")?), k.suffix()),
    })
}

/// One lineage record per column, in column order, each naming at least one
/// origin entity and following the naming rules.
pub fn check_manifest(case: &PreparedCase) -> Result<(), String> {
    for d in &case.imputed.datasets {
        let cols: Vec<&str> = d.table.column_names();
        let recs: Vec<&str> = d.features.iter().map(|f| f.name.as_str()).collect();
        if cols != recs {
            return Err(format!("{}: columns {cols:?} but records {recs:?}", d.name));
        }
        let m = case.imputed.manifest.dataset(&d.name).ok_or_else(|| format!("{} not in manifest", d.name))?;
        if m.features != d.features {
            return Err(format!("{}: manifest records differ from the dataset's", d.name));
        }
        for f in &d.features {
            if f.origin_entities.is_empty() {
                return Err(format!("{}.{}: no origin entity", d.name, f.name));
            }
            match expected_name(f) {
                Some(n) if n == f.name => {}
                other => return Err(format!("{}.{}: expected name {other:?}", d.name, f.name)),
            }
        }
        let targets = d.features.iter().filter(|f| f.role == Role::Target).count();
        if targets != 1 || d.features.last().map(|f| f.role) != Some(Role::Target) {
            return Err(format!("{}: target must be the single last column", d.name));
        }
    }
    Ok(())
}
