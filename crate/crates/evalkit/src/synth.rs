//! Seeded synthetic data.
//!
//! [`synth_generate`] builds a customer/order bundle whose target is a known
//! function of per-customer order statistics. [`random_case`] builds small
//! randomized schemas with matching data for property tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cmml_core::diag::Diagnostic;
use cmml_core::tabular::{parse_csv, sha256_hex, Column, DataBundle};
use chrono::NaiveDate;
use cmml_core::binder::bind;
use cmml_core::expr::Clock;
use cmml_core::planner::{compile_plan, PlanOptions};
use cmml_core::{execute, flatten_naive, parse_schema, EerSchema, ExecuteOptions, Execution, FlatDataset, SchemaSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::EvalError;

/// Generator parameters, read from JSON. Missing fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub customers: usize,
    /// Orders per customer are drawn uniformly from `fanout_min..=fanout_max`.
    pub fanout_min: usize,
    pub fanout_max: usize,
    pub total_mean: f64,
    pub total_sd: f64,
    /// Standard deviation of the noise added to the target.
    pub sigma: f64,
    pub intercept: f64,
    /// Weight of the customer's mean order total.
    pub coef_mean_total: f64,
    /// Weight of the customer's order count.
    pub coef_count: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            customers: 200,
            fanout_min: 1,
            fanout_max: 8,
            total_mean: 50.0,
            total_sd: 2.0,
            sigma: 1.9,
            intercept: 0.0,
            coef_mean_total: 3.0,
            coef_count: 2.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::BadSpec(m.to_string()));
        if self.customers == 0 {
            return bad("customers must be positive");
        }
        if self.fanout_min > self.fanout_max {
            return bad("fanout_min exceeds fanout_max");
        }
        if !(self.total_sd >= 0.0 && self.sigma >= 0.0) {
            return bad("standard deviations must be non-negative");
        }
        let all = [self.total_mean, self.total_sd, self.sigma, self.intercept, self.coef_mean_total, self.coef_count];
        if all.iter().any(|x| !x.is_finite()) {
            return bad("parameters must be finite");
        }
        Ok(())
    }
}

/// A generated schema with its tables as CSV text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBundle {
    pub schema_text: String,
    pub task: String,
    /// Table name to CSV text.
    pub tables: BTreeMap<String, String>,
    pub seed: u64,
    /// Generative coefficients, when the target has a known formula.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub truth: BTreeMap<String, f64>,
}

impl SynthBundle {
    pub fn schema(&self) -> EerSchema {
        parse_schema(&SchemaSource::inline(&self.schema_text)).expect("generated schema parses")
    }

    /// Typed tables, hashed as if loaded from files.
    pub fn bundle(&self) -> Result<DataBundle, Vec<Diagnostic>> {
        let schema = cmml_core::rewrite_many_to_many(&self.schema()).expect("generated schema rewrites");
        let mut out = DataBundle::default();
        for (name, text) in &self.tables {
            let cols: Vec<Column> = schema.table_columns(name).into_iter().map(|(n, k)| Column::new(&n, k)).collect();
            let keys = schema.entity(name).map(|e| e.key_names()).unwrap_or_default();
            let mut table = parse_csv(&format!("{name}.csv"), text.as_bytes(), &cols)?;
            table.name = name.clone();
            table.key_columns = keys;
            out.tables.insert(name.clone(), table);
            out.hashes.insert(name.clone(), sha256_hex(text.as_bytes()));
        }
        Ok(out)
    }

    /// Binds the bundle and runs its task, returning the prepared datasets
    /// and the naive flat dataset. Derived dates see a fixed clock.
    pub fn prepare(&self, options: &PlanOptions) -> Result<(Execution, FlatDataset), String> {
        let schema = self.schema();
        let data = self.bundle().map_err(|d| format!("{d:?}"))?;
        let clock = Clock::fixed(NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"));
        let bound = bind(&schema, &data, &clock).map_err(|d| format!("bind: {d:?}"))?;
        let plan = compile_plan(&schema, &self.task, options).map_err(|e| e.to_string())?;
        let exec = execute(&plan, &bound, &ExecuteOptions::default()).map_err(|e| e.to_string())?;
        let flat = flatten_naive(&bound, &plan.binding);
        Ok((exec, flat))
    }

    /// Writes `schema.cmml`, one CSV per table and `truth.json`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("schema.cmml"), &self.schema_text)?;
        for (name, text) in &self.tables {
            std::fs::write(dir.join(format!("{name}.csv")), text)?;
        }
        let truth = serde_json::json!({ "seed": self.seed, "task": self.task, "coefficients": self.truth });
        std::fs::write(dir.join("truth.json"), format!("{truth:#}\n"))
    }
}

const SYNTH_SCHEMA: &str = "\
entity CUSTOMER {
  key cust_id: identifier
  attr segment: nominal
  attr ltv: numeric
}

entity ORDER {
  key order_id: identifier
  attr total: numeric
  attr channel: nominal
}

relationship PLACES {
  CUSTOMER (1,1) -- (MIN,N) ORDER via cust_id
}

task PREDICT_LTV {
  target CUSTOMER.ltv
}
";

/// Customers with `ltv = intercept + a·mean(total) + b·count + N(0, σ)`.
/// Segment and channel are pure noise.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<SynthBundle, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let totals = Normal::new(spec.total_mean, spec.total_sd).map_err(|e| EvalError::BadSpec(e.to_string()))?;
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| EvalError::BadSpec(e.to_string()))?;
    let mut customers = String::from("cust_id,segment,ltv\n");
    let mut orders = String::from("order_id,total,channel,cust_id\n");
    let mut next_order = 1;
    for c in 1..=spec.customers {
        let k = rng.random_range(spec.fanout_min..=spec.fanout_max);
        let mut sum = 0.0;
        for _ in 0..k {
            // two decimals, as money
            let total = (totals.sample(&mut rng) * 100.0).round() / 100.0;
            sum += total;
            let channel = ["Online", "Phone", "Store"][rng.random_range(0..3)];
            let _ = writeln!(orders, "O{next_order:06},{total},{channel},C{c:05}");
            next_order += 1;
        }
        let mean = if k == 0 { 0.0 } else { sum / k as f64 };
        let ltv = spec.intercept + spec.coef_mean_total * mean + spec.coef_count * k as f64 + noise.sample(&mut rng);
        let segment = ["A", "B", "C"][rng.random_range(0..3)];
        let _ = writeln!(customers, "C{c:05},{segment},{ltv}");
    }
    let min = if spec.fanout_min == 0 { "0" } else { "1" };
    Ok(SynthBundle {
        schema_text: SYNTH_SCHEMA.replace("MIN", min),
        task: "PREDICT_LTV".to_string(),
        tables: BTreeMap::from([("CUSTOMER".to_string(), customers), ("ORDER".to_string(), orders)]),
        seed,
        truth: BTreeMap::from([
            ("intercept".to_string(), spec.intercept),
            ("ORDER_total_mean".to_string(), spec.coef_mean_total),
            ("ORDER_count".to_string(), spec.coef_count),
        ]),
    })
}

/// Shape of a [`random_case`], for assertions that need to know it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseShape {
    pub generalization: Option<String>,
    pub overlap: bool,
    pub subtypes: Vec<String>,
    /// Threshold on `PARENT.z` used by the membership predicates.
    pub cut: i64,
    pub has_grandchild: bool,
    pub has_detail: bool,
}

fn maybe<R: Rng>(rng: &mut R, p_null: f64, value: impl FnOnce(&mut R) -> String) -> String {
    if rng.random_bool(p_null) {
        String::new()
    } else {
        value(rng)
    }
}

/// A small random schema around a `PARENT` entity: a one-to-many `CHILD`,
/// optionally a `GRANDCHILD` under it and a one-to-one `DETAIL`, and
/// optionally a disjoint or overlapping generalization of `PARENT`. Data is
/// schema-conformant and has unknown and not-applicable nulls.
pub fn random_case(seed: u64) -> (SynthBundle, CaseShape) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_parent = rng.random_range(1..=12);
    let child_min = rng.random_range(0..=1usize);
    let has_grandchild = rng.random_bool(0.5);
    let has_detail = rng.random_bool(0.5);
    let gen_kind = rng.random_range(0..3);
    let overlap = gen_kind == 2;
    let cut: i64 = rng.random_range(2..=8);

    let mut s = String::from(
        "entity PARENT {\n  key pid: identifier\n  attr y: numeric\n  attr x: numeric\n  attr c: nominal\n  attr z: numeric\n  attr w: numeric optional applicable_when (z > 5)\n}\n\n",
    );
    s.push_str("entity CHILD {\n  key cid: identifier\n  attr v: numeric\n  attr k: nominal\n  attr b: boolean\n  attr d: date\n}\n\n");
    if has_grandchild {
        s.push_str("entity GRANDCHILD {\n  key gid: identifier\n  attr u: numeric\n}\n\n");
    }
    if has_detail {
        s.push_str("entity DETAIL {\n  key did: identifier\n  attr q: numeric\n  attr r: nominal\n}\n\n");
    }
    let _ = writeln!(s, "relationship HAS {{\n  PARENT (1,1) -- ({child_min},N) CHILD via pid\n}}\n");
    if has_grandchild {
        s.push_str("relationship UNDER {\n  CHILD (1,1) -- (0,N) GRANDCHILD via cid\n}\n\n");
    }
    if has_detail {
        s.push_str("relationship DESCRIBES {\n  PARENT (0,1) -- (0,1) DETAIL via pid\n}\n\n");
    }
    let (generalization, subtypes) = match gen_kind {
        0 => (None, Vec::new()),
        1 => {
            let _ = writeln!(
                s,
                "generalization KIND of PARENT disjoint {{\n  subtype LOW when (z < {cut}) {{\n    attr low_v: numeric\n  }}\n  \
                 subtype HIGH when (z >= {cut}) {{\n    attr high_v: numeric\n  }}\n}}\n"
            );
            (Some("KIND".to_string()), vec!["LOW".to_string(), "HIGH".to_string()])
        }
        _ => {
            let _ = writeln!(
                s,
                "generalization ROLE of PARENT overlap {{\n  subtype SMALLZ when (z <= {cut}) {{\n    attr sz_v: numeric\n  }}\n  \
                 subtype BIGZ when (z >= 4) {{\n    attr bz_v: numeric\n  }}\n  subtype PCAT when (c = \"p\") {{\n    attr pc_v: numeric\n  }}\n}}\n"
            );
            (Some("ROLE".to_string()), vec!["SMALLZ".to_string(), "BIGZ".to_string(), "PCAT".to_string()])
        }
    };
    s.push_str("task T {\n  target PARENT.y\n}\n");

    let mut parent = String::from("pid,y,x,c,z,w");
    let sub_cols: Vec<String> = match gen_kind {
        0 => vec![],
        1 => vec!["low_v".into(), "high_v".into()],
        _ => vec!["sz_v".into(), "bz_v".into(), "pc_v".into()],
    };
    for c in &sub_cols {
        parent.push(',');
        parent.push_str(c);
    }
    parent.push('\n');
    let mut child = String::from("cid,v,k,b,d,pid\n");
    let mut grandchild = String::from("gid,u,cid\n");
    let mut detail = String::from("did,q,r,pid\n");
    let (mut n_child, mut n_grand, mut n_detail) = (0, 0, 0);
    for p in 1..=n_parent {
        let z: i64 = rng.random_range(0..=10);
        let c = ["p", "q", "r", "s"][rng.random_range(0..4)];
        let y = maybe(&mut rng, 0.08, |r| format!("{}", r.random_range(0..1000) as f64 / 10.0));
        let x = maybe(&mut rng, 0.2, |r| format!("{}", r.random_range(-50..50)));
        let cc = maybe(&mut rng, 0.1, |_| c.to_string());
        let w = if z > 5 { maybe(&mut rng, 0.3, |r| format!("{}", r.random_range(0..20))) } else { String::new() };
        let _ = write!(parent, "{p},{y},{x},{cc},{z},{w}");
        let member = |i: usize| match gen_kind {
            1 => [z < cut, z >= cut][i],
            _ => [z <= cut, z >= 4, cc == "p"][i],
        };
        for i in 0..sub_cols.len() {
            let v = if member(i) { maybe(&mut rng, 0.3, |r| format!("{}", r.random_range(0..100))) } else { String::new() };
            let _ = write!(parent, ",{v}");
        }
        parent.push('\n');

        for _ in 0..rng.random_range(child_min..=4) {
            n_child += 1;
            let v = maybe(&mut rng, 0.15, |r| format!("{}", r.random_range(0..500) as f64 / 4.0));
            let k = maybe(&mut rng, 0.15, |r| ["red", "green", "blue", "Walk-in"][r.random_range(0..4)].to_string());
            let b = maybe(&mut rng, 0.15, |r| r.random_bool(0.5).to_string());
            let d = maybe(&mut rng, 0.15, |r| format!("2020-{:02}-{:02}", r.random_range(1..=12), r.random_range(1..=28)));
            let _ = writeln!(child, "c{n_child},{v},{k},{b},{d},{p}");
            if has_grandchild {
                for _ in 0..rng.random_range(0..=3) {
                    n_grand += 1;
                    let u = maybe(&mut rng, 0.15, |r| format!("{}", r.random_range(0..10)));
                    let _ = writeln!(grandchild, "g{n_grand},{u},c{n_child}");
                }
            }
        }
        if has_detail && rng.random_bool(0.6) {
            n_detail += 1;
            let q = maybe(&mut rng, 0.2, |r| format!("{}", r.random_range(0..30)));
            let r = maybe(&mut rng, 0.2, |r| ["m", "n"][r.random_range(0..2)].to_string());
            let _ = writeln!(detail, "d{n_detail},{q},{r},{p}");
        }
    }

    let mut tables = BTreeMap::from([("PARENT".to_string(), parent), ("CHILD".to_string(), child)]);
    if has_grandchild {
        tables.insert("GRANDCHILD".to_string(), grandchild);
    }
    if has_detail {
        tables.insert("DETAIL".to_string(), detail);
    }
    let bundle = SynthBundle {
        schema_text: s,
        task: "T".to_string(),
        tables,
        seed,
        truth: BTreeMap::new(),
    };
    let shape = CaseShape {
        generalization,
        overlap,
        subtypes,
        cut,
        has_grandchild,
        has_detail,
    };
    (bundle, shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bundle() {
        let spec = SynthSpec::default();
        assert_eq!(synth_generate(&spec, 7).unwrap(), synth_generate(&spec, 7).unwrap());
        assert_ne!(synth_generate(&spec, 7).unwrap(), synth_generate(&spec, 8).unwrap());
        assert_eq!(random_case(3), random_case(3));
    }

    #[test]
    fn spec_defaults_and_validation() {
        let spec: SynthSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(spec, SynthSpec::default());
        assert!(serde_json::from_str::<SynthSpec>(r#"{"customers": 5, "bogus": 1}"#).is_err());
        let bad = SynthSpec {
            fanout_min: 5,
            fanout_max: 2,
            ..SynthSpec::default()
        };
        assert!(matches!(synth_generate(&bad, 1), Err(EvalError::BadSpec(_))));
    }

    #[test]
    fn fanout_stays_in_range() {
        let b = synth_generate(&SynthSpec::default(), 11).unwrap();
        let mut per: BTreeMap<String, usize> = BTreeMap::new();
        for line in b.tables["ORDER"].lines().skip(1) {
            *per.entry(line.rsplit(',').next().unwrap().to_string()).or_default() += 1;
        }
        assert_eq!(per.len(), 200);
        assert!(per.values().all(|n| (1..=8).contains(n)));
    }
}
