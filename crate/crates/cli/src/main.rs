//! `cmml`: prepare training datasets from a conceptual model and its tables.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use cmml_core::binder::{bind, bind_report, cardinality_report};
use cmml_core::eer::ImputeStrategy;
use cmml_core::expr::{parse_expr, AggKind, Clock, Expr};
use cmml_core::tabular::{load_bundle, sha256_hex, write_csv};
use cmml_core::{
    compile_plan, execute, explain_plan, flatten_naive, parse_schema, plan_to_json, validate_schema, BoundModel, Diagnostic, EerSchema,
    ExecuteOptions, PlanOptions, SchemaSource, TransformationPlan,
};
use cmml_evalkit::{compare_datasets, synth_generate, CompareOptions, SynthSpec, DEFAULT_RIDGE};
use log::{info, warn};

#[derive(Parser)]
#[command(name = "cmml", version, about = "Schema-compiled preparation of machine-learning training datasets")]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a schema and, with --data-dir, its tables.
    Validate {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Print diagnostics and the cardinality report as JSON on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Compile and explain the transformation plan of a task.
    Plan {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        task: String,
        #[command(flatten)]
        tuning: Tuning,
        /// Print the plan as JSON instead of prose.
        #[arg(long)]
        json: bool,
    },
    /// Write the training datasets of a task and manifest.json to --out.
    Prepare {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        /// Fraction of instances written to `<dataset>_test.csv`, chosen by key hash.
        #[arg(long, value_parser = parse_holdout)]
        holdout: Option<f64>,
        /// Recorded in the manifest.
        #[arg(long)]
        seed: Option<u64>,
        /// Print a JSON summary on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Write the naive joined table of a task to --out/ds0.csv.
    Flatten {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate a least-squares baseline on the naive table and on each
    /// training dataset, printing a JSON report.
    Evaluate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        tuning: Tuning,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Target range for nRMSE; defaults to the observed range.
        #[arg(long)]
        range: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_RIDGE)]
        ridge: f64,
        /// Seed of the fold shuffle.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic customer/order bundle to --out.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator parameters; omitted fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    task: String,
}

/// Overrides of the task's own clauses.
#[derive(Args, Default)]
struct Tuning {
    /// Comma-separated aggregates: count, mean, sum, min, max.
    #[arg(long, value_delimiter = ',', value_parser = parse_agg)]
    agg: Vec<AggKind>,
    /// Categories kept per nominal attribute.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: Option<u64>,
    /// mean_mode, none or constant(<literal>).
    #[arg(long, value_parser = parse_impute)]
    impute: Option<ImputeStrategy>,
}

fn parse_agg(s: &str) -> Result<AggKind, String> {
    AggKind::from_name(s.trim()).ok_or_else(|| format!("unknown aggregate `{s}`"))
}

fn parse_impute(s: &str) -> Result<ImputeStrategy, String> {
    match s {
        "mean_mode" => Ok(ImputeStrategy::MeanMode),
        "none" => Ok(ImputeStrategy::None),
        _ => {
            let inner = s
                .strip_prefix("constant(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| "expected mean_mode, none or constant(<literal>)".to_string())?;
            match parse_expr(inner) {
                Ok(Expr::Literal(lit)) => Ok(ImputeStrategy::Constant(lit)),
                _ => Err(format!("`{inner}` is not a literal")),
            }
        }
    }
}

fn parse_holdout(s: &str) -> Result<f64, String> {
    let h: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&h) {
        Ok(h)
    } else {
        Err("holdout must be in [0, 1)".to_string())
    }
}

/// Expression clock: `CMML_TODAY=YYYY-MM-DD`, else the local date.
fn clock() -> Result<Clock> {
    let today = match std::env::var("CMML_TODAY") {
        Ok(s) => s.parse::<NaiveDate>().with_context(|| format!("CMML_TODAY=`{s}` is not a YYYY-MM-DD date"))?,
        Err(_) => chrono::Local::now().date_naive(),
    };
    Ok(Clock::fixed(today))
}

fn report(diags: &[Diagnostic]) {
    for d in diags {
        if d.is_error() {
            log::error!("{d}");
        } else {
            warn!("{d}");
        }
    }
}

fn load_schema(path: &Path) -> Result<(EerSchema, String)> {
    let source = SchemaSource::from_file(path).with_context(|| format!("cannot read {}", path.display()))?;
    let hash = sha256_hex(source.text.as_bytes());
    match parse_schema(&source) {
        Ok(s) => Ok((s, hash)),
        Err(diags) => {
            report(&diags);
            bail!("{} has {} error(s)", path.display(), diags.iter().filter(|d| d.is_error()).count())
        }
    }
}

fn load_bound(input: &Input) -> Result<(EerSchema, BoundModel, String)> {
    let (schema, hash) = load_schema(&input.schema)?;
    let bundle = load_bundle(&schema, &input.data_dir).map_err(|d| {
        report(&d);
        anyhow::anyhow!("cannot load tables from {}", input.data_dir.display())
    })?;
    let bound = bind(&schema, &bundle, &clock()?).map_err(|d| {
        report(&d);
        anyhow::anyhow!("tables do not conform to the schema; run `cmml validate` for details")
    })?;
    report(&bound.warnings);
    Ok((schema, bound, hash))
}

fn plan_for(schema: &EerSchema, task: &str, tuning: &Tuning) -> Result<TransformationPlan> {
    let decl = schema.task(task).with_context(|| format!("no task named {task}"))?;
    let mut opts = PlanOptions::from_task(decl);
    if !tuning.agg.is_empty() {
        opts.agg = tuning.agg.clone();
    }
    if let Some(k) = tuning.top_k {
        opts.top_k = k as usize;
    }
    if let Some(i) = &tuning.impute {
        opts.impute = i.clone();
    }
    let plan = compile_plan(schema, task, &opts)?;
    for n in &plan.notices {
        info!("{n}");
    }
    Ok(plan)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_json(value: &serde_json::Value) {
    emit(&format!("{value:#}\n"));
}

fn validate(schema_path: &Path, data_dir: Option<&Path>, json: bool) -> Result<bool> {
    let source = SchemaSource::from_file(schema_path).with_context(|| format!("cannot read {}", schema_path.display()))?;
    let (diags, cards) = match parse_schema(&source) {
        Err(d) => (d, Vec::new()),
        Ok(schema) => match data_dir {
            None => (validate_schema(&schema), Vec::new()),
            Some(dir) => match load_bundle(&schema, dir) {
                Err(d) => (d, Vec::new()),
                Ok(bundle) => {
                    let (bound, d) = bind_report(&schema, &bundle, &clock()?);
                    (d, bound.as_ref().map(cardinality_report).unwrap_or_default())
                }
            },
        },
    };
    let ok = !diags.iter().any(Diagnostic::is_error);
    if json {
        print_json(&serde_json::json!({ "valid": ok, "diagnostics": diags, "cardinality": cards }));
    } else {
        report(&diags);
        for c in &cards {
            let max = c.declared.1.map_or("N".to_string(), |m| m.to_string());
            let status = if c.conformant { "ok" } else { "violated" };
            info!(
                "{}: {} per {} declared ({},{max}), observed {}..{}: {status}",
                c.relationship, c.child, c.parent, c.declared.0, c.observed_min, c.observed_max
            );
        }
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate { schema, data_dir, json } => return validate(&schema, data_dir.as_deref(), json),
        Command::Plan { schema, task, tuning, json } => {
            let (schema, _) = load_schema(&schema)?;
            let plan = plan_for(&schema, &task, &tuning)?;
            if json {
                emit(&format!("{}\n", plan_to_json(&plan)));
            } else {
                emit(&explain_plan(&plan));
            }
        }
        Command::Prepare {
            input,
            out,
            tuning,
            holdout,
            seed,
            json,
        } => {
            let (schema, bound, hash) = load_bound(&input)?;
            let plan = plan_for(&schema, &input.task, &tuning)?;
            let opts = ExecuteOptions {
                out_dir: Some(out.clone()),
                holdout,
                seed,
                schema_sha256: Some(hash),
            };
            let exec = execute(&plan, &bound, &opts)?;
            for w in &exec.manifest.warnings {
                warn!("{w}");
            }
            for d in &exec.manifest.datasets {
                info!("{}: {} rows, {} columns -> {}", d.name, d.rows, d.features.len(), d.files.join(", "));
            }
            if json {
                let datasets: Vec<_> = exec
                    .manifest
                    .datasets
                    .iter()
                    .map(|d| serde_json::json!({ "name": d.name, "rows": d.rows, "files": d.files }))
                    .collect();
                print_json(&serde_json::json!({ "out": out, "manifest": "manifest.json", "datasets": datasets }));
            }
        }
        Command::Flatten { input, out } => {
            let (schema, bound, _) = load_bound(&input)?;
            let plan = plan_for(&schema, &input.task, &Tuning::default())?;
            let flat = flatten_naive(&bound, &plan.binding);
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let path = out.join("ds0.csv");
            write_csv(&flat.table, &path).with_context(|| format!("cannot write {}", path.display()))?;
            info!("{}: {} rows, {} columns", path.display(), flat.table.len(), flat.table.columns.len());
        }
        Command::Evaluate {
            input,
            tuning,
            folds,
            range,
            ridge,
            seed,
            out,
        } => {
            let (schema, bound, _) = load_bound(&input)?;
            let plan = plan_for(&schema, &input.task, &tuning)?;
            let exec = execute(&plan, &bound, &ExecuteOptions::default())?;
            let flat = flatten_naive(&bound, &plan.binding);
            let mut results = Vec::new();
            for tds in &exec.datasets {
                let ys: Vec<f64> = tds.table.column(&tds.target_column).filter_map(|c| c.as_ref().and_then(|s| s.as_f64())).collect();
                let observed = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ys.iter().copied().fold(f64::INFINITY, f64::min);
                let opts = CompareOptions {
                    range: range.unwrap_or(observed),
                    folds,
                    seed,
                    ridge,
                };
                let r = compare_datasets(&flat, tds, &opts).with_context(|| format!("evaluating {}", tds.name))?;
                info!("{}: r2 {:.4} vs naive {:.4}, Wilcoxon p {:.3e}", tds.name, r.tds.r2, r.ds0.r2, r.wilcoxon.p_two_tailed);
                results.push(serde_json::json!({ "dataset": tds.name, "comparison": r }));
            }
            let doc = serde_json::json!({ "task": input.task, "results": results });
            if let Some(path) = out {
                std::fs::write(&path, format!("{doc:#}\n")).with_context(|| format!("cannot write {}", path.display()))?;
            }
            print_json(&doc);
        }
        Command::Generate { out, spec, seed } => {
            let spec: SynthSpec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("invalid generator spec {}", p.display()))?
                }
                None => SynthSpec::default(),
            };
            let bundle = synth_generate(&spec, seed)?;
            bundle.write_to(&out).with_context(|| format!("cannot write to {}", out.display()))?;
            info!("wrote {} tables and schema.cmml to {}", bundle.tables.len(), out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
