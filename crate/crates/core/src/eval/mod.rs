//! Benchmark harness: datasets, scoring, size buckets, cost, and reports.

mod cost;
mod dataset;
mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{
    predicted_cost, predicted_cost_half_units, predicted_cost_typical, CostObservation, CostTally,
    TYPICAL_RECONSTRUCTIONS,
};
pub use dataset::{load_dataset, DatasetError, DatasetFormat, EvalInstance, LoadedDataset};
pub use metrics::{bucketize, exact_match, normalize_answer, Bucket, TooFewValues, RELATIVE_TOLERANCE};

use crate::pipeline::{Pipeline, PipelineError, RunRecord};
use crate::reasoning::Strategy;
use crate::table::{measure, CharHeuristic};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation aborted: {0}")]
    Misconfigured(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("writing {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub prediction: String,
    pub gold_answers: Vec<String>,
    pub correct: bool,
    pub abstained: bool,
    pub rows: usize,
    pub columns: usize,
    pub area: usize,
    pub tokens: usize,
    pub condensation_ratio: f64,
    pub reconstructions: usize,
    pub strategy: Option<Strategy>,
    pub fallbacks: Vec<String>,
    pub lm_errors: usize,
    pub predicted_cost: f64,
    pub tallied_cost: f64,
    pub unmodeled_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub bucket: Bucket,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionBuckets {
    pub dimension: String,
    pub buckets: Vec<BucketStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub mean_predicted: f64,
    pub mean_tallied: f64,
    pub mean_unmodeled: f64,
    /// Instances whose tallied cost equals the formula exactly.
    pub exact_agreement: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub abstained: usize,
    /// Empty when there are fewer than four instances.
    pub buckets: Vec<DimensionBuckets>,
    pub mean_condensation_ratio: f64,
    pub mean_reconstructions: f64,
    pub strategies: BTreeMap<String, usize>,
    pub fallbacks: BTreeMap<String, usize>,
    pub lm_errors: usize,
    pub cost: CostSummary,
    pub instances: Vec<InstanceOutcome>,
}

fn fallback_name(f: crate::trace::Fallback) -> String {
    serde_json::to_value(f)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn outcome(instance: &EvalInstance, result: &Result<RunRecord, PipelineError>) -> InstanceOutcome {
    let size = measure(&instance.table, &CharHeuristic);
    let mut o = InstanceOutcome {
        id: instance.id.clone(),
        prediction: String::new(),
        gold_answers: instance.gold_answers.clone(),
        correct: false,
        abstained: true,
        rows: size.row_count,
        columns: size.column_count,
        area: size.area,
        tokens: size.token_estimate,
        condensation_ratio: 0.0,
        reconstructions: 0,
        strategy: None,
        fallbacks: Vec::new(),
        lm_errors: 0,
        predicted_cost: 0.0,
        tallied_cost: 0.0,
        unmodeled_cost: 0.0,
        error: None,
    };
    match result {
        Ok(r) => {
            o.prediction = r.answer.value.clone();
            o.abstained = r.answer.abstained;
            o.correct = !r.answer.abstained && exact_match(&r.answer.value, &instance.gold_answers);
            o.condensation_ratio = r.focus.condensation_ratio;
            o.reconstructions = r.focus.reconstruction_count;
            o.strategy = r.trace.strategy;
            o.fallbacks = r.trace.fallbacks.iter().map(|f| fallback_name(*f)).collect();
            o.lm_errors = r.trace.lm_errors();
            let cost = r.cost();
            o.predicted_cost = cost.predicted();
            o.tallied_cost = cost.total();
            o.unmodeled_cost = cost.unmodeled;
        }
        Err(e) => o.error = Some(e.to_string()),
    }
    o
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn bucket_tables(instances: &[InstanceOutcome]) -> Vec<DimensionBuckets> {
    let dims: [(&str, fn(&InstanceOutcome) -> usize); 4] = [
        ("rows", |o| o.rows),
        ("columns", |o| o.columns),
        ("area", |o| o.area),
        ("tokens", |o| o.tokens),
    ];
    dims.iter()
        .filter_map(|(name, get)| {
            let values: Vec<f64> = instances.iter().map(|o| get(o) as f64).collect();
            let assigned = bucketize(&values).ok()?;
            let buckets = Bucket::ALL
                .iter()
                .map(|&b| {
                    let members: Vec<&InstanceOutcome> = instances
                        .iter()
                        .zip(&assigned)
                        .filter(|(_, a)| **a == b)
                        .map(|(o, _)| o)
                        .collect();
                    let correct = members.iter().filter(|o| o.correct).count();
                    BucketStat {
                        bucket: b,
                        count: members.len(),
                        correct,
                        accuracy: ratio(correct, members.len()),
                    }
                })
                .collect();
            Some(DimensionBuckets {
                dimension: name.to_string(),
                buckets,
            })
        })
        .collect()
}

/// Builds a report from per-instance outcomes. Sorting by id first makes the
/// result independent of evaluation order.
pub fn aggregate(mut instances: Vec<InstanceOutcome>) -> EvalReport {
    instances.sort_by(|a, b| a.id.cmp(&b.id));
    let total = instances.len();
    let correct = instances.iter().filter(|o| o.correct).count();
    let mut strategies = BTreeMap::new();
    let mut fallbacks = BTreeMap::new();
    for o in &instances {
        let s = o.strategy.map_or("none", Strategy::as_str);
        *strategies.entry(s.to_string()).or_insert(0) += 1;
        for f in &o.fallbacks {
            *fallbacks.entry(f.clone()).or_insert(0) += 1;
        }
    }
    let completed: Vec<&InstanceOutcome> = instances.iter().filter(|o| o.error.is_none()).collect();
    EvalReport {
        total,
        correct,
        accuracy: ratio(correct, total),
        abstained: instances.iter().filter(|o| o.abstained).count(),
        buckets: bucket_tables(&instances),
        mean_condensation_ratio: mean(completed.iter().map(|o| o.condensation_ratio)),
        mean_reconstructions: mean(completed.iter().map(|o| o.reconstructions as f64)),
        strategies,
        fallbacks,
        lm_errors: instances.iter().map(|o| o.lm_errors).sum(),
        cost: CostSummary {
            mean_predicted: mean(completed.iter().map(|o| o.predicted_cost)),
            mean_tallied: mean(completed.iter().map(|o| o.tallied_cost)),
            mean_unmodeled: mean(completed.iter().map(|o| o.unmodeled_cost)),
            exact_agreement: completed
                .iter()
                .filter(|o| o.predicted_cost == o.tallied_cost)
                .count(),
        },
        instances,
    }
}

fn trace_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.#".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

pub fn write_trace(dir: &Path, record: &RunRecord) -> Result<(), EvalError> {
    let path = dir.join(trace_file_name(&record.id));
    let mut json = serde_json::to_string_pretty(record).expect("run record serializes");
    json.push('\n');
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, json))
        .map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

/// Runs every instance, at most `parallelism` at a time, writing each trace
/// to `trace_dir/<id>.json` when a directory is given.
///
/// Per-instance failures count as incorrect; only a misconfigured backend
/// aborts the run.
pub fn evaluate(
    instances: &[EvalInstance],
    pipeline: &Pipeline,
    parallelism: usize,
    trace_dir: Option<&Path>,
) -> Result<EvalReport, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let results: Vec<(InstanceOutcome, Option<RunRecord>, Option<String>)> = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| {
                let result = pipeline.run(&inst.id, &inst.table, &inst.question, inst.task_kind);
                let fatal = match &result {
                    Err(PipelineError::Misconfigured(m)) => Some(m.clone()),
                    Err(PipelineError::Config(c)) => Some(c.to_string()),
                    _ => None,
                };
                (outcome(inst, &result), result.ok(), fatal)
            })
            .collect()
    });
    if let Some(msg) = results.iter().find_map(|(_, _, f)| f.clone()) {
        return Err(EvalError::Misconfigured(msg));
    }
    let mut outcomes = Vec::with_capacity(results.len());
    for (o, record, _) in results {
        if let (Some(dir), Some(r)) = (trace_dir, &record) {
            write_trace(dir, r)?;
        }
        outcomes.push(o);
    }
    Ok(aggregate(outcomes))
}

pub fn render_report(report: &EvalReport, buckets: bool, cost: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "accuracy: {:.4} ({}/{})  abstained: {}  lm errors: {}",
        report.accuracy, report.correct, report.total, report.abstained, report.lm_errors
    );
    let _ = writeln!(
        out,
        "mean condensation ratio: {:.4}  mean reconstructions: {:.4}",
        report.mean_condensation_ratio, report.mean_reconstructions
    );
    let strategies: Vec<String> = report.strategies.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(out, "strategies: {}", strategies.join(" "));
    if !report.fallbacks.is_empty() {
        let f: Vec<String> = report.fallbacks.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "fallbacks: {}", f.join(" "));
    }
    if buckets {
        if report.buckets.is_empty() {
            let _ = writeln!(out, "\nbuckets: need at least 4 instances");
        }
        for dim in &report.buckets {
            let _ = writeln!(out, "\nby {}:", dim.dimension);
            let _ = writeln!(out, "  {:<8} {:>6} {:>8} {:>9}", "bucket", "count", "correct", "accuracy");
            for b in &dim.buckets {
                let _ = writeln!(
                    out,
                    "  {:<8} {:>6} {:>8} {:>9.4}",
                    b.bucket.label(),
                    b.count,
                    b.correct,
                    b.accuracy
                );
            }
        }
    }
    if cost {
        let c = &report.cost;
        let _ = writeln!(
            out,
            "\ncost (area units): mean predicted {:.2}  mean tallied {:.2}  mean unmodeled {:.2}  exact agreement {}/{}",
            c.mean_predicted, c.mean_tallied, c.mean_unmodeled, c.exact_agreement, report.total
        );
        let _ = writeln!(out, "  {:<24} {:>12} {:>12} {:>12}", "instance", "predicted", "tallied", "unmodeled");
        for o in &report.instances {
            let _ = writeln!(
                out,
                "  {:<24} {:>12.1} {:>12.1} {:>12.1}",
                o.id, o.predicted_cost, o.tallied_cost, o.unmodeled_cost
            );
        }
    }
    out
}
