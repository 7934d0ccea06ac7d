//! Repeated train/test comparisons of the configured methods.
//!
//! `runs.csv` columns: `method,run,seed,num_test,num_correct,accuracy,status,error`.
//! `summary.csv` columns: `method,runs,failed,mean,std,mean_pm_std`, where
//! `std` is the sample standard deviation over successful runs (0 for a
//! single run).

use std::fmt::Write as _;
use std::path::Path;

use jdrdl::classifier::{nn_predict, predict, Metric, SrcClassifier};
use jdrdl::model::{train, HyperParams, LabeledDataset, ProjectionInit};
use jdrdl::{write_atomic, Result};
use serde::Serialize;

use crate::config::{ExperimentConfig, Method};
use crate::split::per_class_split;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub method: String,
    pub run: usize,
    pub seed: u64,
    pub num_test: usize,
    pub num_correct: usize,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
}

/// The dictionary-learning-only baseline: no projection, one atom per sample.
pub fn rdl_hyper(base: &HyperParams, m: usize) -> HyperParams {
    HyperParams {
        d: m,
        learn_projection: false,
        projection_init: ProjectionInit::Identity,
        lambda_u: 0.0,
        ..base.clone()
    }
}

/// Predicted labels of `test` for one method.
pub fn run_method(
    method: Method,
    hyper: &HyperParams,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    seed: u64,
) -> Result<Vec<usize>> {
    let xs = test_set.samples();
    match method {
        Method::Jdrdl | Method::Rdl => {
            let h = match method {
                Method::Rdl => rdl_hyper(hyper, train_set.dim()),
                _ => hyper.clone(),
            };
            let model = train(train_set, &h, seed)?;
            xs.iter().map(|x| predict(&model, x).map(|p| p.label)).collect()
        }
        Method::NnAirm => xs.iter().map(|x| nn_predict(train_set, x, Metric::Airm)).collect(),
        Method::NnStein => xs.iter().map(|x| nn_predict(train_set, x, Metric::Stein)).collect(),
        Method::SrcAirm => {
            let src = SrcClassifier::new(train_set, hyper.lambda_1, hyper.spg.clone())?;
            xs.iter().map(|x| src.predict(x)).collect()
        }
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(runs: &[RunRow], methods: &[Method]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|m| {
            let rows: Vec<_> = runs.iter().filter(|r| r.method == m.name()).collect();
            let accs: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
            let (mean, std) = mean_std(&accs);
            SummaryRow {
                method: m.name().into(),
                runs: rows.len(),
                failed: rows.len() - accs.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Runs every method on every repeat. `progress` sees each row as it lands.
pub fn run_benchmark(
    cfg: &ExperimentConfig,
    data: &LabeledDataset,
    mut progress: impl FnMut(&RunRow),
) -> std::result::Result<BenchmarkResult, String> {
    let mut runs = Vec::with_capacity(cfg.repeats * cfg.methods.len());
    for r in 0..cfg.repeats {
        let seed = cfg.base_seed + r as u64;
        let split = per_class_split(
            data.labels(),
            data.num_classes(),
            cfg.train_per_class,
            cfg.test_per_class,
            seed,
        )?;
        let train_set = data.subset(&split.train).map_err(|e| e.to_string())?;
        let test_set = data.subset(&split.test).map_err(|e| e.to_string())?;
        for &method in &cfg.methods {
            let row = match run_method(method, &cfg.hyper, &train_set, &test_set, seed) {
                Ok(pred) => {
                    let correct = pred
                        .iter()
                        .zip(test_set.labels())
                        .filter(|(p, t)| p == t)
                        .count();
                    RunRow {
                        method: method.name().into(),
                        run: r,
                        seed,
                        num_test: test_set.len(),
                        num_correct: correct,
                        accuracy: Some(correct as f64 / test_set.len() as f64),
                        error: None,
                    }
                }
                Err(e) => RunRow {
                    method: method.name().into(),
                    run: r,
                    seed,
                    num_test: test_set.len(),
                    num_correct: 0,
                    accuracy: None,
                    error: Some(e.to_string()),
                },
            };
            progress(&row);
            runs.push(row);
        }
    }
    let summary = summarize(&runs, &cfg.methods);
    Ok(BenchmarkResult { runs, summary })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn runs_csv(result: &BenchmarkResult) -> String {
    let mut out = String::from("method,run,seed,num_test,num_correct,accuracy,status,error\n");
    for r in &result.runs {
        let (acc, status) = match r.accuracy {
            Some(a) => (a.to_string(), "ok"),
            None => (String::new(), "failed"),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.run,
            r.seed,
            r.num_test,
            r.num_correct,
            acc,
            status,
            csv_field(r.error.as_deref().unwrap_or(""))
        )
        .expect("writing to a String");
    }
    out
}

pub fn summary_csv(result: &BenchmarkResult) -> String {
    let mut out = String::from("method,runs,failed,mean,std,mean_pm_std\n");
    for s in &result.summary {
        writeln!(
            out,
            "{},{},{},{},{},{:.3} ± {:.4}",
            s.method, s.runs, s.failed, s.mean, s.std, s.mean, s.std
        )
        .expect("writing to a String");
    }
    out
}

pub fn benchmark_json(result: &BenchmarkResult, cfg: &ExperimentConfig) -> String {
    let doc = serde_json::json!({
        "config": {
            "entries": cfg.entries,
            "methods": cfg.methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "repeats": cfg.repeats,
            "base_seed": cfg.base_seed,
            "train_per_class": cfg.train_per_class,
            "test_per_class": cfg.test_per_class,
            "hyper": cfg.hyper,
        },
        "runs": result.runs,
        "summary": result.summary,
    });
    serde_json::to_string_pretty(&doc).expect("benchmark results serialise")
}

/// Writes `runs.csv`, `summary.csv` and `benchmark.json` into `dir`.
pub fn write_benchmark(result: &BenchmarkResult, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("runs.csv"), runs_csv(result).as_bytes())?;
    write_atomic(&dir.join("summary.csv"), summary_csv(result).as_bytes())?;
    write_atomic(&dir.join("benchmark.json"), benchmark_json(result, cfg).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
