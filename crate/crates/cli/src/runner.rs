//! The `grid` subcommand: ingest → split → solve → evaluate → report.
//!
//! One factorization serves a whole (λ, p) grid point: every selected
//! model of that regularization family and, for the relaxed models, the
//! entire ξ grid reuse the same precision matrix. Grid points may run
//! concurrently; rows are collected in job order and sorted before
//! writing, so the report bytes depend only on the config and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use laekit::eval::{EvalConfig, Evaluator, MetricReport};
use laekit::gram::{dropout_diagonal, gram, GramMatrix};
use laekit::interactions::{
    dataset_stats, item_popularity, load_interactions, strong_split, weak_split, DatasetStats,
    InteractionMatrix,
};
use laekit::solvers::{Model, Solver};

use crate::check_memory_budget;
use crate::config::{ExperimentConfig, Protocol};

#[derive(Debug, Clone, Serialize)]
struct ReportRow {
    model: Model,
    lambda: f64,
    dropout_p: Option<f64>,
    xi: Option<f64>,
    split: &'static str,
    report: MetricReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct BestEntry {
    pub lambda: f64,
    pub dropout_p: Option<f64>,
    pub xi: Option<f64>,
    pub selection_k: usize,
    pub selection_ndcg: f64,
    pub test: MetricReport,
}

#[derive(Debug, Clone, Serialize)]
struct WallTimes {
    load_secs: f64,
    split_secs: f64,
    gram_secs: f64,
    grid_secs: f64,
    total_secs: f64,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    run_id: String,
    tool_version: &'static str,
    config: &'a ExperimentConfig,
    dataset: DatasetStats,
    num_factorizations: usize,
    best: BTreeMap<String, BestEntry>,
    wall_times: WallTimes,
}

#[derive(Debug)]
pub struct RunOutputs {
    pub run_dir: PathBuf,
    pub report_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Fold-in/held-out pairs the models are scored against.
enum EvalParts {
    Strong {
        evaluator: Evaluator,
        val: (InteractionMatrix, InteractionMatrix),
        test: (InteractionMatrix, InteractionMatrix),
    },
    Weak {
        evaluator: Evaluator,
        train: InteractionMatrix,
        test: InteractionMatrix,
    },
}

impl EvalParts {
    fn evaluate(&self, out: &laekit::solvers::SolverOutput) -> Result<Vec<(&'static str, MetricReport)>> {
        match self {
            EvalParts::Strong { evaluator, val, test } => Ok(vec![
                ("val", evaluator.evaluate(&out.weights, &val.0, &val.1)?),
                ("test", evaluator.evaluate(&out.weights, &test.0, &test.1)?),
            ]),
            EvalParts::Weak { evaluator, train, test } => {
                Ok(vec![("test", evaluator.evaluate(&out.weights, train, test)?)])
            }
        }
    }
}

/// One factorization job: λ with either the plain family (`None`) or one
/// dropout value of the denoising family.
type Job = (f64, Option<f64>);

fn family_models(config: &ExperimentConfig, dropout: Option<f64>) -> Vec<Model> {
    config
        .models
        .iter()
        .copied()
        .filter(|m| m.uses_dropout() == dropout.is_some())
        .collect()
}

fn solve_job(
    g: &GramMatrix,
    config: &ExperimentConfig,
    parts: &EvalParts,
    job: Job,
) -> Result<Vec<ReportRow>> {
    let (lambda, dropout) = job;
    let reg = dropout_diagonal(g, dropout.unwrap_or(0.0), lambda)?;
    let solver = Solver::new(g, reg)?;
    let mut rows = Vec::new();
    for model in family_models(config, dropout) {
        let xis: Vec<Option<f64>> = if model.uses_xi() {
            config.xi_grid.iter().map(|&x| Some(x)).collect()
        } else {
            vec![None]
        };
        for xi in xis {
            let out = solver.solve_model(model, xi.unwrap_or(0.0))?;
            for (split, report) in parts.evaluate(&out)? {
                rows.push(ReportRow {
                    model,
                    lambda,
                    dropout_p: dropout,
                    xi,
                    split,
                    report,
                });
            }
        }
    }
    Ok(rows)
}

fn model_order(model: Model) -> usize {
    Model::ALL.iter().position(|&m| m == model).unwrap_or(usize::MAX)
}

fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        model_order(a.model)
            .cmp(&model_order(b.model))
            .then(a.lambda.total_cmp(&b.lambda))
            .then(
                a.dropout_p
                    .unwrap_or(-1.0)
                    .total_cmp(&b.dropout_p.unwrap_or(-1.0)),
            )
            .then(a.xi.unwrap_or(-1.0).total_cmp(&b.xi.unwrap_or(-1.0)))
            .then(a.split.cmp(b.split))
    });
}

fn select_best(
    rows: &[ReportRow],
    config: &ExperimentConfig,
) -> BTreeMap<String, BestEntry> {
    let selection_k = config.selection_k();
    let selection_split = match config.protocol {
        Protocol::Strong => "val",
        Protocol::Weak => "test",
    };
    let mut best: BTreeMap<String, BestEntry> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.split == selection_split) {
        let Some(metric) = row.report.at_k(selection_k) else {
            continue;
        };
        let entry = best.entry(row.model.to_string());
        let better = match &entry {
            std::collections::btree_map::Entry::Occupied(e) => {
                metric.ndcg_aoa > e.get().selection_ndcg
            }
            std::collections::btree_map::Entry::Vacant(_) => true,
        };
        if better {
            // The reported metrics always come from the test part of the
            // winning configuration.
            let test = rows
                .iter()
                .find(|r| {
                    r.split == "test"
                        && r.model == row.model
                        && r.lambda == row.lambda
                        && r.dropout_p == row.dropout_p
                        && r.xi == row.xi
                })
                .map(|r| r.report.clone())
                .unwrap_or_else(|| row.report.clone());
            best.insert(
                row.model.to_string(),
                BestEntry {
                    lambda: row.lambda,
                    dropout_p: row.dropout_p,
                    xi: row.xi,
                    selection_k,
                    selection_ndcg: metric.ndcg_aoa,
                    test,
                },
            );
        }
    }
    best
}

fn save_best_weights(
    g: &GramMatrix,
    best: &BTreeMap<String, BestEntry>,
    run_dir: &std::path::Path,
) -> Result<()> {
    for (name, entry) in best {
        let model: Model = name.parse().map_err(anyhow::Error::from)?;
        let reg = dropout_diagonal(g, entry.dropout_p.unwrap_or(0.0), entry.lambda)?;
        let solver = Solver::new(g, reg)?;
        let out = solver.solve_model(model, entry.xi.unwrap_or(0.0))?;
        out.weights
            .save(&run_dir.join(format!("weights_{}.bin", name.to_lowercase())))?;
    }
    Ok(())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutputs> {
    config.validate()?;
    let total_start = Instant::now();

    let load_start = Instant::now();
    let x = load_interactions(&config.data, config.format, config.min_rating)?;
    let dataset = dataset_stats(&x)?;
    check_memory_budget(x.num_items(), config.max_memory_gib)?;
    let load_secs = load_start.elapsed().as_secs_f64();

    let split_start = Instant::now();
    let eval_config = EvalConfig {
        ks: config.ks.clone(),
        gamma: config.gamma,
        head_fraction: config.head_fraction,
        recall_denominator: config.recall_denominator,
        ips_estimator: config.ips_estimator,
    };
    let (parts, train) = match config.protocol {
        Protocol::Strong => {
            let s = strong_split(&x, config.heldout_user_fraction, config.foldin_fraction, config.seed)?;
            let evaluator = Evaluator::new(&item_popularity(&s.train), eval_config)?;
            (
                EvalParts::Strong {
                    evaluator,
                    val: (s.val_foldin, s.val_heldout),
                    test: (s.test_foldin, s.test_heldout),
                },
                s.train,
            )
        }
        Protocol::Weak => {
            let s = weak_split(&x, config.test_fraction, config.seed)?;
            let evaluator = Evaluator::new(&item_popularity(&s.train), eval_config)?;
            (
                EvalParts::Weak {
                    evaluator,
                    train: s.train.clone(),
                    test: s.test,
                },
                s.train,
            )
        }
    };
    let split_secs = split_start.elapsed().as_secs_f64();

    let gram_start = Instant::now();
    let g = gram(&train);
    let gram_secs = gram_start.elapsed().as_secs_f64();

    // One job per factorization: λ × {plain} ∪ λ × dropout grid, shared by
    // every model of the matching family.
    let mut jobs: Vec<Job> = Vec::new();
    let has_plain = config.models.iter().any(|m| !m.uses_dropout());
    let has_denoising = config.models.iter().any(|m| m.uses_dropout());
    for &lambda in &config.lambda_grid {
        if has_plain {
            jobs.push((lambda, None));
        }
        if has_denoising {
            for &p in &config.dropout_grid {
                jobs.push((lambda, Some(p)));
            }
        }
    }
    let num_factorizations = jobs.len();

    let grid_start = Instant::now();
    let job_results: Vec<Result<Vec<ReportRow>>> = if config.workers == 1 {
        jobs.iter().map(|&job| solve_job(&g, config, &parts, job)).collect()
    } else if config.workers == 0 {
        jobs.par_iter().map(|&job| solve_job(&g, config, &parts, job)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .context("building worker pool")?;
        pool.install(|| {
            jobs.par_iter().map(|&job| solve_job(&g, config, &parts, job)).collect()
        })
    };
    let mut rows: Vec<ReportRow> = Vec::new();
    for result in job_results {
        rows.extend(result?);
    }
    sort_rows(&mut rows);
    let grid_secs = grid_start.elapsed().as_secs_f64();

    let run_id = config.derived_run_id();
    let run_dir = config.out_dir.join(&run_id);
    fs::create_dir_all(&run_dir)?;

    let report_path = run_dir.join("report.csv");
    let mut csv = String::new();
    csv.push_str(&format!(
        "model,lambda,dropout_p,xi,split,seed,{}\n",
        MetricReport::csv_header(&config.ks)
    ));
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.model,
            row.lambda,
            row.dropout_p.map(|p| p.to_string()).unwrap_or_default(),
            row.xi.map(|x| x.to_string()).unwrap_or_default(),
            row.split,
            config.seed,
            row.report.csv_values()
        ));
    }
    fs::write(&report_path, csv).with_context(|| format!("writing {}", report_path.display()))?;

    let best = select_best(&rows, config);
    if config.save_weights {
        save_best_weights(&g, &best, &run_dir)?;
    }

    let manifest = RunManifest {
        run_id: run_id.clone(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        dataset,
        num_factorizations,
        best,
        wall_times: WallTimes {
            load_secs,
            split_secs,
            gram_secs,
            grid_secs,
            total_secs: total_start.elapsed().as_secs_f64(),
        },
    };
    let manifest_path = run_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    println!(
        "grid finished: {} rows, {} factorizations, outputs in {}",
        rows.len(),
        num_factorizations,
        run_dir.display()
    );
    Ok(RunOutputs {
        run_dir,
        report_path,
        manifest_path,
    })
}
