//! The single-step pipeline commands: ingest, split, fit, eval.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;

use laekit::eval::{EvalConfig, Evaluator, IpsEstimator, MetricReport, RecallDenominator};
use laekit::gram::{dropout_diagonal, gram};
use laekit::interactions::{
    dataset_stats, item_popularity, load_interactions, load_interactions_with_ids, strong_split,
    weak_split, InputFormat, InteractionMatrix,
};
use laekit::solvers::{Model, Solver, SolverConfig, SolverManifest, WeightMatrix};

use crate::config::Protocol;
use crate::{check_memory_budget, load_any_split, AnySplit};

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Interaction file: `user item [rating [timestamp]]` per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Column layout of the input file.
    #[arg(long, default_value = "pairs")]
    pub format: InputFormat,
    /// Drop interactions with a rating below this value (triples only).
    #[arg(long)]
    pub min_rating: Option<f64>,
}

impl DataArgs {
    pub fn load(&self) -> Result<InteractionMatrix> {
        Ok(load_interactions(&self.data, self.format, self.min_rating)?)
    }
}

/// Normalize a dataset: dense ids, duplicates collapsed, plus statistics.
#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for `interactions.txt` and `stats.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let loaded = load_interactions_with_ids(&args.data.data, args.data.format, args.data.min_rating)?;
    let x = loaded.interactions;
    let stats = dataset_stats(&x)?;
    fs::create_dir_all(&args.out)?;
    x.write(&args.out.join("interactions.txt"))?;
    // One source id per line; the line number is the dense index used by
    // every downstream artifact.
    fs::write(args.out.join("user_ids.txt"), loaded.user_ids.join("\n") + "\n")?;
    fs::write(args.out.join("item_ids.txt"), loaded.item_ids.join("\n") + "\n")?;
    write_json(&args.out.join("stats.json"), &stats)?;
    println!(
        "ingested {} users x {} items, {} interactions (density {:.4}%, item gini {:.3})",
        stats.num_users,
        stats.num_items,
        stats.num_ratings,
        stats.density * 100.0,
        stats.gini_item
    );
    Ok(())
}

/// Produce a strong or weak generalization split.
#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "strong")]
    pub protocol: Protocol,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of users held out (strong protocol).
    #[arg(long, default_value_t = 0.2)]
    pub heldout_users: f64,
    /// Per-user fraction of items kept as fold-in (strong protocol).
    #[arg(long, default_value_t = 0.8)]
    pub foldin: f64,
    /// Per-user fraction of interactions moved to test (weak protocol).
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn split(args: &SplitArgs) -> Result<()> {
    let x = args.data.load()?;
    match args.protocol {
        Protocol::Strong => {
            let s = strong_split(&x, args.heldout_users, args.foldin, args.seed)?;
            s.save(&args.out)?;
            println!(
                "strong split: {} train / {} val / {} test users -> {}",
                s.train_users.len(),
                s.val_users.len(),
                s.test_users.len(),
                args.out.display()
            );
        }
        Protocol::Weak => {
            let s = weak_split(&x, args.test_fraction, args.seed)?;
            s.save(&args.out)?;
            println!(
                "weak split: {} train / {} test interactions -> {}",
                s.train.nnz(),
                s.test.nnz(),
                args.out.display()
            );
        }
    }
    Ok(())
}

/// Fit one model configuration and save the weight matrix.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training interactions as a `user item` file with dense indices.
    #[arg(long, conflicts_with = "split_dir", required_unless_present = "split_dir")]
    pub train: Option<PathBuf>,
    /// Use the training part of a saved split instead of `--train`.
    #[arg(long)]
    pub split_dir: Option<PathBuf>,
    #[arg(long)]
    pub model: Model,
    #[arg(long)]
    pub lambda: f64,
    /// Dropout probability (denoising models).
    #[arg(long, default_value_t = 0.0)]
    pub dropout_p: f64,
    /// Diagonal relaxation threshold (relaxed models).
    #[arg(long, default_value_t = 0.0)]
    pub xi: f64,
    /// Also export the weights as CSV for inspection.
    #[arg(long)]
    pub csv: bool,
    #[arg(long, default_value_t = 16.0)]
    pub max_memory_gib: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_train(train: &Option<PathBuf>, split_dir: &Option<PathBuf>) -> Result<InteractionMatrix> {
    match (train, split_dir) {
        (Some(path), _) => Ok(load_interactions(path, InputFormat::Pairs, None)?),
        (None, Some(dir)) => Ok(match load_any_split(dir)? {
            AnySplit::Strong(s) => s.train,
            AnySplit::Weak(s) => s.train,
        }),
        (None, None) => bail!("either --train or --split-dir is required"),
    }
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let config = SolverConfig {
        model: args.model,
        lambda: args.lambda,
        dropout_p: args.dropout_p,
        xi: args.xi,
    };
    config.validate()?;
    let x = load_train(&args.train, &args.split_dir)?;
    check_memory_budget(x.num_items(), args.max_memory_gib)?;

    let start = Instant::now();
    let g = gram(&x);
    let dropout_p = if args.model.uses_dropout() { args.dropout_p } else { 0.0 };
    let reg = dropout_diagonal(&g, dropout_p, args.lambda)?;
    let solver = Solver::new(&g, reg)?;
    let out = solver.solve_model(args.model, args.xi)?;
    let wall_time_secs = start.elapsed().as_secs_f64();

    fs::create_dir_all(&args.out)?;
    out.weights.save(&args.out.join("weights.bin"))?;
    if args.csv {
        out.weights.save_csv(&args.out.join("weights.csv"))?;
    }
    let manifest = SolverManifest {
        model: args.model,
        lambda: args.lambda,
        dropout_p: args.model.uses_dropout().then_some(args.dropout_p),
        xi: args.model.uses_xi().then_some(args.xi),
        num_items: x.num_items(),
        constrained_fraction: out.constrained_fraction(),
        wall_time_secs,
    };
    write_json(&args.out.join("fit.json"), &manifest)?;
    println!(
        "fit {} (lambda {}, p {}, xi {}) on {} items in {:.2}s; constrained fraction {:.4}",
        args.model,
        args.lambda,
        args.dropout_p,
        args.xi,
        x.num_items(),
        wall_time_secs,
        out.constrained_fraction()
    );
    Ok(())
}

/// Evaluate saved weights against a saved split.
#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Weight matrix produced by `fit` (or `grid` with save_weights).
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub split_dir: PathBuf,
    /// Held-out part to evaluate under the strong protocol.
    #[arg(long, default_value = "test")]
    pub part: String,
    /// Comma-separated ranking cutoffs.
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 100])]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub head_fraction: f64,
    /// Divide recall by |heldout| instead of min(K, |heldout|).
    #[arg(long)]
    pub plain_recall_denominator: bool,
    /// Keep the IPS ideal unweighted instead of self-normalizing.
    #[arg(long)]
    pub fixed_ideal_ips: bool,
    /// Optional fit.json whose metadata keys the CSV row.
    #[arg(long)]
    pub fit_manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let weights = WeightMatrix::load(&args.weights)?;
    let eval_config = EvalConfig {
        ks: args.ks.clone(),
        gamma: args.gamma,
        head_fraction: args.head_fraction,
        recall_denominator: if args.plain_recall_denominator {
            RecallDenominator::Heldout
        } else {
            RecallDenominator::Truncated
        },
        ips_estimator: if args.fixed_ideal_ips {
            IpsEstimator::FixedIdeal
        } else {
            IpsEstimator::SelfNormalized
        },
    };

    let (report, seed) = match load_any_split(&args.split_dir)? {
        AnySplit::Strong(s) => {
            let evaluator = Evaluator::new(&item_popularity(&s.train), eval_config)?;
            let (foldin, heldout) = match args.part.as_str() {
                "val" => (&s.val_foldin, &s.val_heldout),
                "test" => (&s.test_foldin, &s.test_heldout),
                other => bail!("unknown part `{other}` (expected `val` or `test`)"),
            };
            (evaluator.evaluate(&weights, foldin, heldout)?, s.seed)
        }
        AnySplit::Weak(s) => {
            let evaluator = Evaluator::new(&item_popularity(&s.train), eval_config)?;
            (evaluator.evaluate(&weights, &s.train, &s.test)?, s.seed)
        }
    };

    let manifest: Option<SolverManifest> = match &args.fit_manifest {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Some(serde_json::from_str(&text)?)
        }
        None => None,
    };

    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("metrics.json"), &report)?;
    let csv_path = args.out.join("metrics.csv");
    let header = format!(
        "model,lambda,dropout_p,xi,split,seed,{}",
        MetricReport::csv_header(&args.ks)
    );
    let key = match &manifest {
        Some(m) => format!(
            "{},{},{},{}",
            m.model,
            m.lambda,
            m.dropout_p.map(|p| p.to_string()).unwrap_or_default(),
            m.xi.map(|x| x.to_string()).unwrap_or_default()
        ),
        None => format!(
            "{},,,",
            args.weights.file_stem().unwrap_or_default().to_string_lossy()
        ),
    };
    fs::write(
        &csv_path,
        format!("{header}\n{key},{},{},{}\n", args.part, seed, report.csv_values()),
    )?;

    for m in &report.metrics {
        println!(
            "K={:<4} recall {:.4} ndcg {:.4} | unbiased {:.4}/{:.4} | head {:.4}/{:.4} | tail {:.4}/{:.4}",
            m.k,
            m.recall_aoa,
            m.ndcg_aoa,
            m.recall_unbiased,
            m.ndcg_unbiased,
            m.recall_head,
            m.ndcg_head,
            m.recall_tail,
            m.ndcg_tail
        );
    }
    println!(
        "users: {} evaluated, {} skipped, {} with head items, {} with tail items",
        report.users_evaluated, report.users_skipped, report.users_head, report.users_tail
    );
    Ok(())
}
