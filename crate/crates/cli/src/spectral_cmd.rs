//! The `spectral` subcommand: eigenvalue scaling curves per λ and
//! principal-component group heatmaps over a popularity-stratified item
//! sample.

use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use laekit::gram::gram;
use laekit::interactions::{head_tail_partition, item_popularity};
use laekit::spectral::{
    eig_gram, pc_group_heatmap, scaling_curves, write_scaling_curves_csv, PcGroup,
};

use crate::check_memory_budget;
use crate::commands::DataArgs;

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// λ values, one scaling-curve CSV each.
    #[arg(long, value_delimiter = ',', default_values_t = vec![100.0, 1000.0])]
    pub lambdas: Vec<f64>,
    /// Seed for the item sampling of the heatmaps.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Items sampled from the popular (head) group.
    #[arg(long, default_value_t = 20)]
    pub popular_items: usize,
    /// Items sampled from the unpopular (tail) group.
    #[arg(long, default_value_t = 80)]
    pub unpopular_items: usize,
    /// Fraction of principal components in each heatmap group.
    #[arg(long, default_value_t = 0.2)]
    pub pc_fraction: f64,
    /// Popularity fraction defining the head group.
    #[arg(long, default_value_t = 0.2)]
    pub head_fraction: f64,
    #[arg(long, default_value_t = 16.0)]
    pub max_memory_gib: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct SpectralManifest {
    seed: u64,
    lambdas: Vec<f64>,
    num_items: usize,
    pc_fraction: f64,
    sampled_popular: usize,
    sampled_unpopular: usize,
    curve_files: Vec<String>,
}

pub fn export_spectral(args: &SpectralArgs) -> Result<()> {
    let x = args.data.load()?;
    check_memory_budget(x.num_items(), args.max_memory_gib)?;
    let g = gram(&x);
    let decomposition = eig_gram(&g)?;
    fs::create_dir_all(&args.out)?;

    let mut curve_files = Vec::new();
    for &lambda in &args.lambdas {
        let curves = scaling_curves(decomposition.eigenvalues(), lambda)?;
        let name = format!("curves_lambda_{lambda}.csv");
        write_scaling_curves_csv(&args.out.join(&name), decomposition.eigenvalues(), &curves)?;
        curve_files.push(name);
    }

    // Popularity-stratified item sample, sorted by popularity so the
    // heatmap axes run from popular to unpopular.
    let popularity = item_popularity(&x);
    let partition = head_tail_partition(&popularity, args.head_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut sample = |group: &[u32], count: usize| -> Vec<u32> {
        let mut pool = group.to_vec();
        pool.shuffle(&mut rng);
        pool.truncate(count.min(pool.len()));
        pool
    };
    let popular = sample(partition.head(), args.popular_items);
    let unpopular = sample(partition.tail(), args.unpopular_items);
    let mut items: Vec<u32> = popular.iter().chain(&unpopular).copied().collect();
    items.sort_unstable_by(|&a, &b| {
        popularity[b as usize]
            .cmp(&popularity[a as usize])
            .then(a.cmp(&b))
    });

    pc_group_heatmap(&decomposition, args.pc_fraction, PcGroup::Top, &items)?
        .write_csv(&args.out.join("heatmap_top.csv"))?;
    pc_group_heatmap(&decomposition, args.pc_fraction, PcGroup::Bottom, &items)?
        .write_csv(&args.out.join("heatmap_bottom.csv"))?;

    let manifest = SpectralManifest {
        seed: args.seed,
        lambdas: args.lambdas.clone(),
        num_items: x.num_items(),
        pc_fraction: args.pc_fraction,
        sampled_popular: popular.len(),
        sampled_unpopular: unpopular.len(),
        curve_files,
    };
    fs::write(
        args.out.join("spectral.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!(
        "spectral export: {} curve files, heatmaps over {} items -> {}",
        args.lambdas.len(),
        items.len(),
        args.out.display()
    );
    Ok(())
}
