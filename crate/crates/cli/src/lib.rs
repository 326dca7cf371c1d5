//! Library backing the `laekit` binary: experiment configuration, the
//! grid runner, and the individual pipeline commands.

pub mod commands;
pub mod config;
pub mod runner;
pub mod spectral_cmd;

use std::path::Path;

use anyhow::{bail, Context, Result};
use laekit::interactions::{StrongSplit, WeakSplit};

/// A split directory holds either protocol; `split.json` says which.
pub enum AnySplit {
    Strong(StrongSplit),
    Weak(WeakSplit),
}

pub fn load_any_split(dir: &Path) -> Result<AnySplit> {
    let manifest_path = dir.join("split.json");
    let text = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    match value.get("protocol").and_then(|p| p.as_str()) {
        Some("strong") => Ok(AnySplit::Strong(StrongSplit::load(dir)?)),
        Some("weak") => Ok(AnySplit::Weak(WeakSplit::load(dir)?)),
        other => bail!("unknown split protocol {other:?} in {}", manifest_path.display()),
    }
}

/// Refuses to build dense `n×n` working sets past the configured budget.
/// The pipeline holds up to four dense matrices at once (gram, precision,
/// weights, and the evaluator's row-major copy), 8 bytes per entry.
pub fn check_memory_budget(num_items: usize, max_memory_gib: f64) -> Result<()> {
    let required = 4.0 * 8.0 * (num_items as f64) * (num_items as f64);
    let budget = max_memory_gib * (1u64 << 30) as f64;
    if required > budget {
        bail!(
            "{num_items} items need about {:.1} GiB of dense working memory, over the {:.1} GiB budget; \
             raise max_memory_gib if the host has the headroom",
            required / (1u64 << 30) as f64,
            max_memory_gib
        );
    }
    Ok(())
}
