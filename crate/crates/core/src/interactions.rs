//! Implicit-feedback ingestion, interaction matrices, and evaluation splits.
//!
//! The input format is UTF-8 text with one interaction per line, columns
//! `user item [rating [timestamp]]`, separated by comma, tab, or spaces
//! (auto-detected from the first data line). Lines starting with `#` are
//! skipped. User and item ids may be arbitrary strings; they are remapped
//! to dense indices in first-occurrence order.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse binary user-item matrix, stored as one sorted item list per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    num_items: usize,
    rows: Vec<Vec<u32>>,
}

impl InteractionMatrix {
    /// Builds a matrix from per-user item lists. Lists are sorted and
    /// deduplicated; indices must be below `num_items`.
    pub fn from_rows(num_items: usize, mut rows: Vec<Vec<u32>>) -> Result<Self> {
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last as usize >= num_items {
                    return Err(Error::InvalidInput(format!(
                        "item index {last} out of range for {num_items} items"
                    )));
                }
            }
        }
        Ok(Self { num_items, rows })
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Sorted item indices of one user.
    pub fn row(&self, user: usize) -> &[u32] {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// Total number of stored interactions.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Writes the matrix as `user<TAB>item` lines using dense indices.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (u, row) in self.rows.iter().enumerate() {
            for &i in row {
                writeln!(w, "{u}\t{i}").map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads back a matrix written by [`InteractionMatrix::write`]. The
    /// shape is taken from the arguments, so users or items without any
    /// interaction survive the round trip.
    pub fn read_pairs(path: &Path, num_users: usize, num_items: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rows = vec![Vec::new(); num_users];
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line_no = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (u, i) = match (it.next(), it.next()) {
                (Some(u), Some(i)) => (u, i),
                _ => {
                    return Err(Error::ParseLine {
                        line: line_no,
                        message: "expected `user item`".into(),
                    })
                }
            };
            let u: usize = u.parse().map_err(|_| Error::ParseLine {
                line: line_no,
                message: format!("bad user index `{u}`"),
            })?;
            let i: u32 = i.parse().map_err(|_| Error::ParseLine {
                line: line_no,
                message: format!("bad item index `{i}`"),
            })?;
            if u >= num_users {
                return Err(Error::ParseLine {
                    line: line_no,
                    message: format!("user index {u} out of range for {num_users} users"),
                });
            }
            rows[u].push(i);
        }
        Self::from_rows(num_items, rows)
    }
}

/// Input column layout of [`load_interactions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `user item` (extra columns ignored).
    Pairs,
    /// `user item rating [timestamp]`.
    Triples,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pairs" => Ok(InputFormat::Pairs),
            "triples" => Ok(InputFormat::Triples),
            other => Err(Error::InvalidInput(format!(
                "unknown input format `{other}` (expected `pairs` or `triples`)"
            ))),
        }
    }
}

#[derive(Clone, Copy)]
enum Separator {
    Comma,
    Tab,
    Whitespace,
}

fn detect_separator(line: &str) -> Separator {
    if line.contains('\t') {
        Separator::Tab
    } else if line.contains(',') {
        Separator::Comma
    } else {
        Separator::Whitespace
    }
}

fn split_fields(line: &str, sep: Separator) -> Vec<&str> {
    match sep {
        Separator::Comma => line.split(',').map(str::trim).collect(),
        Separator::Tab => line.split('\t').map(str::trim).collect(),
        Separator::Whitespace => line.split_whitespace().collect(),
    }
}

/// A loaded matrix together with the original ids behind the dense
/// indices (`user_ids[u]` is the source id of row `u`).
#[derive(Debug, Clone)]
pub struct LoadedInteractions {
    pub interactions: InteractionMatrix,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

/// Loads an interaction file, remapping ids to dense indices in
/// first-occurrence order and collapsing duplicate interactions.
///
/// With `InputFormat::Triples` and a `binarize_threshold`, interactions
/// whose rating is below the threshold are dropped before binarization.
pub fn load_interactions(
    path: &Path,
    format: InputFormat,
    binarize_threshold: Option<f64>,
) -> Result<InteractionMatrix> {
    Ok(load_interactions_with_ids(path, format, binarize_threshold)?.interactions)
}

/// [`load_interactions`] keeping the id remap, so downstream outputs in
/// dense index space can be tied back to the source ids.
pub fn load_interactions_with_ids(
    path: &Path,
    format: InputFormat,
    binarize_threshold: Option<f64>,
) -> Result<LoadedInteractions> {
    if binarize_threshold.is_some() && format == InputFormat::Pairs {
        return Err(Error::InvalidInput(
            "a binarize threshold requires the `triples` format".into(),
        ));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut users: HashMap<String, u32> = HashMap::new();
    let mut items: HashMap<String, u32> = HashMap::new();
    let mut rows: Vec<Vec<u32>> = Vec::new();
    let mut sep: Option<Separator> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let sep = *sep.get_or_insert_with(|| detect_separator(trimmed));
        let fields = split_fields(trimmed, sep);

        let min_cols = match format {
            InputFormat::Pairs => 2,
            InputFormat::Triples => 3,
        };
        if fields.len() < min_cols || fields[..min_cols].iter().any(|f| f.is_empty()) {
            return Err(Error::ParseLine {
                line: line_no,
                message: format!("expected at least {min_cols} columns, got `{trimmed}`"),
            });
        }
        if format == InputFormat::Triples {
            let rating: f64 = fields[2].parse().map_err(|_| Error::ParseLine {
                line: line_no,
                message: format!("bad rating `{}`", fields[2]),
            })?;
            if let Some(threshold) = binarize_threshold {
                if rating < threshold {
                    continue;
                }
            }
        }

        let next_user = users.len() as u32;
        let u = *users.entry(fields[0].to_owned()).or_insert(next_user);
        if u as usize == rows.len() {
            rows.push(Vec::new());
        }
        let next_item = items.len() as u32;
        let i = *items.entry(fields[1].to_owned()).or_insert(next_item);
        rows[u as usize].push(i);
    }

    if rows.iter().all(Vec::is_empty) {
        return Err(Error::EmptyDataset);
    }
    let mut user_ids = vec![String::new(); users.len()];
    for (id, &idx) in &users {
        user_ids[idx as usize] = id.clone();
    }
    let mut item_ids = vec![String::new(); items.len()];
    for (id, &idx) in &items {
        item_ids[idx as usize] = id.clone();
    }
    Ok(LoadedInteractions {
        interactions: InteractionMatrix::from_rows(items.len(), rows)?,
        user_ids,
        item_ids,
    })
}

/// Per-item interaction counts (the column sums of the binary matrix).
pub fn item_popularity(x: &InteractionMatrix) -> Vec<u64> {
    let mut counts = vec![0u64; x.num_items()];
    for row in x.rows() {
        for &i in row {
            counts[i as usize] += 1;
        }
    }
    counts
}

/// Gini coefficient of a popularity distribution, via the
/// mean-absolute-difference identity on the sorted counts. 0 for a uniform
/// distribution; fails on an all-zero vector.
pub fn gini_index(popularity: &[u64]) -> Result<f64> {
    if popularity.is_empty() {
        return Err(Error::InvalidInput("empty popularity vector".into()));
    }
    let total: u128 = popularity.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(Error::InvalidInput(
            "gini is undefined for an all-zero popularity vector".into(),
        ));
    }
    let mut sorted = popularity.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as u128;
    // G = (2·Σ_i i·x_(i) − (n+1)·Σx) / (n·Σx), ranks 1-based ascending.
    let weighted: u128 = sorted
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as u128 + 1) * c as u128)
        .sum();
    let numerator = 2 * weighted - (n + 1) * total;
    Ok(numerator as f64 / (n * total) as f64)
}

/// Head/tail item split by training popularity.
#[derive(Debug, Clone)]
pub struct ItemPartition {
    head: Vec<u32>,
    tail: Vec<u32>,
    is_head: Vec<bool>,
}

impl ItemPartition {
    /// Sorted indices of the head (most popular) items.
    pub fn head(&self) -> &[u32] {
        &self.head
    }

    /// Sorted indices of the tail items.
    pub fn tail(&self) -> &[u32] {
        &self.tail
    }

    pub fn is_head(&self, item: u32) -> bool {
        self.is_head[item as usize]
    }

    pub fn num_items(&self) -> usize {
        self.is_head.len()
    }
}

/// Splits items into the `⌈head_fraction·n⌉` most popular (head) and the
/// rest (tail). Ties in popularity go to the lower index.
pub fn head_tail_partition(popularity: &[u64], head_fraction: f64) -> Result<ItemPartition> {
    if !(0.0..=1.0).contains(&head_fraction) {
        return Err(Error::InvalidInput(format!(
            "head fraction must be in [0, 1], got {head_fraction}"
        )));
    }
    let n = popularity.len();
    let head_count = ((head_fraction * n as f64).ceil() as usize).min(n);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        popularity[b as usize]
            .cmp(&popularity[a as usize])
            .then(a.cmp(&b))
    });
    let mut head: Vec<u32> = order[..head_count].to_vec();
    let mut tail: Vec<u32> = order[head_count..].to_vec();
    head.sort_unstable();
    tail.sort_unstable();
    let mut is_head = vec![false; n];
    for &i in &head {
        is_head[i as usize] = true;
    }
    Ok(ItemPartition { head, tail, is_head })
}

/// Summary statistics of a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_ratings: usize,
    pub density: f64,
    pub gini_item: f64,
}

pub fn dataset_stats(x: &InteractionMatrix) -> Result<DatasetStats> {
    let nnz = x.nnz();
    let cells = x.num_users() * x.num_items();
    Ok(DatasetStats {
        num_users: x.num_users(),
        num_items: x.num_items(),
        num_ratings: nnz,
        density: if cells == 0 {
            0.0
        } else {
            nnz as f64 / cells as f64
        },
        gini_item: gini_index(&item_popularity(x))?,
    })
}

/// Strong-generalization split: disjoint train/validation/test user sets,
/// with per-user fold-in/held-out item splits for the held-out users.
#[derive(Debug, Clone)]
pub struct StrongSplit {
    pub train: InteractionMatrix,
    pub val_foldin: InteractionMatrix,
    pub val_heldout: InteractionMatrix,
    pub test_foldin: InteractionMatrix,
    pub test_heldout: InteractionMatrix,
    /// Original user indices backing each part, sorted ascending; row `r`
    /// of a part matrix belongs to user `*_users[r]` of the source matrix.
    pub train_users: Vec<u32>,
    pub val_users: Vec<u32>,
    pub test_users: Vec<u32>,
    pub seed: u64,
    pub heldout_user_fraction: f64,
    pub foldin_fraction: f64,
}

/// Weak-generalization split: a per-interaction random holdout over the
/// full user set.
#[derive(Debug, Clone)]
pub struct WeakSplit {
    pub train: InteractionMatrix,
    pub test: InteractionMatrix,
    pub seed: u64,
    pub test_fraction: f64,
}

fn rounded_count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).round() as usize).min(total)
}

/// Splits one user's items into fold-in and held-out parts. Users with a
/// single item keep it in fold-in and end up with an empty held-out set,
/// which later excludes them from metric denominators.
fn split_user_items(
    items: &[u32],
    foldin_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<u32>, Vec<u32>) {
    let k = items.len();
    if k < 2 {
        return (items.to_vec(), Vec::new());
    }
    let count = rounded_count(foldin_fraction, k).clamp(1, k - 1);
    let mut shuffled = items.to_vec();
    shuffled.shuffle(rng);
    let mut foldin = shuffled[..count].to_vec();
    let mut heldout = shuffled[count..].to_vec();
    foldin.sort_unstable();
    heldout.sort_unstable();
    (foldin, heldout)
}

/// Strong-generalization split: holds out `heldout_user_fraction` of users
/// (half validation, half test) and splits each held-out user's items into
/// `foldin_fraction` fold-in plus held-out remainder. Reproducible for a
/// fixed seed.
pub fn strong_split(
    x: &InteractionMatrix,
    heldout_user_fraction: f64,
    foldin_fraction: f64,
    seed: u64,
) -> Result<StrongSplit> {
    let m = x.num_users();
    if m < 5 {
        return Err(Error::InvalidInput(format!(
            "strong split needs at least 5 users, got {m}"
        )));
    }
    if !(0.0 < heldout_user_fraction && heldout_user_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "heldout user fraction must be in (0, 1), got {heldout_user_fraction}"
        )));
    }
    if !(0.0 < foldin_fraction && foldin_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "foldin fraction must be in (0, 1), got {foldin_fraction}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<u32> = (0..m as u32).collect();
    perm.shuffle(&mut rng);

    let heldout_count = rounded_count(heldout_user_fraction, m).max(2);
    let train_count = m - heldout_count;
    let val_count = heldout_count / 2;

    let mut train_users = perm[..train_count].to_vec();
    let mut val_users = perm[train_count..train_count + val_count].to_vec();
    let mut test_users = perm[train_count + val_count..].to_vec();
    train_users.sort_unstable();
    val_users.sort_unstable();
    test_users.sort_unstable();

    let n = x.num_items();
    let train_rows: Vec<Vec<u32>> = train_users
        .iter()
        .map(|&u| x.row(u as usize).to_vec())
        .collect();

    let mut split_part = |users: &[u32]| -> Result<(InteractionMatrix, InteractionMatrix)> {
        let mut foldin_rows = Vec::with_capacity(users.len());
        let mut heldout_rows = Vec::with_capacity(users.len());
        for &u in users {
            let (f, h) = split_user_items(x.row(u as usize), foldin_fraction, &mut rng);
            foldin_rows.push(f);
            heldout_rows.push(h);
        }
        Ok((
            InteractionMatrix::from_rows(n, foldin_rows)?,
            InteractionMatrix::from_rows(n, heldout_rows)?,
        ))
    };

    let (val_foldin, val_heldout) = split_part(&val_users)?;
    let (test_foldin, test_heldout) = split_part(&test_users)?;

    Ok(StrongSplit {
        train: InteractionMatrix::from_rows(n, train_rows)?,
        val_foldin,
        val_heldout,
        test_foldin,
        test_heldout,
        train_users,
        val_users,
        test_users,
        seed,
        heldout_user_fraction,
        foldin_fraction,
    })
}

/// Weak-generalization split: for every user, `test_fraction` of their
/// items (rounded) move to the test matrix. Reproducible for a fixed seed.
pub fn weak_split(x: &InteractionMatrix, test_fraction: f64, seed: u64) -> Result<WeakSplit> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidInput(format!(
            "test fraction must be in [0, 1], got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.num_items();
    let mut train_rows = Vec::with_capacity(x.num_users());
    let mut test_rows = Vec::with_capacity(x.num_users());
    for row in x.rows() {
        let test_count = rounded_count(test_fraction, row.len());
        let mut shuffled = row.clone();
        shuffled.shuffle(&mut rng);
        let mut test: Vec<u32> = shuffled[..test_count].to_vec();
        let mut train: Vec<u32> = shuffled[test_count..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        train_rows.push(train);
        test_rows.push(test);
    }
    Ok(WeakSplit {
        train: InteractionMatrix::from_rows(n, train_rows)?,
        test: InteractionMatrix::from_rows(n, test_rows)?,
        seed,
        test_fraction,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    protocol: String,
    seed: u64,
    num_items: usize,
    num_users_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    heldout_user_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    foldin_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_fraction: Option<f64>,
    part_nnz: HashMap<String, usize>,
}

fn write_users(path: &Path, users: &[u32]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for u in users {
        writeln!(w, "{u}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_users(path: &Path) -> Result<Vec<u32>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| {
            l.trim().parse().map_err(|_| Error::ParseLine {
                line: idx + 1,
                message: format!("bad user index `{l}`"),
            })
        })
        .collect()
}

fn write_manifest(path: &Path, manifest: &SplitManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization failed: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn read_manifest(path: &Path) -> Result<SplitManifest> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&content).map_err(|e| Error::BadContainer {
        path: path.into(),
        message: format!("bad split manifest: {e}"),
    })
}

impl StrongSplit {
    const PARTS: [&'static str; 5] = [
        "train",
        "val_foldin",
        "val_heldout",
        "test_foldin",
        "test_heldout",
    ];

    fn part(&self, name: &str) -> &InteractionMatrix {
        match name {
            "train" => &self.train,
            "val_foldin" => &self.val_foldin,
            "val_heldout" => &self.val_heldout,
            "test_foldin" => &self.test_foldin,
            "test_heldout" => &self.test_heldout,
            _ => unreachable!(),
        }
    }

    /// Writes the five part matrices, the user index lists, and a JSON
    /// manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut part_nnz = HashMap::new();
        for name in Self::PARTS {
            let m = self.part(name);
            m.write(&dir.join(format!("{name}.txt")))?;
            part_nnz.insert(name.to_string(), m.nnz());
        }
        write_users(&dir.join("train_users.txt"), &self.train_users)?;
        write_users(&dir.join("val_users.txt"), &self.val_users)?;
        write_users(&dir.join("test_users.txt"), &self.test_users)?;
        let manifest = SplitManifest {
            protocol: "strong".into(),
            seed: self.seed,
            num_items: self.train.num_items(),
            num_users_total: self.train_users.len() + self.val_users.len() + self.test_users.len(),
            heldout_user_fraction: Some(self.heldout_user_fraction),
            foldin_fraction: Some(self.foldin_fraction),
            test_fraction: None,
            part_nnz,
        };
        write_manifest(&dir.join("split.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(&dir.join("split.json"))?;
        if manifest.protocol != "strong" {
            return Err(Error::InvalidInput(format!(
                "expected a strong split, found protocol `{}`",
                manifest.protocol
            )));
        }
        let train_users = read_users(&dir.join("train_users.txt"))?;
        let val_users = read_users(&dir.join("val_users.txt"))?;
        let test_users = read_users(&dir.join("test_users.txt"))?;
        let n = manifest.num_items;
        let read = |name: &str, rows: usize| {
            InteractionMatrix::read_pairs(&dir.join(format!("{name}.txt")), rows, n)
        };
        Ok(StrongSplit {
            train: read("train", train_users.len())?,
            val_foldin: read("val_foldin", val_users.len())?,
            val_heldout: read("val_heldout", val_users.len())?,
            test_foldin: read("test_foldin", test_users.len())?,
            test_heldout: read("test_heldout", test_users.len())?,
            train_users,
            val_users,
            test_users,
            seed: manifest.seed,
            heldout_user_fraction: manifest.heldout_user_fraction.unwrap_or(0.2),
            foldin_fraction: manifest.foldin_fraction.unwrap_or(0.8),
        })
    }
}

impl WeakSplit {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.train.write(&dir.join("train.txt"))?;
        self.test.write(&dir.join("test.txt"))?;
        let mut part_nnz = HashMap::new();
        part_nnz.insert("train".to_string(), self.train.nnz());
        part_nnz.insert("test".to_string(), self.test.nnz());
        let manifest = SplitManifest {
            protocol: "weak".into(),
            seed: self.seed,
            num_items: self.train.num_items(),
            num_users_total: self.train.num_users(),
            heldout_user_fraction: None,
            foldin_fraction: None,
            test_fraction: Some(self.test_fraction),
            part_nnz,
        };
        write_manifest(&dir.join("split.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(&dir.join("split.json"))?;
        if manifest.protocol != "weak" {
            return Err(Error::InvalidInput(format!(
                "expected a weak split, found protocol `{}`",
                manifest.protocol
            )));
        }
        let n = manifest.num_items;
        let m = manifest.num_users_total;
        Ok(WeakSplit {
            train: InteractionMatrix::read_pairs(&dir.join("train.txt"), m, n)?,
            test: InteractionMatrix::read_pairs(&dir.join("test.txt"), m, n)?,
            seed: manifest.seed,
            test_fraction: manifest.test_fraction.unwrap_or(0.2),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write as _;

    use proptest::prelude::*;

    use super::*;
    use crate::synth::random_interactions;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_pairs_counts() {
        let f = write_temp("u1 i1\nu1 i2\nu2 i1\n");
        let x = load_interactions(f.path(), InputFormat::Pairs, None).unwrap();
        assert_eq!(x.num_users(), 2);
        assert_eq!(x.num_items(), 2);
        assert_eq!(x.nnz(), 3);
        assert_eq!(x.row(0), &[0, 1]);
        assert_eq!(x.row(1), &[0]);
    }

    #[test]
    fn load_triples_threshold() {
        let f = write_temp("u1,i1,4\nu1,i2,2\nu2,i1,5\n");
        let x = load_interactions(f.path(), InputFormat::Triples, Some(4.0)).unwrap();
        assert_eq!(x.nnz(), 2);
    }

    #[test]
    fn load_keeps_id_remap() {
        let f = write_temp("bob movie-9\nalice movie-9\nbob movie-2\n");
        let loaded = load_interactions_with_ids(f.path(), InputFormat::Pairs, None).unwrap();
        assert_eq!(loaded.user_ids, vec!["bob", "alice"]);
        assert_eq!(loaded.item_ids, vec!["movie-9", "movie-2"]);
        assert_eq!(loaded.interactions.row(0), &[0, 1]);
        assert_eq!(loaded.interactions.row(1), &[0]);
    }

    #[test]
    fn load_collapses_duplicates() {
        let f = write_temp("u1\ti1\nu1\ti1\nu2\ti2\n");
        let x = load_interactions(f.path(), InputFormat::Pairs, None).unwrap();
        assert_eq!(x.nnz(), 2);
    }

    #[test]
    fn load_skips_comments_and_blank_lines() {
        let f = write_temp("# header\n\nu1 i1\n");
        let x = load_interactions(f.path(), InputFormat::Pairs, None).unwrap();
        assert_eq!(x.nnz(), 1);
    }

    #[test]
    fn load_reports_line_number() {
        let f = write_temp("u1 i1\nbroken\n");
        let err = load_interactions(f.path(), InputFormat::Pairs, None).unwrap_err();
        match err {
            Error::ParseLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_bad_rating_reports_line() {
        let f = write_temp("u1 i1 5\nu2 i2 high\n");
        let err = load_interactions(f.path(), InputFormat::Triples, None).unwrap_err();
        match err {
            Error::ParseLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_empty_dataset_fails() {
        let f = write_temp("# nothing here\n");
        assert!(matches!(
            load_interactions(f.path(), InputFormat::Pairs, None),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn load_threshold_dropping_everything_fails() {
        let f = write_temp("u1 i1 1\n");
        assert!(matches!(
            load_interactions(f.path(), InputFormat::Triples, Some(5.0)),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn popularity_is_column_sums() {
        let x = InteractionMatrix::from_rows(2, vec![vec![0, 1], vec![0]]).unwrap();
        assert_eq!(item_popularity(&x), vec![2, 1]);
    }

    #[test]
    fn popularity_counts_empty_columns() {
        let x = InteractionMatrix::from_rows(3, vec![vec![0], vec![2]]).unwrap();
        let pop = item_popularity(&x);
        assert_eq!(pop, vec![1, 0, 1]);
        assert_eq!(pop.iter().sum::<u64>() as usize, x.nnz());
    }

    #[test]
    fn gini_uniform_is_zero() {
        assert_eq!(gini_index(&[5, 5, 5, 5]).unwrap(), 0.0);
    }

    #[test]
    fn gini_matches_mean_absolute_difference_oracle() {
        // Oracle: Σᵢⱼ |xᵢ − xⱼ| / (2 n² mean).
        let pop = [1u64, 2, 3, 4];
        let n = pop.len() as f64;
        let mean = pop.iter().sum::<u64>() as f64 / n;
        let mut abs_diff = 0.0;
        for &a in &pop {
            for &b in &pop {
                abs_diff += (a as f64 - b as f64).abs();
            }
        }
        let oracle = abs_diff / (2.0 * n * n * mean);
        assert_eq!(oracle, 0.25);
        assert_eq!(gini_index(&pop).unwrap(), 0.25);
    }

    #[test]
    fn gini_all_zero_fails() {
        assert!(gini_index(&[0, 0, 0]).is_err());
    }

    #[test]
    fn partition_picks_most_popular() {
        let p = head_tail_partition(&[9, 1, 5, 3, 2], 0.2).unwrap();
        assert_eq!(p.head(), &[0]);
        assert_eq!(p.tail(), &[1, 2, 3, 4]);
        assert!(p.is_head(0) && !p.is_head(2));
    }

    #[test]
    fn partition_ties_go_to_lower_index() {
        let p = head_tail_partition(&[3, 5, 5, 1], 0.5).unwrap();
        assert_eq!(p.head(), &[1, 2]);
    }

    #[test]
    fn partition_full_fraction_is_all_head() {
        let p = head_tail_partition(&[1, 2, 3], 1.0).unwrap();
        assert_eq!(p.head(), &[0, 1, 2]);
        assert!(p.tail().is_empty());
    }

    #[test]
    fn strong_split_counts() {
        let rows = (0..10).map(|u| vec![u as u32, (u + 1) as u32 % 12]).collect();
        let x = InteractionMatrix::from_rows(12, rows).unwrap();
        let s = strong_split(&x, 0.2, 0.8, 7).unwrap();
        assert_eq!(s.train_users.len(), 8);
        assert_eq!(s.val_users.len(), 1);
        assert_eq!(s.test_users.len(), 1);
        assert_eq!(s.train.num_users(), 8);
        assert_eq!(s.val_foldin.num_items(), 12);
    }

    #[test]
    fn strong_split_foldin_rounding() {
        let mut rows = vec![vec![0, 1, 2, 3, 4]; 10];
        rows.iter_mut().enumerate().for_each(|(u, r)| r.push(5 + u as u32 % 3));
        let x = InteractionMatrix::from_rows(8, rows).unwrap();
        let s = strong_split(&x, 0.2, 0.8, 1).unwrap();
        // Every held-out user has 6 items: round(0.8·6) = 5 fold-in + 1 held-out.
        for u in 0..s.val_foldin.num_users() {
            assert_eq!(s.val_foldin.row(u).len(), 5);
            assert_eq!(s.val_heldout.row(u).len(), 1);
        }
    }

    #[test]
    fn strong_split_single_item_user_goes_to_foldin() {
        let mut rows: Vec<Vec<u32>> = (0..9).map(|_| vec![0, 1, 2, 3]).collect();
        rows.push(vec![7]);
        let x = InteractionMatrix::from_rows(8, rows).unwrap();
        // Make the single-item user held out for some seed.
        for seed in 0..64 {
            let s = strong_split(&x, 0.2, 0.8, seed).unwrap();
            let user9 = s
                .val_users
                .iter()
                .chain(&s.test_users)
                .position(|&u| u == 9);
            if user9.is_some() {
                let (foldin, heldout) = if s.val_users.contains(&9) {
                    let r = s.val_users.iter().position(|&u| u == 9).unwrap();
                    (s.val_foldin.row(r), s.val_heldout.row(r))
                } else {
                    let r = s.test_users.iter().position(|&u| u == 9).unwrap();
                    (s.test_foldin.row(r), s.test_heldout.row(r))
                };
                assert_eq!(foldin, &[7]);
                assert!(heldout.is_empty());
                return;
            }
        }
        panic!("user 9 never held out in 64 seeds");
    }

    #[test]
    fn strong_split_is_deterministic() {
        let x = random_interactions(30, 15, 0.3, 11);
        let a = strong_split(&x, 0.2, 0.8, 99).unwrap();
        let b = strong_split(&x, 0.2, 0.8, 99).unwrap();
        assert_eq!(a.train_users, b.train_users);
        assert_eq!(a.val_foldin, b.val_foldin);
        assert_eq!(a.test_heldout, b.test_heldout);
    }

    #[test]
    fn weak_split_rounding_and_boundary() {
        let x = InteractionMatrix::from_rows(10, vec![(0..10).collect()]).unwrap();
        let s = weak_split(&x, 0.2, 3).unwrap();
        assert_eq!(s.train.row(0).len(), 8);
        assert_eq!(s.test.row(0).len(), 2);

        let empty = weak_split(&x, 0.0, 3).unwrap();
        assert_eq!(empty.test.nnz(), 0);
        assert_eq!(empty.train.row(0), x.row(0));
    }

    #[test]
    fn weak_split_is_deterministic() {
        let x = random_interactions(25, 12, 0.4, 5);
        let a = weak_split(&x, 0.2, 17).unwrap();
        let b = weak_split(&x, 0.2, 17).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn strong_split_round_trips_through_disk() {
        let x = random_interactions(40, 20, 0.25, 2);
        let s = strong_split(&x, 0.2, 0.8, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let loaded = StrongSplit::load(dir.path()).unwrap();
        assert_eq!(loaded.train, s.train);
        assert_eq!(loaded.val_foldin, s.val_foldin);
        assert_eq!(loaded.val_heldout, s.val_heldout);
        assert_eq!(loaded.test_foldin, s.test_foldin);
        assert_eq!(loaded.test_heldout, s.test_heldout);
        assert_eq!(loaded.val_users, s.val_users);
        assert_eq!(loaded.seed, 5);
    }

    #[test]
    fn weak_split_round_trips_through_disk() {
        let x = random_interactions(20, 10, 0.4, 3);
        let s = weak_split(&x, 0.25, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let loaded = WeakSplit::load(dir.path()).unwrap();
        assert_eq!(loaded.train, s.train);
        assert_eq!(loaded.test, s.test);
    }

    #[test]
    fn dataset_stats_basics() {
        let x = InteractionMatrix::from_rows(2, vec![vec![0, 1], vec![0]]).unwrap();
        let stats = dataset_stats(&x).unwrap();
        assert_eq!(stats.num_users, 2);
        assert_eq!(stats.num_items, 2);
        assert_eq!(stats.num_ratings, 3);
        assert!((stats.density - 0.75).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn strong_split_unions_back_to_original(seed in 0u64..200) {
            let x = random_interactions(20, 10, 0.4, seed);
            let s = strong_split(&x, 0.2, 0.8, seed).unwrap();
            // Every user lands in exactly one part and keeps their items.
            let mut seen = vec![false; x.num_users()];
            for (&u, row) in s.train_users.iter().zip(s.train.rows()) {
                prop_assert!(!seen[u as usize]);
                seen[u as usize] = true;
                prop_assert_eq!(row.as_slice(), x.row(u as usize));
            }
            for (users, foldin, heldout) in [
                (&s.val_users, &s.val_foldin, &s.val_heldout),
                (&s.test_users, &s.test_foldin, &s.test_heldout),
            ] {
                for (r, &u) in users.iter().enumerate() {
                    prop_assert!(!seen[u as usize]);
                    seen[u as usize] = true;
                    let mut merged = foldin.row(r).to_vec();
                    merged.extend_from_slice(heldout.row(r));
                    merged.sort_unstable();
                    prop_assert_eq!(merged.as_slice(), x.row(u as usize));
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }

        #[test]
        fn weak_split_unions_back_to_original(seed in 0u64..200) {
            let x = random_interactions(15, 8, 0.5, seed);
            let s = weak_split(&x, 0.3, seed).unwrap();
            for u in 0..x.num_users() {
                let mut merged = s.train.row(u).to_vec();
                merged.extend_from_slice(s.test.row(u));
                merged.sort_unstable();
                prop_assert_eq!(merged.as_slice(), x.row(u));
                let overlap = s.train.row(u).iter().filter(|i| s.test.row(u).contains(i)).count();
                prop_assert_eq!(overlap, 0);
            }
        }

        #[test]
        fn gini_is_scale_invariant(scale in 1u64..100) {
            let pop = [3u64, 0, 7, 1, 12, 4];
            let scaled: Vec<u64> = pop.iter().map(|&c| c * scale).collect();
            let a = gini_index(&pop).unwrap();
            let b = gini_index(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn partition_head_size_is_ceil(frac in 0.0f64..=1.0, n in 1usize..40) {
            let pop: Vec<u64> = (0..n as u64).collect();
            let p = head_tail_partition(&pop, frac).unwrap();
            let expected = ((frac * n as f64).ceil() as usize).min(n);
            prop_assert_eq!(p.head().len(), expected);
            prop_assert_eq!(p.head().len() + p.tail().len(), n);
        }
    }
}
