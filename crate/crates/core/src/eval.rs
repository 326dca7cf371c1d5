//! Top-N ranking evaluation: Recall@K and NDCG@K under plain averaging
//! (AOA), self-normalized inverse-propensity weighting, and head/tail item
//! views.
//!
//! Scoring follows the usual fold-in protocol: a user's fold-in items are
//! multiplied against the weight matrix, fold-in items are masked out of
//! the candidate list, and the remaining items are ranked by score with
//! ties broken by the lower item index. Users with an empty held-out set
//! are excluded from every average rather than counted as zero.
//!
//! The inverse-propensity estimator assumes missing-not-at-random feedback
//! with propensities proportional to `(count/max_count)^((γ+1)/2)`. By
//! default both the hit mass and the ideal mass are propensity-weighted
//! (self-normalized), which reduces exactly to AOA under uniform
//! propensities; [`IpsEstimator::FixedIdeal`] keeps the unweighted ideal in
//! the denominator instead.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interactions::{
    head_tail_partition, item_popularity, InteractionMatrix, ItemPartition, StrongSplit, WeakSplit,
};
use crate::solvers::WeightMatrix;

/// Smallest allowed propensity; avoids division by zero for items that
/// never occur in training.
pub const PROPENSITY_FLOOR: f64 = 1e-6;

/// Per-item observation propensities under the MNAR assumption.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityModel {
    gamma: f64,
    propensity: Vec<f64>,
}

impl PropensityModel {
    /// `propensity_i ∝ (count_i / max_count)^((γ+1)/2)`, floored at
    /// [`PROPENSITY_FLOOR`].
    pub fn from_popularity(popularity: &[u64], gamma: f64) -> Result<Self> {
        if gamma < 0.0 {
            return Err(Error::InvalidInput(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        let max = popularity.iter().copied().max().unwrap_or(0);
        let exponent = (gamma + 1.0) / 2.0;
        let propensity = popularity
            .iter()
            .map(|&c| {
                if max == 0 {
                    PROPENSITY_FLOOR
                } else {
                    ((c as f64 / max as f64).powf(exponent)).max(PROPENSITY_FLOOR)
                }
            })
            .collect();
        Ok(Self { gamma, propensity })
    }

    /// All propensities exactly 1; the IPS metrics then equal AOA.
    pub fn uniform(n: usize) -> Self {
        Self {
            gamma: 0.0,
            propensity: vec![1.0; n],
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn propensity(&self) -> &[f64] {
        &self.propensity
    }

    pub fn len(&self) -> usize {
        self.propensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.propensity.is_empty()
    }

    fn weight(&self, item: u32) -> f64 {
        1.0 / self.propensity[item as usize]
    }
}

/// Recall denominator convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallDenominator {
    /// `min(K, |heldout|)` — the truncated convention.
    Truncated,
    /// Plain `|heldout|`.
    Heldout,
}

/// Denominator convention for the inverse-propensity metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpsEstimator {
    /// Ideal mass is propensity-weighted too; estimates stay in [0, 1].
    SelfNormalized,
    /// Ideal mass stays unweighted; estimates may exceed 1.
    FixedIdeal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub gamma: f64,
    pub head_fraction: f64,
    pub recall_denominator: RecallDenominator,
    pub ips_estimator: IpsEstimator,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![20, 100],
            gamma: 2.0,
            head_fraction: 0.2,
            recall_denominator: RecallDenominator::Truncated,
            ips_estimator: IpsEstimator::SelfNormalized,
        }
    }
}

/// `score_i = Σ_{j ∈ foldin} B_{j,i}`.
pub fn predict_scores(foldin: &[u32], b: &WeightMatrix) -> Vec<f64> {
    let n = b.n();
    let mut scores = vec![0.0; n];
    for &j in foldin {
        for (i, s) in scores.iter_mut().enumerate() {
            *s += b.values()[(j as usize, i)];
        }
    }
    scores
}

/// Top-`n_top` items by descending score, ties broken by lower index,
/// fold-in items excluded. `foldin` must be sorted.
pub fn topn(scores: &[f64], foldin: &[u32], n_top: usize) -> Vec<u32> {
    debug_assert!(foldin.windows(2).all(|w| w[0] < w[1]));
    let mut candidates: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| foldin.binary_search(i).is_err())
        .collect();
    let by_rank = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    // The index tie-break makes the order total, so selecting before the
    // sort cannot change the result.
    if n_top < candidates.len() {
        candidates.select_nth_unstable_by(n_top, by_rank);
        candidates.truncate(n_top);
    }
    candidates.sort_unstable_by(by_rank);
    candidates
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

fn ideal_discount_sum(count: usize) -> f64 {
    (1..=count).map(discount).sum()
}

/// Hit positions (1-based) of held-out items in the ranking. `heldout`
/// must be sorted.
fn hit_positions(ranking: &[u32], heldout: &[u32]) -> Vec<(usize, u32)> {
    ranking
        .iter()
        .enumerate()
        .filter_map(|(idx, &item)| {
            heldout
                .binary_search(&item)
                .ok()
                .map(|_| (idx + 1, item))
        })
        .collect()
}

/// `|ranking[..K] ∩ heldout| / min(K, |heldout|)`. `heldout` must be
/// sorted and nonempty.
pub fn recall_at_k(ranking: &[u32], heldout: &[u32], k: usize) -> f64 {
    assert!(!heldout.is_empty(), "recall is undefined for an empty held-out set");
    let hits = hit_positions(ranking, heldout)
        .iter()
        .filter(|&&(pos, _)| pos <= k)
        .count();
    hits as f64 / k.min(heldout.len()) as f64
}

/// NDCG@K with binary gains: `DCG = Σ 1/log2(pos+1)` over hit positions,
/// normalized by the ideal placement of `min(K, |heldout|)` items.
pub fn ndcg_at_k(ranking: &[u32], heldout: &[u32], k: usize) -> f64 {
    assert!(!heldout.is_empty(), "ndcg is undefined for an empty held-out set");
    let dcg: f64 = hit_positions(ranking, heldout)
        .iter()
        .filter(|&&(pos, _)| pos <= k)
        .map(|&(pos, _)| discount(pos))
        .sum();
    dcg / ideal_discount_sum(k.min(heldout.len()))
}

/// Inverse-propensity Recall@K and NDCG@K (self-normalized form).
pub fn unbiased_metrics(
    ranking: &[u32],
    heldout: &[u32],
    propensity: &PropensityModel,
    k: usize,
) -> (f64, f64) {
    unbiased_metrics_with(
        ranking,
        heldout,
        propensity,
        k,
        IpsEstimator::SelfNormalized,
        RecallDenominator::Truncated,
    )
}

fn unbiased_metrics_with(
    ranking: &[u32],
    heldout: &[u32],
    propensity: &PropensityModel,
    k: usize,
    estimator: IpsEstimator,
    recall_denominator: RecallDenominator,
) -> (f64, f64) {
    assert!(!heldout.is_empty());
    let ideal_len = k.min(heldout.len());
    let hits = hit_positions(ranking, heldout);

    let mut recall_num = 0.0;
    let mut ndcg_num = 0.0;
    for &(pos, item) in hits.iter().filter(|&&(pos, _)| pos <= k) {
        let w = propensity.weight(item);
        recall_num += w;
        ndcg_num += w * discount(pos);
    }

    let (recall_den, ndcg_den) = match estimator {
        IpsEstimator::SelfNormalized => {
            let mut weights: Vec<f64> = heldout.iter().map(|&i| propensity.weight(i)).collect();
            weights.sort_unstable_by(|a, b| b.total_cmp(a));
            let recall_den: f64 = weights[..ideal_len].iter().sum();
            let ndcg_den: f64 = weights[..ideal_len]
                .iter()
                .enumerate()
                .map(|(t, &w)| w * discount(t + 1))
                .sum();
            (recall_den, ndcg_den)
        }
        IpsEstimator::FixedIdeal => {
            let recall_den = match recall_denominator {
                RecallDenominator::Truncated => ideal_len,
                RecallDenominator::Heldout => heldout.len(),
            } as f64;
            (recall_den, ideal_discount_sum(ideal_len))
        }
    };
    (recall_num / recall_den, ndcg_num / ndcg_den)
}

/// Per-group (recall, ndcg); `None` when the user's held-out set has no
/// item in the group, in which case the user is excluded from that
/// group's average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMetrics {
    pub head: Option<(f64, f64)>,
    pub tail: Option<(f64, f64)>,
}

/// Head/tail metrics: the held-out set is restricted to each group while
/// hit positions stay those of the full ranking.
pub fn group_metrics(
    ranking: &[u32],
    heldout: &[u32],
    partition: &ItemPartition,
    k: usize,
) -> GroupMetrics {
    let head: Vec<u32> = heldout.iter().copied().filter(|&i| partition.is_head(i)).collect();
    let tail: Vec<u32> = heldout.iter().copied().filter(|&i| !partition.is_head(i)).collect();
    let eval = |restricted: &[u32]| {
        if restricted.is_empty() {
            None
        } else {
            Some((
                recall_at_k(ranking, restricted, k),
                ndcg_at_k(ranking, restricted, k),
            ))
        }
    };
    GroupMetrics {
        head: eval(&head),
        tail: eval(&tail),
    }
}

/// Averaged metrics for one cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub recall_aoa: f64,
    pub ndcg_aoa: f64,
    pub recall_unbiased: f64,
    pub ndcg_unbiased: f64,
    pub recall_head: f64,
    pub ndcg_head: f64,
    pub recall_tail: f64,
    pub ndcg_tail: f64,
}

/// Metrics for one model configuration, one row per requested K, plus the
/// contributing-user counts behind the averages. Head/tail columns are 0
/// when no user contributed; check the counts to tell that apart from a
/// true zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<KMetrics>,
    pub users_evaluated: usize,
    pub users_skipped: usize,
    pub users_head: usize,
    pub users_tail: usize,
}

impl MetricReport {
    pub fn at_k(&self, k: usize) -> Option<&KMetrics> {
        self.metrics.iter().find(|m| m.k == k)
    }

    /// Wide CSV header for the given cutoffs, e.g. `recall_aoa@20,...`.
    pub fn csv_header(ks: &[usize]) -> String {
        let mut cols = Vec::new();
        for &k in ks {
            for name in [
                "recall_aoa",
                "ndcg_aoa",
                "recall_unbiased",
                "ndcg_unbiased",
                "recall_head",
                "ndcg_head",
                "recall_tail",
                "ndcg_tail",
            ] {
                cols.push(format!("{name}@{k}"));
            }
        }
        cols.extend(["users", "users_skipped", "users_head", "users_tail"].map(String::from));
        cols.join(",")
    }

    /// Values matching [`MetricReport::csv_header`].
    pub fn csv_values(&self) -> String {
        let mut cols = Vec::new();
        for m in &self.metrics {
            for v in [
                m.recall_aoa,
                m.ndcg_aoa,
                m.recall_unbiased,
                m.ndcg_unbiased,
                m.recall_head,
                m.ndcg_head,
                m.recall_tail,
                m.ndcg_tail,
            ] {
                cols.push(v.to_string());
            }
        }
        cols.push(self.users_evaluated.to_string());
        cols.push(self.users_skipped.to_string());
        cols.push(self.users_head.to_string());
        cols.push(self.users_tail.to_string());
        cols.join(",")
    }
}

struct UserMetrics {
    per_k: Vec<[f64; 4]>,
    head: Option<Vec<(f64, f64)>>,
    tail: Option<Vec<(f64, f64)>>,
}

/// Reusable evaluation context: propensities and the head/tail partition
/// derived from training popularity, plus the metric configuration.
pub struct Evaluator {
    propensity: PropensityModel,
    partition: ItemPartition,
    config: EvalConfig,
}

impl Evaluator {
    pub fn new(train_popularity: &[u64], config: EvalConfig) -> Result<Self> {
        if config.ks.is_empty() {
            return Err(Error::InvalidInput("no cutoffs configured".into()));
        }
        if config.ks.contains(&0) {
            return Err(Error::InvalidInput("cutoffs must be positive".into()));
        }
        let propensity = PropensityModel::from_popularity(train_popularity, config.gamma)?;
        let partition = head_tail_partition(train_popularity, config.head_fraction)?;
        Ok(Self {
            propensity,
            partition,
            config,
        })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn partition(&self) -> &ItemPartition {
        &self.partition
    }

    pub fn propensity(&self) -> &PropensityModel {
        &self.propensity
    }

    /// Evaluates a weight matrix against (fold-in, held-out) matrices over
    /// the same user set. Dispatches on the `parallel` feature; both paths
    /// aggregate in user order and return identical bytes.
    pub fn evaluate(
        &self,
        b: &WeightMatrix,
        foldin: &InteractionMatrix,
        heldout: &InteractionMatrix,
    ) -> Result<MetricReport> {
        #[cfg(feature = "parallel")]
        {
            self.evaluate_par(b, foldin, heldout)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.evaluate_seq(b, foldin, heldout)
        }
    }

    /// Sequential per-user evaluation.
    pub fn evaluate_seq(
        &self,
        b: &WeightMatrix,
        foldin: &InteractionMatrix,
        heldout: &InteractionMatrix,
    ) -> Result<MetricReport> {
        let (brows, n) = self.check_and_pack(b, foldin, heldout)?;
        let users: Vec<Option<UserMetrics>> = (0..foldin.num_users())
            .map(|u| self.evaluate_user(&brows, n, foldin.row(u), heldout.row(u)))
            .collect();
        Ok(self.aggregate(users))
    }

    /// Parallel per-user evaluation over a shared read-only weight matrix.
    #[cfg(feature = "parallel")]
    pub fn evaluate_par(
        &self,
        b: &WeightMatrix,
        foldin: &InteractionMatrix,
        heldout: &InteractionMatrix,
    ) -> Result<MetricReport> {
        let (brows, n) = self.check_and_pack(b, foldin, heldout)?;
        let users: Vec<Option<UserMetrics>> = (0..foldin.num_users())
            .into_par_iter()
            .map(|u| self.evaluate_user(&brows, n, foldin.row(u), heldout.row(u)))
            .collect();
        Ok(self.aggregate(users))
    }

    fn check_and_pack(
        &self,
        b: &WeightMatrix,
        foldin: &InteractionMatrix,
        heldout: &InteractionMatrix,
    ) -> Result<(Vec<f64>, usize)> {
        let n = b.n();
        if foldin.num_items() != n || heldout.num_items() != n || self.propensity.len() != n {
            return Err(Error::InvalidInput(format!(
                "item universe mismatch: weights {n}, foldin {}, heldout {}, popularity {}",
                foldin.num_items(),
                heldout.num_items(),
                self.propensity.len()
            )));
        }
        if foldin.num_users() != heldout.num_users() {
            return Err(Error::InvalidInput(format!(
                "user count mismatch: foldin {}, heldout {}",
                foldin.num_users(),
                heldout.num_users()
            )));
        }
        // Row-major copy so the per-user score gather is contiguous.
        let mut brows = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                brows[j * n + i] = b.values()[(j, i)];
            }
        }
        Ok((brows, n))
    }

    fn evaluate_user(
        &self,
        brows: &[f64],
        n: usize,
        foldin: &[u32],
        heldout: &[u32],
    ) -> Option<UserMetrics> {
        if heldout.is_empty() {
            return None;
        }
        let mut scores = vec![0.0; n];
        for &j in foldin {
            let row = &brows[j as usize * n..(j as usize + 1) * n];
            for (s, &v) in scores.iter_mut().zip(row) {
                *s += v;
            }
        }
        let max_k = self.config.ks.iter().copied().max().unwrap_or(0);
        let ranking = topn(&scores, foldin, max_k);

        let head: Vec<u32> = heldout
            .iter()
            .copied()
            .filter(|&i| self.partition.is_head(i))
            .collect();
        let tail: Vec<u32> = heldout
            .iter()
            .copied()
            .filter(|&i| !self.partition.is_head(i))
            .collect();

        let mut per_k = Vec::with_capacity(self.config.ks.len());
        let mut head_metrics = Vec::new();
        let mut tail_metrics = Vec::new();
        for &k in &self.config.ks {
            let recall = self.recall_with_config(&ranking, heldout, k);
            let ndcg = ndcg_at_k(&ranking, heldout, k);
            let (recall_u, ndcg_u) = unbiased_metrics_with(
                &ranking,
                heldout,
                &self.propensity,
                k,
                self.config.ips_estimator,
                self.config.recall_denominator,
            );
            per_k.push([recall, ndcg, recall_u, ndcg_u]);
            if !head.is_empty() {
                head_metrics.push((
                    self.recall_with_config(&ranking, &head, k),
                    ndcg_at_k(&ranking, &head, k),
                ));
            }
            if !tail.is_empty() {
                tail_metrics.push((
                    self.recall_with_config(&ranking, &tail, k),
                    ndcg_at_k(&ranking, &tail, k),
                ));
            }
        }
        Some(UserMetrics {
            per_k,
            head: (!head.is_empty()).then_some(head_metrics),
            tail: (!tail.is_empty()).then_some(tail_metrics),
        })
    }

    fn recall_with_config(&self, ranking: &[u32], heldout: &[u32], k: usize) -> f64 {
        let hits = hit_positions(ranking, heldout)
            .iter()
            .filter(|&&(pos, _)| pos <= k)
            .count();
        let denom = match self.config.recall_denominator {
            RecallDenominator::Truncated => k.min(heldout.len()),
            RecallDenominator::Heldout => heldout.len(),
        };
        hits as f64 / denom as f64
    }

    fn aggregate(&self, users: Vec<Option<UserMetrics>>) -> MetricReport {
        let nk = self.config.ks.len();
        let mut aoa = vec![[0.0f64; 4]; nk];
        let mut head = vec![(0.0f64, 0.0f64); nk];
        let mut tail = vec![(0.0f64, 0.0f64); nk];
        let mut users_evaluated = 0usize;
        let mut users_skipped = 0usize;
        let mut users_head = 0usize;
        let mut users_tail = 0usize;

        for user in users.into_iter() {
            let Some(user) = user else {
                users_skipped += 1;
                continue;
            };
            users_evaluated += 1;
            for (acc, m) in aoa.iter_mut().zip(&user.per_k) {
                for (a, v) in acc.iter_mut().zip(m) {
                    *a += v;
                }
            }
            if let Some(hm) = &user.head {
                users_head += 1;
                for (acc, &(r, n)) in head.iter_mut().zip(hm) {
                    acc.0 += r;
                    acc.1 += n;
                }
            }
            if let Some(tm) = &user.tail {
                users_tail += 1;
                for (acc, &(r, n)) in tail.iter_mut().zip(tm) {
                    acc.0 += r;
                    acc.1 += n;
                }
            }
        }

        let avg = |sum: f64, count: usize| if count == 0 { 0.0 } else { sum / count as f64 };
        let metrics = self
            .config
            .ks
            .iter()
            .enumerate()
            .map(|(i, &k)| KMetrics {
                k,
                recall_aoa: avg(aoa[i][0], users_evaluated),
                ndcg_aoa: avg(aoa[i][1], users_evaluated),
                recall_unbiased: avg(aoa[i][2], users_evaluated),
                ndcg_unbiased: avg(aoa[i][3], users_evaluated),
                recall_head: avg(head[i].0, users_head),
                ndcg_head: avg(head[i].1, users_head),
                recall_tail: avg(tail[i].0, users_tail),
                ndcg_tail: avg(tail[i].1, users_tail),
            })
            .collect();

        MetricReport {
            metrics,
            users_evaluated,
            users_skipped,
            users_head,
            users_tail,
        }
    }
}

/// Which held-out part of a strong split to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Val,
    Test,
}

/// Evaluates a model on a strong split: propensities and the head/tail
/// partition come from the training users, fold-in rows are scored, and
/// held-out rows are the relevance labels.
pub fn evaluate_model_strong(
    b: &WeightMatrix,
    split: &StrongSplit,
    part: SplitPart,
    config: &EvalConfig,
) -> Result<MetricReport> {
    let popularity = item_popularity(&split.train);
    let evaluator = Evaluator::new(&popularity, config.clone())?;
    let (foldin, heldout) = match part {
        SplitPart::Val => (&split.val_foldin, &split.val_heldout),
        SplitPart::Test => (&split.test_foldin, &split.test_heldout),
    };
    evaluator.evaluate(b, foldin, heldout)
}

/// Evaluates a model on a weak split: each user's full training row is the
/// fold-in and their test items are the relevance labels.
pub fn evaluate_model_weak(
    b: &WeightMatrix,
    split: &WeakSplit,
    config: &EvalConfig,
) -> Result<MetricReport> {
    let popularity = item_popularity(&split.train);
    let evaluator = Evaluator::new(&popularity, config.clone())?;
    evaluator.evaluate(b, &split.train, &split.test)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    use super::*;
    use crate::synth::random_interactions;

    fn weights(values: DMatrix<f64>) -> WeightMatrix {
        WeightMatrix::from_values(values).unwrap()
    }

    fn log2(x: f64) -> f64 {
        x.log2()
    }

    #[test]
    fn predict_scores_by_hand() {
        let b = weights(DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]));
        assert_eq!(predict_scores(&[0], &b), vec![0.0, 1.0 / 3.0]);
        assert_eq!(predict_scores(&[], &b), vec![0.0, 0.0]);
    }

    #[test]
    fn predict_scores_identity_reproduces_foldin() {
        let b = weights(DMatrix::identity(4, 4));
        assert_eq!(predict_scores(&[1, 3], &b), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn topn_breaks_ties_by_lower_index() {
        assert_eq!(topn(&[0.5, 0.9, 0.9], &[], 2), vec![1, 2]);
    }

    #[test]
    fn topn_masks_foldin() {
        let ranking = topn(&[0.5, 0.9, 0.1], &[1], 3);
        assert_eq!(ranking, vec![0, 2]);
    }

    #[test]
    fn topn_large_n_returns_remaining_catalog() {
        let ranking = topn(&[0.1, 0.2, 0.3, 0.4], &[3], 99);
        assert_eq!(ranking, vec![2, 1, 0]);
    }

    #[test]
    fn recall_by_hand() {
        // heldout {a=0, b=2}, top-3 [a, x, b]: both hit, denominator min(3, 2).
        assert_eq!(recall_at_k(&[0, 1, 2], &[0, 2], 3), 1.0);
        assert_eq!(recall_at_k(&[1, 3, 4], &[0, 2], 3), 0.0);
        assert_eq!(recall_at_k(&[0, 2, 4], &[0, 2], 5), 1.0);
    }

    #[test]
    fn ndcg_by_hand() {
        // heldout {a=0, b=2}, top-3 [a, x, b]:
        // DCG = 1/log2(2) + 1/log2(4), IDCG = 1/log2(2) + 1/log2(3).
        let got = ndcg_at_k(&[0, 1, 2], &[0, 2], 3);
        let expected = (1.0 + 1.0 / log2(4.0)) / (1.0 + 1.0 / log2(3.0));
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.9197).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&[0, 2, 1], &[0, 2], 3), 1.0);
    }

    #[test]
    fn ips_uniform_equals_aoa_exactly() {
        let prop = PropensityModel::uniform(5);
        let ranking = [0u32, 3, 1, 4];
        let heldout = [1u32, 3];
        for k in [1, 2, 3, 4] {
            let (r_u, n_u) = unbiased_metrics(&ranking, &heldout, &prop, k);
            assert_eq!(r_u, recall_at_k(&ranking, &heldout, k));
            assert_eq!(n_u, ndcg_at_k(&ranking, &heldout, k));
        }
    }

    #[test]
    fn ips_single_heldout_self_normalizes_to_one() {
        let prop = PropensityModel {
            gamma: 2.0,
            propensity: vec![0.5, 1.0],
        };
        let (r_u, n_u) = unbiased_metrics(&[0, 1], &[0], &prop, 1);
        assert_eq!(r_u, 1.0);
        assert_eq!(n_u, 1.0);
    }

    #[test]
    fn ips_two_heldout_by_hand() {
        // Propensities {0.5, 1.0}; only the low-propensity item hit at rank 1:
        // recall_u = (1/0.5) / ((1/0.5) + (1/1.0)) = 2/3.
        let prop = PropensityModel {
            gamma: 2.0,
            propensity: vec![0.5, 1.0, 1.0],
        };
        let (r_u, _) = unbiased_metrics(&[0, 2], &[0, 1], &prop, 2);
        assert!((r_u - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ips_fixed_ideal_keeps_unweighted_denominator() {
        let prop = PropensityModel {
            gamma: 2.0,
            propensity: vec![0.5, 1.0, 1.0],
        };
        let (r_u, n_u) = unbiased_metrics_with(
            &[0, 2],
            &[0, 1],
            &prop,
            2,
            IpsEstimator::FixedIdeal,
            RecallDenominator::Truncated,
        );
        // Hit weight 2 over the unweighted ideal of 2 items.
        assert!((r_u - 1.0).abs() < 1e-15);
        let expected_ndcg = 2.0 / (1.0 + 1.0 / log2(3.0));
        assert!((n_u - expected_ndcg).abs() < 1e-15);
    }

    #[test]
    fn propensity_from_popularity() {
        let p = PropensityModel::from_popularity(&[4, 3, 2, 0], 2.0).unwrap();
        assert_eq!(p.propensity()[0], 1.0);
        assert!((p.propensity()[1] - 0.75f64.powf(1.5)).abs() < 1e-15);
        assert_eq!(p.propensity()[3], PROPENSITY_FLOOR);
        assert!(PropensityModel::from_popularity(&[1], -1.0).is_err());
    }

    #[test]
    fn group_metrics_by_hand() {
        // heldout {a=0 (head), b=2 (tail)}, ranking [a, x, b], K=3.
        let partition = head_tail_partition(&[9, 1, 1], 0.34).unwrap();
        assert!(partition.is_head(0) && !partition.is_head(2));
        let gm = group_metrics(&[0, 1, 2], &[0, 2], &partition, 3);
        let (hr, hn) = gm.head.unwrap();
        assert_eq!((hr, hn), (1.0, 1.0));
        let (tr, tn) = gm.tail.unwrap();
        assert_eq!(tr, 1.0);
        assert!((tn - 0.5).abs() < 1e-15);
    }

    #[test]
    fn group_metrics_excludes_empty_groups() {
        let partition = head_tail_partition(&[9, 1, 1], 0.34).unwrap();
        let gm = group_metrics(&[0, 1, 2], &[0], &partition, 3);
        assert!(gm.head.is_some());
        assert!(gm.tail.is_none());
    }

    #[test]
    fn group_metrics_degenerate_partition_equals_aoa() {
        let partition = head_tail_partition(&[1, 1, 1], 0.0).unwrap();
        assert!(partition.head().is_empty());
        let gm = group_metrics(&[0, 1, 2], &[0, 2], &partition, 3);
        assert!(gm.head.is_none());
        let (tr, tn) = gm.tail.unwrap();
        assert_eq!(tr, recall_at_k(&[0, 1, 2], &[0, 2], 3));
        assert_eq!(tn, ndcg_at_k(&[0, 1, 2], &[0, 2], 3));
    }

    /// Five-user golden fixture exercising exclusions, ties, IPS, and the
    /// head/tail views. All expected values derived by hand.
    #[test]
    fn evaluate_golden_fixture() {
        let b = weights(DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.9, 0.1, 0.0, //
                0.9, 0.0, 0.2, 0.3, //
                0.0, 0.2, 0.0, 0.8, //
                0.0, 0.3, 0.8, 0.0,
            ],
        ));
        let foldin = InteractionMatrix::from_rows(
            4,
            vec![vec![0], vec![1], vec![2], vec![3], vec![0, 1]],
        )
        .unwrap();
        let heldout = InteractionMatrix::from_rows(
            4,
            vec![vec![1], vec![0, 3], vec![3], vec![], vec![2, 3]],
        )
        .unwrap();
        // Train popularity [4,3,2,1]: head = {0}, propensities
        // [1, 0.75^1.5, 0.5^1.5, 0.25^1.5] → weights [1, ~1.5396, 2√2, 8].
        let evaluator = Evaluator::new(
            &[4, 3, 2, 1],
            EvalConfig {
                ks: vec![1, 2],
                gamma: 2.0,
                head_fraction: 0.25,
                ..EvalConfig::default()
            },
        )
        .unwrap();
        let report = evaluator.evaluate(&b, &foldin, &heldout).unwrap();

        assert_eq!(report.users_evaluated, 4);
        assert_eq!(report.users_skipped, 1);
        assert_eq!(report.users_head, 1);
        assert_eq!(report.users_tail, 4);

        let w2 = 1.0 / 0.5f64.powf(1.5); // 2√2
        let k1 = report.at_k(1).unwrap();
        assert_eq!(k1.recall_aoa, 1.0);
        assert_eq!(k1.ndcg_aoa, 1.0);
        let expected_u_k1 = (1.0 + 0.125 + 1.0 + w2 / 8.0) / 4.0;
        assert!((k1.recall_unbiased - expected_u_k1).abs() < 1e-12);
        assert!((k1.ndcg_unbiased - expected_u_k1).abs() < 1e-12);
        assert_eq!(k1.recall_head, 1.0);
        assert_eq!(k1.ndcg_head, 1.0);
        assert_eq!(k1.recall_tail, 0.75);
        assert_eq!(k1.ndcg_tail, 0.75);

        let k2 = report.at_k(2).unwrap();
        assert_eq!(k2.recall_aoa, 1.0);
        assert_eq!(k2.ndcg_aoa, 1.0);
        assert_eq!(k2.recall_unbiased, 1.0);
        // u1 hit its low-weight item first and u4 its low-weight item too,
        // so both fall short of the weight-sorted ideal placement.
        let u1_ndcg_u = (1.0 + 8.0 / log2(3.0)) / (8.0 + 1.0 / log2(3.0));
        let u4_ndcg_u = (w2 + 8.0 / log2(3.0)) / (8.0 + w2 / log2(3.0));
        assert!((k2.ndcg_unbiased - (2.0 + u1_ndcg_u + u4_ndcg_u) / 4.0).abs() < 1e-12);
        assert_eq!(k2.recall_head, 1.0);
        assert_eq!(k2.ndcg_head, 1.0);
        assert_eq!(k2.recall_tail, 1.0);
        assert!((k2.ndcg_tail - (3.0 + 1.0 / log2(3.0)) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_uniform_propensities_match_aoa_bitwise() {
        let x = random_interactions(30, 12, 0.4, 0);
        let split = crate::interactions::strong_split(&x, 0.2, 0.8, 1).unwrap();
        let g = crate::gram::gram(&split.train);
        let out = crate::solvers::solve_ease(&g, 1.0).unwrap();
        // Uniform popularity → propensities exactly 1 → IPS sums equal AOA sums.
        let evaluator = Evaluator::new(&[7u64; 12], EvalConfig::default()).unwrap();
        let report = evaluator
            .evaluate(&out.weights, &split.val_foldin, &split.val_heldout)
            .unwrap();
        for m in &report.metrics {
            assert_eq!(m.recall_aoa, m.recall_unbiased);
            assert_eq!(m.ndcg_aoa, m.ndcg_unbiased);
        }
    }

    #[test]
    fn evaluate_zero_weights_rank_by_index() {
        let b = weights(DMatrix::zeros(5, 5));
        let scores = predict_scores(&[0], &b);
        assert_eq!(topn(&scores, &[0], 3), vec![1, 2, 3]);
    }

    #[test]
    fn evaluate_identity_weights_recall_zero() {
        // B = I scores only fold-in items, which are masked, so the ranking
        // is index order and a high-index held-out item is missed.
        let b = weights(DMatrix::identity(5, 5));
        let foldin = InteractionMatrix::from_rows(5, vec![vec![0]]).unwrap();
        let heldout = InteractionMatrix::from_rows(5, vec![vec![4]]).unwrap();
        let evaluator = Evaluator::new(
            &[1, 1, 1, 1, 1],
            EvalConfig {
                ks: vec![2],
                ..EvalConfig::default()
            },
        )
        .unwrap();
        let report = evaluator.evaluate(&b, &foldin, &heldout).unwrap();
        assert_eq!(report.at_k(2).unwrap().recall_aoa, 0.0);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn evaluate_par_matches_seq_bitwise() {
        let x = random_interactions(60, 20, 0.3, 5);
        let split = crate::interactions::strong_split(&x, 0.3, 0.8, 2).unwrap();
        let g = crate::gram::gram(&split.train);
        let out = crate::solvers::solve_rlae(&g, 2.0, 0.3).unwrap();
        let pop = item_popularity(&split.train);
        let evaluator = Evaluator::new(&pop, EvalConfig::default()).unwrap();
        let a = evaluator
            .evaluate_seq(&out.weights, &split.test_foldin, &split.test_heldout)
            .unwrap();
        let b = evaluator
            .evaluate_par(&out.weights, &split.test_foldin, &split.test_heldout)
            .unwrap();
        for (ma, mb) in a.metrics.iter().zip(&b.metrics) {
            assert_eq!(ma.recall_aoa, mb.recall_aoa);
            assert_eq!(ma.ndcg_unbiased, mb.ndcg_unbiased);
            assert_eq!(ma.ndcg_tail, mb.ndcg_tail);
        }
    }

    #[test]
    fn evaluate_model_wrappers_run() {
        let x = random_interactions(40, 15, 0.3, 9);
        let strong = crate::interactions::strong_split(&x, 0.2, 0.8, 3).unwrap();
        let g = crate::gram::gram(&strong.train);
        let out = crate::solvers::solve_ease(&g, 1.0).unwrap();
        let cfg = EvalConfig {
            ks: vec![5],
            ..EvalConfig::default()
        };
        let val = evaluate_model_strong(&out.weights, &strong, SplitPart::Val, &cfg).unwrap();
        let test = evaluate_model_strong(&out.weights, &strong, SplitPart::Test, &cfg).unwrap();
        assert!(val.users_evaluated + val.users_skipped == strong.val_users.len());
        assert!(test.users_evaluated + test.users_skipped == strong.test_users.len());

        let weak = crate::interactions::weak_split(&x, 0.2, 3).unwrap();
        let gw = crate::gram::gram(&weak.train);
        let outw = crate::solvers::solve_ease(&gw, 1.0).unwrap();
        let report = evaluate_model_weak(&outw.weights, &weak, &cfg).unwrap();
        assert_eq!(
            report.users_evaluated + report.users_skipped,
            x.num_users()
        );
    }

    #[test]
    fn csv_header_and_values_align() {
        let header = MetricReport::csv_header(&[1, 2]);
        assert_eq!(header.split(',').count(), 2 * 8 + 4);
        let report = MetricReport {
            metrics: vec![
                KMetrics {
                    k: 1,
                    recall_aoa: 0.5,
                    ndcg_aoa: 0.5,
                    recall_unbiased: 0.5,
                    ndcg_unbiased: 0.5,
                    recall_head: 0.0,
                    ndcg_head: 0.0,
                    recall_tail: 1.0,
                    ndcg_tail: 1.0,
                },
                KMetrics {
                    k: 2,
                    recall_aoa: 1.0,
                    ndcg_aoa: 1.0,
                    recall_unbiased: 1.0,
                    ndcg_unbiased: 1.0,
                    recall_head: 0.0,
                    ndcg_head: 0.0,
                    recall_tail: 1.0,
                    ndcg_tail: 1.0,
                },
            ],
            users_evaluated: 3,
            users_skipped: 1,
            users_head: 0,
            users_tail: 3,
        };
        assert_eq!(report.csv_values().split(',').count(), 2 * 8 + 4);
    }

    proptest! {
        #[test]
        fn metrics_stay_in_unit_interval(seed in 0u64..50) {
            let x = random_interactions(20, 10, 0.4, seed);
            let split = crate::interactions::strong_split(&x, 0.3, 0.8, seed).unwrap();
            let g = crate::gram::gram(&split.train);
            let out = crate::solvers::solve_rdlae(
                &g,
                &crate::gram::dropout_diagonal(&g, 0.3, 1.0).unwrap(),
                0.4,
            ).unwrap();
            let pop = item_popularity(&split.train);
            let evaluator = Evaluator::new(&pop, EvalConfig {
                ks: vec![1, 3, 10],
                ..EvalConfig::default()
            }).unwrap();
            let report = evaluator
                .evaluate(&out.weights, &split.val_foldin, &split.val_heldout)
                .unwrap();
            for m in &report.metrics {
                for v in [m.recall_aoa, m.ndcg_aoa, m.recall_unbiased, m.ndcg_unbiased,
                          m.recall_head, m.ndcg_head, m.recall_tail, m.ndcg_tail] {
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "metric {v} out of range");
                }
            }
        }

        #[test]
        fn recall_is_monotone_in_k(seed in 0u64..50) {
            // Monotonicity holds for the plain |heldout| denominator; the
            // truncated variant is only monotone once K reaches |heldout|,
            // because its denominator grows alongside the hit count below that.
            let x = random_interactions(1, 15, 0.5, seed);
            let heldout: Vec<u32> = x.row(0).to_vec();
            prop_assume!(!heldout.is_empty());
            let scores: Vec<f64> = (0..15).map(|i| ((seed + i) % 7) as f64).collect();
            let ranking = topn(&scores, &[], 15);
            let mut prev_plain = 0.0;
            let mut prev_truncated = 0.0;
            for k in 1..=15 {
                let hits = ranking[..k].iter().filter(|i| heldout.contains(i)).count();
                let plain = hits as f64 / heldout.len() as f64;
                prop_assert!(plain + 1e-12 >= prev_plain);
                prev_plain = plain;
                if k >= heldout.len() {
                    let truncated = recall_at_k(&ranking, &heldout, k);
                    prop_assert!(truncated + 1e-12 >= prev_truncated);
                    prev_truncated = truncated;
                }
            }
        }

        #[test]
        fn topn_is_invariant_under_positive_affine_transforms(
            seed in 0u64..50, c in 0.1f64..10.0, d in -5.0f64..5.0
        ) {
            let scores: Vec<f64> = (0..12).map(|i| (((seed + i) * 2654435761) % 97) as f64 / 7.0).collect();
            let transformed: Vec<f64> = scores.iter().map(|&s| c * s + d).collect();
            prop_assert_eq!(topn(&scores, &[2, 5], 8), topn(&transformed, &[2, 5], 8));
        }
    }
}
