//! Top-k ranking and NDCG@k with binary relevance.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplit, InteractionDataset};
use crate::discriminator::DiscriminatorParams;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub mean_ndcg: f64,
    pub num_evaluated: usize,
    /// Keyed by dense context index.
    pub per_context_ndcg: BTreeMap<usize, f64>,
}

/// Descending score, ascending index.
#[inline]
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Top `k` items from `scores`, skipping items flagged in `excluded`.
pub fn top_k(scores: &[f64], excluded: &[bool], k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded.get(*i).copied().unwrap_or(false))
        .map(|(i, &s)| (s, i))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, rank_order);
        cand.truncate(k);
    }
    cand.sort_unstable_by(rank_order);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Top-`k` items for context `c` by score, ties to the lower index. Returns
/// fewer than `k` items when not enough remain after exclusion.
pub fn rank_items(disc: &DiscriminatorParams, c: usize, exclude: &[usize], k: usize) -> Vec<usize> {
    let mut scores = vec![0.0; disc.num_items()];
    disc.score_all(c, &mut scores);
    let mut mask = vec![false; disc.num_items()];
    for &i in exclude {
        mask[i] = true;
    }
    top_k(&scores, &mask, k)
}

/// `1 / log2(r + 1)` for 1-based rank `r`.
#[inline]
fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG@k of `ranked` against a sorted, duplicate-free `relevant` set.
/// Returns 0 for an empty relevant set.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(r, _)| discount(r + 1))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    dcg / idcg
}

/// NDCG@k on `target`, ranking all items except the positives of every
/// dataset in `masks`. Contexts with no target positives are skipped.
pub fn evaluate_against(
    disc: &DiscriminatorParams,
    target: &InteractionDataset,
    masks: &[&InteractionDataset],
    k: usize,
    exec: Exec,
) -> EvalReport {
    let m = disc.num_items();
    let per = exec.map(target.num_contexts(), |c| {
        let relevant = target.positives(c);
        if relevant.is_empty() {
            return None;
        }
        let mut scores = vec![0.0; m];
        disc.score_all(c, &mut scores);
        let mut mask = vec![false; m];
        for ds in masks {
            for &i in ds.positives(c) {
                mask[i] = true;
            }
        }
        let ranked = top_k(&scores, &mask, k);
        Some(ndcg_at_k(&ranked, relevant, k))
    });
    let per_context_ndcg: BTreeMap<usize, f64> = per
        .into_iter()
        .enumerate()
        .filter_map(|(c, v)| v.map(|v| (c, v)))
        .collect();
    let n = per_context_ndcg.len();
    let mean_ndcg = if n == 0 {
        0.0
    } else {
        per_context_ndcg.values().sum::<f64>() / n as f64
    };
    EvalReport {
        k,
        mean_ndcg,
        num_evaluated: n,
        per_context_ndcg,
    }
}

/// Test-set NDCG@k. With `mask_train`, the training and validation positives
/// of each context are removed from its ranking.
pub fn evaluate(
    disc: &DiscriminatorParams,
    split: &DatasetSplit,
    k: usize,
    mask_train: bool,
    exec: Exec,
) -> EvalReport {
    let masks: Vec<&InteractionDataset> = if mask_train {
        vec![&split.train, &split.validation]
    } else {
        Vec::new()
    };
    evaluate_against(disc, &split.test, &masks, k, exec)
}

/// Validation NDCG@k with the training positives masked.
pub fn evaluate_validation(
    disc: &DiscriminatorParams,
    split: &DatasetSplit,
    k: usize,
    exec: Exec,
) -> EvalReport {
    evaluate_against(disc, &split.validation, &[&split.train], k, exec)
}
