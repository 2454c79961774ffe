//! Implicit-feedback interaction data: loading, activity filtering and
//! per-context train/validation/test splits.

mod io;
pub mod synthetic;

use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub use io::{load_interactions, load_split, parse_interactions, write_split, SplitMeta};

/// Contexts (users, sessions, ...) with their sets of positive items.
///
/// Item and context indices are dense. `positives[c]` is sorted and
/// duplicate free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    positives: Vec<Vec<usize>>,
    context_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl InteractionDataset {
    pub fn empty() -> Self {
        Self {
            positives: Vec::new(),
            context_ids: Vec::new(),
            item_ids: Vec::new(),
        }
    }

    /// Build from raw per-context lists over `num_items` items. Lists are
    /// sorted and deduplicated; identifiers are the decimal indices.
    pub fn from_positives(positives: Vec<Vec<usize>>, num_items: usize) -> Result<Self> {
        let context_ids = (0..positives.len()).map(|c| c.to_string()).collect();
        let item_ids = (0..num_items).map(|i| i.to_string()).collect();
        Self::with_ids(positives, context_ids, item_ids)
    }

    pub fn with_ids(
        mut positives: Vec<Vec<usize>>,
        context_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<Self> {
        if positives.len() != context_ids.len() {
            return Err(Error::Shape {
                what: "context ids".into(),
                expected: positives.len().to_string(),
                actual: context_ids.len().to_string(),
            });
        }
        let m = item_ids.len();
        for (c, list) in positives.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if let Some(&bad) = list.last().filter(|&&i| i >= m) {
                return Err(Error::Contract(format!(
                    "context {c} references item {bad} but there are {m} items"
                )));
            }
        }
        Ok(Self {
            positives,
            context_ids,
            item_ids,
        })
    }

    pub fn num_contexts(&self) -> usize {
        self.positives.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn positives(&self, c: usize) -> &[usize] {
        &self.positives[c]
    }

    pub fn all_positives(&self) -> &[Vec<usize>] {
        &self.positives
    }

    pub fn num_interactions(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    pub fn context_ids(&self) -> &[String] {
        &self.context_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn contains(&self, c: usize, i: usize) -> bool {
        self.positives[c].binary_search(&i).is_ok()
    }

    /// Same contexts and items, new positive lists.
    fn with_lists(&self, positives: Vec<Vec<usize>>) -> Self {
        Self {
            positives,
            context_ids: self.context_ids.clone(),
            item_ids: self.item_ids.clone(),
        }
    }
}

/// Drop contexts with fewer than `min_count` positives. Items are kept, so
/// the item index space is unchanged. A single pass; no fixed-point iteration.
pub fn filter_min_interactions(ds: &InteractionDataset, min_count: usize) -> InteractionDataset {
    let (positives, context_ids) = ds
        .positives
        .iter()
        .zip(&ds.context_ids)
        .filter(|(p, _)| p.len() >= min_count)
        .map(|(p, id)| (p.clone(), id.clone()))
        .unzip();
    InteractionDataset {
        positives,
        context_ids,
        item_ids: ds.item_ids.clone(),
    }
}

/// Train/validation/test parts over a shared context and item index space.
///
/// Parts may hold contexts with empty lists (a context with one positive has
/// no test items, for example).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: InteractionDataset,
    pub validation: InteractionDataset,
    pub test: InteractionDataset,
    pub seed: u64,
    pub train_frac: f64,
    pub valid_frac: f64,
}

/// Sizes of the three parts for a context with `n` positives.
///
/// `ceil(train_frac * n)` positives form the training pool and the rest go to
/// test; `floor(valid_frac * pool)` of the pool then move to validation.
pub fn split_sizes(n: usize, train_frac: f64, valid_frac: f64) -> (usize, usize, usize) {
    if n == 0 {
        return (0, 0, 0);
    }
    // The epsilons absorb representation error such as 0.7 * 10 = 7.000000000000001.
    let pool = ((train_frac * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let valid = ((valid_frac * pool as f64 + 1e-9).floor() as usize).min(pool - 1);
    (pool - valid, valid, n - pool)
}

pub fn split(
    ds: &InteractionDataset,
    train_frac: f64,
    valid_frac: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_frac}"
        )));
    }
    if !(0.0..1.0).contains(&valid_frac) {
        return Err(Error::Config(format!(
            "validation fraction must be in [0, 1), got {valid_frac}"
        )));
    }

    let n = ds.num_contexts();
    let mut train = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut test = Vec::with_capacity(n);
    for (c, items) in ds.positives.iter().enumerate() {
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng::stream(seed, Purpose::Split, 0, c as u64));
        let (n_train, n_valid, _) = split_sizes(items.len(), train_frac, valid_frac);

        let mut te = shuffled.split_off(n_train + n_valid);
        let mut tr = shuffled.split_off(n_valid);
        let mut va = shuffled;
        tr.sort_unstable();
        va.sort_unstable();
        te.sort_unstable();
        train.push(tr);
        valid.push(va);
        test.push(te);
    }

    Ok(DatasetSplit {
        train: ds.with_lists(train),
        validation: ds.with_lists(valid),
        test: ds.with_lists(test),
        seed,
        train_frac,
        valid_frac,
    })
}

/// Maps external identifiers to dense indices in order of first appearance.
#[derive(Debug, Default)]
pub(crate) struct Interner {
    index: HashMap<String, usize>,
    ids: Vec<String>,
}

impl Interner {
    pub(crate) fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id.to_owned(), i);
        self.ids.push(id.to_owned());
        i
    }

    pub(crate) fn len(&self) -> usize {
        self.ids.len()
    }

    pub(crate) fn into_ids(self) -> Vec<String> {
        self.ids
    }
}
