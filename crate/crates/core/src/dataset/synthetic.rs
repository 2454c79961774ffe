//! Synthetic interaction data from a planted latent-factor model.
//!
//! Used by tests, benchmarks and the bundled toy dataset. Each context draws
//! its positives without replacement from a softmax over
//! `sharpness * <u_c, v_i> + popularity_i`.

use rand::Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};

use super::InteractionDataset;
use crate::error::Result;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub contexts: usize,
    pub items: usize,
    /// Mean positives per context; actual counts vary in `[mean/2, 3*mean/2]`.
    pub mean_positives: usize,
    pub latent_dim: usize,
    pub sharpness: f64,
    /// Zipf-like exponent of item popularity.
    pub popularity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            contexts: 200,
            items: 500,
            mean_positives: 20,
            latent_dim: 8,
            sharpness: 2.0,
            popularity: 0.5,
            seed: 0,
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<InteractionDataset> {
    let r = spec.latent_dim;
    let mut rng = rng::stream(spec.seed, Purpose::Synthetic, 0, 0);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let scale = 1.0 / (r as f64).sqrt();
    let items: Vec<f64> = (0..spec.items * r).map(|_| normal() * scale).collect();
    let contexts: Vec<f64> = (0..spec.contexts * r).map(|_| normal()).collect();
    let pop: Vec<f64> = (0..spec.items)
        .map(|i| -spec.popularity * ((i + 1) as f64).ln())
        .collect();

    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let mut lists = Vec::with_capacity(spec.contexts);
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(spec.items);
    for c in 0..spec.contexts {
        let mut crng = rng::stream(spec.seed, Purpose::Synthetic, 1, c as u64);
        let lo = (spec.mean_positives / 2).max(1);
        let hi = (spec.mean_positives * 3 / 2).max(lo);
        let count = crng.random_range(lo..=hi).min(spec.items);
        let u = &contexts[c * r..(c + 1) * r];
        keyed.clear();
        for i in 0..spec.items {
            let v = &items[i * r..(i + 1) * r];
            let logit = spec.sharpness * crate::math::dot(u, v) + pop[i];
            keyed.push((logit + gumbel.sample(&mut crng), i));
        }
        // Gumbel top-k is a draw without replacement from the softmax.
        keyed.select_nth_unstable_by(count.saturating_sub(1), |a, b| b.0.total_cmp(&a.0));
        lists.push(keyed[..count].iter().map(|&(_, i)| i).collect());
    }
    InteractionDataset::from_positives(lists, spec.items)
}
