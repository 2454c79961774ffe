//! Per-draw timing of the alias-based generator against a naive sampler that
//! walks the full softmax over all items for every draw.

use std::hint::black_box;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::generator::{rebuild_tables, GeneratorParams};
use crate::math::log_sum_exp;
use crate::par::Exec;
use crate::rng::{self, Purpose};

/// Generator draws per context request, as when a context asks for its
/// negatives.
const BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerBenchRow {
    pub items: usize,
    pub alias_ns: f64,
    pub naive_ns: f64,
}

#[derive(Debug, Clone)]
pub struct SamplerBenchSettings {
    pub contexts: usize,
    pub states: usize,
    /// Generator draws timed per repetition.
    pub alias_draws: usize,
    /// Upper bound on item-visits per naive repetition; the draw count is
    /// this divided by the item count, at least 16.
    pub naive_budget: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for SamplerBenchSettings {
    fn default() -> Self {
        Self {
            contexts: 64,
            states: 32,
            alias_draws: 1_000_000,
            naive_budget: 50_000_000,
            repeats: 5,
            seed: 0,
        }
    }
}

/// Inverse-CDF draw from `softmax(logits)` by a linear scan.
pub fn naive_softmax_draw<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let lse = log_sum_exp(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &l) in logits.iter().enumerate() {
        acc += (l - lse).exp();
        if u < acc {
            return i;
        }
    }
    logits.len() - 1
}

fn min_ns_per_draw(repeats: usize, draws: usize, mut run: impl FnMut()) -> f64 {
    (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            run();
            t.elapsed().as_nanos() as f64 / draws as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// Time both samplers for a generator over `items` items.
pub fn bench_sampler_row(items: usize, s: &SamplerBenchSettings) -> SamplerBenchRow {
    let gen = GeneratorParams::init_random(s.contexts, items, s.states, s.seed);
    let tables = rebuild_tables(&gen, Exec::Sequential).expect("random generator has full support");
    let mut rng = rng::stream(s.seed, Purpose::Bench, items as u64, 0);

    let alias_ns = min_ns_per_draw(s.repeats, s.alias_draws / BLOCK * BLOCK, || {
        let mut acc = 0usize;
        for d in 0..s.alias_draws / BLOCK {
            for i in tables.sample_items(d % s.contexts, BLOCK, &mut rng) {
                acc ^= i;
            }
        }
        black_box(acc);
    });

    let logits: Vec<f64> = (0..items).map(|i| gen.q_item_prob(0, i).ln()).collect();
    let naive_draws = (s.naive_budget / items).max(16);
    let naive_ns = min_ns_per_draw(s.repeats, naive_draws, || {
        let mut acc = 0usize;
        for _ in 0..naive_draws {
            acc ^= naive_softmax_draw(&logits, &mut rng);
        }
        black_box(acc);
    });

    SamplerBenchRow {
        items,
        alias_ns,
        naive_ns,
    }
}

pub fn bench_sampler(grid: &[usize], s: &SamplerBenchSettings) -> Vec<SamplerBenchRow> {
    grid.iter().map(|&m| bench_sampler_row(m, s)).collect()
}

/// Per-draw nanoseconds of a single alias table over `size` random weights.
pub fn alias_draw_ns(size: usize, draws: usize, repeats: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, Purpose::Bench, size as u64, 1);
    let weights: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
    let table = AliasTable::build(&weights).expect("positive weights");
    min_ns_per_draw(repeats, draws, || {
        let mut acc = 0usize;
        for _ in 0..draws {
            acc ^= table.draw(&mut rng);
        }
        black_box(acc);
    })
}
