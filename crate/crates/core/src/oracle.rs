//! Exhaustive O(NMK) reference computations for small instances.
//!
//! These are the ground truth for the sampled estimators and the optimality
//! properties checked in tests; nothing here is meant to scale.

use crate::dataset::InteractionDataset;
use crate::discriminator::DiscriminatorParams;
use crate::error::{Error, Result};
use crate::generator::{GeneratorEstimates, GeneratorParams};
use crate::math::{log_sum_exp, softmax_in_place, softplus};

/// A small random problem: discriminator, generator and a dataset.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub disc: DiscriminatorParams,
    pub gen: GeneratorParams,
    pub temperature: f64,
    pub dataset: InteractionDataset,
}

impl OracleInstance {
    /// Random parameters with context embeddings scaled by `spread` so that
    /// scores vary by O(1); each context gets one to three positives.
    pub fn random(
        num_contexts: usize,
        num_items: usize,
        states: usize,
        dim: usize,
        temperature: f64,
        spread: f64,
        seed: u64,
    ) -> Self {
        let mut disc = DiscriminatorParams::init_random(num_contexts, num_items, dim, seed);
        for c in 0..num_contexts {
            disc.context_mut(c).iter_mut().for_each(|x| *x *= spread * 100.0);
        }
        for i in 0..num_items {
            disc.item_mut(i).iter_mut().for_each(|x| *x *= 100.0);
        }
        let gen = GeneratorParams::init_random(num_contexts, num_items, states, seed);
        let positives = (0..num_contexts)
            .map(|c| {
                let n = 1 + (c + seed as usize) % 3;
                (0..n).map(|j| (c * 7 + j * 3 + seed as usize) % num_items).collect()
            })
            .collect();
        let dataset = InteractionDataset::from_positives(positives, num_items)
            .expect("indices are reduced modulo the item count");
        Self {
            disc,
            gen,
            temperature,
            dataset,
        }
    }
}

fn f_row(disc: &DiscriminatorParams, c: usize) -> Vec<f64> {
    (0..disc.num_items()).map(|i| disc.f(c, i)).collect()
}

/// `argmax_i g(c, i)`, ties to the lowest index.
pub fn exact_hard_optimum(disc: &DiscriminatorParams, c: usize) -> usize {
    let mut best = 0;
    let mut best_g = f64::NEG_INFINITY;
    for i in 0..disc.num_items() {
        let g = disc.score(c, i);
        if g > best_g {
            best = i;
            best_g = g;
        }
    }
    best
}

/// `P*(.|c) = softmax(f_c / T)`.
pub fn exact_soft_optimum(disc: &DiscriminatorParams, c: usize, temperature: f64) -> Vec<f64> {
    let mut v: Vec<f64> = f_row(disc, c).iter().map(|f| f / temperature).collect();
    softmax_in_place(&mut v);
    v
}

/// `log Z_c = log sum_i exp(f_c(i) / T)`.
pub fn exact_log_z(disc: &DiscriminatorParams, c: usize, temperature: f64) -> f64 {
    let v: Vec<f64> = f_row(disc, c).iter().map(|f| f / temperature).collect();
    log_sum_exp(&v)
}

/// `mu_c = E_{P*}[f_c]`.
pub fn exact_mu(disc: &DiscriminatorParams, c: usize, temperature: f64) -> f64 {
    let p = exact_soft_optimum(disc, c, temperature);
    p.iter().zip(f_row(disc, c)).map(|(a, b)| a * b).sum()
}

/// The adversarial objective with the empirical positive distribution
/// uniform over each context's positives:
/// `sum_c mean_{i in I_c} softplus(-g(c,i)) + sum_j P_G(j|c) f_c(j)`.
/// Contexts without positives are skipped.
pub fn exact_objective(
    disc: &DiscriminatorParams,
    gen_dist: &[Vec<f64>],
    dataset: &InteractionDataset,
) -> f64 {
    let mut total = 0.0;
    for c in 0..dataset.num_contexts() {
        let pos = dataset.positives(c);
        if pos.is_empty() {
            continue;
        }
        let data: f64 =
            pos.iter().map(|&i| softplus(-disc.score(c, i))).sum::<f64>() / pos.len() as f64;
        let adv: f64 = gen_dist[c]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(j, &p)| p * disc.f(c, j))
            .sum();
        total += data + adv;
    }
    total
}

/// Exact delta-method variance, or a signal that it is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Finite(f64),
    /// Some item needed by the optimum has zero proposal mass.
    Infinite { context: usize, item: usize },
}

impl Variance {
    pub fn value(self) -> f64 {
        match self {
            Variance::Finite(v) => v,
            Variance::Infinite { .. } => f64::INFINITY,
        }
    }
}

/// `sum_c (1/|S_c|) sum_i P*(i|c)^2 (f_c(i) - mu_c)^2 / Q(i|c)` over the
/// contexts of `proposals`.
pub fn exact_variance(
    disc: &DiscriminatorParams,
    proposals: &[Vec<f64>],
    temperature: f64,
    sample_sizes: &[usize],
) -> Variance {
    let mut total = 0.0;
    for (c, q) in proposals.iter().enumerate() {
        let p = exact_soft_optimum(disc, c, temperature);
        let f = f_row(disc, c);
        let mu: f64 = p.iter().zip(&f).map(|(a, b)| a * b).sum();
        let mut s = 0.0;
        for i in 0..p.len() {
            let num = (p[i] * (f[i] - mu)).powi(2);
            if num == 0.0 {
                continue;
            }
            if q[i] <= 0.0 {
                return Variance::Infinite { context: c, item: i };
            }
            s += num / q[i];
        }
        total += s / sample_sizes[c] as f64;
    }
    Variance::Finite(total)
}

/// `sum_c (1/|S_c|) (E_{P*}|f_c - mu_c|)^2`, the smallest attainable variance.
pub fn variance_lower_bound(
    disc: &DiscriminatorParams,
    temperature: f64,
    sample_sizes: &[usize],
) -> f64 {
    (0..sample_sizes.len())
        .map(|c| {
            let p = exact_soft_optimum(disc, c, temperature);
            let f = f_row(disc, c);
            let mu: f64 = p.iter().zip(&f).map(|(a, b)| a * b).sum();
            let m: f64 = p.iter().zip(&f).map(|(a, b)| a * (b - mu).abs()).sum();
            m * m / sample_sizes[c] as f64
        })
        .sum()
}

/// `Q(i|c) ∝ P*(i|c) |f_c(i) - mu_c|`.
pub fn optimal_proposal(disc: &DiscriminatorParams, c: usize, temperature: f64) -> Result<Vec<f64>> {
    let p = exact_soft_optimum(disc, c, temperature);
    let f = f_row(disc, c);
    let mu: f64 = p.iter().zip(&f).map(|(a, b)| a * b).sum();
    let gap: Vec<f64> = f.iter().map(|v| (v - mu).abs()).collect();
    proposal_from_gaps(&p, &gap)
        .map_err(|_| Error::InvalidDistribution(format!("context {c}: optimal proposal is degenerate")))
}

/// Normalized `p * gap`.
pub fn proposal_from_gaps(p: &[f64], gap: &[f64]) -> Result<Vec<f64>> {
    let q: Vec<f64> = p.iter().zip(gap).map(|(a, b)| a * b).collect();
    let s: f64 = q.iter().sum();
    if !(s > 0.0) {
        return Err(Error::InvalidDistribution("all-zero proposal numerator".into()));
    }
    Ok(q.into_iter().map(|v| v / s).collect())
}

/// Exact `mu_c`, `b_c`, `log Z_c` and `d[k,i]` by full sums.
pub fn exact_mu_b_d(
    disc: &DiscriminatorParams,
    gen: &GeneratorParams,
    temperature: f64,
) -> GeneratorEstimates {
    let n = gen.num_contexts();
    let m = gen.num_items();
    let k_states = gen.states();
    let mut est = GeneratorEstimates {
        mu: Vec::with_capacity(n),
        b: vec![0.0; n * k_states],
        log_z: Vec::with_capacity(n),
        d: vec![0.0; k_states * m],
    };
    for c in 0..n {
        let p = exact_soft_optimum(disc, c, temperature);
        let f = f_row(disc, c);
        let mu: f64 = p.iter().zip(&f).map(|(a, b)| a * b).sum();
        est.mu.push(mu);
        est.log_z.push(exact_log_z(disc, c, temperature));
        let x = gen.x_row(c);
        for i in 0..m {
            let a = p[i] * (f[i] - mu).abs();
            let y = gen.y_row(i);
            for k in 0..k_states {
                est.b[c * k_states + k] += a * y[k];
                est.d[k * m + i] += a * x[k];
            }
        }
    }
    est
}
