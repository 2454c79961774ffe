#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use sdgar_core::discriminator::{batch_gradient, batch_objective, BatchEntry, DiscriminatorParams, WeightedNegatives};
use sdgar_core::Exec;

/// Uniform draw from the probability simplex (Dirichlet(1, ..., 1)).
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Pearson statistic and degrees of freedom. Adjacent categories are pooled
/// until every bin expects at least five observations.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> (f64, usize) {
    let total: u64 = counts.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        obs += c as f64;
        exp += p * total as f64;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => bins.push((obs, exp)),
        }
    }
    let stat = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    (stat, bins.len().saturating_sub(1))
}

/// True when the statistic stays below the chi-square `quantile`.
pub fn chi_square_passes(counts: &[u64], probs: &[f64], quantile: f64) -> (bool, f64, f64) {
    let (stat, df) = chi_square(counts, probs);
    if df == 0 {
        return (true, stat, 0.0);
    }
    let crit = ChiSquared::new(df as f64).unwrap().inverse_cdf(quantile);
    (stat <= crit, stat, crit)
}

/// Least-squares fit of `log y` on `log x`: `(slope, r_squared)`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A random batch over every context of `disc`: each context gets one to
/// three positives and four weighted negatives with a uniform proposal.
pub fn random_batch<R: Rng + ?Sized>(
    disc: &DiscriminatorParams,
    rng: &mut R,
    temperature: f64,
) -> Vec<(usize, Vec<usize>, WeightedNegatives)> {
    let m = disc.num_items();
    (0..disc.num_contexts())
        .map(|c| {
            let npos = rng.random_range(1..=3.min(m));
            let mut pos: Vec<usize> = (0..npos).map(|_| rng.random_range(0..m)).collect();
            pos.sort_unstable();
            pos.dedup();
            let items: Vec<usize> = (0..4).map(|_| rng.random_range(0..m)).collect();
            let lq = vec![-(m as f64).ln(); items.len()];
            let neg = sdgar_core::discriminator::importance_weights(disc, c, items, lq, temperature)
                .unwrap();
            (c, pos, neg)
        })
        .collect()
}

pub fn as_entries(raw: &[(usize, Vec<usize>, WeightedNegatives)]) -> Vec<BatchEntry<'_>> {
    raw.iter()
        .map(|(c, p, n)| BatchEntry {
            context: *c,
            positives: p,
            negatives: n.clone(),
        })
        .collect()
}

/// Largest relative deviation between the analytic gradient and central
/// differences with step `h`, over every touched coordinate. Denominators
/// are floored at `floor`.
pub fn max_gradient_error(
    disc: &DiscriminatorParams,
    batch: &[BatchEntry<'_>],
    l2: f64,
    stop_gradient: bool,
    h: f64,
    floor: f64,
) -> f64 {
    let grad = batch_gradient(disc, batch, l2, stop_gradient, Exec::Sequential).unwrap();
    let obj = |p: &DiscriminatorParams| batch_objective(p, batch, l2, stop_gradient);
    let d = disc.dim();
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, bump: &dyn Fn(&mut DiscriminatorParams, f64)| {
        let mut hi = disc.clone();
        bump(&mut hi, h);
        let mut lo = disc.clone();
        bump(&mut lo, -h);
        let fd = (obj(&hi) - obj(&lo)) / (2.0 * h);
        let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(floor);
        worst = worst.max(err);
    };
    for (c, row) in grad.contexts.iter() {
        for k in 0..d {
            check(row[k], &|p, e| p.context_mut(c)[k] += e);
        }
    }
    for (i, row) in grad.items.iter() {
        for k in 0..d {
            check(row[k], &|p, e| p.item_mut(i)[k] += e);
        }
        check(row[d], &|p, e| *p.bias_mut(i) += e);
    }
    worst
}
