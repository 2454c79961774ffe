//! Weighted negative samples for one context under each sampler mode.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{importance_weights, DiscriminatorParams, WeightedNegatives};
use crate::error::{Error, Result};
use crate::generator::{GeneratorParams, GeneratorTables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Draws from the decomposable generator, importance weights against the
    /// tempered optimum.
    #[default]
    SdGar,
    /// Uniform draws, equal weights.
    Uniform,
    /// Uniform draws weighted by `softmax(f/T)`; the weights are constants
    /// for the gradient.
    SelfAdversarial,
    /// Uniform draws, all weight on the highest-scored draw.
    Dns,
}

impl SamplerMode {
    pub const ALL: [SamplerMode; 4] = [
        SamplerMode::SdGar,
        SamplerMode::Uniform,
        SamplerMode::SelfAdversarial,
        SamplerMode::Dns,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerMode::SdGar => "sd_gar",
            SamplerMode::Uniform => "uniform",
            SamplerMode::SelfAdversarial => "self_adversarial",
            SamplerMode::Dns => "dns",
        }
    }

    pub fn uses_generator(self) -> bool {
        self == SamplerMode::SdGar
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sampler '{s}' (expected sd_gar, uniform, self_adversarial or dns)"
                ))
            })
    }
}

/// Position of the largest value, ties to the earliest position.
pub fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Weights that put all mass on the largest `f`.
pub fn dns_weights(f: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; f.len()];
    if !f.is_empty() {
        w[argmax_first(f)] = 1.0;
    }
    w
}

/// Draw `n` negatives for context `c` and weight them according to `mode`.
///
/// Draws are not filtered against the context's positives. `tables` is only
/// read in [`SamplerMode::SdGar`].
#[allow(clippy::too_many_arguments)]
pub fn make_negatives<R: Rng + ?Sized>(
    mode: SamplerMode,
    disc: &DiscriminatorParams,
    gen: &GeneratorParams,
    tables: Option<&GeneratorTables>,
    c: usize,
    n: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<WeightedNegatives> {
    if n == 0 {
        return Err(Error::Contract(format!("context {c}: need at least one negative")));
    }
    let m = disc.num_items();
    match mode {
        SamplerMode::SdGar => {
            let tables = tables.ok_or_else(|| {
                Error::InvalidState("generator tables are required for sd_gar".into())
            })?;
            let items = tables.sample_items(c, n, rng);
            let lq = items.iter().map(|&j| gen.q_item_prob(c, j).ln()).collect();
            importance_weights(disc, c, items, lq, temperature)
        }
        SamplerMode::Uniform => {
            let items = uniform_draws(m, n, rng);
            Ok(WeightedNegatives::fixed(c, items, vec![1.0 / n as f64; n]))
        }
        SamplerMode::SelfAdversarial => {
            let items = uniform_draws(m, n, rng);
            let lq = vec![-(m as f64).ln(); n];
            let mut neg = importance_weights(disc, c, items, lq, temperature)?;
            neg.temperature = None;
            Ok(neg)
        }
        SamplerMode::Dns => {
            let items = uniform_draws(m, n, rng);
            let f: Vec<f64> = items.iter().map(|&j| disc.f(c, j)).collect();
            let w = dns_weights(&f);
            Ok(WeightedNegatives::fixed(c, items, w))
        }
    }
}

fn uniform_draws<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..m)).collect()
}
