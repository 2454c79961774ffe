//! Sampling-decomposable proposal `Q(i|c) = sum_k x[c,k] * y[i,k]`.
//!
//! Rows of `X` (N x K) and columns of `Y` (M x K) are distributions, so a draw
//! is a latent state `k ~ x_c` followed by an item `i ~ y[., k]`, each an O(1)
//! alias lookup. The generator is fitted by closed-form softmax updates whose
//! inputs are importance-sampled estimates against the tempered optimum
//! `P*(i|c) ∝ exp(f_c(i) / T)`.

use rand::Rng;

use crate::alias::AliasTable;
use crate::discriminator::{weights_from_values, DiscriminatorParams};
use crate::error::{Error, Result};
use crate::math::{dot, floor_and_normalize, log_sum_exp, softmax_in_place};
use crate::par::Exec;
use crate::rng::{self, Purpose};

/// Probabilities below this are lifted before tables are built, so no state
/// or item becomes unreachable.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    num_contexts: usize,
    num_items: usize,
    states: usize,
    /// N x K row-major; rows sum to one.
    x: Vec<f64>,
    /// M x K row-major; columns sum to one.
    y: Vec<f64>,
}

impl GeneratorParams {
    /// `X, Y ~ U(0, 1)` followed by row (X) and column (Y) normalization.
    pub fn init_random(num_contexts: usize, num_items: usize, states: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Purpose::Init, 1, 0);
        let mut x: Vec<f64> = (0..num_contexts * states)
            .map(|_| rng.random_range(f64::EPSILON..1.0))
            .collect();
        let mut y: Vec<f64> = (0..num_items * states)
            .map(|_| rng.random_range(f64::EPSILON..1.0))
            .collect();
        for row in x.chunks_exact_mut(states) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        for k in 0..states {
            let s: f64 = (0..num_items).map(|i| y[i * states + k]).sum();
            (0..num_items).for_each(|i| y[i * states + k] /= s);
        }
        Self {
            num_contexts,
            num_items,
            states,
            x,
            y,
        }
    }

    /// Uniform rows and columns.
    pub fn uniform(num_contexts: usize, num_items: usize, states: usize) -> Self {
        Self {
            num_contexts,
            num_items,
            states,
            x: vec![1.0 / states as f64; num_contexts * states],
            y: vec![1.0 / num_items as f64; num_items * states],
        }
    }

    pub fn from_parts(
        num_contexts: usize,
        num_items: usize,
        states: usize,
        x: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self> {
        if x.len() != num_contexts * states {
            return Err(Error::Shape {
                what: "generator X".into(),
                expected: format!("{num_contexts}x{states}"),
                actual: format!("{} values", x.len()),
            });
        }
        if y.len() != num_items * states {
            return Err(Error::Shape {
                what: "generator Y".into(),
                expected: format!("{num_items}x{states}"),
                actual: format!("{} values", y.len()),
            });
        }
        let g = Self {
            num_contexts,
            num_items,
            states,
            x,
            y,
        };
        g.check_simplex(1e-9)?;
        Ok(g)
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_row(&self, c: usize) -> &[f64] {
        &self.x[c * self.states..(c + 1) * self.states]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.states..(i + 1) * self.states]
    }

    pub fn y_column(&self, k: usize) -> Vec<f64> {
        (0..self.num_items).map(|i| self.y[i * self.states + k]).collect()
    }

    pub fn x_column(&self, k: usize) -> Vec<f64> {
        (0..self.num_contexts)
            .map(|c| self.x[c * self.states + k])
            .collect()
    }

    pub fn set_x_row(&mut self, c: usize, row: &[f64]) {
        self.x[c * self.states..(c + 1) * self.states].copy_from_slice(row);
    }

    pub fn set_y_column(&mut self, k: usize, col: &[f64]) {
        for (i, &v) in col.iter().enumerate() {
            self.y[i * self.states + k] = v;
        }
    }

    /// `Q(i|c) = <x_c, y_i>`.
    #[inline]
    pub fn q_item_prob(&self, c: usize, i: usize) -> f64 {
        dot(self.x_row(c), self.y_row(i))
    }

    /// The full proposal `Q(.|c)` over items.
    pub fn item_distribution(&self, c: usize) -> Vec<f64> {
        (0..self.num_items).map(|i| self.q_item_prob(c, i)).collect()
    }

    /// `Q(c|i) = sum_k P(k|i) P(c|k)` computed directly from `X` and `Y`.
    /// O(NK); the tables offer an O(K) version.
    pub fn q_context_prob(&self, i: usize, c: usize) -> Result<f64> {
        let y_i = self.y_row(i);
        let row_mass: f64 = y_i.iter().sum();
        if !(row_mass > 0.0) {
            return Err(Error::InvalidState(format!(
                "item {i} has no mass under any latent state"
            )));
        }
        let mut q = 0.0;
        for k in 0..self.states {
            let col: f64 = (0..self.num_contexts)
                .map(|c2| self.x[c2 * self.states + k])
                .sum();
            if col > 0.0 {
                q += (y_i[k] / row_mass) * (self.x[c * self.states + k] / col);
            }
        }
        Ok(q)
    }

    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        if self.x.iter().chain(&self.y).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidState("negative or non-finite generator entry".into()));
        }
        for (c, row) in self.x.chunks_exact(self.states.max(1)).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidState(format!("row {c} of X sums to {s}")));
            }
        }
        for k in 0..self.states {
            let s: f64 = (0..self.num_items).map(|i| self.y[i * self.states + k]).sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidState(format!("column {k} of Y sums to {s}")));
            }
        }
        Ok(())
    }
}

/// Alias tables for the four conditional distributions used in sampling.
#[derive(Debug, Clone)]
pub struct GeneratorTables {
    /// K tables over M items: `P(i|k) = y[i,k]`.
    pub item_given_state: Vec<AliasTable>,
    /// N tables over K states: `P(k|c) = x[c,k]`.
    pub state_given_context: Vec<AliasTable>,
    /// K tables over N contexts: `P(c|k) ∝ x[c,k]`.
    pub context_given_state: Vec<AliasTable>,
    /// M tables over K states: `P(k|i) ∝ y[i,k]`.
    pub state_given_item: Vec<AliasTable>,
}

fn state_error(what: &str, k: usize, e: Error) -> Error {
    Error::InvalidState(format!("{what} {k}: {e}"))
}

fn build_item_given_state(gen: &GeneratorParams, exec: Exec) -> Result<Vec<AliasTable>> {
    exec.try_map(gen.states, |k| {
        AliasTable::build(&gen.y_column(k)).map_err(|e| state_error("latent state", k, e))
    })
}

fn build_state_given_context(gen: &GeneratorParams, exec: Exec) -> Result<Vec<AliasTable>> {
    exec.try_map(gen.num_contexts, |c| {
        AliasTable::build(gen.x_row(c)).map_err(|e| state_error("context", c, e))
    })
}

fn build_context_given_state(gen: &GeneratorParams, exec: Exec) -> Result<Vec<AliasTable>> {
    exec.try_map(gen.states, |k| {
        AliasTable::build(&gen.x_column(k)).map_err(|e| state_error("latent state", k, e))
    })
}

fn build_state_given_item(gen: &GeneratorParams, exec: Exec) -> Result<Vec<AliasTable>> {
    exec.try_map(gen.num_items, |i| {
        AliasTable::build(gen.y_row(i)).map_err(|e| state_error("item", i, e))
    })
}

/// Rebuild every table family from the current `X` and `Y`. O(NK + MK).
pub fn rebuild_tables(gen: &GeneratorParams, exec: Exec) -> Result<GeneratorTables> {
    Ok(GeneratorTables {
        item_given_state: build_item_given_state(gen, exec)?,
        state_given_context: build_state_given_context(gen, exec)?,
        context_given_state: build_context_given_state(gen, exec)?,
        state_given_item: build_state_given_item(gen, exec)?,
    })
}

impl GeneratorTables {
    #[inline]
    pub fn sample_item<R: Rng + ?Sized>(&self, c: usize, rng: &mut R) -> usize {
        let k = self.state_given_context[c].draw(rng);
        self.item_given_state[k].draw(rng)
    }

    /// Same draws as `n` calls to [`sample_item`](Self::sample_item), with
    /// the item-table loads grouped after all random picks.
    pub fn sample_items<R: Rng + ?Sized>(&self, c: usize, n: usize, rng: &mut R) -> Vec<usize> {
        two_phase(&self.state_given_context[c], &self.item_given_state, n, rng)
    }

    #[inline]
    pub fn sample_context<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let k = self.state_given_item[i].draw(rng);
        self.context_given_state[k].draw(rng)
    }

    pub fn sample_contexts<R: Rng + ?Sized>(&self, i: usize, n: usize, rng: &mut R) -> Vec<usize> {
        two_phase(&self.state_given_item[i], &self.context_given_state, n, rng)
    }

    /// `Q(c|i)` from the tables' source distributions. O(K).
    pub fn q_context_prob(&self, i: usize, c: usize) -> f64 {
        self.state_given_item[i]
            .source_pmf()
            .iter()
            .zip(&self.context_given_state)
            .map(|(pk, t)| pk * t.source_pmf()[c])
            .sum()
    }
}

fn two_phase<R: Rng + ?Sized>(
    states: &AliasTable,
    leaves: &[AliasTable],
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let picks: Vec<(usize, usize, u32)> = (0..n)
        .map(|_| {
            let k = states.draw(rng);
            let (slot, coin) = leaves[k].pick(rng);
            (k, slot, coin)
        })
        .collect();
    picks
        .into_iter()
        .map(|(k, slot, coin)| leaves[k].resolve(slot, coin))
        .collect()
}

pub fn q_item_prob(gen: &GeneratorParams, c: usize, i: usize) -> f64 {
    gen.q_item_prob(c, i)
}

pub fn sample_items<R: Rng + ?Sized>(
    tables: &GeneratorTables,
    c: usize,
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    tables.sample_items(c, n, rng)
}

pub fn q_context_prob(gen: &GeneratorParams, i: usize, c: usize) -> Result<f64> {
    gen.q_context_prob(i, c)
}

pub fn sample_contexts<R: Rng + ?Sized>(
    gen: &GeneratorParams,
    tables: &GeneratorTables,
    i: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(gen.y_row(i).iter().sum::<f64>() > 0.0) {
        return Err(Error::InvalidState(format!(
            "item {i} has no mass under any latent state"
        )));
    }
    Ok(tables.sample_contexts(i, n, rng))
}

/// `f` values and self-normalized weights of a sample drawn from `Q(.|c)`.
fn weighted_sample(
    disc: &DiscriminatorParams,
    gen: &GeneratorParams,
    c: usize,
    sample: &[usize],
    temperature: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if sample.is_empty() {
        return Err(Error::Contract(format!("context {c}: empty estimation sample")));
    }
    let f: Vec<f64> = sample.iter().map(|&j| disc.f(c, j)).collect();
    let lq: Vec<f64> = sample.iter().map(|&j| gen.q_item_prob(c, j).ln()).collect();
    let w = weights_from_values(&f, &lq, temperature);
    Ok((f, w))
}

/// Self-normalized estimate of `mu_c = E_{P*}[f_c]`.
pub fn estimate_mu(
    disc: &DiscriminatorParams,
    gen: &GeneratorParams,
    c: usize,
    sample: &[usize],
    temperature: f64,
) -> Result<f64> {
    let (f, w) = weighted_sample(disc, gen, c, sample, temperature)?;
    Ok(f.iter().zip(&w).map(|(a, b)| a * b).sum())
}

/// Self-normalized estimate of `b_c = sum_i y_i P*(i|c) |f_c(i) - mu_c|`.
pub fn estimate_b(
    disc: &DiscriminatorParams,
    gen: &GeneratorParams,
    c: usize,
    sample: &[usize],
    mu_c: f64,
    temperature: f64,
) -> Result<Vec<f64>> {
    let (f, w) = weighted_sample(disc, gen, c, sample, temperature)?;
    let mut b = vec![0.0; gen.states];
    for ((&j, fj), wj) in sample.iter().zip(&f).zip(&w) {
        let scale = wj * (fj - mu_c).abs();
        for (bk, yk) in b.iter_mut().zip(gen.y_row(j)) {
            *bk += scale * yk;
        }
    }
    Ok(b)
}

/// `log Z_c` where `Z_c = sum_i exp(f_c(i) / T)`, estimated as the sample
/// mean of `exp(f/T - log Q)`. The proposal is exactly normalized.
pub fn estimate_log_z(
    disc: &DiscriminatorParams,
    gen: &GeneratorParams,
    c: usize,
    sample: &[usize],
    temperature: f64,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Contract(format!("context {c}: empty estimation sample")));
    }
    let terms: Vec<f64> = sample
        .iter()
        .map(|&j| disc.f(c, j) / temperature - gen.q_item_prob(c, j).ln())
        .collect();
    Ok(log_sum_exp(&terms) - (sample.len() as f64).ln())
}

/// Result of [`estimate_d`]: the K-vector `d[., i]` and the number of drawn
/// contexts skipped because `Q(c|i)` underflowed to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DEstimate {
    pub d: Vec<f64>,
    pub skipped: usize,
}

/// Unnormalized importance estimate of
/// `d[k,i] = sum_c x[c,k] P*(i|c) |f_c(i) - mu_c|` from contexts drawn from
/// `Q(c|i)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_d(
    disc: &DiscriminatorParams,
    gen: &GeneratorParams,
    tables: &GeneratorTables,
    i: usize,
    contexts: &[usize],
    mu: &[f64],
    log_z: &[f64],
    temperature: f64,
) -> DEstimate {
    let mut d = vec![0.0; gen.states];
    let mut skipped = 0;
    for &c in contexts {
        let q = tables.q_context_prob(i, c);
        let f = disc.f(c, i);
        let gap = (f - mu[c]).abs();
        if !(q > 0.0) {
            skipped += 1;
            continue;
        }
        if gap == 0.0 {
            continue;
        }
        let log_term = f / temperature - q.ln() - log_z[c] + gap.ln();
        let term = log_term.exp();
        for (dk, xk) in d.iter_mut().zip(gen.x_row(c)) {
            *dk += term * xk;
        }
    }
    if !contexts.is_empty() {
        let inv = 1.0 / contexts.len() as f64;
        d.iter_mut().for_each(|v| *v *= inv);
    }
    DEstimate { d, skipped }
}

/// `x_c = softmax(b_c / lambda_x)`.
pub fn update_x(b: &[f64], lambda_x: f64) -> Vec<f64> {
    let mut v: Vec<f64> = b.iter().map(|x| x / lambda_x).collect();
    softmax_in_place(&mut v);
    v
}

/// `y[., k] = softmax(d_k / lambda_y)`.
pub fn update_y(d_k: &[f64], lambda_y: f64) -> Vec<f64> {
    update_x(d_k, lambda_y)
}

/// Estimates produced during one generator round.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorEstimates {
    pub mu: Vec<f64>,
    /// N x K row-major.
    pub b: Vec<f64>,
    pub log_z: Vec<f64>,
    /// K x M row-major.
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct RoundSettings {
    pub temperature: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub est_samples: usize,
    pub seed: u64,
    pub round: u64,
}

/// One alternating update of `X` then `Y`, followed by a full table rebuild.
///
/// Each context and item draws from its own random stream, so the outcome is
/// the same for any execution strategy.
pub fn generator_round(
    disc: &DiscriminatorParams,
    gen: &mut GeneratorParams,
    tables: &mut GeneratorTables,
    settings: &RoundSettings,
    exec: Exec,
) -> Result<GeneratorEstimates> {
    let s = settings;
    let k_states = gen.states;
    let per_context = {
        let gen: &GeneratorParams = gen;
        let tables: &GeneratorTables = tables;
        exec.try_map(gen.num_contexts, |c| -> Result<_> {
            let mut rng = rng::stream(s.seed, Purpose::ItemEstimates, s.round, c as u64);
            let sample = tables.sample_items(c, s.est_samples, &mut rng);
            let mu = estimate_mu(disc, gen, c, &sample, s.temperature)?;
            let sample = tables.sample_items(c, s.est_samples, &mut rng);
            let b = estimate_b(disc, gen, c, &sample, mu, s.temperature)?;
            let sample = tables.sample_items(c, s.est_samples, &mut rng);
            let log_z = estimate_log_z(disc, gen, c, &sample, s.temperature)?;
            let mut x = update_x(&b, s.lambda_x);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("x update for context {c}")));
            }
            floor_and_normalize(&mut x, PROB_FLOOR);
            Ok((mu, b, log_z, x))
        })?
    };

    let mut est = GeneratorEstimates {
        mu: Vec::with_capacity(gen.num_contexts),
        b: Vec::with_capacity(gen.num_contexts * k_states),
        log_z: Vec::with_capacity(gen.num_contexts),
        d: Vec::new(),
    };
    for (c, (mu, b, log_z, x)) in per_context.into_iter().enumerate() {
        est.mu.push(mu);
        est.b.extend(b);
        est.log_z.push(log_z);
        gen.set_x_row(c, &x);
    }
    tables.state_given_context = build_state_given_context(gen, exec)?;
    tables.context_given_state = build_context_given_state(gen, exec)?;
    tables.state_given_item = build_state_given_item(gen, exec)?;

    let per_item = {
        let gen: &GeneratorParams = gen;
        let tables: &GeneratorTables = tables;
        let est = &est;
        exec.map(gen.num_items, |i| {
            let mut rng = rng::stream(s.seed, Purpose::ContextEstimates, s.round, i as u64);
            let contexts = tables.sample_contexts(i, s.est_samples, &mut rng);
            estimate_d(disc, gen, tables, i, &contexts, &est.mu, &est.log_z, s.temperature)
        })
    };
    let skipped: usize = per_item.iter().map(|e| e.skipped).sum();
    if skipped > 0 {
        log::debug!("generator round {}: skipped {skipped} zero-probability context draws", s.round);
    }

    let m = gen.num_items;
    let mut d = vec![0.0; k_states * m];
    for (i, e) in per_item.iter().enumerate() {
        for k in 0..k_states {
            d[k * m + i] = e.d[k];
        }
    }
    let columns = exec.try_map(k_states, |k| {
        let mut col = update_y(&d[k * m..(k + 1) * m], s.lambda_y);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!(
                "latent state {k}: degenerate generator column"
            )));
        }
        floor_and_normalize(&mut col, PROB_FLOOR);
        Ok(col)
    })?;
    for (k, col) in columns.iter().enumerate() {
        gen.set_y_column(k, col);
    }
    tables.item_given_state = build_item_given_state(gen, exec)?;
    tables.state_given_item = build_state_given_item(gen, exec)?;
    est.d = d;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hand_set() -> GeneratorParams {
        // N=2, M=3, K=2
        GeneratorParams::from_parts(
            2,
            3,
            2,
            vec![0.5, 0.5, 0.2, 0.8],
            vec![0.2, 0.4, 0.3, 0.1, 0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn q_item_prob_arithmetic() {
        let g = hand_set();
        assert_relative_eq!(g.q_item_prob(0, 0), 0.3, epsilon = 1e-15);
        let k1 = GeneratorParams::from_parts(1, 3, 1, vec![1.0], vec![0.1, 0.6, 0.3]).unwrap();
        assert_eq!(k1.q_item_prob(0, 1), 0.6);
    }

    #[test]
    fn q_context_prob_hand_expanded() {
        let g = hand_set();
        // P(k|i=0) = [0.2, 0.4]/0.6; P(c=1|k) = [0.2/0.7, 0.8/1.3]
        let expected = (0.2 / 0.6) * (0.2 / 0.7) + (0.4 / 0.6) * (0.8 / 1.3);
        assert_relative_eq!(g.q_context_prob(0, 1).unwrap(), expected, epsilon = 1e-15);
        let tables = rebuild_tables(&g, Exec::Sequential).unwrap();
        assert_relative_eq!(tables.q_context_prob(0, 1), expected, epsilon = 1e-15);
    }

    #[test]
    fn single_state_context_prob_ignores_item() {
        let g = GeneratorParams::from_parts(3, 2, 1, vec![1.0; 3], vec![0.25, 0.75]).unwrap();
        for i in 0..2 {
            for c in 0..3 {
                assert_relative_eq!(g.q_context_prob(i, c).unwrap(), 1.0 / 3.0);
            }
        }
    }

    #[test]
    fn distributions_normalize() {
        let g = GeneratorParams::init_random(7, 13, 4, 3);
        g.check_simplex(1e-9).unwrap();
        for c in 0..7 {
            let s: f64 = g.item_distribution(c).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        for i in 0..13 {
            let s: f64 = (0..7).map(|c| g.q_context_prob(i, c).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_mass_item_row_is_an_error() {
        let mut g = GeneratorParams::uniform(2, 3, 2);
        g.y[2] = 0.0;
        g.y[3] = 0.0;
        assert!(matches!(g.q_context_prob(1, 0), Err(Error::InvalidState(_))));
        let tables = rebuild_tables(&GeneratorParams::uniform(2, 3, 2), Exec::Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_contexts(&g, &tables, 1, 3, &mut rng).is_err());
    }

    #[test]
    fn one_hot_column_always_sampled() {
        let g = GeneratorParams::from_parts(2, 4, 1, vec![1.0, 1.0], vec![0.0, 0.0, 1.0, 0.0])
            .unwrap();
        // Items 0, 1 and 3 have no mass, so only the forward tables exist.
        let t = GeneratorTables {
            item_given_state: build_item_given_state(&g, Exec::Sequential).unwrap(),
            state_given_context: build_state_given_context(&g, Exec::Sequential).unwrap(),
            context_given_state: Vec::new(),
            state_given_item: Vec::new(),
        };
        assert!(rebuild_tables(&g, Exec::Sequential).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(t.sample_items(1, 1000, &mut rng).iter().all(|&i| i == 2));
    }

    #[test]
    fn sampling_reproducible() {
        let g = GeneratorParams::init_random(4, 9, 3, 1);
        let t = rebuild_tables(&g, Exec::Sequential).unwrap();
        let a = t.sample_items(2, 50, &mut ChaCha8Rng::seed_from_u64(5));
        let b = t.sample_items(2, 50, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn tables_match_params() {
        let g = GeneratorParams::init_random(5, 8, 3, 2);
        let t = rebuild_tables(&g, Exec::Sequential).unwrap();
        for c in 0..5 {
            for (a, b) in t.state_given_context[c].reconstruct_pmf().iter().zip(g.x_row(c)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for k in 0..3 {
            for (a, b) in t.item_given_state[k].reconstruct_pmf().iter().zip(g.y_column(k)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let again = rebuild_tables(&g, Exec::Parallel).unwrap();
        for (a, b) in t.state_given_item.iter().zip(&again.state_given_item) {
            assert_eq!(a.source_pmf(), b.source_pmf());
        }
    }

    #[test]
    fn single_sample_mu_is_its_f() {
        let d = DiscriminatorParams::init_random(2, 5, 3, 9);
        let g = GeneratorParams::init_random(2, 5, 2, 9);
        assert_relative_eq!(estimate_mu(&d, &g, 1, &[3], 0.5).unwrap(), d.f(1, 3));
        assert!(estimate_mu(&d, &g, 1, &[], 0.5).is_err());
    }

    #[test]
    fn constant_f_estimators() {
        // zero discriminator => f = ln 2 everywhere
        let d = DiscriminatorParams::zeros(3, 6, 2);
        let g = GeneratorParams::init_random(3, 6, 2, 4);
        let sample = [0, 1, 1, 5, 2];
        let mu = estimate_mu(&d, &g, 0, &sample, 0.3).unwrap();
        assert_relative_eq!(mu, std::f64::consts::LN_2, epsilon = 1e-15);
        let b = estimate_b(&d, &g, 0, &sample, mu, 0.3).unwrap();
        assert!(b.iter().all(|&v| v.abs() < 1e-15));
        let t = rebuild_tables(&g, Exec::Sequential).unwrap();
        let est = estimate_d(&d, &g, &t, 2, &[0, 1, 2], &[mu; 3], &[0.0; 3], 0.3);
        assert!(est.d.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn log_z_uniform_constant_integrand() {
        let d = DiscriminatorParams::zeros(1, 20, 2);
        let g = GeneratorParams::from_parts(1, 20, 1, vec![1.0], vec![0.05; 20]).unwrap();
        let t = 0.7;
        // f = ln 2 for every item, so Z = M * 2^(1/T) exactly.
        let expected = (20f64).ln() + std::f64::consts::LN_2 / t;
        let lz = estimate_log_z(&d, &g, 0, &[3, 3, 17], t).unwrap();
        assert_relative_eq!(lz, expected, epsilon = 1e-12);
    }

    #[test]
    fn log_z_decreases_with_temperature_when_f_positive() {
        let d = DiscriminatorParams::init_random(1, 10, 3, 1);
        let g = GeneratorParams::init_random(1, 10, 2, 1);
        let sample = [0, 4, 9, 2];
        let a = estimate_log_z(&d, &g, 0, &sample, 0.5).unwrap();
        let b = estimate_log_z(&d, &g, 0, &sample, 1.0).unwrap();
        assert!(b < a);
    }

    #[test]
    fn single_context_d_reduction() {
        let mut disc = DiscriminatorParams::init_random(1, 4, 2, 3);
        disc.context_mut(0).copy_from_slice(&[30.0, -20.0]);
        let g = GeneratorParams::init_random(1, 4, 3, 3);
        let t = rebuild_tables(&g, Exec::Sequential).unwrap();
        let (temp, mu, lz) = (0.8, 0.4, 1.7);
        let f = disc.f(0, 2);
        let w = (f / temp - lz).exp();
        let est = estimate_d(&disc, &g, &t, 2, &[0, 0, 0], &[mu], &[lz], temp);
        for k in 0..3 {
            assert_relative_eq!(est.d[k], w * g.x_row(0)[k] * (f - mu).abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_updates() {
        let x = update_x(&[0.0, 0.0, 0.0], 0.5);
        assert!(x.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let x = update_x(&[1.0, 2.0], 1.0);
        assert_relative_eq!(x[0], 0.268_941_421_369_995_1, epsilon = 1e-12);
        let y = update_y(&[0.0, 3f64.ln()], 1.0);
        assert_relative_eq!(y[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(y[1], 0.75, epsilon = 1e-15);

        let b = [0.3, 1.0, 0.7];
        let flat = update_x(&b, 100.0);
        assert!(flat.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-2));
        let sharp = update_x(&b, 1e-3);
        assert!((sharp[1] - 1.0).abs() < 1e-2);

        let perm = update_y(&[0.7, 0.3, 1.0], 0.4);
        let base = update_y(&b, 0.4);
        assert_relative_eq!(perm[0], base[2]);
        assert_relative_eq!(perm[1], base[0]);
        assert_relative_eq!(perm[2], base[1]);
    }

    #[test]
    fn round_keeps_simplex_and_is_strategy_independent() {
        let mut disc = DiscriminatorParams::init_random(6, 15, 4, 2);
        for c in 0..6 {
            disc.context_mut(c).iter_mut().for_each(|v| *v *= 150.0);
        }
        let settings = RoundSettings {
            temperature: 0.5,
            lambda_x: 0.1,
            lambda_y: 0.1,
            est_samples: 16,
            seed: 11,
            round: 1,
        };
        let run = |exec| {
            let mut g = GeneratorParams::init_random(6, 15, 3, 2);
            let mut t = rebuild_tables(&g, exec).unwrap();
            let est = generator_round(&disc, &mut g, &mut t, &settings, exec).unwrap();
            (g, t, est)
        };
        let (g1, t1, e1) = run(Exec::Sequential);
        let (g2, _, e2) = run(Exec::Parallel);
        assert_eq!(g1, g2);
        assert_eq!(e1, e2);
        g1.check_simplex(1e-9).unwrap();
        let fresh = rebuild_tables(&g1, Exec::Sequential).unwrap();
        for (a, b) in t1.item_given_state.iter().zip(&fresh.item_given_state) {
            assert_eq!(a.source_pmf(), b.source_pmf());
        }
        for (a, b) in t1.state_given_item.iter().zip(&fresh.state_given_item) {
            assert_eq!(a.source_pmf(), b.source_pmf());
        }
    }
}
