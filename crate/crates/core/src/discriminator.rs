//! The recommendation model: a biased matrix-factorization scorer trained on
//! the importance-weighted logistic loss.
//!
//! `g(c, i) = <u_c, v_i> + b_i`, `D(i|c) = sigmoid(g)`
//! and `f_c(i) = -log(1 - D(i|c)) = softplus(g)`.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{dot, sigmoid, softmax_in_place, softplus};
use crate::par::Exec;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    dim: usize,
    num_contexts: usize,
    num_items: usize,
    context_emb: Vec<f64>,
    /// Item rows of width `dim + 1`: the embedding followed by the bias, so
    /// that scoring and updating an item touch one contiguous row.
    items: Vec<f64>,
}

impl DiscriminatorParams {
    pub fn zeros(num_contexts: usize, num_items: usize, dim: usize) -> Self {
        Self {
            dim,
            num_contexts,
            num_items,
            context_emb: vec![0.0; num_contexts * dim],
            items: vec![0.0; num_items * (dim + 1)],
        }
    }

    /// Embeddings uniform in `(-0.01, 0.01)`, biases zero.
    pub fn init_random(num_contexts: usize, num_items: usize, dim: usize, seed: u64) -> Self {
        let mut p = Self::zeros(num_contexts, num_items, dim);
        let mut rng = rng::stream(seed, Purpose::Init, 0, 0);
        for x in p.context_emb.iter_mut() {
            *x = rng.random_range(-0.01..0.01);
        }
        for i in 0..num_items {
            for x in p.item_mut(i) {
                *x = rng.random_range(-0.01..0.01);
            }
        }
        p
    }

    pub fn from_parts(
        num_contexts: usize,
        num_items: usize,
        dim: usize,
        context_emb: Vec<f64>,
        item_emb: Vec<f64>,
        item_bias: Vec<f64>,
    ) -> Result<Self> {
        let check = |what: &str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Shape {
                    what: what.into(),
                    expected: expected.to_string(),
                    actual: actual.to_string(),
                })
            }
        };
        check("context embeddings", num_contexts * dim, context_emb.len())?;
        check("item embeddings", num_items * dim, item_emb.len())?;
        check("item biases", num_items, item_bias.len())?;
        let mut items = Vec::with_capacity(num_items * (dim + 1));
        for (i, b) in item_bias.iter().enumerate() {
            items.extend_from_slice(&item_emb[i * dim..(i + 1) * dim]);
            items.push(*b);
        }
        Ok(Self {
            dim,
            num_contexts,
            num_items,
            context_emb,
            items,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn context(&self, c: usize) -> &[f64] {
        &self.context_emb[c * self.dim..(c + 1) * self.dim]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let at = i * (self.dim + 1);
        &self.items[at..at + self.dim]
    }

    pub fn context_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.context_emb[c * self.dim..(c + 1) * self.dim]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        let at = i * (self.dim + 1);
        &mut self.items[at..at + self.dim]
    }

    /// Embedding and bias of item `i`, `dim + 1` values.
    pub fn item_row(&self, i: usize) -> &[f64] {
        let w = self.dim + 1;
        &self.items[i * w..(i + 1) * w]
    }

    fn item_row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.dim + 1;
        &mut self.items[i * w..(i + 1) * w]
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.items[i * (self.dim + 1) + self.dim]
    }

    pub fn bias_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.items[i * (self.dim + 1) + self.dim]
    }

    pub fn context_embeddings(&self) -> &[f64] {
        &self.context_emb
    }

    /// Item embeddings as an `M x dim` row-major copy.
    pub fn item_embeddings(&self) -> Vec<f64> {
        (0..self.num_items).flat_map(|i| self.item(i).to_vec()).collect()
    }

    pub fn item_biases(&self) -> Vec<f64> {
        (0..self.num_items).map(|i| self.bias(i)).collect()
    }

    /// `g(c, i)`.
    #[inline]
    pub fn score(&self, c: usize, i: usize) -> f64 {
        let row = self.item_row(i);
        dot(self.context(c), &row[..self.dim]) + row[self.dim]
    }

    /// `f_c(i) = softplus(g(c, i))`.
    #[inline]
    pub fn f(&self, c: usize, i: usize) -> f64 {
        softplus(self.score(c, i))
    }

    /// Scores of every item for context `c`, written into `out`.
    pub fn score_all(&self, c: usize, out: &mut [f64]) {
        let u = self.context(c);
        for (o, row) in out.iter_mut().zip(self.items.chunks_exact(self.dim + 1)) {
            *o = dot(u, &row[..self.dim]) + row[self.dim];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.context_emb
            .iter()
            .chain(&self.items)
            .all(|x| x.is_finite())
    }
}

pub fn softplus_f(params: &DiscriminatorParams, c: usize, i: usize) -> f64 {
    params.f(c, i)
}

/// A context's sampled negatives with their self-normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNegatives {
    pub context: usize,
    pub items: Vec<usize>,
    /// Log proposal probability of each draw.
    pub log_proposal: Vec<f64>,
    pub weights: Vec<f64>,
    /// Set when `weights = softmax(f/T - log_proposal)`, so that the weights
    /// can be differentiated. `None` for fixed weights.
    pub temperature: Option<f64>,
}

impl WeightedNegatives {
    /// Negatives with caller-chosen weights that do not depend on the model.
    pub fn fixed(context: usize, items: Vec<usize>, weights: Vec<f64>) -> Self {
        let log_proposal = vec![0.0; items.len()];
        Self {
            context,
            items,
            log_proposal,
            weights,
            temperature: None,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// `softmax(f/T - log_proposal)` with a max shift.
pub fn weights_from_values(f: &[f64], log_proposal: &[f64], temperature: f64) -> Vec<f64> {
    let mut w: Vec<f64> = f
        .iter()
        .zip(log_proposal)
        .map(|(fj, lq)| fj / temperature - lq)
        .collect();
    softmax_in_place(&mut w);
    w
}

pub fn importance_weights(
    params: &DiscriminatorParams,
    c: usize,
    items: Vec<usize>,
    log_proposal: Vec<f64>,
    temperature: f64,
) -> Result<WeightedNegatives> {
    if items.is_empty() {
        return Err(Error::Contract(format!(
            "context {c}: importance weights need at least one sampled item"
        )));
    }
    if items.len() != log_proposal.len() {
        return Err(Error::Contract(format!(
            "context {c}: {} items but {} log-proposals",
            items.len(),
            log_proposal.len()
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("T must be positive, got {temperature}")));
    }
    let f: Vec<f64> = items.iter().map(|&j| params.f(c, j)).collect();
    let weights = weights_from_values(&f, &log_proposal, temperature);
    Ok(WeightedNegatives {
        context: c,
        items,
        log_proposal,
        weights,
        temperature: Some(temperature),
    })
}

/// One context's summand of the importance-weighted loss:
/// `mean_{i in positives} softplus(-g(c,i)) + sum_j w_j softplus(g(c,j))`.
pub fn loss_contribution(
    params: &DiscriminatorParams,
    c: usize,
    positives: &[usize],
    negatives: &WeightedNegatives,
) -> f64 {
    let pos = if positives.is_empty() {
        0.0
    } else {
        positives
            .iter()
            .map(|&i| softplus(-params.score(c, i)))
            .sum::<f64>()
            / positives.len() as f64
    };
    let neg: f64 = negatives
        .items
        .iter()
        .zip(&negatives.weights)
        .map(|(&j, &w)| w * params.f(c, j))
        .sum();
    pos + neg
}

/// A context's contribution to a mini-batch.
#[derive(Debug, Clone)]
pub struct BatchEntry<'a> {
    pub context: usize,
    pub positives: &'a [usize],
    pub negatives: WeightedNegatives,
}

/// Sparse row gradients keyed by row index, in first-touch order.
#[derive(Debug, Clone, Default)]
pub struct SparseRows {
    width: usize,
    lookup: HashMap<usize, usize>,
    rows: Vec<usize>,
    data: Vec<f64>,
}

impl SparseRows {
    fn new(width: usize) -> Self {
        Self {
            width,
            ..Default::default()
        }
    }

    fn row_mut(&mut self, index: usize) -> &mut [f64] {
        let slot = *self.lookup.entry(index).or_insert_with(|| {
            self.rows.push(index);
            self.data.extend(std::iter::repeat_n(0.0, self.width));
            self.rows.len() - 1
        });
        &mut self.data[slot * self.width..(slot + 1) * self.width]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows
            .iter()
            .copied()
            .zip(self.data.chunks_exact(self.width.max(1)))
    }

    pub fn get(&self, index: usize) -> Option<&[f64]> {
        self.lookup
            .get(&index)
            .map(|&s| &self.data[s * self.width..(s + 1) * self.width])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Gradient of a batch objective with respect to the rows it touches.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub contexts: SparseRows,
    /// Rows of width `dim + 1`; the last entry is the bias gradient.
    pub items: SparseRows,
    pub loss: f64,
}

/// `dL/dg` for every scored pair of one batch entry.
struct EntryTerms {
    loss: f64,
    coefs: Vec<(usize, f64)>,
}

fn entry_terms(
    params: &DiscriminatorParams,
    entry: &BatchEntry<'_>,
    stop_gradient_through_weights: bool,
) -> EntryTerms {
    let c = entry.context;
    let neg = &entry.negatives;
    let mut coefs = Vec::with_capacity(entry.positives.len() + neg.len());
    let mut loss = 0.0;

    if !entry.positives.is_empty() {
        let inv = 1.0 / entry.positives.len() as f64;
        for &i in entry.positives {
            let g = params.score(c, i);
            loss += inv * softplus(-g);
            coefs.push((i, -inv * sigmoid(-g)));
        }
    }

    let scores: Vec<f64> = neg.items.iter().map(|&j| params.score(c, j)).collect();
    let f: Vec<f64> = scores.iter().map(|&g| softplus(g)).collect();
    let differentiable = !stop_gradient_through_weights && neg.temperature.is_some();
    let weights = match (differentiable, neg.temperature) {
        (true, Some(t)) => weights_from_values(&f, &neg.log_proposal, t),
        _ => neg.weights.clone(),
    };
    let mean_f: f64 = weights.iter().zip(&f).map(|(w, fj)| w * fj).sum();
    loss += mean_f;
    for (k, &j) in neg.items.iter().enumerate() {
        let mut d_f = weights[k];
        if let (true, Some(t)) = (differentiable, neg.temperature) {
            d_f += weights[k] * (f[k] - mean_f) / t;
        }
        coefs.push((j, d_f * sigmoid(scores[k])));
    }
    EntryTerms { loss, coefs }
}

/// Regularization weight of every row a batch touches, in first-touch
/// order. A context row counts once per entry; an item row counts with the
/// weight its score carries in the loss (`1/|I_c|` as a positive, `w_j` as a
/// negative), so rarely scored rows are not shrunk harder than they are fit.
fn reg_weights(batch: &[BatchEntry<'_>]) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
    let mut seen_c: HashMap<usize, usize> = HashMap::new();
    let mut seen_i: HashMap<usize, usize> = HashMap::new();
    let mut cs: Vec<(usize, f64)> = Vec::new();
    let mut is: Vec<(usize, f64)> = Vec::new();
    let add = |seen: &mut HashMap<usize, usize>, out: &mut Vec<(usize, f64)>, row: usize, w: f64| {
        let slot = *seen.entry(row).or_insert_with(|| {
            out.push((row, 0.0));
            out.len() - 1
        });
        out[slot].1 += w;
    };
    for e in batch {
        add(&mut seen_c, &mut cs, e.context, 1.0);
        if !e.positives.is_empty() {
            let inv = 1.0 / e.positives.len() as f64;
            for &i in e.positives {
                add(&mut seen_i, &mut is, i, inv);
            }
        }
        for (&j, &w) in e.negatives.items.iter().zip(&e.negatives.weights) {
            add(&mut seen_i, &mut is, j, w);
        }
    }
    (cs, is)
}

fn l2_penalty(params: &DiscriminatorParams, batch: &[BatchEntry<'_>], l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let (cs, is) = reg_weights(batch);
    weighted_norms(params, &cs, &is, l2)
}

fn weighted_norms(params: &DiscriminatorParams, cs: &[(usize, f64)], is: &[(usize, f64)], l2: f64) -> f64 {
    let mut s = 0.0;
    for &(c, w) in cs {
        s += w * dot(params.context(c), params.context(c));
    }
    for &(i, w) in is {
        s += w * (dot(params.item(i), params.item(i)) + params.bias(i).powi(2));
    }
    l2 * s
}

/// The batch objective: summed loss contributions plus `l2 * ||touched||^2`.
///
/// With `stop_gradient_through_weights == false`, softmax weights are
/// recomputed from `params`; otherwise the stored weights are used.
pub fn batch_objective(
    params: &DiscriminatorParams,
    batch: &[BatchEntry<'_>],
    l2: f64,
    stop_gradient_through_weights: bool,
) -> f64 {
    let data: f64 = batch
        .iter()
        .map(|e| entry_terms(params, e, stop_gradient_through_weights).loss)
        .sum();
    data + l2_penalty(params, batch, l2)
}

pub fn batch_gradient(
    params: &DiscriminatorParams,
    batch: &[BatchEntry<'_>],
    l2: f64,
    stop_gradient_through_weights: bool,
    exec: Exec,
) -> Result<Gradient> {
    let d = params.dim;
    let terms = exec.map_slice(batch, |e| entry_terms(params, e, stop_gradient_through_weights));

    let mut grad = Gradient {
        contexts: SparseRows::new(d),
        items: SparseRows::new(d + 1),
        loss: 0.0,
    };
    for (entry, t) in batch.iter().zip(&terms) {
        let c = entry.context;
        if !t.loss.is_finite() || t.coefs.iter().any(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss or gradient for context {c} (loss {})",
                t.loss
            )));
        }
        grad.loss += t.loss;
        let u = params.context(c).to_vec();
        let mut du = vec![0.0; d];
        for &(i, coef) in &t.coefs {
            let v = params.item(i);
            for (a, &vi) in du.iter_mut().zip(v) {
                *a += coef * vi;
            }
            let row = grad.items.row_mut(i);
            for (a, &ui) in row.iter_mut().zip(&u) {
                *a += coef * ui;
            }
            row[d] += coef;
        }
        for (a, x) in grad.contexts.row_mut(c).iter_mut().zip(du) {
            *a += x;
        }
    }

    if l2 != 0.0 {
        let (cs, is) = reg_weights(batch);
        grad.loss += weighted_norms(params, &cs, &is, l2);
        for (c, w) in cs {
            let u = params.context(c);
            for (a, &x) in grad.contexts.row_mut(c).iter_mut().zip(u) {
                *a += 2.0 * l2 * w * x;
            }
        }
        for (i, w) in is {
            let v = params.item_row(i);
            for (a, &x) in grad.items.row_mut(i).iter_mut().zip(v) {
                *a += 2.0 * l2 * w * x;
            }
        }
    }

    let bad = grad
        .contexts
        .iter()
        .chain(grad.items.iter())
        .any(|(_, row)| row.iter().any(|x| !x.is_finite()));
    if bad {
        let c = batch.first().map_or(0, |e| e.context);
        return Err(Error::NonFinite(format!(
            "gradient in batch starting at context {c}"
        )));
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_coeff: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_coeff: 0.03,
        }
    }
}

/// Lazy Adam state: moments of a row change only when the row is touched,
/// while bias correction follows the global step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub settings: AdamSettings,
    pub step: u64,
    first: DiscriminatorParams,
    second: DiscriminatorParams,
}

impl OptimizerState {
    pub fn new(params: &DiscriminatorParams, settings: AdamSettings) -> Self {
        let zeros = DiscriminatorParams::zeros(params.num_contexts, params.num_items, params.dim);
        // Cloning writes every page now, instead of faulting zero pages in
        // one at a time as rows are first touched during training.
        Self {
            settings,
            step: 0,
            first: zeros.clone(),
            second: zeros.clone(),
        }
    }

    pub fn first_moment(&self) -> &DiscriminatorParams {
        &self.first
    }

    pub fn second_moment(&self) -> &DiscriminatorParams {
        &self.second
    }

    pub fn apply(&mut self, params: &mut DiscriminatorParams, grad: &Gradient) {
        self.step += 1;
        let s = self.settings;
        let t = self.step as i32;
        let bc1 = 1.0 - s.beta1.powi(t);
        let bc2 = 1.0 - s.beta2.powi(t);
        let update = |theta: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for k in 0..g.len() {
                m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g[k];
                v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                theta[k] -= s.learning_rate * mh / (vh.sqrt() + s.epsilon);
            }
        };
        let d = params.dim;
        for (c, g) in grad.contexts.iter() {
            let r = c * d..(c + 1) * d;
            update(
                &mut params.context_emb[r.clone()],
                &mut self.first.context_emb[r.clone()],
                &mut self.second.context_emb[r],
                g,
            );
        }
        for (i, g) in grad.items.iter() {
            update(
                params.item_row_mut(i),
                self.first.item_row_mut(i),
                self.second.item_row_mut(i),
                g,
            );
        }
    }
}

/// One analytic-gradient Adam step on the batch. Returns the batch objective
/// evaluated before the step.
pub fn grad_and_step(
    params: &mut DiscriminatorParams,
    opt: &mut OptimizerState,
    batch: &[BatchEntry<'_>],
    stop_gradient_through_weights: bool,
    exec: Exec,
) -> Result<f64> {
    let grad = batch_gradient(
        params,
        batch,
        opt.settings.l2_coeff,
        stop_gradient_through_weights,
        exec,
    )?;
    opt.apply(params, &grad);
    Ok(grad.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_dim() -> DiscriminatorParams {
        let mut p = DiscriminatorParams::zeros(2, 3, 2);
        p.context_mut(0).copy_from_slice(&[1.0, 2.0]);
        p.item_mut(1).copy_from_slice(&[3.0, 4.0]);
        *p.bias_mut(1) = 0.5;
        p
    }

    #[test]
    fn score_arithmetic_and_locality() {
        let mut p = two_dim();
        assert_eq!(p.score(0, 1), 11.5);
        assert_eq!(DiscriminatorParams::zeros(1, 1, 4).score(0, 0), 0.0);
        p.context_mut(1).copy_from_slice(&[9.0, 9.0]);
        p.item_mut(2).copy_from_slice(&[-7.0, 1.0]);
        *p.bias_mut(0) = 3.0;
        assert_eq!(p.score(0, 1), 11.5);
    }

    #[test]
    fn f_is_softplus_of_score() {
        let p = two_dim();
        assert_relative_eq!(softplus_f(&p, 0, 1), softplus(11.5));
        assert_relative_eq!(softplus_f(&p, 1, 0), std::f64::consts::LN_2);
    }

    #[test]
    fn weights_uniform_when_f_equal() {
        let p = DiscriminatorParams::zeros(1, 4, 2);
        let w = importance_weights(&p, 0, vec![0, 1, 2, 3], vec![(0.25f64).ln(); 4], 0.7).unwrap();
        for x in &w.weights {
            assert_relative_eq!(*x, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_two_point_softmax() {
        // f/T - log q = {1, 2}
        let w = weights_from_values(&[1.0, 2.0], &[0.0, 0.0], 1.0);
        assert_relative_eq!(w[0], 0.268_941_421_369_995_1, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.731_058_578_630_004_9, epsilon = 1e-12);
        let w = weights_from_values(&[3.0, 3.0], &[2.0, 1.0], 1.0);
        assert_relative_eq!(w[1], 0.731_058_578_630_004_9, epsilon = 1e-12);
    }

    #[test]
    fn uniform_proposal_reduces_to_tempered_softmax() {
        let mut p = DiscriminatorParams::init_random(1, 6, 3, 4);
        p.context_mut(0).iter_mut().for_each(|x| *x *= 300.0);
        let items = vec![0, 3, 5, 3];
        let t = 0.5;
        let w = importance_weights(&p, 0, items.clone(), vec![-(6f64).ln(); 4], t).unwrap();
        let e: Vec<f64> = items.iter().map(|&j| (p.f(0, j) / t).exp()).collect();
        let z: f64 = e.iter().sum();
        for (a, b) in w.weights.iter().zip(&e) {
            assert_relative_eq!(*a, b / z, epsilon = 1e-12);
        }
    }

    #[test]
    fn weights_reject_empty() {
        let p = DiscriminatorParams::zeros(1, 2, 2);
        assert!(matches!(
            importance_weights(&p, 0, vec![], vec![], 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn loss_at_zero_scores() {
        let p = DiscriminatorParams::zeros(1, 2, 2);
        let neg = WeightedNegatives::fixed(0, vec![1], vec![1.0]);
        assert_relative_eq!(
            loss_contribution(&p, 0, &[0], &neg),
            1.386_294_361_119_890_6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn loss_vanishes_under_perfect_separation() {
        let mut p = DiscriminatorParams::zeros(1, 3, 1);
        p.context_mut(0)[0] = 1.0;
        p.item_mut(0)[0] = 1e3;
        p.item_mut(1)[0] = -1e3;
        p.item_mut(2)[0] = -1e3;
        let neg = WeightedNegatives::fixed(0, vec![1, 2], vec![0.5, 0.5]);
        assert!(loss_contribution(&p, 0, &[0], &neg) < 1e-300);
    }

    #[test]
    fn loss_matches_naive_evaluator() {
        // positives g = {1, -1}; negatives g = {0.5, -0.5} with weights {0.7, 0.3}
        let mut p = DiscriminatorParams::zeros(1, 4, 1);
        p.context_mut(0)[0] = 1.0;
        for (i, g) in [1.0, -1.0, 0.5, -0.5].into_iter().enumerate() {
            p.item_mut(i)[0] = g;
        }
        let neg = WeightedNegatives::fixed(0, vec![2, 3], vec![0.7, 0.3]);
        let naive = {
            let s = |g: f64| 1.0 / (1.0 + (-g as f64).exp());
            -0.5 * (s(1.0).ln() + s(-1.0).ln())
                - 0.7 * (1.0 - s(0.5)).ln()
                - 0.3 * (1.0 - s(-0.5)).ln()
        };
        assert_relative_eq!(loss_contribution(&p, 0, &[0, 1], &neg), naive, epsilon = 1e-10);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut p = DiscriminatorParams::init_random(3, 5, 4, 1);
        let before = p.clone();
        let pos = vec![0, 2];
        let batch = vec![BatchEntry {
            context: 1,
            positives: &pos,
            negatives: WeightedNegatives::fixed(1, vec![3, 4], vec![0.5, 0.5]),
        }];
        let settings = AdamSettings {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut opt = OptimizerState::new(&p, settings);
        grad_and_step(&mut p, &mut opt, &batch, true, Exec::Sequential).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn only_touched_rows_move() {
        let mut p = DiscriminatorParams::init_random(3, 6, 2, 8);
        let before = p.clone();
        let pos = vec![0];
        let batch = vec![BatchEntry {
            context: 2,
            positives: &pos,
            negatives: WeightedNegatives::fixed(2, vec![4], vec![1.0]),
        }];
        let mut opt = OptimizerState::new(&p, AdamSettings::default());
        grad_and_step(&mut p, &mut opt, &batch, true, Exec::Sequential).unwrap();
        assert_eq!(p.context(0), before.context(0));
        assert_eq!(p.context(1), before.context(1));
        assert_ne!(p.context(2), before.context(2));
        for i in [1, 2, 3, 5] {
            assert_eq!(p.item(i), before.item(i));
            assert_eq!(p.bias(i), before.bias(i));
        }
        assert_ne!(p.bias(0), 0.0);
        assert_ne!(p.bias(4), 0.0);
    }

    #[test]
    fn single_positive_gradient_matches_closed_form() {
        // With only a positive, dL/dg = -(1 - sigmoid(g)) / |I_c|; dg/db = 1.
        let mut p = DiscriminatorParams::init_random(1, 2, 3, 2);
        *p.bias_mut(0) = 0.3;
        let pos = vec![0];
        let batch = vec![BatchEntry {
            context: 0,
            positives: &pos,
            negatives: WeightedNegatives::fixed(0, vec![], vec![]),
        }];
        let g = batch_gradient(&p, &batch, 0.0, true, Exec::Sequential).unwrap();
        let expected = -(1.0 - sigmoid(p.score(0, 0)));
        assert_relative_eq!(g.items.get(0).unwrap()[3], expected, epsilon = 1e-15);

        let h = 1e-5;
        let mut hi = p.clone();
        *hi.bias_mut(0) += h;
        let mut lo = p.clone();
        *lo.bias_mut(0) -= h;
        let fd = (batch_objective(&hi, &batch, 0.0, true) - batch_objective(&lo, &batch, 0.0, true))
            / (2.0 * h);
        assert!(((fd - expected) / expected).abs() < 1e-4);
    }

    #[test]
    fn non_finite_gradient_names_context() {
        let mut p = DiscriminatorParams::zeros(2, 2, 1);
        p.context_mut(1)[0] = f64::NAN;
        let pos = vec![0];
        let batch = vec![BatchEntry {
            context: 1,
            positives: &pos,
            negatives: WeightedNegatives::fixed(1, vec![1], vec![1.0]),
        }];
        let err = batch_gradient(&p, &batch, 0.0, true, Exec::Sequential).unwrap_err();
        assert!(err.to_string().contains("context 1"), "{err}");
    }

    proptest! {
        #[test]
        fn weights_always_normalized(
            f in proptest::collection::vec(-50.0f64..50.0, 1..40),
            lq in -30.0f64..0.0,
            t in 0.01f64..100.0,
        ) {
            let lqs: Vec<f64> = (0..f.len()).map(|k| lq - k as f64 * 0.1).collect();
            let w = weights_from_values(&f, &lqs, t);
            let s: f64 = w.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn loss_is_nonnegative(seed in any::<u64>(), scale in 0.0f64..50.0) {
            let mut p = DiscriminatorParams::init_random(2, 8, 3, seed);
            p.context_mut(0).iter_mut().for_each(|x| *x *= scale * 100.0);
            let neg = importance_weights(&p, 0, vec![1, 2, 5], vec![-1.0, -2.0, -0.5], 0.3).unwrap();
            prop_assert!(loss_contribution(&p, 0, &[0, 7], &neg) >= 0.0);
        }
    }
}
