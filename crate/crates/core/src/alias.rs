//! Vose alias tables: O(n) construction, O(1) draws from a fixed discrete
//! distribution.

use rand::Rng;

use crate::error::{Error, Result};

/// Draw-time view of a slot, kept to 8 bytes so that large tables stay
/// cache friendly. The coin keeps the slot when a uniform `u32` is below
/// `threshold`, which matches `prob` to within 2^-32.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    threshold: u32,
    alias: u32,
}

/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    slots: Vec<Slot>,
    probs: Vec<f64>,
    pmf: Vec<f64>,
}

fn threshold(prob: f64) -> u32 {
    // A full slot aliases to itself, so saturating at u32::MAX is exact there.
    (prob * 4_294_967_296.0).round().min(u32::MAX as f64) as u32
}

impl AliasTable {
    /// Build a table from nonnegative (not necessarily normalized) weights.
    pub fn build(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidDistribution("no categories".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidDistribution(format!(
                "{n} categories exceed the table index range"
            )));
        }
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "weight {i} is {w}"
                )));
            }
            total += w;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }

        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let scale = n as f64;
        let mut scaled: Vec<f64> = pmf.iter().map(|p| p * scale).collect();

        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }

        let mut probs = vec![1.0; n];
        let mut aliases: Vec<u32> = (0..n as u32).collect();
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            large.pop();
            let (su, lu) = (s as usize, l as usize);
            probs[su] = scaled[su];
            aliases[su] = l;
            scaled[lu] = (scaled[lu] + scaled[su]) - 1.0;
            if scaled[lu] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // Whatever is left is full up to rounding drift.
        for i in large.into_iter().chain(small) {
            probs[i as usize] = 1.0;
            aliases[i as usize] = i;
        }

        let slots = probs
            .iter()
            .zip(&aliases)
            .map(|(&p, &alias)| Slot {
                threshold: threshold(p),
                alias,
            })
            .collect();
        Ok(Self { slots, probs, pmf })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// The normalized distribution the table was built from.
    pub fn source_pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, slot: usize) -> f64 {
        self.probs[slot]
    }

    pub fn alias(&self, slot: usize) -> usize {
        self.slots[slot].alias as usize
    }

    /// One uniform slot pick and one biased coin.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let (slot, coin) = self.pick(rng);
        self.resolve(slot, coin)
    }

    /// The random half of a draw. Splitting it from [`resolve`](Self::resolve)
    /// lets callers issue many table loads back to back.
    #[inline]
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, u32) {
        (rng.random_range(0..self.slots.len()), rng.random::<u32>())
    }

    #[inline]
    pub fn resolve(&self, slot: usize, coin: u32) -> usize {
        let s = self.slots[slot];
        // Branch-free select: the coin is unpredictable, and a mispredict
        // would also discard loads already in flight for later draws.
        let keep = (coin < s.threshold) as usize;
        keep * slot + (1 - keep) * s.alias as usize
    }

    /// The distribution implied by the `(prob, alias)` pairs.
    pub fn reconstruct_pmf(&self) -> Vec<f64> {
        let n = self.slots.len() as f64;
        let mut out = vec![0.0; self.slots.len()];
        for (i, (p, s)) in self.probs.iter().zip(&self.slots).enumerate() {
            out[i] += p / n;
            out[s.alias as usize] += (1.0 - p) / n;
        }
        out
    }
}
