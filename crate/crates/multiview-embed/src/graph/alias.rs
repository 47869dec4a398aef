//! Constant-time sampling from arbitrary discrete distributions (Vose's
//! alias method). Construction is O(n); each draw consumes two uniform
//! random numbers and runs in O(1).

use rand::Rng;

use super::GraphError;

/// Alias table over `n` slots. Slot `i` is drawn with probability
/// `weight_i / sum(weights)`, up to the floating-point rounding incurred
/// while building the table. Zero weights are allowed and are never drawn.
#[derive(Debug, Clone)]
pub struct AliasTable {
    cutoff: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<AliasTable, GraphError> {
        if weights.is_empty() {
            return Err(GraphError::EmptyDistribution);
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(GraphError::InvalidWeight);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(GraphError::EmptyDistribution);
        }

        let n = weights.len();
        let scale = n as f64 / total;
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let mut cutoff = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();

        let mut underfull = Vec::new();
        let mut overfull = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                underfull.push(i);
            } else if s > 1.0 {
                overfull.push(i);
            }
        }

        while let (Some(&under), Some(&over)) = (underfull.last(), overfull.last()) {
            underfull.pop();
            cutoff[under] = scaled[under];
            alias[under] = over;
            scaled[over] += scaled[under] - 1.0;
            if scaled[over] < 1.0 {
                overfull.pop();
                underfull.push(over);
            } else if scaled[over] <= 1.0 {
                // Exactly full (within rounding): retire the slot.
                overfull.pop();
            }
        }
        // Leftovers on either side carry mass 1 up to rounding error.
        for &i in underfull.iter().chain(overfull.iter()) {
            cutoff[i] = 1.0;
        }

        Ok(AliasTable { cutoff, alias })
    }

    pub fn len(&self) -> usize {
        self.cutoff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cutoff.is_empty()
    }

    /// Draw one slot index.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let slot = rng.random_range(0..self.cutoff.len());
        if rng.random::<f64>() < self.cutoff[slot] {
            slot
        } else {
            self.alias[slot]
        }
    }

    /// Exact draw probability of `slot` as encoded by the table.
    pub fn probability(&self, slot: usize) -> f64 {
        let n = self.cutoff.len() as f64;
        let mut p = self.cutoff[slot];
        for (i, &a) in self.alias.iter().enumerate() {
            if a == slot {
                p += 1.0 - self.cutoff[i];
            }
        }
        p / n
    }
}
