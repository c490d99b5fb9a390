//! Jain's fairness index over price- and size-weighted aggregator demand.
//!
//! Aggregators that supply power (`p_k ≤ τ`) are masked out. The rest are
//! compared through `y_k = p_k / (c_k G_k)`, the demand per prosumer per unit
//! price, and the index is `(Σ y)² / (m Σ y²)` with `m` the mask size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Demand at or below this counts as supply and leaves the mask.
pub const DEADBAND: f64 = 1e-9;

/// Jain's index `(Σx)² / (n Σx²)` of a nonnegative vector.
pub fn jain_scalar(x: &[f64]) -> Result<f64> {
    if x.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidArgument(
            "Jain's index needs nonnegative entries".into(),
        ));
    }
    let s1: f64 = x.iter().sum();
    let s2: f64 = x.iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        return Err(Error::ZeroAllocation);
    }
    Ok(s1 * s1 / (x.len() as f64 * s2))
}

/// Mask and weights derived from one demand/price pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessContext {
    mask: Vec<bool>,
    weights: Vec<f64>,
}

impl FairnessContext {
    /// Mask from `p` with the default deadband, weights `1 / (c_k G_k)`.
    pub fn new(p: &[f64], prices: &[f64], sizes: &[usize]) -> Result<Self> {
        Self::with_deadband(p, prices, sizes, DEADBAND)
    }

    pub fn with_deadband(p: &[f64], prices: &[f64], sizes: &[usize], tau: f64) -> Result<Self> {
        let mask: Vec<bool> = p.iter().map(|&v| v > tau).collect();
        Self::from_mask(mask, prices, sizes)
    }

    /// Uses an explicit mask, e.g. to hold it fixed while perturbing `p`.
    pub fn from_mask(mask: Vec<bool>, prices: &[f64], sizes: &[usize]) -> Result<Self> {
        if mask.len() != prices.len() || mask.len() != sizes.len() {
            return Err(Error::InvalidArgument(
                "mask, prices and sizes differ in length".into(),
            ));
        }
        let mut weights = vec![0.0; mask.len()];
        for k in 0..mask.len() {
            if mask[k] {
                if !(prices[k] > 0.0) {
                    return Err(Error::NonPositivePrice(prices[k]));
                }
                if sizes[k] == 0 {
                    return Err(Error::InvalidArgument(
                        "aggregator size must be positive".into(),
                    ));
                }
                weights[k] = 1.0 / (prices[k] * sizes[k] as f64);
            }
        }
        Ok(Self { mask, weights })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of aggregators inside the mask.
    pub fn support(&self) -> usize {
        self.mask.iter().filter(|&&z| z).count()
    }

    fn sums(&self, p: &[f64]) -> Result<(f64, f64, f64)> {
        let m = self.support();
        if m == 0 {
            return Err(Error::EmptyMask);
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for (w, v) in self.weights.iter().zip(p) {
            let y = w * v;
            s1 += y;
            s2 += y * y;
        }
        if s2 == 0.0 {
            return Err(Error::ZeroAllocation);
        }
        Ok((m as f64, s1, s2))
    }

    /// The masked, weighted index at `p`.
    pub fn index(&self, p: &[f64]) -> Result<f64> {
        let (m, s1, s2) = self.sums(p)?;
        Ok(s1 * s1 / (m * s2))
    }

    /// Gradient of [`Self::index`] in `p` with the mask and weights held
    /// fixed. Masked-out entries are exactly zero.
    pub fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (m, s1, s2) = self.sums(p)?;
        let a = 2.0 * s1 / (m * s2);
        let b = 2.0 * s1 * s1 / (m * s2 * s2);
        Ok(self
            .weights
            .iter()
            .zip(p)
            .map(|(&w, &v)| if w == 0.0 { 0.0 } else { w * (a - b * w * v) })
            .collect())
    }
}

/// The masked, weighted index at `p`.
pub fn jain_masked(ctx: &FairnessContext, p: &[f64]) -> Result<f64> {
    ctx.index(p)
}

/// Gradient of the masked index, refusing points where some demand sits
/// inside the deadband around zero and the mask is about to flip.
pub fn jain_gradient(ctx: &FairnessContext, p: &[f64]) -> Result<Vec<f64>> {
    if let Some(k) = p.iter().position(|v| v.abs() <= DEADBAND) {
        return Err(Error::NonsmoothPoint(k));
    }
    ctx.gradient(p)
}
