//! KKT residuals of the welfare problem over the linear constraint set.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::powerflow::ConstraintSet;

/// Multipliers of the unscaled constraint rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub voltage_lower: DVector<f64>,
    pub voltage_upper: DVector<f64>,
    pub flow: DVector<f64>,
    pub balance: f64,
    pub budget: f64,
    /// Multipliers of `p_k ≥ floor_k`, the demand an aggregator reaches with
    /// every prosumer at zero consumption. Zero in market runs.
    pub floor: DVector<f64>,
}

/// Sup-norms of the four KKT residual groups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Gradient of the Lagrangian, relative to `max(1, ‖c‖∞)`.
    pub stationarity: f64,
    /// Largest constraint violation, the balance row counted both ways.
    pub primal: f64,
    /// Largest negative inequality multiplier, as a positive number.
    pub dual: f64,
    /// Largest `|μ_j g_j|` over inequality rows.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Residuals at demand `p`.
///
/// `slope` is the welfare gradient, which equals the price each aggregator
/// responded to; the budget row is evaluated with it as well.
/// `fairness_term` is `(C/2) ∇J`, zero without regularization.
pub fn kkt_report(
    cons: &ConstraintSet,
    p: &[f64],
    slope: &[f64],
    m: &Multipliers,
    fairness_term: &DVector<f64>,
) -> KktReport {
    let c = DVector::from_column_slice(slope);
    let values = cons.evaluate(p, slope);

    // ∇W + (C/2)∇J = Σ μ_j ∇g_j + λ ∇h
    let mut dual_side = cons.voltage.tr_mul(&(&m.voltage_upper - &m.voltage_lower));
    dual_side += cons.flow.tr_mul(&m.flow);
    dual_side += &cons.balance * m.balance;
    dual_side -= &c * m.budget;
    dual_side -= &m.floor;
    let scale = c.amax().max(1.0);
    let stationarity = (&c + fairness_term - dual_side).amax() / scale;

    let negative = |v: &DVector<f64>| v.iter().fold(0.0_f64, |acc, &x| acc.max(-x));
    let dual = negative(&m.voltage_lower)
        .max(negative(&m.voltage_upper))
        .max(negative(&m.flow))
        .max(negative(&m.floor))
        .max(-m.budget);

    let product = |mu: &DVector<f64>, g: &DVector<f64>| {
        mu.iter()
            .zip(g.iter())
            .fold(0.0_f64, |a, (m, g)| a.max((m * g).abs()))
    };
    let complementarity = product(&m.voltage_lower, &values.voltage_lower)
        .max(product(&m.voltage_upper, &values.voltage_upper))
        .max(product(&m.flow, &values.flow))
        .max((m.budget * values.budget).abs());

    KktReport {
        stationarity,
        primal: values.max_violation(),
        dual,
        complementarity,
    }
}
