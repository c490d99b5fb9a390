//! Linear-model predictions against the AC oracle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ac::solve_ac;
use super::linear::SensitivityModel;
use crate::error::Result;
use crate::format::sig12;
use crate::network::RadialNetwork;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    /// One of `V`, `P`, `Q`, `LP`.
    pub quantity: String,
    /// External id of the node, or of the receiving node for line quantities.
    pub id: String,
    pub predicted: f64,
    pub actual: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub max_voltage: f64,
    pub max_p_flow: f64,
    pub max_q_flow: f64,
    pub max_loss: f64,
    pub rows: Vec<ErrorRow>,
}

impl LinearizationReport {
    /// CSV with columns `quantity,id,predicted,actual,abs_error`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,id,predicted,actual,abs_error\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.quantity,
                r.id,
                sig12(r.predicted),
                sig12(r.actual),
                sig12(r.abs_error)
            );
        }
        s
    }
}

/// Compares the affine predictions at `p` with an AC solve at `(p, q)`.
///
/// Predictions depend on `p` alone since the model ties `q` to `p`; pass the
/// matching `q` to measure the linearization error proper.
pub fn linearization_error(
    net: &RadialNetwork,
    sens: &SensitivityModel,
    p: &[f64],
    q: &[f64],
) -> Result<LinearizationReport> {
    let ac = solve_ac(net, p, q)?;
    let groups = [
        ("V", sens.voltage.apply(p), &ac.v),
        ("P", sens.p_flow.apply(p), &ac.p_flow),
        ("Q", sens.q_flow.apply(p), &ac.q_flow),
        ("LP", sens.loss_p.apply(p), &ac.loss_p),
    ];
    let mut rows = Vec::new();
    let mut maxima = [0.0_f64; 4];
    for (g, (name, predicted, actual)) in groups.iter().enumerate() {
        for k in 0..net.node_count() {
            let abs_error = (predicted[k] - actual[k]).abs();
            maxima[g] = maxima[g].max(abs_error);
            rows.push(ErrorRow {
                quantity: name.to_string(),
                id: net.node_id(k + 1).to_string(),
                predicted: predicted[k],
                actual: actual[k],
                abs_error,
            });
        }
    }
    Ok(LinearizationReport {
        max_voltage: maxima[0],
        max_p_flow: maxima[1],
        max_q_flow: maxima[2],
        max_loss: maxima[3],
        rows,
    })
}
