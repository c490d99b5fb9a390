//! Linear constraint blocks of the DSO problem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::SensitivityModel;
use crate::error::{Error, Result};
use crate::network::RadialNetwork;

/// Grid constraints in the demand vector `p`.
///
/// Inequality rows read `row(p) ≤ 0`:
///
/// * lower voltage: `-C^V p + c_l`
/// * upper voltage: `C^V p + c_u`
/// * flows: `C^S p + c_S`, stacked as `+P, -P, +Q, -Q`
/// * budget: `-cᵀp + c_0 P_0` for the broadcast price `c`
///
/// The balance row is the equality `c^{P0}ᵀ p + c_0^{P0} - P_0 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub voltage: DMatrix<f64>,
    pub voltage_lower: DVector<f64>,
    pub voltage_upper: DVector<f64>,
    pub flow: DMatrix<f64>,
    pub flow_offset: DVector<f64>,
    pub balance: DVector<f64>,
    pub balance_offset: f64,
    /// Energy procured at the substation, `P_0`.
    pub procurement: f64,
    /// Wholesale unit cost `c_0`.
    pub wholesale_cost: f64,
}

/// Row values of every constraint at one demand vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintValues {
    pub voltage_lower: DVector<f64>,
    pub voltage_upper: DVector<f64>,
    pub flow: DVector<f64>,
    pub balance: f64,
    pub budget: f64,
}

impl ConstraintValues {
    /// Largest violation over all rows, counting the balance row both ways.
    pub fn max_violation(&self) -> f64 {
        let worst = |v: &DVector<f64>| v.iter().copied().fold(0.0_f64, f64::max);
        worst(&self.voltage_lower)
            .max(worst(&self.voltage_upper))
            .max(worst(&self.flow))
            .max(self.balance.abs())
            .max(self.budget.max(0.0))
    }
}

/// Builds the constraint blocks from a sensitivity model.
///
/// Fails when the reference point itself violates a voltage or flow row,
/// since the model would then be anchored outside its own feasible set.
pub fn assemble_constraints(
    sens: &SensitivityModel,
    net: &RadialNetwork,
    procurement: f64,
    wholesale_cost: f64,
) -> Result<ConstraintSet> {
    if !(procurement.is_finite() && procurement >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "procurement {procurement} must be nonnegative"
        )));
    }
    if !(wholesale_cost.is_finite() && wholesale_cost > 0.0) {
        return Err(Error::NonPositivePrice(wholesale_cost));
    }
    let n = net.node_count();
    let na = net.aggregator_count();
    let vbar = &sens.voltage.offset;
    let voltage_lower = vbar.map(|v| net.v0 - net.epsilon - v);
    let voltage_upper = vbar.map(|v| v - net.v0 - net.epsilon);

    let mut flow = DMatrix::zeros(4 * n, na);
    let mut flow_offset = DVector::zeros(4 * n);
    let blocks = [
        (&sens.p_flow.matrix, &sens.p_flow.offset, 1.0, 0),
        (&sens.p_flow.matrix, &sens.p_flow.offset, -1.0, n),
        (&sens.q_flow.matrix, &sens.q_flow.offset, 1.0, 2 * n),
        (&sens.q_flow.matrix, &sens.q_flow.offset, -1.0, 3 * n),
    ];
    for (matrix, offset, sign, start) in blocks {
        flow.rows_mut(start, n).copy_from(&(matrix * sign));
        for k in 0..n {
            let line = &net.lines()[k];
            let limit = if start < 2 * n {
                line.p_limit
            } else {
                line.q_limit
            };
            flow_offset[start + k] = sign * offset[k] - limit;
        }
    }

    let set = ConstraintSet {
        voltage: sens.voltage.matrix.clone(),
        voltage_lower,
        voltage_upper,
        flow,
        flow_offset,
        balance: sens.import_row.clone(),
        balance_offset: sens.import_offset,
        procurement,
        wholesale_cost,
    };

    let p0 = &sens.reference.p_injection;
    let values = set.evaluate(p0, &vec![wholesale_cost; na]);
    let report = |what: &str, rows: &DVector<f64>| -> Result<()> {
        match rows.iter().position(|&g| g > 0.0) {
            Some(i) => Err(Error::InfeasibleReference(format!(
                "{what} row {i} ({:.3e})",
                rows[i]
            ))),
            None => Ok(()),
        }
    };
    report("lower voltage", &values.voltage_lower)?;
    report("upper voltage", &values.voltage_upper)?;
    report("flow", &values.flow)?;
    Ok(set)
}

impl ConstraintSet {
    pub fn node_count(&self) -> usize {
        self.voltage.nrows()
    }

    pub fn aggregator_count(&self) -> usize {
        self.voltage.ncols()
    }

    /// Number of inequality rows excluding the budget row.
    pub fn grid_rows(&self) -> usize {
        6 * self.node_count()
    }

    /// All row values at demand `p` with broadcast prices `prices`.
    pub fn evaluate(&self, p: &[f64], prices: &[f64]) -> ConstraintValues {
        let p = DVector::from_column_slice(p);
        let cv = &self.voltage * &p;
        let budget = -prices.iter().zip(p.iter()).map(|(c, p)| c * p).sum::<f64>()
            + self.wholesale_cost * self.procurement;
        ConstraintValues {
            voltage_lower: -&cv + &self.voltage_lower,
            voltage_upper: cv + &self.voltage_upper,
            flow: &self.flow * &p + &self.flow_offset,
            balance: self.balance.dot(&p) + self.balance_offset - self.procurement,
            budget,
        }
    }
}
