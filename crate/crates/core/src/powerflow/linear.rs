//! Linearized branch flow around a reference AC solution.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ac::{solve_ac, PowerFlowSolution};
use crate::error::{Error, Result};
use crate::network::{RadialNetwork, TopologyOperators};

/// Step used for the central loss differences.
pub const LOSS_FD_STEP: f64 = 1e-5;

/// `tan(acos(pf))` for a lagging power factor `pf`.
pub fn tan_phi(power_factor: f64) -> f64 {
    power_factor.acos().tan()
}

/// Reactive demand implied by real demand and per-aggregator `tan φ`.
pub fn reactive(p: &[f64], tan_phi: &[f64]) -> Vec<f64> {
    p.iter().zip(tan_phi).map(|(p, t)| p * t).collect()
}

/// `x ↦ matrix · x + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(x) + &self.offset
    }
}

/// Derivatives of line losses with respect to aggregator demands, N×|A|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossJacobians {
    /// `∂L^P_l / ∂p_k`
    pub p_wrt_p: DMatrix<f64>,
    /// `∂L^P_l / ∂q_k`
    pub p_wrt_q: DMatrix<f64>,
    /// `∂L^Q_l / ∂p_k`
    pub q_wrt_p: DMatrix<f64>,
    /// `∂L^Q_l / ∂q_k`
    pub q_wrt_q: DMatrix<f64>,
}

/// Loss Jacobians by central differences of the AC solution.
pub fn loss_jacobians(net: &RadialNetwork, reference: &PowerFlowSolution) -> Result<LossJacobians> {
    loss_jacobians_with_step(net, reference, LOSS_FD_STEP)
}

pub fn loss_jacobians_with_step(
    net: &RadialNetwork,
    reference: &PowerFlowSolution,
    h: f64,
) -> Result<LossJacobians> {
    let (n, na) = (net.node_count(), net.aggregator_count());
    let p0 = &reference.p_injection;
    let q0 = &reference.q_injection;
    let columns: Vec<[Vec<f64>; 4]> = (0..na)
        .into_par_iter()
        .map(|j| {
            let shifted = |base: &[f64], delta: f64| {
                let mut v = base.to_vec();
                v[j] += delta;
                v
            };
            let diff = |plus: PowerFlowSolution, minus: PowerFlowSolution| {
                let dp = (0..n)
                    .map(|l| (plus.loss_p[l] - minus.loss_p[l]) / (2.0 * h))
                    .collect();
                let dq = (0..n)
                    .map(|l| (plus.loss_q[l] - minus.loss_q[l]) / (2.0 * h))
                    .collect();
                (dp, dq)
            };
            let (pp, qp) = diff(
                solve_ac(net, &shifted(p0, h), q0)?,
                solve_ac(net, &shifted(p0, -h), q0)?,
            );
            let (pq, qq) = diff(
                solve_ac(net, p0, &shifted(q0, h))?,
                solve_ac(net, p0, &shifted(q0, -h))?,
            );
            Ok([pp, pq, qp, qq])
        })
        .collect::<Result<_>>()?;

    let assemble = |which: usize| DMatrix::from_fn(n, na, |l, j| columns[j][which][l]);
    Ok(LossJacobians {
        p_wrt_p: assemble(0),
        p_wrt_q: assemble(1),
        q_wrt_p: assemble(2),
        q_wrt_q: assemble(3),
    })
}

/// Every linearization artifact, expressed in the real demand `p` alone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SensitivityModel {
    /// `r / (r² + x²)` per line.
    pub b_r: DVector<f64>,
    /// `x / (r² + x²)` per line.
    pub b_x: DVector<f64>,
    /// Maps stacked node voltages and angles to stacked sending-end flows.
    pub m: DMatrix<f64>,
    /// Substation contribution to the sending-end flows.
    pub n: DVector<f64>,
    /// `M⁻¹`.
    pub c: DMatrix<f64>,
    pub jacobians: LossJacobians,
    pub tan_phi: Vec<f64>,
    pub reference: PowerFlowSolution,
    /// `p ↦ V`, calibrated to reproduce the reference voltages exactly.
    pub voltage: AffineMap,
    /// `p ↦ δ`, calibrated like `voltage`.
    pub angle: AffineMap,
    /// `p ↦ P` at the receiving end of each line.
    pub p_flow: AffineMap,
    pub q_flow: AffineMap,
    /// `p ↦ L^P`.
    pub loss_p: AffineMap,
    /// Row of `p ↦ P_0`, the real power drawn from the substation.
    pub import_row: DVector<f64>,
    pub import_offset: f64,
    /// Shift applied to the composed voltage offset to make it exact at the
    /// reference; its size measures the error of the voltage-difference
    /// linearization at that point.
    pub voltage_calibration: DVector<f64>,
}

/// Builds the sensitivity model around `reference`.
///
/// The reference reactive demand must equal `tan_phi ∘ p` since the model
/// eliminates `q` through that relation.
pub fn linearize(
    net: &RadialNetwork,
    topo: &TopologyOperators,
    reference: &PowerFlowSolution,
    tan_phi: &[f64],
) -> Result<SensitivityModel> {
    let (n, na) = (net.node_count(), net.aggregator_count());
    if tan_phi.len() != na {
        return Err(Error::InvalidArgument("one tan φ per aggregator".into()));
    }
    let q_expected = reactive(&reference.p_injection, tan_phi);
    for (q, e) in reference.q_injection.iter().zip(&q_expected) {
        if (q - e).abs() > 1e-12 * (1.0 + e.abs()) {
            return Err(Error::InvalidArgument(
                "reference reactive demand must equal tan φ times real demand".into(),
            ));
        }
    }

    let b_r = DVector::from_iterator(n, net.lines().iter().map(|l| l.r / (l.r * l.r + l.x * l.x)));
    let b_x = DVector::from_iterator(n, net.lines().iter().map(|l| l.x / (l.r * l.r + l.x * l.x)));
    let diff = topo.parent_difference();
    let br = DMatrix::from_diagonal(&b_r);
    let bx = DMatrix::from_diagonal(&b_x);

    // Sending-end flows:  P + L^P = B^r (D V + V0 e) + B^x (D δ + δ0 e)
    //                     Q + L^Q = B^x (D V + V0 e) − B^r (D δ + δ0 e)
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&br * diff));
    m.view_mut((0, n), (n, n)).copy_from(&(&bx * diff));
    m.view_mut((n, 0), (n, n)).copy_from(&(&bx * diff));
    m.view_mut((n, n), (n, n)).copy_from(&(-&br * diff));
    let e = topo.root_indicator();
    let mut n_vec = DVector::zeros(2 * n);
    n_vec
        .rows_mut(0, n)
        .copy_from(&(b_r.component_mul(e) * net.v0 + b_x.component_mul(e) * net.delta0));
    n_vec
        .rows_mut(n, n)
        .copy_from(&(b_x.component_mul(e) * net.v0 - b_r.component_mul(e) * net.delta0));
    let c = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("voltage/angle map of the linearized flows".into()))?;

    let jacobians = loss_jacobians(net, reference)?;
    let tan = DMatrix::from_diagonal(&DVector::from_column_slice(tan_phi));
    let k_p = &jacobians.p_wrt_p + &jacobians.p_wrt_q * &tan;
    let k_q = &jacobians.q_wrt_p + &jacobians.q_wrt_q * &tan;

    let inc = net.incidence();
    let subtree = topo.subtree();
    let p0 = DVector::from_column_slice(&reference.p_injection);
    let l0p = DVector::from_column_slice(&reference.loss_p);
    let l0q = DVector::from_column_slice(&reference.loss_q);
    let lp_rest = &l0p - &k_p * &p0;
    let lq_rest = &l0q - &k_q * &p0;

    // Sending-end flows as affine functions of p.
    let mut send_matrix = DMatrix::zeros(2 * n, na);
    send_matrix
        .rows_mut(0, n)
        .copy_from(&(&subtree * (&inc + &k_p)));
    send_matrix
        .rows_mut(n, n)
        .copy_from(&(&subtree * (&inc * &tan + &k_q)));
    let mut send_offset = DVector::zeros(2 * n);
    send_offset.rows_mut(0, n).copy_from(&(&subtree * &lp_rest));
    send_offset.rows_mut(n, n).copy_from(&(&subtree * &lq_rest));

    let state_matrix = &c * &send_matrix;
    let state_offset = &c * (&send_offset - &n_vec);
    let v_matrix = state_matrix.rows(0, n).into_owned();
    let a_matrix = state_matrix.rows(n, n).into_owned();

    let v_ref = DVector::from_column_slice(&reference.v);
    let a_ref = DVector::from_column_slice(&reference.angle);
    let v_offset = &v_ref - &v_matrix * &p0;
    let a_offset = &a_ref - &a_matrix * &p0;
    let voltage_calibration = &v_offset - state_offset.rows(0, n);

    let tree = topo.tree();
    let p_flow = AffineMap {
        matrix: &subtree * &inc + tree * &k_p,
        offset: tree * &lp_rest,
    };
    let q_flow = AffineMap {
        matrix: &subtree * &inc * &tan + tree * &k_q,
        offset: tree * &lq_rest,
    };
    let ones = DVector::from_element(n, 1.0);
    let import_row = (&inc + &k_p).tr_mul(&ones);
    let import_offset = lp_rest.sum();

    Ok(SensitivityModel {
        b_r,
        b_x,
        m,
        n: n_vec,
        c,
        jacobians,
        tan_phi: tan_phi.to_vec(),
        reference: reference.clone(),
        voltage: AffineMap {
            matrix: v_matrix,
            offset: v_offset,
        },
        angle: AffineMap {
            matrix: a_matrix,
            offset: a_offset,
        },
        p_flow,
        q_flow,
        loss_p: AffineMap {
            matrix: k_p,
            offset: lp_rest,
        },
        import_row,
        import_offset,
        voltage_calibration,
    })
}

impl SensitivityModel {
    pub fn node_count(&self) -> usize {
        self.b_r.len()
    }

    pub fn aggregator_count(&self) -> usize {
        self.tan_phi.len()
    }

    /// Predicted substation import at `p`.
    pub fn import(&self, p: &[f64]) -> f64 {
        self.import_row.dot(&DVector::from_column_slice(p)) + self.import_offset
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_topology, parse_feeder};

    #[test]
    fn single_line_voltage_sensitivity() {
        let net = parse_feeder(
            "[base]\nmva = 1\nkv = 1\nsubstation = 0\n[nodes]\n0\n1\n\
             [lines]\n0 1 0.01 0.01 10 10\n[aggregators]\nA1 1\n[limits]\nepsilon_pu = 0.05\n",
        )
        .unwrap();
        let topo = build_topology(&net);
        let t = [tan_phi(0.95)];
        let p = [0.1];
        let reference = solve_ac(&net, &p, &reactive(&p, &t)).unwrap();
        let sens = linearize(&net, &topo, &reference, &t).unwrap();
        let hand = -(0.01 + 0.01 * t[0]) / net.v0;
        let cv = sens.voltage.matrix[(0, 0)];
        // Loss slopes add a few tenths of a percent on top of the lossless value.
        assert!((cv - hand).abs() < 0.01 * hand.abs(), "{cv} vs {hand}");
        assert!((sens.voltage.apply(&p)[0] - reference.v[0]).abs() < 1e-12);
    }
}
