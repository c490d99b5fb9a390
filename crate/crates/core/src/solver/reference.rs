//! Full-information welfare maximization for small instances.
//!
//! The market never sees utilities, so its outcome can only be checked
//! against a solver that does. This one runs projected gradient ascent on
//! welfare plus the fairness term, using inverse demand to get each
//! aggregator's welfare slope, and projects onto the linear constraint set
//! with Hildreth's dual coordinate method.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::agents::FullInformation;
use crate::error::{Error, Result};
use crate::fairness::FairnessContext;
use crate::powerflow::ConstraintSet;

use super::kkt::{kkt_report, KktReport, Multipliers};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    pub max_iter: usize,
    /// Stop once the projected step, divided by the step length, is below this.
    pub tolerance: f64,
    /// Coordinate cycles allowed per projection.
    pub projection_cycles: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            max_iter: 1_000_000,
            tolerance: 1e-11,
            projection_cycles: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub demands: Vec<f64>,
    /// Welfare slopes at the solution, i.e. the prices that would elicit it.
    pub prices: Vec<f64>,
    pub welfare: Vec<f64>,
    pub total_welfare: f64,
    pub jain: Option<f64>,
    pub objective: f64,
    pub multipliers: Multipliers,
    pub kkt: KktReport,
    pub iterations: usize,
    pub converged: bool,
}

/// Rows `a·x ≤ b`, or `a·x = b` when `equality`.
struct Polytope {
    rows: Vec<(DVector<f64>, f64, bool)>,
    norms: Vec<f64>,
    /// Which constraint each row came from, for mapping multipliers back.
    origin: Vec<Origin>,
}

#[derive(Clone, Copy)]
enum Origin {
    VoltageLower(usize),
    VoltageUpper(usize),
    Flow(usize),
    Balance,
    Floor(usize),
}

impl Polytope {
    fn new(cons: &ConstraintSet, floors: &[f64]) -> Result<Self> {
        let mut rows = Vec::new();
        let mut origin = Vec::new();
        let mut push = |a: DVector<f64>, b: f64, eq: bool, o: Origin| -> Result<()> {
            if a.norm() == 0.0 {
                let ok = if eq { b == 0.0 } else { b >= 0.0 };
                return if ok {
                    Ok(())
                } else {
                    Err(Error::Infeasible(
                        "a constant constraint row is violated".into(),
                    ))
                };
            }
            rows.push((a, b, eq));
            origin.push(o);
            Ok(())
        };
        for i in 0..cons.node_count() {
            let a = cons.voltage.row(i).transpose();
            push(-&a, -cons.voltage_lower[i], false, Origin::VoltageLower(i))?;
            push(a, -cons.voltage_upper[i], false, Origin::VoltageUpper(i))?;
        }
        for i in 0..cons.flow.nrows() {
            push(
                cons.flow.row(i).transpose(),
                -cons.flow_offset[i],
                false,
                Origin::Flow(i),
            )?;
        }
        push(
            cons.balance.clone(),
            cons.procurement - cons.balance_offset,
            true,
            Origin::Balance,
        )?;
        for (k, &f) in floors.iter().enumerate() {
            let mut a = DVector::zeros(floors.len());
            a[k] = -1.0;
            push(a, -f, false, Origin::Floor(k))?;
        }
        let norms = rows.iter().map(|(a, _, _)| a.norm_squared()).collect();
        Ok(Self {
            rows,
            norms,
            origin,
        })
    }

    /// Euclidean projection of `y`, warm-started from and updating `nu`.
    fn project(&self, y: &DVector<f64>, nu: &mut [f64], cycles: usize) -> Result<DVector<f64>> {
        let mut x = y.clone();
        for (i, (a, _, _)) in self.rows.iter().enumerate() {
            x.axpy(-nu[i], a, 1.0);
        }
        let scale = 1.0 + y.amax();
        for _ in 0..cycles {
            let mut moved: f64 = 0.0;
            for (i, (a, b, eq)) in self.rows.iter().enumerate() {
                let r = a.dot(&x) - b;
                let mut next = nu[i] + r / self.norms[i];
                if !eq {
                    next = next.max(0.0);
                }
                let delta = next - nu[i];
                if delta != 0.0 {
                    x.axpy(-delta, a, 1.0);
                    nu[i] = next;
                    moved = moved.max(delta.abs() * self.norms[i].sqrt());
                }
            }
            if moved <= 1e-15 * scale {
                break;
            }
        }
        let violation = self
            .rows
            .iter()
            .map(|(a, b, eq)| {
                let r = a.dot(&x) - b;
                if *eq {
                    r.abs()
                } else {
                    r.max(0.0)
                }
            })
            .fold(0.0, f64::max);
        if violation > 1e-9 * scale {
            return Err(Error::Infeasible(format!(
                "projection left a violation of {violation:.3e}"
            )));
        }
        Ok(x)
    }

    fn multipliers(&self, nu: &[f64], step: f64, n: usize, na: usize) -> Multipliers {
        let mut m = Multipliers {
            voltage_lower: DVector::zeros(n),
            voltage_upper: DVector::zeros(n),
            flow: DVector::zeros(4 * n),
            balance: 0.0,
            budget: 0.0,
            floor: DVector::zeros(na),
        };
        for (o, &v) in self.origin.iter().zip(nu) {
            let v = v / step;
            match *o {
                Origin::VoltageLower(i) => m.voltage_lower[i] = v,
                Origin::VoltageUpper(i) => m.voltage_upper[i] = v,
                Origin::Flow(i) => m.flow[i] = v,
                Origin::Balance => m.balance = v,
                Origin::Floor(k) => m.floor[k] = v,
            }
        }
        m
    }
}

/// Maximizes welfare plus `(C/2)·J` over the linear constraint set.
///
/// The fairness weights `1/(c_k G_k)` are taken at the current slopes and
/// held fixed when differentiating, which is the same convention the market
/// loop uses, so both converge to the same stationary point.
pub fn solve_reference<A: FullInformation>(
    cons: &ConstraintSet,
    aggregators: &[A],
    fairness_weight: f64,
    opts: &ReferenceOptions,
) -> Result<ReferenceSolution> {
    let na = aggregators.len();
    if na != cons.aggregator_count() {
        return Err(Error::InvalidArgument(
            "one aggregator per constraint column".into(),
        ));
    }
    let floors: Vec<f64> = aggregators.iter().map(|a| a.demand_floor()).collect();
    let sizes: Vec<usize> = aggregators.iter().map(|a| a.size()).collect();
    let poly = Polytope::new(cons, &floors)?;
    let mut nu = vec![0.0; poly.rows.len()];

    let slopes = |p: &DVector<f64>| -> Result<DVector<f64>> {
        let mut c = DVector::zeros(na);
        for k in 0..na {
            c[k] = aggregators[k].inverse_demand(p[k].max(floors[k]))?;
        }
        Ok(c)
    };
    let direction = |p: &DVector<f64>, c: &DVector<f64>| -> Result<DVector<f64>> {
        let mut d = c.clone();
        if fairness_weight > 0.0 {
            let ctx = FairnessContext::new(p.as_slice(), c.as_slice(), &sizes)?;
            if ctx.support() > 0 {
                d += DVector::from_vec(ctx.gradient(p.as_slice())?) * (0.5 * fairness_weight);
            }
        }
        Ok(d)
    };

    let start: Vec<f64> = aggregators
        .iter()
        .map(|a| a.respond(cons.wholesale_cost).map(|r| r.demand))
        .collect::<Result<_>>()?;
    let mut p = poly.project(&DVector::from_vec(start), &mut nu, opts.projection_cycles)?;
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let c = slopes(&p)?;
        // Curvature of W_k is 1 / (d demand / d price); step by the flattest.
        let min_slope = (0..na)
            .map(|k| aggregators[k].demand_slope(c[k]).abs())
            .filter(|s| *s > 0.0)
            .fold(f64::INFINITY, f64::min);
        if min_slope.is_finite() {
            step = 0.5 * min_slope;
        }
        let d = direction(&p, &c)?;
        let x = poly.project(&(&p + &d * step), &mut nu, opts.projection_cycles)?;
        let moved = (&x - &p).amax() / step;
        p = x;
        if moved <= opts.tolerance {
            converged = true;
            break;
        }
    }

    let c = slopes(&p)?;
    let multipliers = poly.multipliers(&nu, step, cons.node_count(), na);
    let ctx = FairnessContext::new(p.as_slice(), c.as_slice(), &sizes)?;
    let jain = (ctx.support() > 0)
        .then(|| ctx.index(p.as_slice()).ok())
        .flatten();
    let fairness_term = if fairness_weight > 0.0 && ctx.support() > 0 {
        DVector::from_vec(ctx.gradient(p.as_slice())?) * (0.5 * fairness_weight)
    } else {
        DVector::zeros(na)
    };
    let kkt = kkt_report(
        cons,
        p.as_slice(),
        c.as_slice(),
        &multipliers,
        &fairness_term,
    );
    let welfare: Vec<f64> = (0..na)
        .map(|k| aggregators[k].respond(c[k]).map(|r| r.welfare))
        .collect::<Result<_>>()?;
    let total_welfare = welfare.iter().sum();
    Ok(ReferenceSolution {
        demands: p.as_slice().to_vec(),
        prices: c.as_slice().to_vec(),
        welfare,
        total_welfare,
        jain,
        objective: total_welfare + 0.5 * fairness_weight * jain.unwrap_or(0.0),
        multipliers,
        kkt,
        iterations,
        converged,
    })
}
