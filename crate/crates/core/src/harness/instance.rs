//! Assembly of a market instance: feeder, agents, reference point, linear
//! model and constraints.

use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::agents::{Aggregator, LogUtility, PriceResponsive, Prosumer};
use crate::error::{Error, Result};
use crate::network::{build_topology, parse_feeder, RadialNetwork, TopologyOperators};
use crate::powerflow::{
    assemble_constraints, linearize, reactive, solve_ac, tan_phi, ConstraintSet, PowerFlowSolution,
    SensitivityModel,
};

/// How the procured energy `P_0` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Procurement {
    Fixed(f64),
    /// This fraction of the total demand at the flat wholesale price.
    FractionOfFlatDemand(f64),
}

/// A fully built market, ready for [`crate::solver::run_market`].
#[derive(Clone, Debug)]
pub struct MarketInstance {
    pub network: RadialNetwork,
    pub topology: TopologyOperators,
    pub aggregators: Vec<Aggregator<LogUtility>>,
    pub tan_phi: Vec<f64>,
    /// Demand at the flat wholesale price.
    pub flat_demand: Vec<f64>,
    pub reference: PowerFlowSolution,
    pub sensitivity: SensitivityModel,
    pub constraints: ConstraintSet,
}

impl MarketInstance {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let net = scenario.network()?;
        if net.aggregator_count() != scenario.aggregators.len() {
            return Err(Error::InvalidArgument(format!(
                "feeder places {} aggregators, scenario describes {}",
                net.aggregator_count(),
                scenario.aggregators.len()
            )));
        }
        let mut aggregators = Vec::with_capacity(scenario.aggregators.len());
        for (site, spec) in net.aggregators().iter().zip(&scenario.aggregators) {
            if site.label != spec.label || net.node_id(site.node) != spec.node {
                return Err(Error::InvalidArgument(format!(
                    "scenario aggregator {}@{} does not match feeder aggregator {}@{}",
                    spec.label,
                    spec.node,
                    site.label,
                    net.node_id(site.node)
                )));
            }
            let prosumers = spec
                .prosumers
                .iter()
                .map(|p| Prosumer::new(p.a, p.b, p.g))
                .collect::<Result<Vec<_>>>()?;
            aggregators.push(Aggregator::new(spec.label.clone(), site.node, prosumers)?);
        }
        let tan: Vec<f64> = scenario
            .aggregators
            .iter()
            .map(|a| tan_phi(a.power_factor))
            .collect();
        let procurement = match scenario.procurement {
            Some(p) => Procurement::Fixed(p),
            None => Procurement::FractionOfFlatDemand(scenario.procurement_fraction),
        };
        Self::build(net, aggregators, tan, procurement, scenario.wholesale_cost)
    }

    /// Picks a reference point, linearizes around it and assembles the
    /// constraints.
    ///
    /// The reference is the flat-price demand scaled to the procured share
    /// when that point is within the grid limits, and otherwise scaled down
    /// to just inside them.
    pub fn build(
        network: RadialNetwork,
        aggregators: Vec<Aggregator<LogUtility>>,
        tan_phi: Vec<f64>,
        procurement: Procurement,
        wholesale_cost: f64,
    ) -> Result<Self> {
        let topology = build_topology(&network);
        let flat_demand = aggregators
            .iter()
            .map(|a| a.respond(wholesale_cost).map(|r| r.demand))
            .collect::<Result<Vec<_>>>()?;
        let (p0, fraction) = match procurement {
            Procurement::Fixed(p) => (p, 1.0),
            Procurement::FractionOfFlatDemand(f) => (f * flat_demand.iter().sum::<f64>(), f),
        };
        let reference_p = reference_demand(&network, &flat_demand, &tan_phi, fraction.min(1.0))?;
        let reference = solve_ac(&network, &reference_p, &reactive(&reference_p, &tan_phi))?;
        let sensitivity = linearize(&network, &topology, &reference, &tan_phi)?;
        let constraints = assemble_constraints(&sensitivity, &network, p0, wholesale_cost)?;
        Ok(Self {
            network,
            topology,
            aggregators,
            tan_phi,
            flat_demand,
            reference,
            sensitivity,
            constraints,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.aggregators.iter().map(|a| a.size()).collect()
    }
}

fn within_limits(net: &RadialNetwork, p: &[f64], tan: &[f64]) -> bool {
    let Ok(sol) = solve_ac(net, p, &reactive(p, tan)) else {
        return false;
    };
    let band = |v: f64| (v - net.v0).abs() <= net.epsilon;
    sol.v.iter().all(|&v| band(v))
        && net
            .lines()
            .iter()
            .enumerate()
            .all(|(i, l)| sol.p_flow[i].abs() <= l.p_limit && sol.q_flow[i].abs() <= l.q_limit)
}

/// `s · flat` for the largest `s ≤ fraction` that keeps the AC solution
/// inside the voltage band and flow limits, backed off by 1% when the
/// limits bind.
pub fn reference_demand(
    net: &RadialNetwork,
    flat: &[f64],
    tan: &[f64],
    fraction: f64,
) -> Result<Vec<f64>> {
    let scaled = |s: f64| flat.iter().map(|p| p * s).collect::<Vec<_>>();
    if within_limits(net, &scaled(fraction), tan) {
        return Ok(scaled(fraction));
    }
    let (mut lo, mut hi) = (0.0, fraction);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if within_limits(net, &scaled(mid), tan) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(scaled(0.99 * lo))
}

/// Small hand-built instances with a known active set, used to check the
/// market against the full-information solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmallCase {
    /// No grid limit binds; only the balance row is active.
    Unconstrained,
    /// The far-end lower voltage limit binds.
    VoltageBinding,
    /// The real-power limit of one branch binds.
    CongestionBinding,
}

impl SmallCase {
    pub const ALL: [SmallCase; 3] = [
        Self::Unconstrained,
        Self::VoltageBinding,
        Self::CongestionBinding,
    ];
}

/// Feeder `0 → 1 → 2 → 3` with a branch `1 → 4`, aggregators at 2, 3 and 4.
pub fn small_instance(case: SmallCase) -> Result<MarketInstance> {
    let (epsilon, branch_limit) = match case {
        SmallCase::Unconstrained => (0.1, 100.0),
        SmallCase::VoltageBinding => (0.075, 100.0),
        SmallCase::CongestionBinding => (0.1, 3.0),
    };
    let text = format!(
        "[base]\nmva = 1\nkv = 4.16\nsubstation = 0\n\
         [nodes]\n0\n1\n2\n3\n4\n\
         [lines]\n\
         0 1 0.0015 0.0010 100 100\n\
         1 2 0.0020 0.0010 100 100\n\
         2 3 0.0030 0.0015 100 100\n\
         1 4 0.0020 0.0010 {branch_limit} {branch_limit}\n\
         [aggregators]\nB1 2\nB2 3\nB3 4\n\
         [limits]\nepsilon_pu = {epsilon}\n"
    );
    let net = parse_feeder(&text)?;
    let groups: [&[(f64, f64)]; 3] = [
        &[(2.0, 1.0), (3.0, 0.8), (2.5, 1.5)],
        &[(3.5, 0.9), (2.0, 1.2), (4.0, 0.7), (2.5, 1.0)],
        &[(3.0, 1.1), (2.2, 1.6)],
    ];
    let mut aggregators = Vec::new();
    for (k, group) in groups.iter().enumerate() {
        let prosumers = group
            .iter()
            .map(|&(a, b)| Prosumer::new(a, b, 0.0))
            .collect::<Result<Vec<_>>>()?;
        aggregators.push(Aggregator::new(format!("B{}", k + 1), k + 2, prosumers)?);
    }
    let tan = vec![tan_phi(0.95); 3];
    MarketInstance::build(
        net,
        aggregators,
        tan,
        Procurement::FractionOfFlatDemand(0.95),
        1.0,
    )
}
