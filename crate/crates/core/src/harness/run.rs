//! Single runs, fairness-weight sweeps and the price of fairness.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instance::MarketInstance;
use super::scenario::{Scenario, ScenarioKind};
use crate::error::{Error, Result};
use crate::powerflow::{linearization_error, reactive, LinearizationReport};
use crate::solver::{run_market, MarketResult, SolverConfig};

/// Per-aggregator identification carried into outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorInfo {
    pub label: String,
    pub node: String,
    pub size: usize,
    /// Total PV output of the aggregator's prosumers.
    pub generation: f64,
}

/// One market run with enough context to trace every number back to its
/// scenario and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_digest: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub config: SolverConfig,
    pub aggregators: Vec<AggregatorInfo>,
    pub procurement: f64,
    pub result: MarketResult,
    /// AC check of the linear model at the final demands.
    pub linearization: LinearizationReport,
    pub duration_seconds: f64,
}

/// Solver settings for a scenario: `base` with the scenario's `η` and `C`.
pub fn config_for(scenario: &Scenario, base: &SolverConfig) -> SolverConfig {
    SolverConfig {
        eta: scenario.eta,
        fairness_weight: scenario.fairness_weight,
        ..base.clone()
    }
}

/// Builds the instance for `scenario` and runs the market once.
pub fn run_scenario(scenario: &Scenario, base: &SolverConfig) -> Result<RunRecord> {
    let instance = MarketInstance::from_scenario(scenario)?;
    run_instance(scenario, &instance, &config_for(scenario, base))
}

/// Runs the market on a prebuilt instance of `scenario`.
pub fn run_instance(
    scenario: &Scenario,
    instance: &MarketInstance,
    config: &SolverConfig,
) -> Result<RunRecord> {
    let start = Instant::now();
    let result = run_market(&instance.constraints, &instance.aggregators, config)?;
    let duration_seconds = start.elapsed().as_secs_f64();
    let report = linearization_error(
        &instance.network,
        &instance.sensitivity,
        &result.demands,
        &reactive(&result.demands, &instance.tan_phi),
    )?;
    Ok(RunRecord {
        scenario_digest: scenario.digest(),
        kind: scenario.kind,
        seed: scenario.seed,
        config: config.clone(),
        aggregators: aggregator_info(scenario),
        procurement: instance.constraints.procurement,
        result,
        linearization: report,
        duration_seconds,
    })
}

fn aggregator_info(scenario: &Scenario) -> Vec<AggregatorInfo> {
    scenario
        .aggregators
        .iter()
        .map(|a| AggregatorInfo {
            label: a.label.clone(),
            node: a.node.clone(),
            size: a.prosumers.len(),
            generation: a.prosumers.iter().map(|p| p.g).sum(),
        })
        .collect()
}

/// `1 - W(C) / W(0)`.
pub fn price_of_fairness(welfare_at_c: f64, welfare_at_0: f64) -> Result<f64> {
    if !(welfare_at_0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "price of fairness needs a positive baseline, got {welfare_at_0}"
        )));
    }
    Ok(1.0 - welfare_at_c / welfare_at_0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fairness_weight: f64,
    pub jain: f64,
    pub welfare: f64,
    pub pof: f64,
    pub price_spread: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub scenario_digest: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

/// The grid `from, from + step, …` up to `to`, snapped to multiples of
/// `step` to avoid accumulated rounding.
pub fn weight_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && from.is_finite() && to.is_finite() && to >= from) {
        return Err(Error::InvalidArgument(
            "sweep grid needs from ≤ to and step > 0".into(),
        ));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + step * i as f64).collect())
}

/// One market run per fairness weight, sharing the instance and seed.
///
/// Runs execute in parallel; rows come back ordered by weight. A run that
/// fails or hits the iteration cap is flagged rather than aborting the
/// sweep. The price of fairness is measured against the `C = 0` run, which
/// is added when the grid lacks it.
pub fn run_sweep(scenario: &Scenario, grid: &[f64], base: &SolverConfig) -> Result<SweepTable> {
    let instance = MarketInstance::from_scenario(scenario)?;
    let mut weights = grid.to_vec();
    if weights.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidArgument(
            "fairness weights must be nonnegative".into(),
        ));
    }
    weights.sort_by(f64::total_cmp);
    weights.dedup();
    let has_zero = weights.first() == Some(&0.0);
    if !has_zero {
        weights.insert(0, 0.0);
    }
    let config = config_for(scenario, base);
    let results: Vec<Option<MarketResult>> = weights
        .par_iter()
        .map(|&c| {
            let cfg = SolverConfig {
                fairness_weight: c,
                ..config.clone()
            };
            run_market(&instance.constraints, &instance.aggregators, &cfg).ok()
        })
        .collect();

    let baseline = results[0].as_ref().map(|r| r.total_welfare);
    let mut rows = Vec::new();
    for (i, (&c, res)) in weights.iter().zip(&results).enumerate() {
        if i == 0 && !has_zero {
            continue;
        }
        let row = match res {
            Some(r) => SweepRow {
                fairness_weight: c,
                jain: r.jain.unwrap_or(f64::NAN),
                welfare: r.total_welfare,
                pof: baseline
                    .map(|w0| price_of_fairness(r.total_welfare, w0))
                    .transpose()?
                    .unwrap_or(f64::NAN),
                price_spread: r.price_spread(),
                iterations: r.iterations,
                converged: r.converged,
            },
            None => SweepRow {
                fairness_weight: c,
                jain: f64::NAN,
                welfare: f64::NAN,
                pof: f64::NAN,
                price_spread: f64::NAN,
                iterations: 0,
                converged: false,
            },
        };
        rows.push(row);
    }
    Ok(SweepTable {
        scenario_digest: scenario.digest(),
        seed: scenario.seed,
        rows,
    })
}
