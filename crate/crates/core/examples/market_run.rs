//! Runs the market on Scenario I and prints the price decomposition.
//!
//! Run with `cargo run --release --example market_run`.

use dlmp_market::harness::{generate_scenario, run_scenario, ScenarioKind, ScenarioOverrides};
use dlmp_market::solver::SolverConfig;
use dlmp_market::Result;

fn main() -> Result<()> {
    let overrides = ScenarioOverrides {
        fairness_weight: Some(0.2),
        ..Default::default()
    };
    let scenario = generate_scenario(ScenarioKind::I, 1, &overrides)?;
    let record = run_scenario(&scenario, &SolverConfig::default())?;
    let r = &record.result;
    println!(
        "converged {} after {} iterations in {:.2} s, welfare {:.4}, J {:.6}",
        r.converged,
        r.iterations,
        record.duration_seconds,
        r.total_welfare,
        r.jain.unwrap_or(f64::NAN)
    );

    let b = &r.breakdown;
    println!(
        "{:>5} {:>4} {:>9} {:>9} {:>10} {:>10} {:>10} {:>10}",
        "agg", "node", "p", "c", "c_V", "c_C", "c_EL", "c_F"
    );
    for (k, info) in record.aggregators.iter().enumerate() {
        println!(
            "{:>5} {:>4} {:>9.4} {:>9.6} {:>10.2e} {:>10.2e} {:>10.6} {:>10.2e}",
            info.label,
            info.node,
            r.demands[k],
            r.prices[k],
            b.voltage[k],
            b.congestion[k],
            b.energy_loss[k],
            b.fairness[k]
        );
    }
    println!(
        "max linearization voltage error {:.2e} pu",
        record.linearization.max_voltage
    );
    Ok(())
}
