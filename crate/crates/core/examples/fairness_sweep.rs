//! Sweeps the fairness weight on Scenario II and prints the trade-off.
//!
//! Run with `cargo run --release --example fairness_sweep`.

use dlmp_market::harness::{
    generate_scenario, run_sweep, weight_grid, ScenarioKind, ScenarioOverrides,
};
use dlmp_market::solver::SolverConfig;
use dlmp_market::Result;

fn main() -> Result<()> {
    let scenario = generate_scenario(ScenarioKind::II, 1, &ScenarioOverrides::default())?;
    let grid = weight_grid(0.0, 0.5, 0.1)?;
    let table = run_sweep(&scenario, &grid, &SolverConfig::default())?;
    println!(
        "{:>5} {:>10} {:>12} {:>10} {:>10}",
        "C", "J", "welfare", "PoF", "spread"
    );
    for row in &table.rows {
        println!(
            "{:>5.2} {:>10.6} {:>12.4} {:>10.2e} {:>10.6}",
            row.fairness_weight, row.jain, row.welfare, row.pof, row.price_spread
        );
    }
    Ok(())
}
