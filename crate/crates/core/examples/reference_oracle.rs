//! Compares the price-based market with the full-information solver on the
//! small test feeders.
//!
//! Run with `cargo run --release --example reference_oracle`.

use dlmp_market::harness::{small_instance, SmallCase};
use dlmp_market::solver::{run_market, solve_reference, ReferenceOptions, SolverConfig};
use dlmp_market::Result;

fn main() -> Result<()> {
    for case in SmallCase::ALL {
        let inst = small_instance(case)?;
        let market = run_market(
            &inst.constraints,
            &inst.aggregators,
            &SolverConfig::default(),
        )?;
        let oracle = solve_reference(
            &inst.constraints,
            &inst.aggregators,
            0.0,
            &ReferenceOptions::default(),
        )?;
        println!("{case:?}");
        for k in 0..inst.aggregators.len() {
            println!(
                "  aggregator {k}: market p {:.6} c {:.6} | oracle p {:.6} c {:.6}",
                market.demands[k], market.prices[k], oracle.demands[k], oracle.prices[k]
            );
        }
        println!(
            "  welfare {:.6} vs {:.6}, KKT {:.1e} vs {:.1e}",
            market.total_welfare,
            oracle.total_welfare,
            market.kkt.max(),
            oracle.kkt.max()
        );
    }
    Ok(())
}
