//! Solves the exact AC power flow at a uniform load and checks the
//! branch-flow residuals.
//!
//! Run with `cargo run --example ac_power_flow`.

use dlmp_market::network::ieee37_modified;
use dlmp_market::powerflow::{reactive, solve_ac, tan_phi};
use dlmp_market::Result;

fn main() -> Result<()> {
    let net = ieee37_modified();
    let na = net.aggregator_count();
    let tan = vec![tan_phi(0.95); na];

    for load in [0.0, 2.0, 4.0, 6.0] {
        let p = vec![load; na];
        let sol = solve_ac(&net, &p, &reactive(&p, &tan))?;
        let losses: f64 = sol.loss_p.iter().sum();
        println!(
            "load {load:>3} pu per aggregator: V in [{:.4}, {:.4}], import {:.3}, losses {:.4}, {} sweeps, residual {:.1e}",
            sol.min_voltage(),
            sol.max_voltage(),
            sol.import_p,
            losses,
            sol.sweeps,
            sol.residuals(&net).max()
        );
    }
    Ok(())
}
