//! Builds the linear model around a loaded operating point and compares it
//! with the AC power flow as demand moves away from that point.
//!
//! Run with `cargo run --example linearization`.

use dlmp_market::network::{build_topology, ieee37_modified};
use dlmp_market::powerflow::{linearization_error, linearize, reactive, solve_ac, tan_phi};
use dlmp_market::Result;

fn main() -> Result<()> {
    let net = ieee37_modified();
    let topo = build_topology(&net);
    let na = net.aggregator_count();
    let tan = vec![tan_phi(0.95); na];

    let p_ref = vec![3.0; na];
    let reference = solve_ac(&net, &p_ref, &reactive(&p_ref, &tan))?;
    let model = linearize(&net, &topo, &reference, &tan)?;

    println!(
        "{:>6} {:>10} {:>10} {:>10}",
        "shift", "max |dV|", "max |dP|", "max |dL|"
    );
    for shift in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let p: Vec<f64> = p_ref.iter().map(|x| x + shift).collect();
        let report = linearization_error(&net, &model, &p, &reactive(&p, &tan))?;
        println!(
            "{shift:>6.1} {:>10.2e} {:>10.2e} {:>10.2e}",
            report.max_voltage, report.max_p_flow, report.max_loss
        );
    }
    Ok(())
}
