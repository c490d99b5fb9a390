//! Traces the demand curve of one prosumer and of an aggregator.
//!
//! Run with `cargo run --example prosumer_response`.

use dlmp_market::agents::{aggregate_response, best_response, Aggregator, Prosumer};
use dlmp_market::Result;

fn main() -> Result<()> {
    let solo = Prosumer::new(2.0, 1.0, 0.0)?;
    let pv = Prosumer::new(2.0, 1.0, 0.5)?;
    let agg = Aggregator::new(
        "A1",
        1,
        vec![solo.clone(), pv.clone(), Prosumer::new(3.5, 0.6, 0.0)?],
    )?;

    println!(
        "{:>6} {:>10} {:>10} {:>12} {:>12}",
        "price", "p (no PV)", "p (PV)", "aggregate p", "welfare"
    );
    for i in 1..=12 {
        let c = 0.25 * i as f64;
        let r = aggregate_response(&agg, c)?;
        println!(
            "{c:>6.2} {:>10.4} {:>10.4} {:>12.4} {:>12.4}",
            best_response(&solo, c)?,
            best_response(&pv, c)?,
            r.demand,
            r.welfare
        );
    }
    Ok(())
}
