//! Evaluates the weighted Jain index and its gradient for a few allocations.
//!
//! Run with `cargo run --example jain_fairness`.

use dlmp_market::fairness::{jain_gradient, jain_masked, jain_scalar, FairnessContext};
use dlmp_market::Result;

fn main() -> Result<()> {
    println!("[1, 1, 0, 0] -> {}", jain_scalar(&[1.0, 1.0, 0.0, 0.0])?);
    println!("[1, 2, 3]    -> {:.6}", jain_scalar(&[1.0, 2.0, 3.0])?);

    // The second aggregator supplies power and is left out of the index.
    let p = [4.0, -1.0, 2.5, 6.0];
    let prices = [1.00, 1.02, 0.97, 1.05];
    let sizes = [10, 10, 20, 10];
    let ctx = FairnessContext::new(&p, &prices, &sizes)?;
    println!("mask {:?}, weights {:?}", ctx.mask(), ctx.weights());
    println!("J = {:.6}", jain_masked(&ctx, &p)?);
    for (k, g) in jain_gradient(&ctx, &p)?.iter().enumerate() {
        println!("dJ/dp_{k} = {g:+.6}");
    }
    Ok(())
}
