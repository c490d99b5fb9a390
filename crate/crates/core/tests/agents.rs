mod common;

use common::{numeric_argmax, Draws};
use dlmp_market::agents::{
    aggregate_response, best_response, utility, Aggregator, FullInformation, PriceResponsive,
    Prosumer,
};
use dlmp_market::Error;
use proptest::prelude::*;

fn pros(a: f64, b: f64, g: f64) -> Prosumer {
    Prosumer::new(a, b, g).unwrap()
}

#[test]
fn utility_values() {
    assert_eq!(utility(&pros(2.0, 1.0, 0.0), 0.0).unwrap(), 0.0);
    assert!(
        (utility(&pros(2.0, 1.0, 0.0), std::f64::consts::E - 1.0).unwrap() - 2.0).abs() < 1e-15
    );
    assert!((utility(&pros(1.0, 3.0, 0.0), 1.0).unwrap() - 4f64.ln()).abs() < 1e-15);
    assert!(utility(&pros(1.0, 1.0, 0.0), -0.1).is_err());
}

#[test]
fn best_response_values() {
    assert_eq!(best_response(&pros(2.0, 1.0, 0.0), 1.0).unwrap(), 1.0);
    assert_eq!(best_response(&pros(1.0, 1.0, 0.0), 2.0).unwrap(), 0.0);
    assert_eq!(best_response(&pros(2.0, 1.0, 0.5), 1.0).unwrap(), 0.5);
    // Price exactly at the threshold a·b gives zero consumption.
    assert_eq!(best_response(&pros(2.0, 1.5, 0.0), 3.0).unwrap(), 0.0);
    assert!(matches!(
        best_response(&pros(2.0, 1.0, 0.0), 0.0),
        Err(Error::NonPositivePrice(_))
    ));
    assert!(matches!(
        best_response(&pros(2.0, 1.0, 0.0), -1.0),
        Err(Error::NonPositivePrice(_))
    ));
}

#[test]
fn rejects_invalid_parameters() {
    assert!(Prosumer::new(0.0, 1.0, 0.0).is_err());
    assert!(Prosumer::new(1.0, -1.0, 0.0).is_err());
    assert!(Prosumer::new(1.0, 1.0, -0.1).is_err());
    assert!(Aggregator::<dlmp_market::agents::LogUtility>::new("A1", 1, vec![]).is_err());
}

#[test]
fn best_response_matches_numeric_argmax() {
    let mut d = Draws::new(11);
    for _ in 0..1000 {
        let (a, b, g, c) = (
            d.uniform(0.2, 5.0),
            d.uniform(0.2, 5.0),
            d.uniform(0.0, 0.5),
            d.uniform(0.05, 6.0),
        );
        let closed = best_response(&pros(a, b, g), c).unwrap();
        let numeric = numeric_argmax(a, b, g, c);
        assert!(
            (closed - numeric).abs() <= 1e-8,
            "a={a} b={b} g={g} c={c}: {closed} vs {numeric}"
        );
    }
}

#[test]
fn single_prosumer_aggregate() {
    let agg = Aggregator::new("A1", 1, vec![pros(2.0, 1.0, 0.0)]).unwrap();
    let r = aggregate_response(&agg, 1.0).unwrap();
    assert_eq!(r.demand, 1.0);
    assert!((r.welfare - 2.0 * 2f64.ln()).abs() < 1e-15);
}

#[test]
fn identical_prosumers_add_up() {
    let one = Aggregator::new("A", 1, vec![pros(2.5, 1.3, 0.02)]).unwrap();
    let ten = Aggregator::new("A", 1, vec![pros(2.5, 1.3, 0.02); 10]).unwrap();
    for c in [0.3, 1.0, 2.0, 5.0] {
        let a = one.respond(c).unwrap();
        let b = ten.respond(c).unwrap();
        assert!((b.demand - 10.0 * a.demand).abs() < 1e-12);
        assert!((b.welfare - 10.0 * a.welfare).abs() < 1e-12);
    }
}

fn mixed(seed: u64, n: usize) -> Aggregator {
    let mut d = Draws::new(seed);
    let prosumers = (0..n)
        .map(|_| {
            pros(
                d.uniform(1.0, 4.0),
                d.uniform(0.5, 2.0),
                d.uniform(0.0, 0.05),
            )
        })
        .collect();
    Aggregator::new("M", 1, prosumers).unwrap()
}

#[test]
fn envelope_slope_equals_price() {
    let agg = mixed(3, 12);
    let h = 1e-6;
    for c in [0.4, 0.9, 1.3, 2.1] {
        let lo = agg.respond(c - h).unwrap();
        let hi = agg.respond(c + h).unwrap();
        let slope = (lo.welfare - hi.welfare) / (lo.demand - hi.demand);
        assert!((slope - c).abs() <= 1e-4 * c, "{c}: {slope}");
    }
}

#[test]
fn inverse_demand_round_trip() {
    let agg = mixed(5, 15);
    for i in 1..200 {
        let c = 0.05 * i as f64;
        let p = agg.respond(c).unwrap().demand;
        if p > agg.demand_floor() {
            let back = agg.inverse_demand(p).unwrap();
            assert!((back - c).abs() <= 1e-10 * c, "{c}: {back}");
        }
    }
    assert!(agg.inverse_demand(agg.demand_floor() - 1.0).is_err());
}

#[test]
fn demand_slope_matches_differences() {
    let agg = mixed(9, 10);
    for c in [0.5, 1.0, 1.7] {
        let h = 1e-6;
        let fd =
            (agg.respond(c + h).unwrap().demand - agg.respond(c - h).unwrap().demand) / (2.0 * h);
        assert!((agg.demand_slope(c) - fd).abs() <= 1e-5 * fd.abs());
    }
}

proptest! {
    #[test]
    fn response_is_locally_optimal(a in 0.1f64..5.0, b in 0.1f64..5.0, g in 0.0f64..0.5, c in 0.05f64..6.0) {
        let pr = pros(a, b, g);
        let p = pr.best_response(c).unwrap();
        let best = pr.payoff(p, c).unwrap();
        for q in [p - 1e-4, p + 1e-4, -g] {
            if q >= -g {
                prop_assert!(best >= pr.payoff(q, c).unwrap() - 1e-15 * best.abs().max(1.0));
            }
        }
    }

    #[test]
    fn aggregate_demand_is_monotone(seed in 0u64..1000, c in 0.05f64..5.0, dc in 0.0f64..1.0) {
        let agg = mixed(seed, 8);
        let hi = agg.respond(c + dc).unwrap().demand;
        let lo = agg.respond(c).unwrap().demand;
        prop_assert!(hi <= lo);
        // Continuity: a tiny price change moves demand by about slope × step.
        let near = agg.respond(c + 1e-9).unwrap().demand;
        prop_assert!((near - lo).abs() <= 2e-9 * agg.demand_slope(c).abs() + 1e-12);
    }
}
