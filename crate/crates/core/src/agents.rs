//! Prosumers with concave utilities and the aggregators that relay prices to
//! them.
//!
//! The DSO side of the market only sees [`PriceResponsive`]: a price goes in,
//! an aggregate demand and welfare come out. Utility parameters stay inside
//! this module. [`FullInformation`] exposes inverse demand for test oracles
//! that are allowed to see through the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A concave, strictly increasing, differentiable utility of consumption.
pub trait ConcaveUtility: Clone + Send + Sync {
    fn value(&self, x: f64) -> Result<f64>;

    fn marginal(&self, x: f64) -> f64;

    /// Consumption `x ≥ 0` maximizing `value(x) - price · x`.
    fn consumption(&self, price: f64) -> Result<f64>;

    /// `d consumption / d price`, zero where consumption sits at 0.
    fn consumption_slope(&self, price: f64) -> f64;
}

/// `u(x) = a · ln(b·x + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogUtility {
    pub a: f64,
    pub b: f64,
}

impl LogUtility {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "utility needs a, b > 0, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }
}

impl ConcaveUtility for LogUtility {
    fn value(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::NegativeConsumption(x));
        }
        Ok(self.a * (self.b * x).ln_1p())
    }

    fn marginal(&self, x: f64) -> f64 {
        self.a * self.b / (self.b * x + 1.0)
    }

    fn consumption(&self, price: f64) -> Result<f64> {
        if !(price > 0.0) || !price.is_finite() {
            return Err(Error::NonPositivePrice(price));
        }
        Ok(((self.a * self.b - price) / (price * self.b)).max(0.0))
    }

    fn consumption_slope(&self, price: f64) -> f64 {
        if self.a * self.b > price {
            -self.a / (price * price)
        } else {
            0.0
        }
    }
}

/// An end user with utility `U` and rooftop generation `generation ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prosumer<U = LogUtility> {
    utility: U,
    generation: f64,
}

impl Prosumer<LogUtility> {
    pub fn new(a: f64, b: f64, g: f64) -> Result<Self> {
        Self::with_utility(LogUtility::new(a, b)?, g)
    }
}

impl<U: ConcaveUtility> Prosumer<U> {
    pub fn with_utility(utility: U, generation: f64) -> Result<Self> {
        if !(generation.is_finite() && generation >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "generation {generation} must be nonnegative"
            )));
        }
        Ok(Self {
            utility,
            generation,
        })
    }

    pub fn generation(&self) -> f64 {
        self.generation
    }

    /// Utility of consuming `x`.
    pub fn utility(&self, x: f64) -> Result<f64> {
        self.utility.value(x)
    }

    /// `u(p + g) - c·p` for net demand `p`.
    pub fn payoff(&self, p: f64, price: f64) -> Result<f64> {
        Ok(self.utility.value(p + self.generation)? - price * p)
    }

    /// Net demand maximizing the payoff at unit cost `price`.
    pub fn best_response(&self, price: f64) -> Result<f64> {
        Ok(self.utility.consumption(price)? - self.generation)
    }
}

/// Utility of consumption `x`.
pub fn utility<U: ConcaveUtility>(pros: &Prosumer<U>, x: f64) -> Result<f64> {
    pros.utility(x)
}

/// Net demand at unit cost `price`.
pub fn best_response<U: ConcaveUtility>(pros: &Prosumer<U>, price: f64) -> Result<f64> {
    pros.best_response(price)
}

/// What an aggregator reports back for a broadcast price.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub demand: f64,
    pub welfare: f64,
}

/// The DSO's view of an aggregator.
pub trait PriceResponsive: Sync {
    fn respond(&self, price: f64) -> Result<Response>;

    /// Number of prosumers behind the aggregator.
    fn size(&self) -> usize;
}

/// Inverse demand and welfare as functions of aggregate demand. Only test
/// oracles use this.
pub trait FullInformation: PriceResponsive {
    /// Smallest attainable demand (every prosumer at zero consumption).
    fn demand_floor(&self) -> f64;

    /// Price at which the aggregate demand equals `p`.
    fn inverse_demand(&self, p: f64) -> Result<f64>;

    /// `d demand / d price` at `price`.
    fn demand_slope(&self, price: f64) -> f64;
}

/// A node-level aggregator and its prosumers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregator<U = LogUtility> {
    pub label: String,
    pub node: usize,
    prosumers: Vec<Prosumer<U>>,
}

impl<U: ConcaveUtility> Aggregator<U> {
    pub fn new(label: impl Into<String>, node: usize, prosumers: Vec<Prosumer<U>>) -> Result<Self> {
        if prosumers.is_empty() {
            return Err(Error::InvalidArgument(
                "an aggregator needs at least one prosumer".into(),
            ));
        }
        Ok(Self {
            label: label.into(),
            node,
            prosumers,
        })
    }

    pub fn prosumer_count(&self) -> usize {
        self.prosumers.len()
    }

    pub fn total_generation(&self) -> f64 {
        self.prosumers.iter().map(|p| p.generation).sum()
    }
}

/// Aggregate demand and welfare of `agg` at price `price`.
pub fn aggregate_response<U: ConcaveUtility>(agg: &Aggregator<U>, price: f64) -> Result<Response> {
    let mut demand = 0.0;
    let mut welfare = 0.0;
    for pros in &agg.prosumers {
        let x = pros.utility.consumption(price)?;
        demand += x - pros.generation;
        welfare += pros.utility.value(x)?;
    }
    Ok(Response { demand, welfare })
}

impl<U: ConcaveUtility> PriceResponsive for Aggregator<U> {
    fn respond(&self, price: f64) -> Result<Response> {
        aggregate_response(self, price)
    }

    fn size(&self) -> usize {
        self.prosumers.len()
    }
}

impl FullInformation for Aggregator<LogUtility> {
    fn demand_floor(&self) -> f64 {
        -self.total_generation()
    }

    fn inverse_demand(&self, p: f64) -> Result<f64> {
        let floor = self.demand_floor();
        if !(p >= floor) {
            return Err(Error::InvalidArgument(format!(
                "demand {p} below the floor {floor}"
            )));
        }
        // Demand is a/c - 1/b summed over prosumers whose threshold a·b
        // exceeds c, so on each active set the price has a closed form.
        let mut thresholds: Vec<(f64, f64, f64)> = self
            .prosumers
            .iter()
            .map(|pr| {
                (
                    pr.utility.a * pr.utility.b,
                    pr.utility.a,
                    1.0 / pr.utility.b,
                )
            })
            .collect();
        thresholds.sort_by(|x, y| y.0.total_cmp(&x.0));
        let target = p - floor;
        if target == 0.0 {
            return Ok(thresholds[0].0);
        }
        let (mut sum_a, mut sum_inv_b) = (0.0, 0.0);
        for (m, &(t, a, inv_b)) in thresholds.iter().enumerate() {
            sum_a += a;
            sum_inv_b += inv_b;
            let c = sum_a / (target + sum_inv_b);
            let next = thresholds.get(m + 1).map_or(0.0, |x| x.0);
            if c <= t && c >= next {
                return Ok(c);
            }
        }
        Err(Error::InvalidArgument(format!(
            "no price clears demand {p}"
        )))
    }

    fn demand_slope(&self, price: f64) -> f64 {
        self.prosumers
            .iter()
            .map(|p| p.utility.consumption_slope(price))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utility_values() {
        let p = Prosumer::new(2.0, 1.0, 0.0).unwrap();
        assert_eq!(p.utility(0.0).unwrap(), 0.0);
        assert!((p.utility(std::f64::consts::E - 1.0).unwrap() - 2.0).abs() < 1e-15);
        let q = Prosumer::new(1.0, 3.0, 0.0).unwrap();
        assert!((q.utility(1.0).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(matches!(
            p.utility(-1.0),
            Err(Error::NegativeConsumption(_))
        ));
    }

    #[test]
    fn best_response_values() {
        assert_eq!(
            Prosumer::new(2.0, 1.0, 0.0)
                .unwrap()
                .best_response(1.0)
                .unwrap(),
            1.0
        );
        assert_eq!(
            Prosumer::new(1.0, 1.0, 0.0)
                .unwrap()
                .best_response(2.0)
                .unwrap(),
            0.0
        );
        assert_eq!(
            Prosumer::new(2.0, 1.0, 0.5)
                .unwrap()
                .best_response(1.0)
                .unwrap(),
            0.5
        );
        assert_eq!(
            Prosumer::new(2.0, 1.0, 0.0)
                .unwrap()
                .best_response(2.0)
                .unwrap(),
            0.0
        );
        assert!(matches!(
            Prosumer::new(2.0, 1.0, 0.0).unwrap().best_response(0.0),
            Err(Error::NonPositivePrice(_))
        ));
    }

    #[test]
    fn aggregate_values() {
        let one = Aggregator::new("A1", 1, vec![Prosumer::new(2.0, 1.0, 0.0).unwrap()]).unwrap();
        let r = aggregate_response(&one, 1.0).unwrap();
        assert_eq!(r.demand, 1.0);
        assert!((r.welfare - 2.0 * 2f64.ln()).abs() < 1e-15);
        let ten =
            Aggregator::new("A2", 1, vec![Prosumer::new(2.0, 1.0, 0.0).unwrap(); 10]).unwrap();
        assert_eq!(aggregate_response(&ten, 1.0).unwrap().demand, 10.0);
    }

    #[test]
    fn inverse_demand_round_trip() {
        let agg = Aggregator::new(
            "A",
            1,
            vec![
                Prosumer::new(1.0, 0.5, 0.0).unwrap(),
                Prosumer::new(3.0, 2.0, 0.02).unwrap(),
                Prosumer::new(2.0, 1.5, 0.01).unwrap(),
            ],
        )
        .unwrap();
        for &c in &[0.05, 0.3, 0.49, 0.7, 2.5, 3.5, 5.9] {
            let p = agg.respond(c).unwrap().demand;
            let back = agg.inverse_demand(p).unwrap();
            assert!(
                (back - c).abs() < 1e-12 * c.max(1.0),
                "{c} -> {p} -> {back}"
            );
        }
        assert_eq!(agg.inverse_demand(agg.demand_floor()).unwrap(), 6.0);
    }
}
