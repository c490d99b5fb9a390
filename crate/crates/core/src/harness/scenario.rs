//! Seeded scenario generation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{ieee37_modified, load_feeder, RadialNetwork};

/// Name under which the bundled feeder is referenced.
pub const BUNDLED_FEEDER: &str = "ieee37_modified";

/// Labels of the aggregators that get twice the prosumers in Scenario II.
pub const LARGE_AGGREGATORS: [&str; 4] = ["A3", "A9", "A11", "A17"];
/// Labels of the aggregators whose prosumers own PV in Scenario III.
pub const PV_AGGREGATORS: [&str; 3] = ["A8", "A10", "A14"];

/// Note attached to every scenario about where its defaults come from.
pub const PARAMETER_NOTE: &str =
    "utility and PV parameter ranges, prosumer counts outside the named \
     aggregators, voltage band, flow limits, power factor and procurement rule are local defaults, \
     not values from a published setup";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Ten prosumers everywhere, no PV.
    I,
    /// As I with twenty prosumers at A3, A9, A11 and A17.
    II,
    /// As I with PV at A8, A10 and A14.
    III,
    /// Loaded from a scenario file.
    Custom,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

/// Closed ranges `[lo, hi]` of the uniform parameter draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub a: (f64, f64),
    pub b: (f64, f64),
    /// PV output in pu, used only where PV applies.
    pub g: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            a: (1.0, 4.0),
            b: (0.5, 2.0),
            g: (0.0, 0.05),
        }
    }
}

/// Replacement flow limits for the line feeding `node` (external id).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineLimit {
    pub node: String,
    pub p_limit: f64,
    pub q_limit: f64,
}

/// Optional changes to the generated defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOverrides {
    pub prosumers_per_aggregator: Option<usize>,
    pub large_aggregator_size: Option<usize>,
    pub ranges: Option<ParamRanges>,
    pub fairness_weight: Option<f64>,
    pub eta: Option<f64>,
    pub procurement: Option<f64>,
    pub procurement_fraction: Option<f64>,
    pub wholesale_cost: Option<f64>,
    pub epsilon: Option<f64>,
    pub power_factor: Option<f64>,
    pub line_limits: Vec<LineLimit>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProsumerSpec {
    pub a: f64,
    pub b: f64,
    pub g: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    pub label: String,
    /// External node id.
    pub node: String,
    /// Lagging power factor of the aggregate demand.
    pub power_factor: f64,
    pub prosumers: Vec<ProsumerSpec>,
}

/// Everything needed to reproduce one market instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// [`BUNDLED_FEEDER`] or a path to a feeder file.
    pub feeder: String,
    pub aggregators: Vec<AggregatorSpec>,
    pub fairness_weight: f64,
    pub eta: f64,
    /// Fixed `P_0`; when absent it is `procurement_fraction` times the
    /// demand at the flat wholesale price.
    pub procurement: Option<f64>,
    pub procurement_fraction: f64,
    pub wholesale_cost: f64,
    pub epsilon: Option<f64>,
    pub line_limits: Vec<LineLimit>,
    pub ranges: ParamRanges,
    pub note: String,
}

/// Uniform draw on `[lo, hi)` from the top 53 bits of one 64-bit output.
fn uniform(rng: &mut ChaCha20Rng, (lo, hi): (f64, f64)) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + (hi - lo) * u
}

/// The generator for prosumer `i` of aggregator `k`.
///
/// Each prosumer owns the ChaCha20 stream `(k << 32) | i` under the 64-bit
/// run seed and draws `a`, `b`, `g` in that order, so adding prosumers or
/// aggregators never shifts the draws of existing ones.
pub fn prosumer_rng(seed: u64, aggregator: usize, prosumer: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((aggregator as u64) << 32) | prosumer as u64);
    rng
}

/// Builds Scenario I, II or III on the bundled feeder from a seed.
pub fn generate_scenario(
    kind: ScenarioKind,
    seed: u64,
    overrides: &ScenarioOverrides,
) -> Result<Scenario> {
    if kind == ScenarioKind::Custom {
        return Err(Error::UnknownScenario(
            "custom scenarios are loaded, not generated".into(),
        ));
    }
    let net = ieee37_modified();
    let ranges = overrides.ranges.unwrap_or_default();
    let range_ok = |(lo, hi): (f64, f64), strict: bool| {
        lo.is_finite() && hi.is_finite() && lo <= hi && if strict { lo > 0.0 } else { lo >= 0.0 }
    };
    if !range_ok(ranges.a, true) || !range_ok(ranges.b, true) || !range_ok(ranges.g, false) {
        return Err(Error::InvalidArgument(
            "parameter ranges need 0 < a, 0 < b, 0 ≤ g and lo ≤ hi".into(),
        ));
    }
    let base = overrides.prosumers_per_aggregator.unwrap_or(10);
    let large = overrides.large_aggregator_size.unwrap_or(2 * base);
    if base == 0 || large == 0 {
        return Err(Error::InvalidArgument(
            "every aggregator needs a prosumer".into(),
        ));
    }
    let pf = overrides.power_factor.unwrap_or(0.95);
    if !(pf > 0.0 && pf <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "power factor {pf} outside (0, 1]"
        )));
    }

    let aggregators = net
        .aggregators()
        .iter()
        .enumerate()
        .map(|(k, site)| {
            let label = site.label.as_str();
            let size = if kind == ScenarioKind::II && LARGE_AGGREGATORS.contains(&label) {
                large
            } else {
                base
            };
            let pv = kind == ScenarioKind::III && PV_AGGREGATORS.contains(&label);
            let prosumers = (0..size)
                .map(|i| {
                    let mut rng = prosumer_rng(seed, k, i);
                    let a = uniform(&mut rng, ranges.a);
                    let b = uniform(&mut rng, ranges.b);
                    let g = uniform(&mut rng, ranges.g);
                    ProsumerSpec {
                        a,
                        b,
                        g: if pv { g } else { 0.0 },
                    }
                })
                .collect();
            AggregatorSpec {
                label: site.label.clone(),
                node: net.node_id(site.node).to_string(),
                power_factor: pf,
                prosumers,
            }
        })
        .collect();

    let scenario = Scenario {
        kind,
        seed,
        feeder: BUNDLED_FEEDER.to_string(),
        aggregators,
        fairness_weight: overrides.fairness_weight.unwrap_or(0.0),
        eta: overrides.eta.unwrap_or(1e-2),
        procurement: overrides.procurement,
        procurement_fraction: overrides.procurement_fraction.unwrap_or(0.95),
        wholesale_cost: overrides.wholesale_cost.unwrap_or(1.0),
        epsilon: overrides.epsilon,
        line_limits: overrides.line_limits.clone(),
        ranges,
        note: PARAMETER_NOTE.to_string(),
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    /// Checks scalar settings; network-level checks happen when the feeder
    /// is loaded.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if !(self.fairness_weight >= 0.0 && self.fairness_weight.is_finite()) {
            return bad(format!(
                "fairness weight {} must be nonnegative",
                self.fairness_weight
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta {} must be positive", self.eta));
        }
        if !(self.wholesale_cost > 0.0 && self.wholesale_cost.is_finite()) {
            return bad(format!(
                "wholesale cost {} must be positive",
                self.wholesale_cost
            ));
        }
        if !(self.procurement_fraction > 0.0 && self.procurement_fraction.is_finite()) {
            return bad("procurement fraction must be positive".into());
        }
        if let Some(p) = self.procurement {
            if !(p >= 0.0 && p.is_finite()) {
                return bad(format!("procurement {p} must be nonnegative"));
            }
        }
        for agg in &self.aggregators {
            if agg.prosumers.is_empty() {
                return bad(format!("aggregator {} has no prosumers", agg.label));
            }
            if !(agg.power_factor > 0.0 && agg.power_factor <= 1.0) {
                return bad(format!(
                    "aggregator {} power factor outside (0, 1]",
                    agg.label
                ));
            }
            for p in &agg.prosumers {
                if !(p.a > 0.0
                    && p.b > 0.0
                    && p.g >= 0.0
                    && p.a.is_finite()
                    && p.b.is_finite()
                    && p.g.is_finite())
                {
                    return bad(format!(
                        "aggregator {} has a prosumer with invalid parameters",
                        agg.label
                    ));
                }
            }
        }
        Ok(())
    }

    /// Loads the feeder and applies the voltage-band and line-limit overrides.
    pub fn network(&self) -> Result<RadialNetwork> {
        let mut net = if self.feeder == BUNDLED_FEEDER {
            ieee37_modified()
        } else {
            load_feeder(&self.feeder)?
        };
        if let Some(eps) = self.epsilon {
            net = net.with_epsilon(eps)?;
        }
        for limit in &self.line_limits {
            let k = net
                .node_index(&limit.node)
                .ok_or_else(|| Error::InvalidArgument(format!("no node {}", limit.node)))?;
            net = net.with_line_limits(k, limit.p_limit, limit.q_limit)?;
        }
        Ok(net)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.aggregators.iter().map(|a| a.prosumers.len()).collect()
    }
}
