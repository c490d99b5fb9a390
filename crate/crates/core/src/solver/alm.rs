//! Augmented-Lagrangian price/demand loop run by the DSO.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::agents::PriceResponsive;
use crate::error::{Error, Result};
use crate::fairness::{FairnessContext, DEADBAND};
use crate::powerflow::{ConstraintSet, ConstraintValues};

use super::kkt::{kkt_report, KktReport, Multipliers};

/// How constraint rows are normalized inside the dual loop.
///
/// Raw rows differ by orders of magnitude: voltage sensitivities are tiny
/// next to the unit coefficients of the balance row, so a single step size
/// cannot serve both. Blocks are scaled as a whole rather than row by row
/// because many voltage rows are nearly collinear and per-row normalization
/// lets their gains pile up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowScaling {
    /// Use the rows as assembled.
    None,
    /// Divide each voltage block and the flow block by its spectral norm, the
    /// balance row by its Euclidean norm, and the budget row by `‖c‖`.
    BlockSpectral,
}

/// Per-block row multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowScales {
    pub voltage_lower: f64,
    pub voltage_upper: f64,
    pub flow: f64,
    pub balance: f64,
    normalize_budget: bool,
}

impl RowScales {
    pub fn new(cons: &ConstraintSet, mode: RowScaling) -> Self {
        match mode {
            RowScaling::None => Self {
                voltage_lower: 1.0,
                voltage_upper: 1.0,
                flow: 1.0,
                balance: 1.0,
                normalize_budget: false,
            },
            RowScaling::BlockSpectral => {
                let inv = |norm: f64| if norm > 0.0 { 1.0 / norm } else { 1.0 };
                let sv = inv(spectral_norm(&cons.voltage));
                Self {
                    voltage_lower: sv,
                    voltage_upper: sv,
                    flow: inv(spectral_norm(&cons.flow)),
                    balance: inv(cons.balance.norm()),
                    normalize_budget: true,
                }
            }
        }
    }

    /// Scale of the budget row at broadcast prices `prices`.
    pub fn budget(&self, prices: &DVector<f64>) -> f64 {
        if self.normalize_budget {
            let n = prices.norm();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        } else {
            1.0
        }
    }
}

fn spectral_norm(m: &nalgebra::DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Solver settings. Unset optional fields take their documented defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Penalty and dual step factor.
    pub eta: f64,
    /// Fairness weight `C`.
    pub fairness_weight: f64,
    /// Threshold on `‖Δp‖₁`; defaults to [`DEFAULT_TOL_P_PER_AGGREGATOR`]
    /// times the number of aggregators.
    pub tol_p: Option<f64>,
    /// Largest physical constraint violation accepted at termination.
    pub tol_feas: f64,
    /// Consecutive small steps required to stop.
    pub window: usize,
    pub max_iter: usize,
    /// Flat starting price; defaults to the wholesale cost.
    pub initial_price: Option<f64>,
    /// Blend between the new price (1) and the previous one (0).
    pub relaxation: f64,
    pub row_scaling: RowScaling,
    /// Start the balance dual where the first price update reproduces the
    /// flat starting price instead of at zero.
    pub seed_balance_dual: bool,
    /// Record every `trace_stride`-th iteration.
    pub trace_stride: usize,
    /// Fairness mask deadband.
    pub deadband: f64,
}

/// Default `‖Δp‖₁` threshold per aggregator.
pub const DEFAULT_TOL_P_PER_AGGREGATOR: f64 = 1e-9;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            fairness_weight: 0.0,
            tol_p: None,
            tol_feas: 1e-8,
            window: 100,
            max_iter: 500_000,
            initial_price: None,
            relaxation: 1.0,
            row_scaling: RowScaling::BlockSpectral,
            seed_balance_dual: true,
            trace_stride: 1000,
            deadband: DEADBAND,
        }
    }
}

impl SolverConfig {
    pub fn tol_p_for(&self, aggregators: usize) -> f64 {
        self.tol_p
            .unwrap_or(DEFAULT_TOL_P_PER_AGGREGATOR * aggregators as f64)
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.fairness_weight >= 0.0 && self.fairness_weight.is_finite()) {
            return bad("fairness weight must be nonnegative");
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return bad("relaxation must lie in (0, 1]");
        }
        if self.window == 0 || self.trace_stride == 0 || self.max_iter == 0 {
            return bad("window, trace stride and iteration budget must be positive");
        }
        Ok(())
    }
}

/// Price components; their sum is the price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlmpBreakdown {
    pub voltage: Vec<f64>,
    pub congestion: Vec<f64>,
    /// Energy and losses, plus the budget term when that row is active.
    pub energy_loss: Vec<f64>,
    pub fairness: Vec<f64>,
}

impl DlmpBreakdown {
    /// A flat price carried entirely by the energy component.
    pub fn flat(price: f64, n: usize) -> Self {
        Self {
            voltage: vec![0.0; n],
            congestion: vec![0.0; n],
            energy_loss: vec![price; n],
            fairness: vec![0.0; n],
        }
    }

    pub fn total(&self) -> Vec<f64> {
        (0..self.voltage.len())
            .map(|k| self.voltage[k] + self.congestion[k] + self.energy_loss[k] + self.fairness[k])
            .collect()
    }

    /// Largest `|Σ components - price| / max(1, |price|)`.
    pub fn identity_error(&self, prices: &[f64]) -> f64 {
        self.total()
            .iter()
            .zip(prices)
            .map(|(t, c)| (t - c).abs() / c.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    fn blend(&self, previous: &Self, w: f64) -> Self {
        let mix = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect()
        };
        Self {
            voltage: mix(&self.voltage, &previous.voltage),
            congestion: mix(&self.congestion, &previous.congestion),
            energy_loss: mix(&self.energy_loss, &previous.energy_loss),
            fairness: mix(&self.fairness, &previous.fairness),
        }
    }
}

/// Prices, demands and scaled duals carried between iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub prices: DVector<f64>,
    pub demands: DVector<f64>,
    pub alpha_lower: DVector<f64>,
    pub alpha_upper: DVector<f64>,
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub fairness_weight: f64,
    pub iteration: usize,
    pub small_steps: usize,
    pub scales: RowScales,
}

impl SolverState {
    /// Flat prices, zero duals, and the balance dual seeded per `config`.
    pub fn new(cons: &ConstraintSet, config: &SolverConfig) -> Self {
        let n = cons.node_count();
        let na = cons.aggregator_count();
        let c0 = config.initial_price.unwrap_or(cons.wholesale_cost);
        let scales = RowScales::new(cons, config.row_scaling);
        let scaled_mean = cons.balance.mean() * scales.balance;
        let lambda = if config.seed_balance_dual && scaled_mean != 0.0 {
            c0 / scaled_mean
        } else {
            0.0
        };
        Self {
            prices: DVector::from_element(na, c0),
            demands: DVector::zeros(na),
            alpha_lower: DVector::zeros(n),
            alpha_upper: DVector::zeros(n),
            beta: DVector::zeros(4 * n),
            lambda,
            gamma: 0.0,
            eta: config.eta,
            fairness_weight: config.fairness_weight,
            iteration: 0,
            small_steps: 0,
            scales,
        }
    }

    /// Duals of the unscaled rows.
    pub fn multipliers(&self) -> Multipliers {
        let s = &self.scales;
        Multipliers {
            voltage_lower: &self.alpha_lower * s.voltage_lower,
            voltage_upper: &self.alpha_upper * s.voltage_upper,
            flow: &self.beta * s.flow,
            balance: self.lambda * s.balance,
            budget: self.gamma * s.budget(&self.prices),
            floor: DVector::zeros(self.prices.len()),
        }
    }

    fn min_inequality_dual(&self) -> f64 {
        self.alpha_lower
            .iter()
            .chain(self.alpha_upper.iter())
            .chain(self.beta.iter())
            .copied()
            .fold(self.gamma, f64::min)
    }
}

/// Scaled row values at the state's demands and prices.
struct ScaledRows {
    lower: DVector<f64>,
    upper: DVector<f64>,
    flow: DVector<f64>,
    balance: f64,
    budget: f64,
    budget_scale: f64,
}

fn scaled_rows(state: &SolverState, cons: &ConstraintSet) -> ScaledRows {
    let values = cons.evaluate(state.demands.as_slice(), state.prices.as_slice());
    let s = &state.scales;
    let budget_scale = s.budget(&state.prices);
    ScaledRows {
        lower: values.voltage_lower * s.voltage_lower,
        upper: values.voltage_upper * s.voltage_upper,
        flow: values.flow * s.flow,
        balance: values.balance * s.balance,
        budget: values.budget * budget_scale,
        budget_scale,
    }
}

/// Projected dual ascent on every block at the demands `p`.
pub fn dual_update(state: &mut SolverState, cons: &ConstraintSet, p: &DVector<f64>) {
    state.demands = p.clone();
    let rows = scaled_rows(state, cons);
    let eta = state.eta;
    let step = |dual: &mut DVector<f64>, g: &DVector<f64>| {
        dual.zip_apply(g, |d, g| *d = (*d + eta * g).max(0.0));
    };
    step(&mut state.alpha_lower, &rows.lower);
    step(&mut state.alpha_upper, &rows.upper);
    step(&mut state.beta, &rows.flow);
    state.lambda += eta * rows.balance;
    state.gamma = (state.gamma + eta * rows.budget).max(0.0);
}

/// New prices from the current duals, demands and fairness gradient.
pub fn price_update(
    state: &SolverState,
    cons: &ConstraintSet,
    grad_j: &DVector<f64>,
) -> (DVector<f64>, DlmpBreakdown) {
    let rows = scaled_rows(state, cons);
    let eta = state.eta;
    let s = &state.scales;
    let boosted = |dual: &DVector<f64>, g: &DVector<f64>| dual + g.map(|g| eta * g.max(0.0));

    let lower = boosted(&state.alpha_lower, &rows.lower) * s.voltage_lower;
    let upper = boosted(&state.alpha_upper, &rows.upper) * s.voltage_upper;
    let voltage = cons.voltage.tr_mul(&(upper - lower));
    let congestion = cons
        .flow
        .tr_mul(&(boosted(&state.beta, &rows.flow) * s.flow));
    let balance_weight = (state.lambda + eta * rows.balance) * s.balance;
    let budget_weight = (state.gamma + eta * rows.budget.max(0.0)) * rows.budget_scale;
    let energy_loss = &cons.balance * balance_weight - &state.prices * budget_weight;
    let fairness = grad_j * (-0.5 * state.fairness_weight);

    let breakdown = DlmpBreakdown {
        voltage: voltage.as_slice().to_vec(),
        congestion: congestion.as_slice().to_vec(),
        energy_loss: energy_loss.as_slice().to_vec(),
        fairness: fairness.as_slice().to_vec(),
    };
    let prices = DVector::from_vec(breakdown.total());
    (prices, breakdown)
}

/// Value of the augmented Lagrangian at `p` with welfare `welfare` and
/// fairness index `jain` (ignored when the fairness weight is zero).
pub fn augmented_lagrangian(
    state: &SolverState,
    cons: &ConstraintSet,
    p: &DVector<f64>,
    welfare: f64,
    jain: Option<f64>,
) -> f64 {
    let mut at = state.clone();
    at.demands = p.clone();
    let rows = scaled_rows(&at, cons);
    let eta = state.eta;
    let ineq = |dual: &DVector<f64>, g: &DVector<f64>| -> f64 {
        dual.dot(g) + 0.5 * eta * g.iter().map(|g| g * g.max(0.0)).sum::<f64>()
    };
    let fairness = if state.fairness_weight > 0.0 {
        0.5 * state.fairness_weight * jain.unwrap_or(0.0)
    } else {
        0.0
    };
    welfare + fairness
        - ineq(&state.alpha_lower, &rows.lower)
        - ineq(&state.alpha_upper, &rows.upper)
        - ineq(&state.beta, &rows.flow)
        - state.lambda * rows.balance
        - 0.5 * eta * rows.balance * rows.balance
        - state.gamma * rows.budget
        - 0.5 * eta * rows.budget * rows.budget.max(0.0)
}

/// One sampled iteration of the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `None` on the first iteration.
    pub dp_l1: Option<f64>,
    pub lagrangian: f64,
    pub max_slack: f64,
    pub jain: Option<f64>,
}

/// Duals of the unscaled constraint rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualValues {
    pub voltage_lower: Vec<f64>,
    pub voltage_upper: Vec<f64>,
    pub flow: Vec<f64>,
    pub balance: f64,
    pub budget: f64,
}

impl From<&Multipliers> for DualValues {
    fn from(m: &Multipliers) -> Self {
        Self {
            voltage_lower: m.voltage_lower.as_slice().to_vec(),
            voltage_upper: m.voltage_upper.as_slice().to_vec(),
            flow: m.flow.as_slice().to_vec(),
            balance: m.balance,
            budget: m.budget,
        }
    }
}

/// Outcome of a market run. `prices` is the last broadcast price and
/// `demands` the responses to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketResult {
    pub converged: bool,
    pub iterations: usize,
    pub demands: Vec<f64>,
    pub prices: Vec<f64>,
    pub breakdown: DlmpBreakdown,
    /// Masked fairness index at the final point, if any aggregator consumes.
    pub jain: Option<f64>,
    pub welfare: Vec<f64>,
    pub total_welfare: f64,
    /// Welfare plus the fairness term.
    pub objective: f64,
    pub constraints: ConstraintValues,
    pub max_violation: f64,
    pub duals: DualValues,
    pub kkt: KktReport,
    pub trace: Vec<TraceRecord>,
    /// Worst relative gap between a broadcast price and the sum of its
    /// components over the whole run.
    pub max_identity_error: f64,
    /// Smallest inequality dual seen over the whole run.
    pub min_inequality_dual: f64,
}

/// Runs the price/demand loop until demands settle or the budget runs out.
pub fn run_market<A: PriceResponsive>(
    cons: &ConstraintSet,
    aggregators: &[A],
    config: &SolverConfig,
) -> Result<MarketResult> {
    config.validate()?;
    let na = cons.aggregator_count();
    if aggregators.len() != na {
        return Err(Error::InvalidArgument(format!(
            "constraints cover {na} aggregators, got {}",
            aggregators.len()
        )));
    }
    let sizes: Vec<usize> = aggregators.iter().map(|a| a.size()).collect();
    let tol_p = config.tol_p_for(na);

    let mut state = SolverState::new(cons, config);
    let mut breakdown = DlmpBreakdown::flat(state.prices[0], na);
    let mut previous: Option<DVector<f64>> = None;
    let mut trace = Vec::new();
    let mut max_identity_error: f64 = 0.0;
    let mut min_inequality_dual = f64::INFINITY;
    let mut converged = false;

    let respond = |prices: &DVector<f64>| -> Result<(DVector<f64>, Vec<f64>)> {
        let mut p = DVector::zeros(na);
        let mut w = vec![0.0; na];
        for (k, agg) in aggregators.iter().enumerate() {
            let r = agg.respond(prices[k])?;
            p[k] = r.demand;
            w[k] = r.welfare;
        }
        Ok((p, w))
    };
    let fairness_at =
        |p: &DVector<f64>, prices: &DVector<f64>| -> Result<Option<FairnessContext>> {
            let ctx = FairnessContext::with_deadband(
                p.as_slice(),
                prices.as_slice(),
                &sizes,
                config.deadband,
            )?;
            Ok((ctx.support() > 0).then_some(ctx))
        };

    let mut iteration = 0;
    while iteration < config.max_iter {
        state.iteration = iteration;
        max_identity_error =
            max_identity_error.max(breakdown.identity_error(state.prices.as_slice()));
        let (p, welfare) = respond(&state.prices)?;

        dual_update(&mut state, cons, &p);
        min_inequality_dual = min_inequality_dual.min(state.min_inequality_dual());

        let ctx = fairness_at(&p, &state.prices)?;
        let grad = match (&ctx, config.fairness_weight > 0.0) {
            (Some(ctx), true) => DVector::from_vec(ctx.gradient(p.as_slice())?),
            _ => DVector::zeros(na),
        };
        let (mut next, mut next_breakdown) = price_update(&state, cons, &grad);
        if config.relaxation < 1.0 {
            next_breakdown = next_breakdown.blend(&breakdown, config.relaxation);
            next = DVector::from_vec(next_breakdown.total());
        }
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::Diverged(iteration));
        }

        let dp = previous.as_ref().map(|q| (&p - q).abs().sum());
        let slack = cons
            .evaluate(p.as_slice(), state.prices.as_slice())
            .max_violation();
        match dp {
            Some(dp) if dp < tol_p && slack <= config.tol_feas => state.small_steps += 1,
            _ => state.small_steps = 0,
        }
        let done = state.small_steps >= config.window;

        if iteration % config.trace_stride == 0 || done {
            let jain = ctx.as_ref().and_then(|c| c.index(p.as_slice()).ok());
            trace.push(TraceRecord {
                iteration,
                dp_l1: dp,
                lagrangian: augmented_lagrangian(&state, cons, &p, welfare.iter().sum(), jain),
                max_slack: slack,
                jain,
            });
        }
        if done {
            converged = true;
            break;
        }
        previous = Some(p);
        state.prices = next;
        breakdown = next_breakdown;
        iteration += 1;
    }

    // Report the last broadcast price together with the responses to it.
    let (p, welfare) = respond(&state.prices)?;
    state.demands = p.clone();
    let ctx = fairness_at(&p, &state.prices)?;
    let jain = ctx.as_ref().and_then(|c| c.index(p.as_slice()).ok());
    let grad = match (&ctx, config.fairness_weight > 0.0) {
        (Some(ctx), true) => DVector::from_vec(ctx.gradient(p.as_slice())?),
        _ => DVector::zeros(na),
    };
    let constraints = cons.evaluate(p.as_slice(), state.prices.as_slice());
    let multipliers = state.multipliers();
    let fairness_term = &grad * (0.5 * config.fairness_weight);
    let kkt = kkt_report(
        cons,
        p.as_slice(),
        state.prices.as_slice(),
        &multipliers,
        &fairness_term,
    );
    let total_welfare: f64 = welfare.iter().sum();
    max_identity_error = max_identity_error.max(breakdown.identity_error(state.prices.as_slice()));

    Ok(MarketResult {
        converged,
        iterations: iteration + usize::from(converged),
        demands: p.as_slice().to_vec(),
        prices: state.prices.as_slice().to_vec(),
        breakdown,
        jain,
        objective: total_welfare + 0.5 * config.fairness_weight * jain.unwrap_or(0.0),
        welfare,
        total_welfare,
        max_violation: constraints.max_violation(),
        constraints,
        duals: DualValues::from(&multipliers),
        kkt,
        trace,
        max_identity_error,
        min_inequality_dual,
    })
}

impl MarketResult {
    /// `max_k c_k - min_k c_k`.
    pub fn price_spread(&self) -> f64 {
        let max = self
            .prices
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let min = self.prices.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}
