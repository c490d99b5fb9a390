//! Exact branch-flow solution by backward/forward sweep.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{build_topology, RadialNetwork};

/// A converged AC operating point. Per-node vectors use row `k - 1` for node
/// `k`; line quantities are indexed by the receiving node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    /// Real demand per aggregator (positive = consumption).
    pub p_injection: Vec<f64>,
    /// Reactive demand per aggregator.
    pub q_injection: Vec<f64>,
    pub v: Vec<f64>,
    pub angle: Vec<f64>,
    /// Real flow at the receiving end of each line.
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    pub loss_p: Vec<f64>,
    pub loss_q: Vec<f64>,
    /// Real power drawn from the substation.
    pub import_p: f64,
    pub import_q: f64,
    pub sweeps: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    /// Stop once the largest complex voltage update falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Relaxation on the voltage update; 1 is a plain sweep.
    pub damping: f64,
    pub collapse_floor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-14,
            max_sweeps: 10_000,
            damping: 1.0,
            collapse_floor: 0.5,
        }
    }
}

/// Largest residuals of the branch-flow equations at a solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchFlowResiduals {
    /// Flow balance against downstream demand plus downstream losses.
    pub balance: f64,
    /// Losses against `r (P² + Q²) / V²` and `x (P² + Q²) / V²`.
    pub losses: f64,
    /// Sending-end power against the terminal voltages.
    pub sending_end: f64,
}

impl BranchFlowResiduals {
    pub fn max(&self) -> f64 {
        self.balance.max(self.losses).max(self.sending_end)
    }
}

/// Solves the AC branch flow for per-aggregator demands `p` and `q`.
pub fn solve_ac(net: &RadialNetwork, p: &[f64], q: &[f64]) -> Result<PowerFlowSolution> {
    solve_ac_with(net, p, q, &SweepOptions::default())
}

pub fn solve_ac_with(
    net: &RadialNetwork,
    p: &[f64],
    q: &[f64],
    opts: &SweepOptions,
) -> Result<PowerFlowSolution> {
    let na = net.aggregator_count();
    if p.len() != na || q.len() != na {
        return Err(Error::InvalidArgument(format!(
            "expected {na} demands, got {} real and {} reactive",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("demands must be finite".into()));
    }

    let n = net.node_count();
    let pn = net.nodal(p);
    let qn = net.nodal(q);
    let load: Vec<Complex64> = (0..n).map(|i| Complex64::new(pn[i], qn[i])).collect();
    let z: Vec<Complex64> = net
        .lines()
        .iter()
        .map(|l| Complex64::new(l.r, l.x))
        .collect();
    let parent: Vec<usize> = (1..=n).map(|k| net.parent(k)).collect();

    let mut v = vec![Complex64::from_polar(net.v0, net.delta0); n + 1];
    let mut current = vec![Complex64::default(); n];
    let mut recv = vec![Complex64::default(); n];
    let mut loss = vec![Complex64::default(); n];

    let backward = |v: &[Complex64],
                    current: &mut [Complex64],
                    recv: &mut [Complex64],
                    loss: &mut [Complex64]| {
        let mut acc = load.clone();
        acc.resize(n + 1, Complex64::default());
        acc.rotate_right(1);
        // acc[k] now holds the load of node k with acc[0] unused.
        for k in (1..=n).rev() {
            let s = acc[k];
            let i_k = (s / v[k]).conj();
            recv[k - 1] = s;
            current[k - 1] = i_k;
            loss[k - 1] = z[k - 1] * i_k.norm_sqr();
            acc[parent[k - 1]] += s + loss[k - 1];
        }
    };

    let mut sweeps = 0;
    loop {
        sweeps += 1;
        backward(&v, &mut current, &mut recv, &mut loss);
        let mut update: f64 = 0.0;
        for k in 1..=n {
            let target = v[parent[k - 1]] - z[k - 1] * current[k - 1];
            let next = v[k] + (target - v[k]) * opts.damping;
            update = update.max((next - v[k]).norm());
            v[k] = next;
            let mag = v[k].norm();
            if !(mag >= opts.collapse_floor) {
                return Err(Error::VoltageCollapse {
                    node: k,
                    voltage: mag,
                });
            }
        }
        if update <= opts.tolerance {
            break;
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::NoConvergence {
                sweeps,
                last_update: update,
            });
        }
    }
    // Recompute flows from the final voltages so the loss equations hold
    // exactly at the reported point.
    backward(&v, &mut current, &mut recv, &mut loss);

    let import: Complex64 = (1..=n)
        .filter(|&k| parent[k - 1] == 0)
        .map(|k| recv[k - 1] + loss[k - 1])
        .sum();

    Ok(PowerFlowSolution {
        p_injection: p.to_vec(),
        q_injection: q.to_vec(),
        v: v[1..].iter().map(|c| c.norm()).collect(),
        angle: v[1..].iter().map(|c| c.arg()).collect(),
        p_flow: recv.iter().map(|c| c.re).collect(),
        q_flow: recv.iter().map(|c| c.im).collect(),
        loss_p: loss.iter().map(|c| c.re).collect(),
        loss_q: loss.iter().map(|c| c.im).collect(),
        import_p: import.re,
        import_q: import.im,
        sweeps,
    })
}

impl PowerFlowSolution {
    pub fn min_voltage(&self) -> f64 {
        self.v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_voltage(&self) -> f64 {
        self.v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Evaluates the branch-flow equations at this solution directly from the
    /// downstream sets, independent of the sweep's accumulation order.
    pub fn residuals(&self, net: &RadialNetwork) -> BranchFlowResiduals {
        let topo = build_topology(net);
        let n = net.node_count();
        let pn = net.nodal(&self.p_injection);
        let qn = net.nodal(&self.q_injection);
        let mut out = BranchFlowResiduals::default();
        for k in 1..=n {
            let i = k - 1;
            let below = topo.downstream(k);
            let p_expect = pn[i]
                + below
                    .iter()
                    .map(|&l| pn[l - 1] + self.loss_p[l - 1])
                    .sum::<f64>();
            let q_expect = qn[i]
                + below
                    .iter()
                    .map(|&l| qn[l - 1] + self.loss_q[l - 1])
                    .sum::<f64>();
            out.balance = out
                .balance
                .max((self.p_flow[i] - p_expect).abs())
                .max((self.q_flow[i] - q_expect).abs());

            let line = net.line(k);
            let s2 = self.p_flow[i].powi(2) + self.q_flow[i].powi(2);
            let vk2 = self.v[i] * self.v[i];
            out.losses = out
                .losses
                .max((self.loss_p[i] - line.r * s2 / vk2).abs())
                .max((self.loss_q[i] - line.x * s2 / vk2).abs());

            let u = topo.parent(k);
            let (vu, du) = if u == 0 {
                (net.v0, net.delta0)
            } else {
                (self.v[u - 1], self.angle[u - 1])
            };
            let theta = du - self.angle[i];
            let z2 = line.r * line.r + line.x * line.x;
            let cross = vu * self.v[i];
            let common = vu * vu - cross * theta.cos();
            let p_send = (line.r * common + line.x * cross * theta.sin()) / z2;
            let q_send = (line.x * common - line.r * cross * theta.sin()) / z2;
            out.sending_end = out
                .sending_end
                .max((self.p_flow[i] + self.loss_p[i] - p_send).abs())
                .max((self.q_flow[i] + self.loss_q[i] - q_send).abs());
        }
        out
    }
}
