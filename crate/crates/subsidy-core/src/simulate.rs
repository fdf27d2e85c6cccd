//! Seeded simulation of equilibrium share paths and the one-shot deviation experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::complementarity::ComplementaritySpec;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::interp_uniform;
use crate::solver::EquilibriumSolution;

/// Name of the random number generator recorded in output metadata.
pub const RNG_ALGORITHM: &str =
    "ChaCha20 (rand_chacha::ChaCha20Rng::seed_from_u64(seed), stream = path index; normals via rand_distr::StandardNormal)";

/// Periods `start ≤ t < end` use shock standard deviation `σ·sigma_mult`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockWindow {
    pub start: usize,
    pub end: usize,
    pub sigma_mult: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub m0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shock_window: Option<ShockWindow>,
}

fn default_horizon() -> usize {
    50
}

impl SimulationConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        if !(self.m0 > params.m_min && self.m0 < 1.0 - params.m_min) {
            return Err(Error::param("m0", format!("must lie in ({}, {})", params.m_min, 1.0 - params.m_min)));
        }
        if let Some(w) = self.shock_window {
            if !(w.start <= w.end && w.end <= self.horizon) {
                return Err(Error::param("shock_window", "need start <= end <= horizon"));
            }
            if !(w.sigma_mult.is_finite() && w.sigma_mult >= 0.0) {
                return Err(Error::param("shock_window.sigma_mult", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Shock standard-deviation multiplier in period `t`.
    pub fn sigma_mult(&self, t: usize) -> f64 {
        match self.shock_window {
            Some(w) if t >= w.start && t < w.end => w.sigma_mult,
            _ => 1.0,
        }
    }
}

/// Per-period series of one simulated path.
///
/// `profit_i` and `profit_e_primary` are primary-market operating profits (prices at
/// cost, so minus the subsidy outlay including any adjustment cost).  The incumbent's
/// cumulative value also counts its standalone synergy `w·m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPath {
    pub t: Vec<usize>,
    pub m: Vec<f64>,
    pub s_i: Vec<f64>,
    pub s_e: Vec<f64>,
    pub eta: Vec<f64>,
    pub profit_i: Vec<f64>,
    pub profit_e_primary: Vec<f64>,
    pub psi_flow: Vec<f64>,
    pub profit_e_total: Vec<f64>,
    pub cum_i: Vec<f64>,
    pub cum_e: Vec<f64>,
    /// Period in which the incumbent's share was found below the survival threshold;
    /// the path is truncated before it.
    pub exit_period: Option<usize>,
    pub seed: u64,
    pub stream: u64,
}

impl SimulationPath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Simulates one path on stream 0 of the seeded generator.
pub fn simulate(
    solution: &EquilibriumSolution,
    params: &ModelParams,
    spec_e: &ComplementaritySpec,
    sim: &SimulationConfig,
) -> Result<SimulationPath> {
    simulate_stream(solution, params, spec_e, sim, 0)
}

/// Simulates one path on the given generator stream; paths of a batch use stream = index.
pub fn simulate_stream(
    solution: &EquilibriumSolution,
    params: &ModelParams,
    spec_e: &ComplementaritySpec,
    sim: &SimulationConfig,
    stream: u64,
) -> Result<SimulationPath> {
    params.validate()?;
    spec_e.validate()?;
    sim.validate(params)?;
    let mut rng = ChaCha20Rng::seed_from_u64(sim.seed);
    rng.set_stream(stream);
    let h = sim.horizon;
    let mut p = SimulationPath {
        t: Vec::with_capacity(h),
        m: Vec::with_capacity(h),
        s_i: Vec::with_capacity(h),
        s_e: Vec::with_capacity(h),
        eta: Vec::with_capacity(h),
        profit_i: Vec::with_capacity(h),
        profit_e_primary: Vec::with_capacity(h),
        psi_flow: Vec::with_capacity(h),
        profit_e_total: Vec::with_capacity(h),
        cum_i: Vec::with_capacity(h),
        cum_e: Vec::with_capacity(h),
        exit_period: None,
        seed: sim.seed,
        stream,
    };
    let mut m = sim.m0;
    let (mut cum_i, mut cum_e, mut disc) = (0.0, 0.0, 1.0);
    for t in 0..h {
        if !params.incumbent_alive(m) {
            p.exit_period = Some(t);
            break;
        }
        let s_i = interp_uniform(&solution.s_i, m);
        let s_e = interp_uniform(&solution.s_e, m);
        let z: f64 = StandardNormal.sample(&mut rng);
        let eta = params.sigma * sim.sigma_mult(t) * z;
        let profit_i = -params.subsidy_outlay(s_i, m);
        let profit_e = -params.subsidy_outlay(s_e, 1.0 - m);
        let psi = spec_e.value_unchecked(1.0 - m);
        let total_e = profit_e + psi;
        cum_i += disc * (profit_i + params.incumbent_synergy * m);
        cum_e += disc * total_e;
        p.t.push(t);
        p.m.push(m);
        p.s_i.push(s_i);
        p.s_e.push(s_e);
        p.eta.push(eta);
        p.profit_i.push(profit_i);
        p.profit_e_primary.push(profit_e);
        p.psi_flow.push(psi);
        p.profit_e_total.push(total_e);
        p.cum_i.push(cum_i);
        p.cum_e.push(cum_e);
        disc *= params.delta;
        m = (m + params.gamma * (s_i - s_e) + eta).clamp(0.0, 1.0);
    }
    Ok(p)
}

/// The incumbent's one-shot deviation to zero subsidy at the steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// Share at which the deviation is evaluated.
    pub m: f64,
    /// `m` is the solution's steady state (otherwise the simulation start `m0`).
    pub at_steady_state: bool,
    pub s_i: f64,
    pub s_e: f64,
    /// `−γ·s_E*(m)`.
    pub delta_m: f64,
    /// Outlay saved in the deviation period.
    pub one_shot_saving: f64,
    /// `δ·[V_I(m) − V_I(m + Δm)]`.
    pub continuation_loss: f64,
    /// Saving strictly below the continuation loss.
    pub unprofitable: bool,
    /// Saving equals loss (e.g. a zero-subsidy equilibrium).
    pub neutral: bool,
}

/// Compares the one-period saving from setting `s_I = 0` at `m*` with the discounted
/// value lost through the resulting share drop.  Without a steady state the
/// experiment is run at the simulation's initial share.
pub fn deviation_experiment(
    solution: &EquilibriumSolution,
    params: &ModelParams,
    sim: &SimulationConfig,
) -> Result<DeviationReport> {
    params.validate()?;
    let (m, at_ss) = match solution.m_star {
        Some(m) => (m, true),
        None => (sim.m0, false),
    };
    let (s_i, s_e) = solution.policies_at(m);
    let delta_m = -params.gamma * s_e;
    let saving = params.subsidy_outlay(s_i, m);
    let after = (m + delta_m).clamp(0.0, 1.0);
    let loss = params.delta * (interp_uniform(&solution.v_i, m) - interp_uniform(&solution.v_i, after));
    Ok(DeviationReport {
        m,
        at_steady_state: at_ss,
        s_i,
        s_e,
        delta_m,
        one_shot_saving: saving,
        continuation_loss: loss,
        unprofitable: saving < loss,
        neutral: saving == loss,
    })
}
