//! Markov perfect equilibrium by value-function iteration on a share grid.
//!
//! The per-state problems are solved by exhaustive search over a uniform
//! subsidy grid with the smallest maximizer winning ties.  Expectations over
//! the demand shock use Gauss–Hermite quadrature; off-grid continuation values
//! are linearly interpolated and transitions are clamped to `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complementarity::ComplementaritySpec;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{grid_derivative, interp_uniform, sup_dist, uniform_grid, GaussHermite};

/// How the two Bellman equations are iterated jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Incumbent update against the entrant's current policy, then entrant update
    /// against the incumbent's new policy (Gauss–Seidel order).
    Alternating,
    /// At every state both firms' subsidies are chosen as a pure Nash equilibrium of
    /// the stage game defined by the current continuation values (best-response
    /// iteration on the action grid); both value functions are then updated at once.
    StageNash,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Number of share grid points on `[0, 1]`.
    pub grid_n: usize,
    /// Number of subsidy grid points on `[0, s_max]`.
    pub action_n: usize,
    /// Number of Gauss–Hermite nodes for the shock expectation.
    pub quad_n: usize,
    /// Sup-norm tolerance on successive value functions.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    pub method: SolverMethod,
    /// Relaxation weight θ ∈ (0, 1]: `V ← V + θ·(T(V) − V)`.
    pub relaxation: f64,
    /// Best-response rounds per state for [`SolverMethod::StageNash`].
    pub stage_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_n: 401,
            action_n: 201,
            quad_n: 7,
            tol: 1e-8,
            max_iter: 5000,
            method: SolverMethod::Alternating,
            relaxation: 1.0,
            stage_rounds: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 64 {
            return Err(Error::param("grid_n", "must be >= 64"));
        }
        if self.action_n < 32 {
            return Err(Error::param("action_n", "must be >= 32"));
        }
        if self.quad_n < 3 {
            return Err(Error::param("quad_n", "must be >= 3"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::param("tol", "must be finite and > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::param("relaxation", "must lie in (0, 1]"));
        }
        if self.stage_rounds == 0 {
            return Err(Error::param("stage_rounds", "must be >= 1"));
        }
        Ok(())
    }
}

/// Value and policy functions of a solved (or attempted) equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub grid: Vec<f64>,
    pub v_i: Vec<f64>,
    pub v_e: Vec<f64>,
    pub s_i: Vec<f64>,
    pub s_e: Vec<f64>,
    /// Stable interior steady state (see [`locate_crossings`]).
    pub m_star: Option<f64>,
    /// Every point where `s_E − s_I` changes sign at or above the survival threshold.
    pub crossings: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm change in the first iteration.
    pub initial_residual: f64,
    pub final_residual: f64,
    pub converged: bool,
    pub method: SolverMethod,
    /// States whose stage game had no pure equilibrium reached within the round cap
    /// in the final sweep (always 0 for the alternating method).
    pub stage_failures: usize,
    /// Spacing of the subsidy grid.
    pub action_step: f64,
}

impl EquilibriumSolution {
    /// Policy values at share `m` by linear interpolation.
    pub fn policies_at(&self, m: f64) -> (f64, f64) {
        (interp_uniform(&self.s_i, m), interp_uniform(&self.s_e, m))
    }

    pub fn values_at(&self, m: f64) -> (f64, f64) {
        (interp_uniform(&self.v_i, m), interp_uniform(&self.v_e, m))
    }
}

/// Pre-computed pieces shared by all Bellman evaluations of one model.
pub(crate) struct Game {
    pub params: ModelParams,
    pub grid: Vec<f64>,
    pub actions: Vec<f64>,
    pub action_step: f64,
    shocks: Vec<f64>,
    weights: Vec<f64>,
    psi_flow: Vec<f64>,
    alive: Vec<bool>,
}

impl Game {
    pub fn new(params: &ModelParams, spec: &ComplementaritySpec, cfg: &SolverConfig) -> Result<Game> {
        params.validate()?;
        spec.validate()?;
        cfg.validate()?;
        let grid = uniform_grid(cfg.grid_n);
        let action_step = params.s_max / (cfg.action_n - 1) as f64;
        let actions = (0..cfg.action_n)
            .map(|j| if j + 1 == cfg.action_n { params.s_max } else { j as f64 * action_step })
            .collect();
        let quad = GaussHermite::new(cfg.quad_n)?;
        let shocks = quad.nodes.iter().map(|z| z * params.sigma).collect();
        let psi_flow = grid.iter().map(|&m| spec.value_unchecked(1.0 - m)).collect();
        let alive = grid.iter().map(|&m| params.incumbent_alive(m)).collect();
        Ok(Game { params: *params, grid, actions, action_step, shocks, weights: quad.weights, psi_flow, alive })
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    /// `E[v(clamp(x + η))]`.
    pub fn expect(&self, v: &[f64], x: f64) -> f64 {
        self.shocks.iter().zip(&self.weights).map(|(e, w)| w * interp_uniform(v, x + e)).sum()
    }

    pub fn incumbent_flow(&self, k: usize, a: f64) -> f64 {
        let m = self.grid[k];
        self.params.incumbent_synergy * m - self.params.subsidy_outlay(a, m)
    }

    pub fn entrant_flow(&self, k: usize, b: f64) -> f64 {
        let m = self.grid[k];
        self.psi_flow[k] - self.params.subsidy_outlay(b, 1.0 - m)
    }

    fn next_mean(&self, k: usize, a: f64, b: f64) -> f64 {
        self.grid[k] + self.params.gamma * (a - b)
    }

    fn check_len(&self, name: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::InvalidInput(format!("{name} has {} points, grid has {}", v.len(), self.n())));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} contains non-finite value {x}")));
        }
        Ok(())
    }

    /// Grid argmax of `objective(j)`; the smallest index among maximizers wins.
    fn argmax(&self, objective: impl Fn(usize) -> f64) -> (usize, f64) {
        let mut best = (0, objective(0));
        for j in 1..self.actions.len() {
            let v = objective(j);
            if v > best.1 + 1e-13 * (1.0 + best.1.abs()) {
                best = (j, v);
            }
        }
        best
    }

    pub fn incumbent_step(&self, v_i: &[f64], s_e: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let delta = self.params.delta;
        let out: Vec<(f64, usize)> = (0..self.n())
            .into_par_iter()
            .map(|k| {
                if !self.alive[k] {
                    return (0.0, 0);
                }
                let (j, v) = self.argmax(|j| {
                    let a = self.actions[j];
                    self.incumbent_flow(k, a) + delta * self.expect(v_i, self.next_mean(k, a, s_e[k]))
                });
                (v.max(0.0), j)
            })
            .collect();
        out.into_iter().unzip()
    }

    pub fn entrant_step(&self, v_e: &[f64], s_i: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let delta = self.params.delta;
        let out: Vec<(f64, usize)> = (0..self.n())
            .into_par_iter()
            .map(|k| {
                let (l, v) = self.argmax(|l| {
                    let b = self.actions[l];
                    self.entrant_flow(k, b) + delta * self.expect(v_e, self.next_mean(k, s_i[k], b))
                });
                (v, l)
            })
            .collect();
        out.into_iter().unzip()
    }

    /// Simultaneous stage-game step; returns new values, policy indices and the number
    /// of states where best-response iteration did not settle.
    fn stage_step(
        &self,
        v_i: &[f64],
        v_e: &[f64],
        prev: &[(usize, usize)],
        rounds: usize,
    ) -> (Vec<f64>, Vec<f64>, Vec<(usize, usize)>, usize) {
        let na = self.actions.len();
        let off = na - 1;
        let delta = self.params.delta;
        let out: Vec<(f64, f64, (usize, usize), bool)> = (0..self.n())
            .into_par_iter()
            .map(|k| {
                // Continuation values depend on the subsidy difference only.
                let mut cont_i = vec![0.0; 2 * na - 1];
                let mut cont_e = vec![0.0; 2 * na - 1];
                for d in 0..2 * na - 1 {
                    let diff = (d as f64 - off as f64) * self.action_step;
                    let x = self.grid[k] + self.params.gamma * diff;
                    cont_i[d] = delta * self.expect(v_i, x);
                    cont_e[d] = delta * self.expect(v_e, x);
                }
                let pay_i = |j: usize, l: usize| self.incumbent_flow(k, self.actions[j]) + cont_i[j + off - l];
                let pay_e = |j: usize, l: usize| self.entrant_flow(k, self.actions[l]) + cont_e[j + off - l];
                let alive = self.alive[k];
                let (mut j, mut l) = prev[k];
                let mut settled = false;
                for _ in 0..rounds {
                    let nj = if alive { self.argmax(|j| pay_i(j, l)).0 } else { 0 };
                    let nl = self.argmax(|l| pay_e(nj, l)).0;
                    let same = nj == j && nl == l;
                    j = nj;
                    l = nl;
                    if same {
                        settled = true;
                        break;
                    }
                }
                let vi = if alive { pay_i(j, l).max(0.0) } else { 0.0 };
                (vi, pay_e(j, l), (j, l), settled)
            })
            .collect();
        let failures = out.iter().filter(|o| !o.3).count();
        let vi = out.iter().map(|o| o.0).collect();
        let ve = out.iter().map(|o| o.1).collect();
        let idx = out.iter().map(|o| o.2).collect();
        (vi, ve, idx, failures)
    }
}

/// One application of the incumbent's Bellman operator with the entrant's policy held fixed.
///
/// Returns the updated value function and the maximizing subsidy at every grid point.
/// `spec_e` does not enter the incumbent's problem; it is accepted so that both
/// operators share one signature.
pub fn bellman_incumbent(
    params: &ModelParams,
    spec_e: &ComplementaritySpec,
    v_i: &[f64],
    s_e_policy: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let game = Game::new(params, spec_e, config)?;
    game.check_len("v_I", v_i)?;
    game.check_len("s_E policy", s_e_policy)?;
    let (v, idx) = game.incumbent_step(v_i, s_e_policy);
    Ok((v, idx.into_iter().map(|j| game.actions[j]).collect()))
}

/// One application of the entrant's Bellman operator with the incumbent's policy held fixed.
pub fn bellman_entrant(
    params: &ModelParams,
    spec_e: &ComplementaritySpec,
    v_e: &[f64],
    s_i_policy: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let game = Game::new(params, spec_e, config)?;
    game.check_len("v_E", v_e)?;
    game.check_len("s_I policy", s_i_policy)?;
    let (v, idx) = game.entrant_step(v_e, s_i_policy);
    Ok((v, idx.into_iter().map(|l| game.actions[l]).collect()))
}

/// `E[v(clamp(x + η))]` for a value array on the solver's share grid.
pub fn expected_continuation(params: &ModelParams, config: &SolverConfig, v: &[f64], x: f64) -> Result<f64> {
    let game = Game::new(params, &ComplementaritySpec::Zero, config)?;
    game.check_len("value array", v)?;
    Ok(game.expect(v, x))
}

/// Solves the equilibrium from zero initial values.
pub fn solve_mpe(params: &ModelParams, spec_e: &ComplementaritySpec, config: &SolverConfig) -> Result<EquilibriumSolution> {
    solve_mpe_from(params, spec_e, config, None)
}

/// Solves the equilibrium, optionally warm-starting from a previous solution on the same grids.
///
/// Hitting `max_iter` is not an error: the returned solution has `converged = false`.
pub fn solve_mpe_from(
    params: &ModelParams,
    spec_e: &ComplementaritySpec,
    config: &SolverConfig,
    warm: Option<&EquilibriumSolution>,
) -> Result<EquilibriumSolution> {
    let game = Game::new(params, spec_e, config)?;
    let n = game.n();
    let theta = config.relaxation;
    let snap = |s: f64| ((s / game.action_step).round() as usize).min(game.actions.len() - 1);

    let (mut v_i, mut v_e, mut idx) = match warm {
        Some(w) if w.grid.len() == n => {
            let v_i = w.v_i.iter().zip(&game.grid).map(|(v, &m)| if params.incumbent_alive(m) { v.max(0.0) } else { 0.0 }).collect();
            let idx: Vec<(usize, usize)> = w.s_i.iter().zip(&w.s_e).map(|(a, b)| (snap(*a), snap(*b))).collect();
            (v_i, w.v_e.clone(), idx)
        }
        _ => (vec![0.0; n], vec![0.0; n], vec![(0, 0); n]),
    };

    let mut iterations = 0;
    let mut initial_residual = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut failures = 0;
    while iterations < config.max_iter {
        let (new_i, new_e) = match config.method {
            SolverMethod::Alternating => {
                let s_e: Vec<f64> = idx.iter().map(|p| game.actions[p.1]).collect();
                let (new_i, ji) = game.incumbent_step(&v_i, &s_e);
                let s_i: Vec<f64> = ji.iter().map(|&j| game.actions[j]).collect();
                let (new_e, le) = game.entrant_step(&v_e, &s_i);
                idx = ji.into_iter().zip(le).collect();
                (new_i, new_e)
            }
            SolverMethod::StageNash => {
                let (new_i, new_e, new_idx, f) = game.stage_step(&v_i, &v_e, &idx, config.stage_rounds);
                idx = new_idx;
                failures = f;
                (new_i, new_e)
            }
        };
        residual = sup_dist(&new_i, &v_i).max(sup_dist(&new_e, &v_e));
        if iterations == 0 {
            initial_residual = residual;
        }
        iterations += 1;
        if theta == 1.0 {
            v_i = new_i;
            v_e = new_e;
        } else {
            for k in 0..n {
                v_i[k] += theta * (new_i[k] - v_i[k]);
                v_e[k] += theta * (new_e[k] - v_e[k]);
            }
        }
        if residual < config.tol {
            break;
        }
    }

    let s_i: Vec<f64> = idx.iter().map(|p| game.actions[p.0]).collect();
    let s_e: Vec<f64> = idx.iter().map(|p| game.actions[p.1]).collect();
    let (crossings, m_star) = locate_crossings(&game.grid, &s_i, &s_e, params.m_min);
    Ok(EquilibriumSolution {
        grid: game.grid.clone(),
        v_i,
        v_e,
        s_i,
        s_e,
        m_star,
        crossings,
        iterations,
        initial_residual,
        final_residual: residual,
        converged: residual < config.tol,
        method: config.method,
        stage_failures: failures,
        action_step: game.action_step,
    })
}

/// Sign changes of `s_E − s_I` on grid points at or above `m_min`, located by linear
/// root refinement between the bracketing points (the midpoint of a run of exact
/// zeros between opposite signs).
///
/// The steady state is the first crossing where `s_E − s_I` goes from negative to
/// positive, i.e. where the drift `γ(s_I − s_E)` pushes the share back towards it;
/// if no crossing has that orientation, the first crossing of any orientation.
pub fn locate_crossings(grid: &[f64], s_i: &[f64], s_e: &[f64], m_min: f64) -> (Vec<f64>, Option<f64>) {
    let d: Vec<f64> = s_e.iter().zip(s_i).map(|(e, i)| e - i).collect();
    let mut crossings = Vec::new();
    let mut stable = None;
    let mut last: Option<usize> = None;
    for k in 0..grid.len() {
        if grid[k] < m_min - 1e-12 || d[k] == 0.0 {
            if grid[k] < m_min - 1e-12 {
                last = None;
            }
            continue;
        }
        if let Some(p) = last {
            if d[p].signum() != d[k].signum() {
                let root = if k == p + 1 {
                    grid[p] + (grid[k] - grid[p]) * d[p] / (d[p] - d[k])
                } else {
                    0.5 * (grid[p + 1] + grid[k - 1])
                };
                crossings.push(root);
                if stable.is_none() && d[p] < 0.0 {
                    stable = Some(root);
                }
            }
        }
        last = Some(k);
    }
    let m_star = stable.or_else(|| crossings.first().copied());
    (crossings, m_star)
}

/// Sup-norm distance between the solution's values and one more application of each
/// firm's Bellman operator against the other's final policy.
pub fn operator_residual(
    solution: &EquilibriumSolution,
    params: &ModelParams,
    spec_e: &ComplementaritySpec,
    config: &SolverConfig,
) -> Result<f64> {
    let (vi, _) = bellman_incumbent(params, spec_e, &solution.v_i, &solution.s_e, config)?;
    let (ve, _) = bellman_entrant(params, spec_e, &solution.v_e, &solution.s_i, config)?;
    Ok(sup_dist(&vi, &solution.v_i).max(sup_dist(&ve, &solution.v_e)))
}

/// Comparison of grid policies with the closed-form first-order conditions
/// `s_I = δγ·V_I′(m)` and `s_E = δγ·|V_E′(m)| + ψ(1 − m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocReport {
    /// Interior points (policy strictly inside `(0, s_max)`) compared for each firm.
    pub compared_i: usize,
    pub compared_e: usize,
    pub max_discrepancy_i: f64,
    pub max_discrepancy_e: f64,
    /// Fraction of compared points where the FOC form lies within two action steps.
    pub agreement_fraction: f64,
    /// Shares where the FOC form misses by more than two action steps.
    pub failing_points: Vec<f64>,
    /// Interior grid points checked for `s_E ≥ ψ(1 − m) − Δs`.
    pub lower_bound_checked: usize,
    pub lower_bound_violations: Vec<f64>,
    pub action_step: f64,
}

/// Cross-checks the grid policies against the paper's first-order-condition forms.
///
/// Interior grid points are those strictly inside `(0, 1)` and more than one grid
/// step above the survival threshold, so that the central difference of `V_I`
/// does not straddle the survival cliff.
pub fn foc_crosscheck(solution: &EquilibriumSolution, params: &ModelParams, spec_e: &ComplementaritySpec) -> FocReport {
    let n = solution.grid.len();
    let h = 1.0 / (n - 1) as f64;
    let step = solution.action_step;
    let smax = params.s_max;
    let dg = params.delta * params.gamma;
    let inside = |s: f64| s > 0.0 && s < smax - 1e-12;
    let mut rep = FocReport {
        compared_i: 0,
        compared_e: 0,
        max_discrepancy_i: 0.0,
        max_discrepancy_e: 0.0,
        agreement_fraction: 1.0,
        failing_points: Vec::new(),
        lower_bound_checked: 0,
        lower_bound_violations: Vec::new(),
        action_step: step,
    };
    let mut agree = 0usize;
    for k in 1..n - 1 {
        let m = solution.grid[k];
        if m <= params.m_min + h + 1e-12 {
            continue;
        }
        let psi = crate::complementarity::psi_marginal(spec_e, 1.0 - m).map(|x| x.value).unwrap_or(0.0);
        let mut failed = false;
        if inside(solution.s_i[k]) {
            let foc = dg * grid_derivative(&solution.v_i, k).0;
            let gap = (foc - solution.s_i[k]).abs();
            rep.compared_i += 1;
            rep.max_discrepancy_i = rep.max_discrepancy_i.max(gap);
            if gap <= 2.0 * step + 1e-12 {
                agree += 1;
            } else {
                failed = true;
            }
        }
        if inside(solution.s_e[k]) {
            let foc = dg * grid_derivative(&solution.v_e, k).0.abs() + psi;
            let gap = (foc - solution.s_e[k]).abs();
            rep.compared_e += 1;
            rep.max_discrepancy_e = rep.max_discrepancy_e.max(gap);
            if gap <= 2.0 * step + 1e-12 {
                agree += 1;
            } else {
                failed = true;
            }
        }
        if failed {
            rep.failing_points.push(m);
        }
        rep.lower_bound_checked += 1;
        if solution.s_e[k] < psi - step - 1e-12 {
            rep.lower_bound_violations.push(m);
        }
    }
    let total = rep.compared_i + rep.compared_e;
    if total > 0 {
        rep.agreement_fraction = agree as f64 / total as f64;
    }
    rep
}

/// Below-cost pricing and negative primary profits at the steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsidizationReport {
    pub m_star: f64,
    pub s_i: f64,
    pub s_e: f64,
    pub effective_price_i: f64,
    pub effective_price_e: f64,
    pub primary_profit_i: f64,
    pub primary_profit_e: f64,
    /// Both firms subsidize.
    pub both_subsidize: bool,
    /// Both effective prices lie below marginal cost.
    pub below_cost: bool,
    /// Both primary-market profits are negative.
    pub profits_negative: bool,
    /// `(1 − δ)/(δγ²)`.
    pub psi_star_closed_form: f64,
    /// `1 − δγ·V̄′/s̄` with `V̄′` the mean of `V_I′(m*)` and `|V_E′(m*)|` and `s̄` the mean
    /// steady-state subsidy; absent when `s̄ = 0`.  Reported, not compared.
    pub psi_star_from_values: Option<f64>,
}

/// Evaluates the subsidization-equilibrium conditions at `m*`.
pub fn subsidization_diagnostics(solution: &EquilibriumSolution, params: &ModelParams) -> Result<SubsidizationReport> {
    let m = solution.m_star.ok_or_else(|| Error::NotApplicable("solution has no interior steady state".into()))?;
    let (s_i, s_e) = solution.policies_at(m);
    let c = params.cost;
    let n = solution.grid.len();
    let k = ((m * (n - 1) as f64).round() as usize).min(n - 1);
    let vbar = 0.5 * (grid_derivative(&solution.v_i, k).0 + grid_derivative(&solution.v_e, k).0.abs());
    let sbar = 0.5 * (s_i + s_e);
    let pi_i = -s_i * m;
    let pi_e = -s_e * (1.0 - m);
    Ok(SubsidizationReport {
        m_star: m,
        s_i,
        s_e,
        effective_price_i: c - s_i,
        effective_price_e: c - s_e,
        primary_profit_i: pi_i,
        primary_profit_e: pi_e,
        both_subsidize: s_i > 0.0 && s_e > 0.0,
        below_cost: c - s_i < c && c - s_e < c,
        profits_negative: pi_i < 0.0 && pi_e < 0.0,
        psi_star_closed_form: crate::bifurcation::critical_threshold(params),
        psi_star_from_values: (sbar > 0.0).then(|| 1.0 - params.delta * params.gamma * vbar / sbar),
    })
}
