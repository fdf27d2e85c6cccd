//! Critical complementarity threshold, parameter sweeps with branch tracking,
//! linearized stability and two-dimensional regime maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complementarity::{convexity_region, psi_marginal, ComplementaritySpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::interp_uniform;
use crate::solver::{solve_mpe_from, EquilibriumSolution, SolverConfig};

/// `ψ* = (1 − δ)/(δγ²)`: the marginal ecosystem value above which subsidizing pays.
pub fn critical_threshold(params: &ModelParams) -> f64 {
    (1.0 - params.delta) / (params.delta * params.gamma * params.gamma)
}

/// Where the marginal ecosystem value crosses [`critical_threshold`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCrossing {
    pub psi_star: f64,
    /// Smallest crossing inside the convexity region, if any.
    pub q_tilde: Option<f64>,
    /// More than one crossing was found in the convexity region.
    pub multiple: bool,
    /// No crossing because ψ exceeds ψ* on the whole of `(0, 1)`.
    pub always_above: bool,
}

/// Root of `ψ(q) = ψ*` with `ψ′ > 0`, searched inside the convexity region and refined
/// by bisection to `|Δq| < 1e−9`.
pub fn threshold_crossing(spec: &ComplementaritySpec, params: &ModelParams) -> Result<ThresholdCrossing> {
    spec.validate()?;
    params.validate()?;
    let psi_star = critical_threshold(params);
    let psi = |q: f64| psi_marginal(spec, q.clamp(0.0, 1.0)).map(|m| m.value).unwrap_or(0.0);
    let g = |q: f64| psi(q) - psi_star;
    let mut roots = Vec::new();
    for (lo, hi) in convexity_region(spec, 1001)? {
        let sub = 1000;
        let step = (hi - lo) / sub as f64;
        for i in 0..sub {
            let (mut a, mut b) = (lo + i as f64 * step, lo + (i + 1) as f64 * step);
            if !(g(a) < 0.0 && g(b) >= 0.0) {
                continue;
            }
            while b - a >= 1e-9 {
                let mid = 0.5 * (a + b);
                if g(mid) < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let root = 0.5 * (a + b);
            if roots.last().is_none_or(|r: &f64| root - r > 1e-6) {
                roots.push(root);
            }
        }
    }
    let always_above = roots.is_empty() && (1..1000).all(|i| g(i as f64 / 1000.0) > 0.0);
    Ok(ThresholdCrossing { psi_star, q_tilde: roots.first().copied(), multiple: roots.len() > 1, always_above })
}

/// A real-valued field addressed by a dotted path.
///
/// `params.<field>` addresses a [`ModelParams`] field, `spec.<field>` (or
/// `spec.inner.<field>` for a capped spec) a field of the complementarity spec,
/// and `spec.scale` multiplies the whole base spec.
pub fn apply_path(
    params: &ModelParams,
    spec: &ComplementaritySpec,
    path: &str,
    value: f64,
) -> Result<(ModelParams, ComplementaritySpec)> {
    if !value.is_finite() {
        return Err(Error::InvalidInput(format!("value for `{path}` is not finite")));
    }
    let mut parts = path.split('.');
    let root = parts.next().unwrap_or_default();
    let rest: Vec<&str> = parts.collect();
    if rest.is_empty() {
        return Err(Error::Config(format!("parameter path `{path}` has no field")));
    }
    let set = |v: serde_json::Value| -> Result<serde_json::Value> {
        let mut v = v;
        let mut cur = &mut v;
        for (i, key) in rest.iter().enumerate() {
            let obj = cur.as_object_mut().ok_or_else(|| Error::Config(format!("`{path}` does not resolve to a field")))?;
            let slot = obj.get_mut(*key).ok_or_else(|| Error::Config(format!("unknown field `{key}` in path `{path}`")))?;
            if i + 1 == rest.len() {
                if !slot.is_number() {
                    return Err(Error::Config(format!("`{path}` is not a real-valued field")));
                }
                *slot = serde_json::json!(value);
                return Ok(v);
            }
            cur = slot;
        }
        unreachable!("path has at least one field")
    };
    let to_json = |e: serde_json::Error| Error::Internal(e.to_string());
    match root {
        "params" => {
            let v = set(serde_json::to_value(params).map_err(to_json)?)?;
            let p: ModelParams = serde_json::from_value(v).map_err(to_json)?;
            Ok((p, spec.clone()))
        }
        "spec" if rest == ["scale"] => {
            if value < 0.0 {
                return Err(Error::param("spec.scale", "must be >= 0"));
            }
            Ok((*params, spec.scaled(value)))
        }
        "spec" => {
            let v = set(serde_json::to_value(spec).map_err(to_json)?)?;
            let s: ComplementaritySpec = serde_json::from_value(v).map_err(to_json)?;
            Ok((*params, s))
        }
        _ => Err(Error::Config(format!("parameter path `{path}` must start with `params.` or `spec.`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDirection {
    Up,
    Down,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub path: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    #[serde(default = "default_direction")]
    pub direction: SweepDirection,
    /// A jump is an adjacent change exceeding this multiple of the median change.
    #[serde(default = "default_jump_factor")]
    pub jump_factor: f64,
}

fn default_direction() -> SweepDirection {
    SweepDirection::Both
}

fn default_jump_factor() -> f64 {
    10.0
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::param("sweep.lo", "need finite lo < hi"));
        }
        if self.steps < 2 {
            return Err(Error::param("sweep.steps", "must be >= 2"));
        }
        if !(self.jump_factor.is_finite() && self.jump_factor > 0.0) {
            return Err(Error::param("sweep.jump_factor", "must be > 0"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| if i + 1 == self.steps { self.hi } else { self.lo + i as f64 * h }).collect()
    }
}

/// Long-run position of the deterministic share dynamics under the solved policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyKind {
    /// A crossing of the two policies (`m*`).
    Interior,
    /// No crossing; the share comes to rest (or keeps cycling) at or above the survival threshold.
    NoCrossing,
    /// No crossing and the share falls below the survival threshold.
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub m: f64,
    pub kind: SteadyKind,
    pub s_i: f64,
    pub s_e: f64,
}

/// The steady state used to summarize a solution: `m*` when present, otherwise the
/// share reached after iterating `m ← clamp(m + γ(s_I(m) − s_E(m)))` from 0.5.
pub fn steady_state(solution: &EquilibriumSolution, params: &ModelParams) -> SteadyState {
    let state = |m: f64, kind| {
        let (s_i, s_e) = solution.policies_at(m);
        SteadyState { m, kind, s_i, s_e }
    };
    if let Some(m) = solution.m_star {
        return state(m, SteadyKind::Interior);
    }
    let mut m: f64 = 0.5;
    for _ in 0..5000 {
        if !params.incumbent_alive(m) {
            return state(m, SteadyKind::Exit);
        }
        let (a, b) = solution.policies_at(m);
        let next = (m + params.gamma * (a - b)).clamp(0.0, 1.0);
        if (next - m).abs() < 1e-14 {
            break;
        }
        m = next;
    }
    state(m, SteadyKind::NoCrossing)
}

/// Linearized share dynamics at `m*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCoefficient {
    /// `ρ = ∂m′/∂m = 1 + γ(s_I′(m*) − s_E′(m*))`.
    pub rho: f64,
    pub ds_i: f64,
    pub ds_e: f64,
    /// Derivatives were one-sided because `m*` sits within one grid step of a boundary.
    pub one_sided: bool,
}

/// Slope of the deterministic share map at `m*`, with policy derivatives by central
/// differences of width one share-grid step on each side.
pub fn stability_coefficient(solution: &EquilibriumSolution, params: &ModelParams) -> Result<StabilityCoefficient> {
    let m = solution.m_star.ok_or_else(|| Error::NotApplicable("solution has no interior steady state".into()))?;
    let h = 1.0 / (solution.grid.len() - 1) as f64;
    let (lo, hi, one_sided) = if m - h < 0.0 {
        (m, m + h, true)
    } else if m + h > 1.0 {
        (m - h, m, true)
    } else {
        (m - h, m + h, false)
    };
    let d = |v: &[f64]| (interp_uniform(v, hi) - interp_uniform(v, lo)) / (hi - lo);
    let ds_i = d(&solution.s_i);
    let ds_e = d(&solution.s_e);
    Ok(StabilityCoefficient { rho: 1.0 + params.gamma * (ds_i - ds_e), ds_i, ds_e, one_sided })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub parameter: f64,
    pub steady: SteadyState,
    pub m_star: Option<f64>,
    pub rho_lin: Option<f64>,
    pub branch: Branch,
    pub converged: bool,
    /// `ψ(1 − m) − ψ*` at the steady-state share `m`.
    pub psi_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Midpoint of the two adjacent parameter values.
    pub location: f64,
    pub from: f64,
    pub to: f64,
    pub delta_s_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub direction: SweepDirection,
    /// Points in ascending parameter order regardless of the solve order.
    pub points: Vec<DiagramPoint>,
    pub jumps: Vec<Jump>,
    pub jump_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub path: String,
    pub runs: Vec<SweepRun>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Adjacent changes of `s_E` at the steady state exceeding `factor ×` their median.
///
/// Policies live on a subsidy grid, so changes of up to one and a half grid steps
/// are never reported as jumps even when the median change is zero.
pub fn detect_jumps(points: &[DiagramPoint], factor: f64, action_step: f64) -> (Vec<Jump>, f64) {
    let deltas: Vec<f64> = points.windows(2).map(|w| (w[1].steady.s_e - w[0].steady.s_e).abs()).collect();
    let tol = (factor * median(deltas.clone())).max(1.5 * action_step);
    let jumps = points
        .windows(2)
        .zip(&deltas)
        .filter(|(_, d)| **d > tol)
        .map(|(w, d)| Jump {
            location: 0.5 * (w[0].parameter + w[1].parameter),
            from: w[0].parameter,
            to: w[1].parameter,
            delta_s_e: *d,
        })
        .collect();
    (jumps, tol)
}

fn diagram_point(
    value: f64,
    sol: &EquilibriumSolution,
    params: &ModelParams,
    spec: &ComplementaritySpec,
) -> DiagramPoint {
    let steady = steady_state(sol, params);
    let psi = psi_marginal(spec, (1.0 - steady.m).clamp(0.0, 1.0)).map(|m| m.value).unwrap_or(0.0);
    DiagramPoint {
        parameter: value,
        steady,
        m_star: sol.m_star,
        rho_lin: stability_coefficient(sol, params).ok().map(|s| s.rho),
        branch: Branch::Low,
        converged: sol.converged,
        psi_gap: psi - critical_threshold(params),
    }
}

/// Labels points above the largest jump in `s_E` as the high branch.
fn label_branches(points: &mut [DiagramPoint], jumps: &[Jump]) {
    if jumps.is_empty() {
        return;
    }
    let levels: Vec<f64> = points.iter().map(|p| p.steady.s_e).collect();
    let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cut = 0.5 * (lo + hi);
    for p in points.iter_mut() {
        p.branch = if p.steady.s_e > cut { Branch::High } else { Branch::Low };
    }
}

fn run_chain(
    params: &ModelParams,
    spec: &ComplementaritySpec,
    sweep: &SweepSpec,
    cfg: &SolverConfig,
    direction: SweepDirection,
) -> Result<SweepRun> {
    let mut values = sweep.values();
    if direction == SweepDirection::Down {
        values.reverse();
    }
    let mut warm: Option<EquilibriumSolution> = None;
    let mut points = Vec::with_capacity(values.len());
    let mut step = 0.0;
    for v in values {
        let (p, s) = apply_path(params, spec, &sweep.path, v)?;
        let sol = solve_mpe_from(&p, &s, cfg, warm.as_ref())?;
        step = sol.action_step;
        points.push(diagram_point(v, &sol, &p, &s));
        warm = Some(sol);
    }
    if direction == SweepDirection::Down {
        points.reverse();
    }
    let (jumps, jump_tol) = detect_jumps(&points, sweep.jump_factor, step);
    label_branches(&mut points, &jumps);
    Ok(SweepRun { direction, points, jumps, jump_tol })
}

/// Solves the equilibrium along a parameter path, warm-starting each solve from its
/// predecessor; `Both` runs an ascending and a descending chain to expose hysteresis.
pub fn sweep_bifurcation(
    base_params: &ModelParams,
    base_spec: &ComplementaritySpec,
    sweep: &SweepSpec,
    config: &SolverConfig,
) -> Result<BifurcationDiagram> {
    sweep.validate()?;
    let dirs = match sweep.direction {
        SweepDirection::Both => vec![SweepDirection::Up, SweepDirection::Down],
        d => vec![d],
    };
    let runs = dirs
        .par_iter()
        .map(|&d| run_chain(base_params, base_spec, sweep, config, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(BifurcationDiagram { path: sweep.path.clone(), runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Axis {
    fn values(&self) -> Result<Vec<f64>> {
        SweepSpec { path: self.path.clone(), lo: self.lo, hi: self.hi, steps: self.steps, direction: SweepDirection::Up, jump_factor: 10.0 }
            .validate()
            .map_err(|e| Error::Config(format!("axis `{}`: {e}", self.path)))?;
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        Ok((0..self.steps).map(|i| if i + 1 == self.steps { self.hi } else { self.lo + i as f64 * h }).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    /// Synergy axis (typically `spec.scale`).
    pub axis1: Axis,
    /// Second parameter θ.
    pub axis2: Axis,
    #[serde(default = "default_jump_factor")]
    pub jump_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionClass {
    LowSubsidy,
    HighSubsidy,
    IncumbentExit,
    NonConverged,
}

impl RegionClass {
    pub fn label(self) -> &'static str {
        match self {
            RegionClass::LowSubsidy => "low-subsidy",
            RegionClass::HighSubsidy => "high-subsidy",
            RegionClass::IncumbentExit => "incumbent-exit",
            RegionClass::NonConverged => "non-converged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub axis1: f64,
    pub axis2: f64,
    pub class: RegionClass,
    pub steady: SteadyState,
    pub psi_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub axis1: String,
    pub axis2: String,
    /// Row-major: axis1 varies slowest.
    pub cells: Vec<RegionCell>,
    /// Entrant steady-state subsidy separating the two subsidy regimes, if two regimes exist.
    pub split: Option<f64>,
}

/// Classifies each cell of a 2-D parameter grid.
///
/// Cells whose incumbent ends below the survival threshold are `incumbent-exit`;
/// unconverged cells are `non-converged`.  The remaining cells are split into two
/// subsidy regimes at the largest gap in their sorted steady-state entrant subsidies,
/// provided that gap is a jump by the same rule as [`detect_jumps`]; otherwise all
/// are `low-subsidy`.
pub fn stability_region(
    base_params: &ModelParams,
    base_spec: &ComplementaritySpec,
    region: &RegionSpec,
    config: &SolverConfig,
) -> Result<RegionMap> {
    let a1 = region.axis1.values()?;
    let a2 = region.axis2.values()?;
    let jobs: Vec<(f64, f64)> = a1.iter().flat_map(|&x| a2.iter().map(move |&y| (x, y))).collect();
    let solved = jobs
        .par_iter()
        .map(|&(x, y)| -> Result<(RegionCell, f64)> {
            let (p, s) = apply_path(base_params, base_spec, &region.axis1.path, x)?;
            let (p, s) = apply_path(&p, &s, &region.axis2.path, y)?;
            let sol = solve_mpe_from(&p, &s, config, None)?;
            let pt = diagram_point(x, &sol, &p, &s);
            let class = if pt.steady.kind == SteadyKind::Exit {
                RegionClass::IncumbentExit
            } else if !sol.converged {
                RegionClass::NonConverged
            } else {
                RegionClass::LowSubsidy
            };
            Ok((RegionCell { axis1: x, axis2: y, class, steady: pt.steady, psi_gap: pt.psi_gap }, sol.action_step))
        })
        .collect::<Result<Vec<_>>>()?;
    let step = solved.first().map(|c| c.1).unwrap_or(0.0);
    let mut cells: Vec<RegionCell> = solved.into_iter().map(|c| c.0).collect();
    let mut levels: Vec<f64> = cells.iter().filter(|c| c.class == RegionClass::LowSubsidy).map(|c| c.steady.s_e).collect();
    levels.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let tol = (region.jump_factor * median(gaps.clone())).max(1.5 * step);
    let split = gaps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .filter(|(_, g)| **g > tol)
        .map(|(i, _)| 0.5 * (levels[i] + levels[i + 1]));
    if let Some(cut) = split {
        for c in cells.iter_mut().filter(|c| c.class == RegionClass::LowSubsidy && c.steady.s_e > cut) {
            c.class = RegionClass::HighSubsidy;
        }
    }
    Ok(RegionMap { axis1: region.axis1.path.clone(), axis2: region.axis2.path.clone(), cells, split })
}
