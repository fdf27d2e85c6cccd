//! Built-in invariant suites run against the shipped presets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{critical_threshold, steady_state};
use crate::complementarity::ComplementaritySpec;
use crate::config::{parse_config, preset_text, JobConfig};
use crate::error::Result;
use crate::model::ModelParams;
use crate::solver::{bellman_entrant, bellman_incumbent, foc_crosscheck, solve_mpe, SolverConfig};
use crate::welfare::{cournot_outcome, involution_outcome, social_optimum, LinearMarket};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

impl SelfCheckReport {
    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Loads a shipped preset as a complete job configuration.
pub fn preset_config(name: &str) -> Result<JobConfig> {
    parse_config(preset_text(name)?)
}

fn random_array(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_policy(rng: &mut ChaCha20Rng, n: usize, s_max: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..=s_max)).collect()
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    crate::numerics::sup_dist(a, b)
}

/// Largest ratio `‖T(V) − T(W)‖∞ / ‖V − W‖∞` over `pairs` random bounded value pairs,
/// for both firms' operators with random opponent policies.
pub fn contraction_modulus(
    params: &ModelParams,
    spec: &ComplementaritySpec,
    config: &SolverConfig,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = config.grid_n;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let v = random_array(&mut rng, n, -10.0, 10.0);
        let w = random_array(&mut rng, n, -10.0, 10.0);
        let pol = random_policy(&mut rng, n, params.s_max);
        let d = sup(&v, &w);
        let (ti_v, _) = bellman_incumbent(params, spec, &v, &pol, config)?;
        let (ti_w, _) = bellman_incumbent(params, spec, &w, &pol, config)?;
        let (te_v, _) = bellman_entrant(params, spec, &v, &pol, config)?;
        let (te_w, _) = bellman_entrant(params, spec, &w, &pol, config)?;
        worst = worst.max(sup(&ti_v, &ti_w) / d).max(sup(&te_v, &te_w) / d);
    }
    Ok(worst)
}

pub fn contraction_check(params: &ModelParams, spec: &ComplementaritySpec, config: &SolverConfig) -> Result<CheckResult> {
    let modulus = contraction_modulus(params, spec, config, 100, 11)?;
    Ok(CheckResult::new(
        "contraction",
        modulus <= params.delta + 1e-9,
        format!("max measured modulus {modulus:.12} over 100 pairs (bound {})", params.delta),
    ))
}

/// Monotonicity (`V ≤ W ⇒ T V ≤ T W`) and discounting (`T(V + c) = T V + δc`) of both
/// operators on `instances` random instances.
///
/// The incumbent's value is zero below the survival threshold, so there the shift
/// identity is replaced by `T(V + c) = T V = 0`; values are drawn positive so the
/// non-negativity floor never binds.
pub fn monotonicity_shift_check(
    params: &ModelParams,
    spec: &ComplementaritySpec,
    config: &SolverConfig,
    instances: usize,
) -> Result<CheckResult> {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let n = config.grid_n;
    let grid = crate::numerics::uniform_grid(n);
    let mut mono_violation: f64 = 0.0;
    let mut shift_error: f64 = 0.0;
    for _ in 0..instances {
        let v = random_array(&mut rng, n, 1.0, 11.0);
        let bump = random_array(&mut rng, n, 0.0, 3.0);
        let w: Vec<f64> = v.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let c = rng.random_range(0.5..5.0);
        let vc: Vec<f64> = v.iter().map(|x| x + c).collect();
        let pol = random_policy(&mut rng, n, params.s_max);
        let (ti_v, _) = bellman_incumbent(params, spec, &v, &pol, config)?;
        let (ti_w, _) = bellman_incumbent(params, spec, &w, &pol, config)?;
        let (ti_c, _) = bellman_incumbent(params, spec, &vc, &pol, config)?;
        let (te_v, _) = bellman_entrant(params, spec, &v, &pol, config)?;
        let (te_w, _) = bellman_entrant(params, spec, &w, &pol, config)?;
        let (te_c, _) = bellman_entrant(params, spec, &vc, &pol, config)?;
        for k in 0..n {
            mono_violation = mono_violation.max(ti_v[k] - ti_w[k]).max(te_v[k] - te_w[k]);
            let expected_i = if params.incumbent_alive(grid[k]) { ti_v[k] + params.delta * c } else { 0.0 };
            let scale = 1.0 + ti_c[k].abs().max(te_c[k].abs());
            shift_error = shift_error
                .max((ti_c[k] - expected_i).abs() / scale)
                .max((te_c[k] - te_v[k] - params.delta * c).abs() / scale);
        }
    }
    let passed = mono_violation <= 0.0 && shift_error <= 8.0 * f64::EPSILON;
    Ok(CheckResult::new(
        "monotonicity_and_discounting",
        passed,
        format!("{instances} instances: max monotonicity violation {mono_violation:e}, max relative shift error {shift_error:e}"),
    ))
}

/// With no ecosystem value the game is trivial: zero values and zero subsidies.
pub fn degenerate_check(params: &ModelParams, config: &SolverConfig) -> Result<CheckResult> {
    let base = ModelParams { incumbent_synergy: 0.0, ..*params };
    let sol = solve_mpe(&base, &ComplementaritySpec::Zero, config)?;
    let worst = sol
        .v_i
        .iter()
        .chain(&sol.v_e)
        .chain(&sol.s_i)
        .chain(&sol.s_e)
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok(CheckResult::new(
        "degenerate_game",
        sol.converged && worst <= config.tol,
        format!("max |value or policy| {worst:e}, converged {} in {} iterations", sol.converged, sol.iterations),
    ))
}

pub fn threshold_check() -> CheckResult {
    let p = |delta: f64, gamma: f64| ModelParams { delta, gamma, ..ModelParams::default() };
    let v = critical_threshold(&p(0.95, 0.6));
    let exact = 0.05 / (0.95 * 0.6 * 0.6);
    let decreasing_delta = [0.8, 0.9, 0.95, 0.99].windows(2).all(|w| critical_threshold(&p(w[1], 0.6)) < critical_threshold(&p(w[0], 0.6)));
    let decreasing_gamma = [0.2, 0.4, 0.6, 1.0].windows(2).all(|w| critical_threshold(&p(0.95, w[1])) < critical_threshold(&p(0.95, w[0])));
    CheckResult::new(
        "critical_threshold",
        (v - exact).abs() <= 1e-12 && decreasing_delta && decreasing_gamma,
        format!("psi* = {v:.9} at (0.95, 0.6); decreasing in delta {decreasing_delta}, in gamma {decreasing_gamma}"),
    )
}

pub fn foc_check(params: &ModelParams, spec: &ComplementaritySpec, config: &SolverConfig) -> Result<CheckResult> {
    let sol = solve_mpe(params, spec, config)?;
    let r = foc_crosscheck(&sol, params, spec);
    Ok(CheckResult::new(
        "foc_crosscheck",
        r.agreement_fraction >= 0.95 && r.lower_bound_violations.is_empty(),
        format!(
            "agreement {:.3} over {} comparisons; lower-bound violations {}/{}",
            r.agreement_fraction,
            r.compared_i + r.compared_e,
            r.lower_bound_violations.len(),
            r.lower_bound_checked
        ),
    ))
}

/// Scaling the ecosystem value by `factors` must raise the entrant's policy pointwise
/// on the interior grid, strictly at the base steady state.
pub fn comparative_statics_check(
    params: &ModelParams,
    spec: &ComplementaritySpec,
    config: &SolverConfig,
    factors: &[f64],
) -> Result<CheckResult> {
    let sols = factors.iter().map(|&k| solve_mpe(params, &spec.scaled(k), config)).collect::<Result<Vec<_>>>()?;
    let grid = &sols[0].grid;
    let interior: Vec<usize> = (0..grid.len()).filter(|&k| grid[k] > params.m_min && grid[k] < 1.0).collect();
    let mut violations = 0;
    for pair in sols.windows(2) {
        violations += interior.iter().filter(|&&k| pair[1].s_e[k] < pair[0].s_e[k]).count();
    }
    let m = steady_state(&sols[0], params).m;
    let at_m: Vec<f64> = sols.iter().map(|s| s.policies_at(m).1).collect();
    let strict = at_m.windows(2).all(|w| w[1] > w[0]);
    Ok(CheckResult::new(
        "comparative_statics",
        violations == 0 && strict,
        format!("factors {factors:?}: {violations} pointwise decreases on {} interior points; s_E at m = {m:.4}: {at_m:?}", interior.len()),
    ))
}

pub fn welfare_identity_check(market: &LinearMarket) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for n in [1, 2, 3, 10] {
        worst = worst.max(cournot_outcome(market, n)?.identity_gap(market).abs());
    }
    worst = worst.max(social_optimum(market)?.identity_gap(market).abs());
    for frac in [0.0, 0.25, 0.5, 0.99] {
        let p = market.mc * frac;
        worst = worst.max(involution_outcome(market, p)?.outcome.identity_gap(market).abs());
    }
    Ok(CheckResult::new(
        "welfare_identities",
        worst <= 1e-9 * (1.0 + market.max_surplus()),
        format!("max surplus identity gap {worst:e}"),
    ))
}

/// Runs every suite on the shipped presets.
pub fn self_check() -> Result<SelfCheckReport> {
    let cal = preset_config("calibration")?;
    let fig4 = preset_config("figure4")?;
    let checks = vec![
        contraction_check(&cal.params, &cal.spec, &cal.solver)?,
        monotonicity_shift_check(&cal.params, &cal.spec, &cal.solver, 20)?,
        degenerate_check(&cal.params, &cal.solver)?,
        threshold_check(),
        foc_check(&cal.params, &cal.spec, &cal.solver)?,
        comparative_statics_check(&cal.params, &cal.spec, &cal.solver, &[1.0, 1.2, 1.5])?,
        welfare_identity_check(&fig4.welfare.market)?,
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(SelfCheckReport { checks, all_passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SolverConfig {
        SolverConfig { grid_n: 65, action_n: 33, ..SolverConfig::default() }
    }

    #[test]
    fn operator_suites_pass_on_a_small_grid() {
        let p = ModelParams { incumbent_synergy: 0.3, adjustment_cost: 2.0, ..ModelParams::default() };
        let spec = ComplementaritySpec::PowerAffine { lin: 0.3, coef: 0.2, exp: 2.0 };
        let c = contraction_check(&p, &spec, &small()).unwrap();
        assert!(c.passed, "{}", c.detail);
        let m = monotonicity_shift_check(&p, &spec, &small(), 5).unwrap();
        assert!(m.passed, "{}", m.detail);
    }

    #[test]
    fn closed_form_suites_pass() {
        assert!(threshold_check().passed);
        assert!(welfare_identity_check(&LinearMarket::default()).unwrap().passed);
        assert!(degenerate_check(&ModelParams::default(), &small()).unwrap().passed);
    }
}
