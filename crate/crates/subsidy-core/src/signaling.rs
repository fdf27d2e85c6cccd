//! Two-type incomplete-information extension: a one-shot separating construction on
//! top of the two complete-information benchmark equilibria.
//!
//! The entrant's subsidy at the evaluation state is a signal.  The incumbent responds
//! with the benchmark policy of the type it believes it faces (`μ(s) = 1{s ≥ s̲}`),
//! and each entrant type values the resulting one-period transition with its own
//! benchmark value function.  This is a single-period deviation analysis, not a
//! dynamic belief-updating solve.

use serde::{Deserialize, Serialize};

use crate::bifurcation::steady_state;
use crate::complementarity::ComplementaritySpec;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::uniform_grid;
use crate::solver::{solve_mpe, EquilibriumSolution, Game, SolverConfig};

/// Bisection tolerance on the threshold.
pub const THRESHOLD_TOL: f64 = 1e-9;

const SCAN_POINTS: usize = 2001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpace {
    pub spec_low: ComplementaritySpec,
    pub spec_high: ComplementaritySpec,
    /// Prior probability of the high type.  Stored and reported; the separating
    /// construction does not use it.
    #[serde(default = "half")]
    pub mu0: f64,
}

fn half() -> f64 {
    0.5
}

/// Result of the type-ordering check on a 1001-point grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeOrdering {
    /// `Ψ^H(q) − Ψ^L(q)` minimised over interior grid points.
    pub min_interior_gap: f64,
    /// `Ψ^H > Ψ^L` at every interior grid point.
    pub strict: bool,
}

impl TypeSpace {
    /// Rejects invalid specs, a prior outside `[0, 1]`, and any grid point where the
    /// high type's ecosystem value falls below the low type's.
    pub fn validate(&self) -> Result<TypeOrdering> {
        self.spec_low.validate()?;
        self.spec_high.validate()?;
        if !(0.0..=1.0).contains(&self.mu0) {
            return Err(Error::param("mu0", "must lie in [0, 1]"));
        }
        let grid = uniform_grid(1001);
        let mut min_gap = f64::INFINITY;
        for (k, &q) in grid.iter().enumerate() {
            let gap = self.spec_high.value_unchecked(q) - self.spec_low.value_unchecked(q);
            if gap < -1e-12 {
                return Err(Error::param("spec_high", format!("ecosystem value below the low type's at q = {q}")));
            }
            if k > 0 && k + 1 < grid.len() {
                min_gap = min_gap.min(gap);
            }
        }
        Ok(TypeOrdering { min_interior_gap: min_gap, strict: min_gap > 0.0 })
    }
}

/// Complete-information benchmark equilibria, solved concurrently.
pub fn type_benchmarks(
    types: &TypeSpace,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<(EquilibriumSolution, EquilibriumSolution)> {
    types.validate()?;
    let (low, high) = rayon::join(
        || solve_mpe(params, &types.spec_low, config),
        || solve_mpe(params, &types.spec_high, config),
    );
    Ok((low?, high?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalingOutcome {
    /// Evaluation state (incumbent share).
    pub m: f64,
    pub mu0: f64,
    /// Low type's subsidy at `m` (its complete-information policy).
    pub s_low: f64,
    /// High type's subsidy `max{s̲, s_E*(θ_H)}` when separating, else its benchmark policy.
    pub s_high: f64,
    pub threshold: f64,
    pub separating: bool,
    /// Low type: payoff of its own action minus the best payoff from mimicking (`s ≥ s̲`).
    pub ic_slack_low: f64,
    /// High type: payoff of `s_high` minus the best payoff from pooling below `s̲`.
    pub ic_slack_high: f64,
    /// Whether the low type's incentive constraint binds (an interior indifference point).
    pub ic_binding: bool,
    /// Incumbent responses at `m` under the two beliefs.
    pub incumbent_response_low: f64,
    pub incumbent_response_high: f64,
    /// High type's complete-information subsidy at `m`.
    pub s_high_benchmark: f64,
    /// Description of the belief rule.
    pub belief_rule: String,
    pub benchmarks_converged: bool,
    pub diagnostic: Option<String>,
}

/// One type's one-period payoff from subsidy `s` when the incumbent plays `s_i`.
struct TypePayoff<'a> {
    game: &'a Game,
    spec: &'a ComplementaritySpec,
    v_e: &'a [f64],
    m: f64,
}

impl TypePayoff<'_> {
    fn eval(&self, s: f64, s_i: f64) -> f64 {
        let p = &self.game.params;
        let flow = self.spec.value_unchecked(1.0 - self.m) - p.subsidy_outlay(s, 1.0 - self.m);
        flow + p.delta * self.game.expect(self.v_e, self.m + p.gamma * (s_i - s))
    }
}

/// Solves the low type's indifference threshold at state `m` (default: the low
/// benchmark's steady state) and checks both incentive constraints.
pub fn separating_threshold(
    types: &TypeSpace,
    params: &ModelParams,
    m: Option<f64>,
    config: &SolverConfig,
) -> Result<(SignalingOutcome, EquilibriumSolution, EquilibriumSolution)> {
    let ordering = types.validate()?;
    let (low, high) = type_benchmarks(types, params, config)?;
    let outcome = threshold_from_benchmarks(types, params, m, config, &low, &high, ordering)?;
    Ok((outcome, low, high))
}

fn threshold_from_benchmarks(
    types: &TypeSpace,
    params: &ModelParams,
    m: Option<f64>,
    config: &SolverConfig,
    low: &EquilibriumSolution,
    high: &EquilibriumSolution,
    ordering: TypeOrdering,
) -> Result<SignalingOutcome> {
    let m = m.unwrap_or_else(|| steady_state(low, params).m);
    if !(m > params.m_min && m < 1.0 - params.m_min) {
        return Err(Error::InvalidInput(format!(
            "evaluation share {m} is not interior to ({}, {})",
            params.m_min,
            1.0 - params.m_min
        )));
    }
    let game_low = Game::new(params, &types.spec_low, config)?;
    let game_high = Game::new(params, &types.spec_high, config)?;
    let low_pay = TypePayoff { game: &game_low, spec: &types.spec_low, v_e: &low.v_e, m };
    let high_pay = TypePayoff { game: &game_high, spec: &types.spec_high, v_e: &high.v_e, m };

    let (resp_low, s_low) = low.policies_at(m);
    let (resp_high, s_high_bench) = high.policies_at(m);
    let s_max = params.s_max;
    let belief_rule = "mu(s) = 1 if s >= threshold, 0 otherwise".to_string();
    let converged = low.converged && high.converged;

    let base = SignalingOutcome {
        m,
        mu0: types.mu0,
        s_low,
        s_high: s_high_bench,
        threshold: f64::NAN,
        separating: false,
        ic_slack_low: f64::NAN,
        ic_slack_high: f64::NAN,
        ic_binding: false,
        incumbent_response_low: resp_low,
        incumbent_response_high: resp_high,
        s_high_benchmark: s_high_bench,
        belief_rule,
        benchmarks_converged: converged,
        diagnostic: None,
    };

    if !ordering.strict {
        return Ok(SignalingOutcome {
            diagnostic: Some("types are not strictly ordered: no complementarity gap, no separation".into()),
            ..base
        });
    }

    // Low type: own optimum (believed low) versus mimicking with s (believed high).
    let own_low = low_pay.eval(s_low, resp_low);
    let advantage = |s: f64| low_pay.eval(s, resp_high) - own_low;

    let scan: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| s_low + (s_max - s_low) * k as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let last_positive = scan.iter().rposition(|&s| advantage(s) > 0.0);
    let (threshold, binding) = match last_positive {
        Some(k) if k + 1 == scan.len() => {
            return Ok(SignalingOutcome {
                diagnostic: Some(format!(
                    "mimicking stays profitable for the low type up to s_max = {s_max}: complementarity gap too small"
                )),
                ..base
            });
        }
        Some(k) => {
            let (mut lo, mut hi) = (scan[k], scan[k + 1]);
            while hi - lo > THRESHOLD_TOL {
                let mid = 0.5 * (lo + hi);
                if advantage(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (hi, true)
        }
        None => (s_low + THRESHOLD_TOL, false),
    };
    if threshold > s_max {
        return Ok(SignalingOutcome {
            diagnostic: Some("threshold exceeds the subsidy bound".into()),
            ..base
        });
    }

    let s_high = threshold.max(s_high_bench);
    let above: Vec<f64> = std::iter::once(threshold).chain(scan.iter().copied().filter(|&s| s > threshold)).collect();
    let below: Vec<f64> = scan
        .iter()
        .copied()
        .chain((0..SCAN_POINTS).map(|k| s_max * k as f64 / (SCAN_POINTS - 1) as f64))
        .filter(|&s| s < threshold)
        .chain(std::iter::once(threshold))
        .collect();
    let best_mimic = above.iter().map(|&s| low_pay.eval(s, resp_high)).fold(f64::NEG_INFINITY, f64::max);
    let ic_slack_low = own_low - best_mimic;
    let high_sep = high_pay.eval(s_high, resp_high);
    let best_pool = below.iter().map(|&s| high_pay.eval(s, resp_low)).fold(f64::NEG_INFINITY, f64::max);
    let ic_slack_high = high_sep - best_pool;

    let ordered = s_low < threshold && threshold <= s_high;
    let separating = ordered && ic_slack_low >= -1e-8 && ic_slack_high >= -1e-8;
    let diagnostic = if separating {
        (!binding).then(|| "low type never gains from mimicking: incentive constraint slack above its own action".into())
    } else if ic_slack_high < -1e-8 {
        Some("high type prefers to be perceived as the low type".into())
    } else {
        Some("threshold ordering violated".into())
    };
    Ok(SignalingOutcome {
        threshold,
        s_high,
        separating,
        ic_slack_low,
        ic_slack_high,
        ic_binding: binding,
        diagnostic,
        ..base
    })
}

/// `s_high − s_E*(θ_H)` at the evaluation state.
pub fn signaling_premium(outcome: &SignalingOutcome) -> Result<f64> {
    if !outcome.separating {
        return Err(Error::NotApplicable("signaling premium requires a separating outcome".into()));
    }
    Ok(outcome.s_high - outcome.s_high_benchmark)
}
