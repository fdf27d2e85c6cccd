//! Static linear-market welfare geometry and dynamic efficiency accounting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bifurcation::steady_state;
use crate::complementarity::ComplementaritySpec;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::solver::{solve_mpe, EquilibriumSolution, SolverConfig};

/// Inverse demand `P = a − bQ` with constant marginal cost `mc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearMarket {
    pub a: f64,
    pub b: f64,
    pub mc: f64,
}

impl Default for LinearMarket {
    fn default() -> Self {
        LinearMarket { a: 100.0, b: 1.0, mc: 20.0 }
    }
}

impl LinearMarket {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("a", self.a), ("b", self.b), ("mc", self.mc)] {
            if !v.is_finite() {
                return Err(Error::param(n, "must be finite"));
            }
        }
        if self.b <= 0.0 {
            return Err(Error::param("b", "must be > 0"));
        }
        if self.mc < 0.0 {
            return Err(Error::param("mc", "must be >= 0"));
        }
        if self.a <= self.mc {
            return Err(Error::param("a", "must exceed mc"));
        }
        Ok(())
    }

    /// Efficient quantity `(a − mc)/b`.
    pub fn q_star(&self) -> f64 {
        (self.a - self.mc) / self.b
    }

    pub fn price(&self, q: f64) -> f64 {
        self.a - self.b * q
    }

    pub fn consumer_surplus(&self, q: f64) -> f64 {
        0.5 * self.b * q * q
    }

    /// Total surplus at the social optimum.
    pub fn max_surplus(&self) -> f64 {
        self.consumer_surplus(self.q_star())
    }
}

/// One row of the regime table.
///
/// `ps` is operating surplus at the posted price; `transfer` is the net subsidy
/// transfer from firms (negative when firms pay consumers); `loss` is the deadweight
/// (under-provision) or over-consumption loss.  For every regime
/// `cs + ps + transfer + loss` equals [`LinearMarket::max_surplus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeOutcome {
    pub regime: String,
    pub q: f64,
    pub p: f64,
    pub cs: f64,
    pub ps: f64,
    pub transfer: f64,
    pub loss: f64,
}

impl RegimeOutcome {
    /// `cs + ps + transfer + loss − max_surplus`.
    pub fn identity_gap(&self, market: &LinearMarket) -> f64 {
        self.cs + self.ps + self.transfer + self.loss - market.max_surplus()
    }
}

/// Symmetric `n`-firm Cournot equilibrium.
pub fn cournot_outcome(market: &LinearMarket, n: u32) -> Result<RegimeOutcome> {
    market.validate()?;
    if n == 0 {
        return Err(Error::param("n_firms", "must be >= 1"));
    }
    let nf = n as f64;
    let q = nf * (market.a - market.mc) / ((nf + 1.0) * market.b);
    let p = market.price(q);
    let gap = market.q_star() - q;
    Ok(RegimeOutcome {
        regime: "cournot".into(),
        q,
        p,
        cs: market.consumer_surplus(q),
        ps: (p - market.mc) * q,
        transfer: 0.0,
        loss: 0.5 * market.b * gap * gap,
    })
}

/// Price equal to marginal cost.
pub fn social_optimum(market: &LinearMarket) -> Result<RegimeOutcome> {
    market.validate()?;
    let q = market.q_star();
    Ok(RegimeOutcome {
        regime: "social_optimum".into(),
        q,
        p: market.mc,
        cs: market.consumer_surplus(q),
        ps: 0.0,
        transfer: 0.0,
        loss: 0.0,
    })
}

/// Below-cost effective price: posted price at cost, the gap covered by subsidies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvolutionOutcome {
    pub outcome: RegimeOutcome,
    /// `(mc − p)·Q`.
    pub subsidy_outlay: f64,
}

pub fn involution_outcome(market: &LinearMarket, effective_price: f64) -> Result<InvolutionOutcome> {
    market.validate()?;
    if !effective_price.is_finite() || effective_price >= market.mc {
        return Err(Error::Domain(format!(
            "effective price {effective_price} is not below marginal cost {}",
            market.mc
        )));
    }
    let q = (market.a - effective_price) / market.b;
    let over = q - market.q_star();
    let outlay = (market.mc - effective_price) * q;
    Ok(InvolutionOutcome {
        outcome: RegimeOutcome {
            regime: "involution".into(),
            q,
            p: effective_price,
            cs: market.consumer_surplus(q),
            ps: 0.0,
            transfer: -outlay,
            loss: 0.5 * market.b * over * over,
        },
        subsidy_outlay: outlay,
    })
}

/// Which per-unit subsidy enters the consumer-gain integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    /// `s_I* + s_E*`.
    Literal,
    /// `s_I*·m + s_E*·(1 − m)`.
    ShareWeighted,
}

/// How game subsidies (per unit of share) map into the linear market (per unit of quantity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareBridge {
    #[serde(default = "one")]
    pub mapping_factor: f64,
    #[serde(default = "literal")]
    pub integrand: Integrand,
}

fn one() -> f64 {
    1.0
}

fn literal() -> Integrand {
    Integrand::Literal
}

impl Default for WelfareBridge {
    fn default() -> Self {
        WelfareBridge { mapping_factor: 1.0, integrand: Integrand::Literal }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsGain {
    /// Share at which the equilibrium subsidies were read.
    pub m: f64,
    /// Per-unit subsidy in market units (constant over quantity).
    pub per_unit_subsidy: f64,
    /// Competitive quantity (price at cost).
    pub q_comp: f64,
    /// Quantity at the subsidized effective price.
    pub q_sub: f64,
    /// `∫₀^{Q_sub} subsidy dq`.
    pub gain: f64,
    pub integrand: Integrand,
}

/// Consumer gain from subsidization: the constant equilibrium subsidy integrated over
/// the quantity range up to the subsidized quantity `(a − (mc − S))/b`.
///
/// Subsidies are read at `m*`; a solution without a steady state is accepted only if
/// it never subsidizes, in which case the gain is zero.
pub fn cs_gain_from_subsidies(
    solution: &EquilibriumSolution,
    params: &ModelParams,
    market: &LinearMarket,
    bridge: &WelfareBridge,
) -> Result<CsGain> {
    market.validate()?;
    if !(bridge.mapping_factor.is_finite() && bridge.mapping_factor >= 0.0) {
        return Err(Error::param("mapping_factor", "must be finite and >= 0"));
    }
    let m = match solution.m_star {
        Some(m) => m,
        None if solution.s_i.iter().chain(&solution.s_e).all(|&s| s == 0.0) => steady_state(solution, params).m,
        None => return Err(Error::NotApplicable("solution has no interior steady state".into())),
    };
    let (s_i, s_e) = solution.policies_at(m);
    let raw = match bridge.integrand {
        Integrand::Literal => s_i + s_e,
        Integrand::ShareWeighted => s_i * m + s_e * (1.0 - m),
    };
    let per_unit = bridge.mapping_factor * raw;
    let q_sub = (market.a - (market.mc - per_unit)) / market.b;
    Ok(CsGain {
        m,
        per_unit_subsidy: per_unit,
        q_comp: market.q_star(),
        q_sub,
        gain: per_unit * q_sub,
        integrand: bridge.integrand,
    })
}

/// `DE(T) = −ρ·S·T`.
pub fn dynamic_efficiency(params: &ModelParams, s: f64, t: u64) -> Result<f64> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::InvalidInput(format!("aggregate subsidy {s} must be finite and >= 0")));
    }
    Ok(-params.rho * s * t as f64)
}

/// How the consumer side of the crossover comparison is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverRule {
    /// Total discounted gain over the infinite horizon, `gain/(1 − δ)`.
    Bounded,
    /// Discounted partial sum `Σ_{t=0}^{T} δᵗ·gain`.
    PartialSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossoverOptions {
    #[serde(default = "bounded")]
    pub rule: CrossoverRule,
    /// Subtract a per-period producer-surplus difference from the consumer gain.
    #[serde(default)]
    pub include_ps: bool,
    #[serde(default)]
    pub ps_difference: f64,
    #[serde(default = "default_cap")]
    pub horizon_cap: u64,
}

fn bounded() -> CrossoverRule {
    CrossoverRule::Bounded
}

fn default_cap() -> u64 {
    100_000
}

impl Default for CrossoverOptions {
    fn default() -> Self {
        CrossoverOptions { rule: CrossoverRule::Bounded, include_ps: false, ps_difference: 0.0, horizon_cap: default_cap() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// Smallest horizon at which the accumulated dynamic loss exceeds the consumer gain.
    pub t_bar: Option<u64>,
    /// A positive dynamic loss exists but no crossover was found within the cap.
    pub cap_hit: bool,
}

/// Smallest integer `T` with consumer-side gain `< ρ·S·T`.
pub fn crossover_horizon(params: &ModelParams, per_period_cs_gain: f64, s: f64, opts: &CrossoverOptions) -> Result<Crossover> {
    if !(per_period_cs_gain.is_finite() && per_period_cs_gain >= 0.0) {
        return Err(Error::InvalidInput(format!("per-period gain {per_period_cs_gain} must be finite and >= 0")));
    }
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::InvalidInput(format!("aggregate subsidy {s} must be finite and >= 0")));
    }
    let rate = params.rho * s;
    if rate <= 0.0 {
        return Ok(Crossover { t_bar: None, cap_hit: false });
    }
    let gain = per_period_cs_gain - if opts.include_ps { opts.ps_difference } else { 0.0 };
    let d = params.delta;
    let mut partial = 0.0;
    let mut disc = 1.0;
    for t in 0..=opts.horizon_cap {
        partial += disc * gain;
        disc *= d;
        let lhs = match opts.rule {
            CrossoverRule::Bounded => gain / (1.0 - d),
            CrossoverRule::PartialSum => partial,
        };
        if lhs < rate * t as f64 {
            return Ok(Crossover { t_bar: Some(t), cap_hit: false });
        }
    }
    Ok(Crossover { t_bar: None, cap_hit: true })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapRow {
    pub cap: f64,
    pub m: f64,
    pub m_star: Option<f64>,
    pub s_i_star: f64,
    pub s_e_star: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapTable {
    pub rows: Vec<CapRow>,
    /// Steady-state entrant subsidy is weakly increasing in the cap.
    pub monotone: bool,
    /// Caps whose solve did not converge.
    pub non_converged: Vec<f64>,
}

/// Solves the equilibrium with `Capped { base_spec, cap }` for each cap and reports
/// the steady-state subsidies (see [`steady_state`]).
pub fn cap_comparative_static(
    base_spec: &ComplementaritySpec,
    caps: &[f64],
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<CapTable> {
    if caps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("caps", "must be sorted ascending"));
    }
    let rows = caps
        .par_iter()
        .map(|&cap| -> Result<CapRow> {
            let spec = ComplementaritySpec::Capped { inner: Box::new(base_spec.clone()), cap };
            let sol = solve_mpe(params, &spec, config)?;
            let st = steady_state(&sol, params);
            Ok(CapRow { cap, m: st.m, m_star: sol.m_star, s_i_star: st.s_i, s_e_star: st.s_e, converged: sol.converged })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].s_e_star >= w[0].s_e_star);
    let non_converged = rows.iter().filter(|r| !r.converged).map(|r| r.cap).collect();
    Ok(CapTable { rows, monotone, non_converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4() -> LinearMarket {
        LinearMarket::default()
    }

    #[test]
    fn figure_geometry() {
        let m = fig4();
        let c = cournot_outcome(&m, 2).unwrap();
        assert!((c.q - 160.0 / 3.0).abs() < 1e-9 && (c.p - 140.0 / 3.0).abs() < 1e-9);
        let s = social_optimum(&m).unwrap();
        assert_eq!((s.q, s.p, s.cs), (80.0, 20.0, 3200.0));
        let i = involution_outcome(&m, 10.0).unwrap();
        assert_eq!(i.outcome.q, 90.0);
        assert_eq!(i.outcome.loss, 50.0);
        assert_eq!(i.subsidy_outlay, 900.0);
    }

    #[test]
    fn competitive_and_monopoly_limits() {
        let m = fig4();
        let c = cournot_outcome(&m, 1000).unwrap();
        assert!((c.p - 20.08).abs() < 1e-3 && c.loss < 0.01);
        let mono = LinearMarket { a: 2.0 * 7.0, b: 1.0, mc: 7.0 };
        assert!((cournot_outcome(&mono, 1).unwrap().q - 3.5).abs() < 1e-12);
        let thin = LinearMarket { a: 20.5, b: 2.0, mc: 20.0 };
        assert!((social_optimum(&thin).unwrap().q - 0.25).abs() < 1e-12);
    }

    #[test]
    fn involution_requires_below_cost_price() {
        assert!(matches!(involution_outcome(&fig4(), 20.0), Err(Error::Domain(_))));
        let near = involution_outcome(&fig4(), 20.0 - 1e-6).unwrap();
        assert!(near.outcome.loss < 1e-9);
    }

    #[test]
    fn surplus_identity_holds_for_every_regime() {
        let m = LinearMarket { a: 57.0, b: 0.7, mc: 12.0 };
        for n in [1, 2, 5] {
            assert!(cournot_outcome(&m, n).unwrap().identity_gap(&m).abs() < 1e-9);
        }
        assert!(social_optimum(&m).unwrap().identity_gap(&m).abs() < 1e-9);
        for p in [0.0, 5.0, 11.9] {
            assert!(involution_outcome(&m, p).unwrap().outcome.identity_gap(&m).abs() < 1e-9);
        }
    }

    #[test]
    fn dynamic_efficiency_examples() {
        let p = ModelParams { rho: 0.1, ..ModelParams::default() };
        assert!((dynamic_efficiency(&p, 2.0, 10).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(dynamic_efficiency(&p, 2.0, 0).unwrap(), 0.0);
        let z = ModelParams { rho: 0.0, ..p };
        assert_eq!(dynamic_efficiency(&z, 5.0, 7).unwrap(), 0.0);
    }

    #[test]
    fn crossover_examples() {
        let p = ModelParams { rho: 1.0, delta: 0.95, ..ModelParams::default() };
        let o = CrossoverOptions::default();
        assert_eq!(crossover_horizon(&p, 1.0, 1.0, &o).unwrap().t_bar, Some(20));
        assert_eq!(crossover_horizon(&p, 0.0, 1.0, &o).unwrap().t_bar, Some(1));
        let none = crossover_horizon(&ModelParams { rho: 0.0, ..p }, 1.0, 1.0, &o).unwrap();
        assert_eq!(none, Crossover { t_bar: None, cap_hit: false });
        let ps = CrossoverOptions { rule: CrossoverRule::PartialSum, ..o };
        let t = crossover_horizon(&p, 1.0, 1.0, &ps).unwrap().t_bar.unwrap();
        let sum: f64 = (0..=t).map(|k| 0.95f64.powi(k as i32)).sum();
        let prev: f64 = (0..t).map(|k| 0.95f64.powi(k as i32)).sum();
        assert!(sum < t as f64 && prev >= (t - 1) as f64);
        let tiny = CrossoverOptions { horizon_cap: 5, ..o };
        assert!(crossover_horizon(&p, 1.0, 1.0, &tiny).unwrap().cap_hit);
    }

    #[test]
    fn unsorted_caps_are_rejected() {
        let r = cap_comparative_static(&ComplementaritySpec::Zero, &[1.0, 0.5], &ModelParams::default(), &SolverConfig::default());
        assert!(r.unwrap_err().to_string().contains("caps"));
    }
}
