//! Primitive parameters, state types and the raw demand / profit primitives of the game.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All primitive game parameters.
///
/// The two trailing fields extend the baseline game and default to zero, in
/// which case the baseline is recovered exactly:
///
/// * `incumbent_synergy` (w) gives the incumbent a standalone per-period value
///   `w·m` from its own installed base.  Without it the incumbent's flow payoff
///   is never positive, so its value is identically zero and it never subsidizes.
/// * `adjustment_cost` (φ) adds a convex cost `φ/2·s²` to each firm's subsidy
///   outlay, which makes the per-period objective strictly concave in own subsidy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Consumer responsiveness to subsidy differentials.
    pub gamma: f64,
    /// Relative weight on posted prices vs subsidies.
    pub kappa: f64,
    /// Standard deviation of the per-period demand shock.
    pub sigma: f64,
    /// Per-period discount factor.
    pub delta: f64,
    /// Constant marginal cost per transaction.
    pub cost: f64,
    /// Survival threshold: the incumbent's value is zero below this share.
    pub m_min: f64,
    /// Upper bound of the admissible subsidy interval.
    pub s_max: f64,
    /// Social return to R&D investment (welfare only).
    pub rho: f64,
    /// Incumbent standalone value per unit of share.
    pub incumbent_synergy: f64,
    /// Convex subsidy adjustment cost coefficient.
    pub adjustment_cost: f64,
}

impl Default for ModelParams {
    /// Calibration values γ=0.6, δ=0.95, m̲=0.35 with c=1 and s_max = 2c.
    fn default() -> Self {
        ModelParams {
            gamma: 0.6,
            kappa: 1.0,
            sigma: 0.05,
            delta: 0.95,
            cost: 1.0,
            m_min: 0.35,
            s_max: 2.0,
            rho: 0.1,
            incumbent_synergy: 0.0,
            adjustment_cost: 0.0,
        }
    }
}

impl ModelParams {
    /// Checks every documented invariant and reports the first violated field by name.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("sigma", self.sigma),
            ("delta", self.delta),
            ("cost", self.cost),
            ("m_min", self.m_min),
            ("s_max", self.s_max),
            ("rho", self.rho),
            ("incumbent_synergy", self.incumbent_synergy),
            ("adjustment_cost", self.adjustment_cost),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::param("gamma", "must be > 0"));
        }
        if self.kappa <= 0.0 {
            return Err(Error::param("kappa", "must be > 0"));
        }
        if self.sigma < 0.0 {
            return Err(Error::param("sigma", "must be >= 0"));
        }
        if self.cost <= 0.0 {
            return Err(Error::param("cost", "must be > 0"));
        }
        if self.m_min <= 0.0 {
            return Err(Error::param("m_min", "must be > 0"));
        }
        if self.m_min >= 0.5 {
            return Err(Error::param("m_min", "m_min must be < 0.5"));
        }
        if self.s_max <= 0.0 {
            return Err(Error::param("s_max", "must be > 0"));
        }
        if self.rho < 0.0 {
            return Err(Error::param("rho", "must be >= 0"));
        }
        if self.incumbent_synergy < 0.0 {
            return Err(Error::param("incumbent_synergy", "must be >= 0"));
        }
        if self.adjustment_cost < 0.0 {
            return Err(Error::param("adjustment_cost", "must be >= 0"));
        }
        Ok(())
    }

    /// Whether the incumbent is viable (at or above the survival threshold) at share `m`.
    ///
    /// A relative slack of 1e-12 keeps grid points that sit exactly on the
    /// threshold on the viable side despite rounding in the grid construction.
    pub fn incumbent_alive(&self, m: f64) -> bool {
        m >= self.m_min - 1e-12
    }

    /// Per-period subsidy outlay of a firm serving `volume` at subsidy `s`,
    /// including the convex adjustment cost.
    pub fn subsidy_outlay(&self, s: f64, volume: f64) -> f64 {
        s * volume + 0.5 * self.adjustment_cost * s * s
    }
}

/// The state of the primary market: the incumbent's share `m`; the entrant holds `1 − m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub m: f64,
}

impl MarketState {
    pub fn new(m: f64) -> Result<Self> {
        if !m.is_finite() || !(0.0..=1.0).contains(&m) {
            return Err(Error::InvalidInput(format!("market share {m} outside [0, 1]")));
        }
        Ok(MarketState { m })
    }

    pub fn entrant_share(&self) -> f64 {
        1.0 - self.m
    }
}

/// A firm's period action: posted price and per-transaction subsidy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmAction {
    pub price: f64,
    pub subsidy: f64,
}

impl FirmAction {
    pub fn new(params: &ModelParams, price: f64, subsidy: f64) -> Result<Self> {
        if !price.is_finite() || price < 0.0 {
            return Err(Error::InvalidInput(format!("price {price} must be finite and >= 0")));
        }
        check_subsidy(params, subsidy)?;
        Ok(FirmAction { price, subsidy })
    }

    /// Effective price paid by consumers.
    pub fn effective_price(&self) -> f64 {
        self.price - self.subsidy
    }
}

/// The two firms of the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Firm {
    /// The incumbent, holding share `m`.
    I,
    /// The entrant (challenger), holding share `1 − m`.
    E,
}

impl Firm {
    /// Transaction volume of this firm at incumbent share `m` (one transaction per user per period).
    pub fn volume(self, m: f64) -> f64 {
        match self {
            Firm::I => m,
            Firm::E => 1.0 - m,
        }
    }
}

fn check_subsidy(params: &ModelParams, s: f64) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::InvalidInput(format!("subsidy {s} is not finite")));
    }
    if s < 0.0 || s > params.s_max * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("subsidy {s} outside [0, {}]", params.s_max)));
    }
    Ok(())
}

/// Share transition before the shock and without clamping.
///
/// A firm's subsidy raises its own share: the incumbent's share grows with
/// `s_I − s_E` and shrinks with its relative posted price `p_I − p_E`.
pub fn share_drift(params: &ModelParams, s_i: f64, s_e: f64, p_i: f64, p_e: f64) -> f64 {
    params.gamma * ((s_i - s_e) - params.kappa * (p_i - p_e))
}

/// Next-period incumbent share, clamped to `[0, 1]`.
pub fn next_share(
    params: &ModelParams,
    m: f64,
    s_i: f64,
    s_e: f64,
    p_i: f64,
    p_e: f64,
    eta: f64,
) -> Result<f64> {
    for (name, v) in [("m", m), ("s_I", s_i), ("s_E", s_e), ("p_I", p_i), ("p_E", p_e), ("eta", eta)] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} = {v} is not finite")));
        }
    }
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidInput(format!("m = {m} outside [0, 1]")));
    }
    check_subsidy(params, s_i)?;
    check_subsidy(params, s_e)?;
    Ok((m + share_drift(params, s_i, s_e, p_i, p_e) + eta).clamp(0.0, 1.0))
}

/// Operating profit in the primary market: `(price − c − subsidy)·Q_i(m)`.
pub fn primary_profit(params: &ModelParams, m: f64, firm: Firm, price: f64, subsidy: f64) -> Result<f64> {
    for (name, v) in [("m", m), ("price", price), ("subsidy", subsidy)] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} = {v} is not finite")));
        }
    }
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidInput(format!("m = {m} outside [0, 1]")));
    }
    Ok((price - params.cost - subsidy) * firm.volume(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ModelParams {
        ModelParams { gamma: 0.6, cost: 1.0, ..ModelParams::default() }
    }

    #[test]
    fn symmetric_actions_leave_share_unchanged() {
        assert_eq!(next_share(&p(), 0.5, 0.3, 0.3, 1.0, 1.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn entrant_subsidy_takes_share_from_incumbent() {
        let m = next_share(&p(), 0.5, 0.0, 0.1, 1.0, 1.0, 0.0).unwrap();
        assert!((m - 0.44).abs() < 1e-12, "{m}");
    }

    #[test]
    fn transition_is_clamped_at_both_ends() {
        assert_eq!(next_share(&p(), 0.99, 0.1, 0.0, 1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(next_share(&p(), 0.01, 0.0, 0.1, 1.0, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn higher_own_price_loses_share() {
        let m = next_share(&p(), 0.5, 0.0, 0.0, 1.2, 1.0, 0.0).unwrap();
        assert!(m < 0.5);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert!(matches!(next_share(&p(), f64::NAN, 0.0, 0.0, 1.0, 1.0, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(next_share(&p(), 0.5, 0.0, 0.0, 1.0, 1.0, f64::INFINITY), Err(Error::InvalidInput(_))));
        assert!(next_share(&p(), 0.5, 3.0, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn primary_profit_examples() {
        let q = p();
        assert_eq!(primary_profit(&q, 0.6, Firm::I, 1.0, 0.0).unwrap(), 0.0);
        assert!((primary_profit(&q, 0.6, Firm::I, 1.0, 0.2).unwrap() + 0.12).abs() < 1e-12);
        assert!((primary_profit(&q, 0.6, Firm::E, 1.0, 0.5).unwrap() + 0.2).abs() < 1e-12);
    }

    #[test]
    fn validation_names_the_violated_field() {
        let bad = ModelParams { m_min: 0.7, ..p() };
        assert_eq!(bad.validate().unwrap_err().to_string(), "invalid parameter `m_min`: m_min must be < 0.5");
        let bad = ModelParams { delta: 1.0, ..p() };
        assert!(bad.validate().unwrap_err().to_string().contains("delta"));
        let bad = ModelParams { gamma: f64::NAN, ..p() };
        assert!(bad.validate().unwrap_err().to_string().contains("gamma"));
        assert!(p().validate().is_ok());
    }

    #[test]
    fn state_and_action_constructors_enforce_ranges() {
        assert!(MarketState::new(1.2).is_err());
        assert_eq!(MarketState::new(0.3).unwrap().entrant_share(), 0.7);
        assert!(FirmAction::new(&p(), 1.0, 2.5).is_err());
        assert!((FirmAction::new(&p(), 1.0, 0.25).unwrap().effective_price() - 0.75).abs() < 1e-15);
    }
}
