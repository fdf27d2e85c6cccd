//! Ecosystem complementarity functions Ψ(q), their marginals ψ(q) = Ψ′(q),
//! the regulatory cap, and convexity / regularity diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parameterized ecosystem value function of the share served in the primary market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComplementaritySpec {
    /// `Ψ(q) = lin·q + coef·q^exp`.
    PowerAffine { lin: f64, coef: f64, exp: f64 },
    /// S-shaped: `Ψ(q) = scale·(σ(k(q − q0)) − σ(−k·q0))`, shifted so that `Ψ(0) = 0`.
    Logistic { scale: f64, steepness: f64, midpoint: f64 },
    /// Sum of a data channel `data_scale·q²`, a conversion channel
    /// `conv_rate·margin·q` and a cross-market channel `nu·q·q_bar`.
    Channels { data_scale: f64, conv_rate: f64, margin: f64, nu: f64, q_bar: f64 },
    /// `min(Ψ_inner(q), cap)`.
    Capped { inner: Box<ComplementaritySpec>, cap: f64 },
    /// `Ψ ≡ 0`.
    Zero,
}

/// Result of evaluating a marginal; `one_sided` is set at a cap kink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub value: f64,
    pub one_sided: bool,
}

/// Qualitative shape flags of a complementarity function on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub bounded: bool,
    pub increasing: bool,
    pub locally_convex_somewhere: bool,
    pub eventually_concave: bool,
}

/// Grid used by the shape diagnostics.
const DIAG_GRID: usize = 1001;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_q(q: f64) -> Result<()> {
    if !q.is_finite() || !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("share q = {q} outside [0, 1]")));
    }
    Ok(())
}

impl ComplementaritySpec {
    /// Checks the parameter ranges of the variant (recursively for `Capped`).
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be finite"))
            }
        };
        match self {
            ComplementaritySpec::PowerAffine { lin, coef, exp } => {
                finite("lin", *lin)?;
                finite("coef", *coef)?;
                finite("exp", *exp)?;
                if *lin < 0.0 {
                    return Err(Error::param("lin", "must be >= 0"));
                }
                if *coef < 0.0 {
                    return Err(Error::param("coef", "must be >= 0"));
                }
                if *exp <= 1.0 {
                    return Err(Error::param("exp", "must be > 1"));
                }
            }
            ComplementaritySpec::Logistic { scale, steepness, midpoint } => {
                finite("scale", *scale)?;
                finite("steepness", *steepness)?;
                finite("midpoint", *midpoint)?;
                if *scale <= 0.0 {
                    return Err(Error::param("scale", "must be > 0"));
                }
                if *steepness <= 0.0 {
                    return Err(Error::param("steepness", "must be > 0"));
                }
                if !(*midpoint > 0.0 && *midpoint < 1.0) {
                    return Err(Error::param("midpoint", "must lie in (0, 1)"));
                }
            }
            ComplementaritySpec::Channels { data_scale, conv_rate, margin, nu, q_bar } => {
                for (n, v) in [("data_scale", data_scale), ("conv_rate", conv_rate), ("margin", margin), ("nu", nu), ("q_bar", q_bar)] {
                    finite(n, *v)?;
                }
                if *data_scale < 0.0 {
                    return Err(Error::param("data_scale", "must be >= 0"));
                }
                if !(0.0..=1.0).contains(conv_rate) {
                    return Err(Error::param("conv_rate", "must lie in [0, 1]"));
                }
                if *margin < 0.0 {
                    return Err(Error::param("margin", "must be >= 0"));
                }
                if *nu < 0.0 {
                    return Err(Error::param("nu", "must be >= 0"));
                }
                if !(0.0..=1.0).contains(q_bar) {
                    return Err(Error::param("q_bar", "must lie in [0, 1]"));
                }
            }
            ComplementaritySpec::Capped { inner, cap } => {
                finite("cap", *cap)?;
                if *cap < 0.0 {
                    return Err(Error::param("cap", "must be >= 0"));
                }
                inner.validate()?;
            }
            ComplementaritySpec::Zero => {}
        }
        Ok(())
    }

    /// Ψ(q) without the domain check; callers guarantee `q ∈ [0, 1]`.
    pub(crate) fn value_unchecked(&self, q: f64) -> f64 {
        match self {
            ComplementaritySpec::PowerAffine { lin, coef, exp } => lin * q + coef * q.powf(*exp),
            ComplementaritySpec::Logistic { scale, steepness, midpoint } => {
                scale * (sigmoid(steepness * (q - midpoint)) - sigmoid(-steepness * midpoint))
            }
            ComplementaritySpec::Channels { data_scale, conv_rate, margin, nu, q_bar } => {
                data_scale * q * q + conv_rate * margin * q + nu * q * q_bar
            }
            ComplementaritySpec::Capped { inner, cap } => inner.value_unchecked(q).min(*cap),
            ComplementaritySpec::Zero => 0.0,
        }
    }

    fn marginal_unchecked(&self, q: f64) -> Marginal {
        let smooth = |value| Marginal { value, one_sided: false };
        match self {
            ComplementaritySpec::PowerAffine { lin, coef, exp } => {
                smooth(lin + coef * exp * q.powf(exp - 1.0))
            }
            ComplementaritySpec::Logistic { scale, steepness, midpoint } => {
                let s = sigmoid(steepness * (q - midpoint));
                smooth(scale * steepness * s * (1.0 - s))
            }
            ComplementaritySpec::Channels { data_scale, conv_rate, margin, nu, q_bar } => {
                smooth(2.0 * data_scale * q + conv_rate * margin + nu * q_bar)
            }
            ComplementaritySpec::Capped { inner, cap } => {
                let v = inner.value_unchecked(q);
                let d = inner.marginal_unchecked(q);
                let scale = cap.abs().max(1.0);
                if (v - cap).abs() <= 1e-12 * scale {
                    // At the kink: report the left derivative of min(inner, cap).
                    Marginal { value: d.value.max(0.0), one_sided: true }
                } else if v < *cap {
                    d
                } else {
                    smooth(0.0)
                }
            }
            ComplementaritySpec::Zero => smooth(0.0),
        }
    }

    /// The same function multiplied by `k ≥ 0` (a cap is scaled with its inner function).
    pub fn scaled(&self, k: f64) -> ComplementaritySpec {
        match self {
            ComplementaritySpec::PowerAffine { lin, coef, exp } => {
                ComplementaritySpec::PowerAffine { lin: lin * k, coef: coef * k, exp: *exp }
            }
            ComplementaritySpec::Logistic { scale, steepness, midpoint } => {
                if k == 0.0 {
                    ComplementaritySpec::Zero
                } else {
                    ComplementaritySpec::Logistic { scale: scale * k, steepness: *steepness, midpoint: *midpoint }
                }
            }
            ComplementaritySpec::Channels { data_scale, conv_rate, margin, nu, q_bar } => ComplementaritySpec::Channels {
                data_scale: data_scale * k,
                conv_rate: *conv_rate,
                margin: margin * k,
                nu: nu * k,
                q_bar: *q_bar,
            },
            ComplementaritySpec::Capped { inner, cap } => {
                ComplementaritySpec::Capped { inner: Box::new(inner.scaled(k)), cap: cap * k }
            }
            ComplementaritySpec::Zero => ComplementaritySpec::Zero,
        }
    }
}

/// Ψ(q) for `q ∈ [0, 1]`.
pub fn psi_value(spec: &ComplementaritySpec, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(spec.value_unchecked(q))
}

/// ψ(q) = Ψ′(q), analytic.  At a cap kink the left derivative is returned and flagged.
pub fn psi_marginal(spec: &ComplementaritySpec, q: f64) -> Result<Marginal> {
    check_q(q)?;
    Ok(spec.marginal_unchecked(q))
}

/// Maximal subintervals of `(0, 1)` where the numerical second difference of Ψ is positive.
///
/// Each run of grid points with positive second difference `[i, j]` is reported
/// as `(x_{i−1}, x_{j+1})`, the span of all evaluation points involved.
pub fn convexity_region(spec: &ComplementaritySpec, grid_n: usize) -> Result<Vec<(f64, f64)>> {
    if grid_n < 16 {
        return Err(Error::InvalidInput(format!("grid_n = {grid_n} must be >= 16")));
    }
    let h = 1.0 / (grid_n - 1) as f64;
    let x: Vec<f64> = (0..grid_n).map(|i| i as f64 * h).collect();
    let v: Vec<f64> = x.iter().map(|&q| spec.value_unchecked(q)).collect();
    let scale = v.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
    let tol = 1e-12 * scale;
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 1..grid_n - 1 {
        let d2 = v[i + 1] - 2.0 * v[i] + v[i - 1];
        if d2 > tol {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            out.push((x[s - 1], x[i]));
        }
    }
    if let Some(s) = start {
        out.push((x[s - 1], x[grid_n - 1]));
    }
    Ok(out)
}

/// Shape flags on `[0, 1]`: boundedness, monotonicity, local convexity and eventual concavity.
///
/// `increasing` requires Ψ to be non-decreasing and not constant; `eventually_concave`
/// requires a non-empty tail of the grid ending at `q = 1` on which every second
/// difference is strictly negative.
pub fn check_regularity(spec: &ComplementaritySpec) -> RegularityReport {
    let n = DIAG_GRID;
    let h = 1.0 / (n - 1) as f64;
    let v: Vec<f64> = (0..n).map(|i| spec.value_unchecked(i as f64 * h)).collect();
    let scale = v.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
    let tol = 1e-12 * scale;
    let bounded = v.iter().all(|x| x.is_finite());
    let increasing = v.windows(2).all(|w| w[1] >= w[0] - tol) && v[n - 1] > v[0] + tol;
    let d2: Vec<f64> = (1..n - 1).map(|i| v[i + 1] - 2.0 * v[i] + v[i - 1]).collect();
    let locally_convex_somewhere = d2.iter().any(|&d| d > tol);
    let eventually_concave = d2.last().is_some_and(|&d| d < -tol);
    RegularityReport { bounded, increasing, locally_convex_somewhere, eventually_concave }
}
