//! Small numerical helpers: Gauss–Hermite quadrature, uniform grids,
//! linear interpolation and finite differences.

use crate::error::{Error, Result};

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`.
///
/// The nodes are the probabilists' Hermite nodes and the weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule by Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("quadrature needs at least one node".into()));
        }
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            let mut ok = false;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::Internal(format!("Gauss-Hermite root {i} of {n} did not converge")));
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        // Physicists' rule for exp(-x²) → standard normal: x·√2, weights / √π.
        let total: f64 = w.iter().sum();
        let nodes = x.iter().rev().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().rev().map(|v| v / total).collect();
        Ok(GaussHermite { nodes, weights })
    }
}

/// `n` equally spaced points on `[0, 1]` including both ends.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { 1.0 } else { i as f64 * h }).collect()
}

/// Piecewise-linear interpolation of `values` given on a uniform grid over `[0, 1]`;
/// `x` is clamped into `[0, 1]`.
pub fn interp_uniform(values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let t = x.clamp(0.0, 1.0) * n as f64;
    let i = (t.floor() as usize).min(n - 1);
    let f = t - i as f64;
    values[i] + f * (values[i + 1] - values[i])
}

/// Derivative of `values` (uniform grid on `[0, 1]`) at index `k`:
/// central difference inside, one-sided at the ends. Returns `(derivative, one_sided)`.
pub fn grid_derivative(values: &[f64], k: usize) -> (f64, bool) {
    let n = values.len();
    let h = 1.0 / (n - 1) as f64;
    if k == 0 {
        ((values[1] - values[0]) / h, true)
    } else if k + 1 == n {
        ((values[n - 1] - values[n - 2]) / h, true)
    } else {
        ((values[k + 1] - values[k - 1]) / (2.0 * h), false)
    }
}

/// Sup-norm distance of two equally long slices.
pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_rule_is_exact() {
        let q = GaussHermite::new(3).unwrap();
        let s3 = 3f64.sqrt();
        for (a, b) in q.nodes.iter().zip([-s3, 0.0, s3]) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
        for (a, b) in q.weights.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn seven_point_rule_integrates_normal_moments() {
        let q = GaussHermite::new(7).unwrap();
        let moment = |p: i32| q.nodes.iter().zip(&q.weights).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-14);
        assert!(moment(1).abs() < 1e-14);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(12) - 10395.0).abs() < 1e-6);
        assert!(q.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn large_rules_converge() {
        for n in [3, 5, 8, 15, 31, 61] {
            let q = GaussHermite::new(n).unwrap();
            let m2: f64 = q.nodes.iter().zip(&q.weights).map(|(x, w)| w * x * x).sum();
            assert!((m2 - 1.0).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linear_between() {
        let g = uniform_grid(11);
        assert_eq!(g[10], 1.0);
        let v: Vec<f64> = g.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((interp_uniform(&v, 0.35) - 2.05).abs() < 1e-12);
        assert_eq!(interp_uniform(&v, -1.0), 1.0);
        assert_eq!(interp_uniform(&v, 2.0), 4.0);
        assert!((interp_uniform(&v, 1.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_flags_one_sided_ends() {
        let g = uniform_grid(5);
        let v: Vec<f64> = g.iter().map(|x| x * x).collect();
        let (d, one) = grid_derivative(&v, 2);
        assert!((d - 1.0).abs() < 1e-12 && !one);
        assert!(grid_derivative(&v, 0).1 && grid_derivative(&v, 4).1);
    }
}
