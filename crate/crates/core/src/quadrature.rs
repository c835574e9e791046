//! Gauss-Jacobi rules on `[0, 1]` for integrals of the form
//! `int_0^1 t^(a-1) (1-t)^(b-1) f(t) dt`.
//!
//! Nodes come from the Golub-Welsch eigenvalue problem and are polished by
//! Newton steps on the Jacobi polynomial; weights use the closed-form
//! Christoffel expression evaluated in log space.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::specfun::ln_gamma_pos;

#[derive(Debug, Clone)]
pub struct GaussJacobi {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussJacobi {
    /// Rule with `order` nodes for the weight `t^(a-1) (1-t)^(b-1)`.
    pub fn new(order: usize, a: f64, b: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::param("quadrature order must be at least 1"));
        }
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("Jacobi weight needs a, b > 0, got ({a}, {b})")));
        }
        // Standard interval [-1, 1]: (1-s)^alpha (1+s)^beta.
        let alpha = b - 1.0;
        let beta = a - 1.0;
        let n = order;
        let ab = alpha + beta;

        let mut jm = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let diag = if k == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
            jm[(k, k)] = diag;
            if k + 1 < n {
                let j = kf + 1.0;
                let off2 = if k == 0 {
                    4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * j * (j + alpha) * (j + beta) * (j + ab)
                        / ((2.0 * j + ab).powi(2) * (2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0))
                };
                let off = off2.sqrt();
                jm[(k, k + 1)] = off;
                jm[(k + 1, k)] = off;
            }
        }
        let eig = SymmetricEigen::new(jm);
        let mut s: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        s.sort_by(|x, y| x.partial_cmp(y).unwrap());

        let ln_const = ln_gamma_pos(n as f64 + alpha + 1.0) + ln_gamma_pos(n as f64 + beta + 1.0)
            - ln_gamma_pos(n as f64 + ab + 1.0)
            - ln_gamma_pos(n as f64 + 1.0)
            + (ab + 1.0) * std::f64::consts::LN_2;

        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for mut x in s {
            for _ in 0..3 {
                let (p, dp) = jacobi_with_derivative(n, alpha, beta, x);
                let dx = p / dp;
                if !dx.is_finite() {
                    break;
                }
                let nx = x - dx;
                if nx <= -1.0 || nx >= 1.0 {
                    break;
                }
                x = nx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = jacobi_with_derivative(n, alpha, beta, x);
            let ln_w = ln_const - (1.0 - x * x).ln() - 2.0 * dp.abs().ln();
            // Map to [0, 1]: t = (1 + s) / 2, dt-weight picks up 2^-(a+b-1).
            nodes.push(0.5 * (1.0 + x));
            weights.push((ln_w - (ab + 1.0) * std::f64::consts::LN_2).exp());
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric(format!(
                "Gauss-Jacobi weights overflowed at order {order}, a = {a}, b = {b}"
            )));
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

/// `P_n^(alpha,beta)(x)` and its derivative.
fn jacobi_with_derivative(n: usize, alpha: f64, beta: f64, x: f64) -> (f64, f64) {
    let ab = alpha + beta;
    let mut p0 = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p1 = 0.5 * (alpha - beta + (ab + 2.0) * x);
    for k in 2..=n {
        let kf = k as f64;
        let c = 2.0 * kf + ab;
        let a1 = 2.0 * kf * (kf + ab) * (c - 2.0);
        let a2 = (c - 1.0) * (alpha * alpha - beta * beta);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (kf + alpha - 1.0) * (kf + beta - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let c = 2.0 * nf + ab;
    let dp = (nf * (alpha - beta - c * x) * p1 + 2.0 * (nf + alpha) * (nf + beta) * p0) / (c * (1.0 - x * x));
    (p1, dp)
}

/// Increase the order until two successive results agree to `rel_tol`.
///
/// `eval(order)` returns the integral at a given order. Orders grow by a
/// factor of 1.5 from `start` up to `max_order`.
pub fn escalate(
    start: usize,
    max_order: usize,
    rel_tol: f64,
    mut eval: impl FnMut(usize) -> Result<f64>,
) -> Result<(f64, usize)> {
    let mut order = start.max(2);
    let mut prev = eval(order)?;
    loop {
        let next_order = (order * 3).div_ceil(2);
        if next_order > max_order {
            return Err(Error::Convergence {
                what: "quadrature order escalation",
                partial: prev,
                terms: order,
            });
        }
        let cur = eval(next_order)?;
        if (cur - prev).abs() <= rel_tol * cur.abs() {
            return Ok((cur, next_order));
        }
        prev = cur;
        order = next_order;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::beta;

    #[test]
    fn weights_sum_to_beta() {
        for &(a, b) in &[(1.0, 1.0), (0.3, 2.5), (1.6, 1.6), (7.6, 2.6), (40.0, 3.0), (0.5, 0.5)] {
            for order in [1, 2, 5, 20, 64] {
                let g = GaussJacobi::new(order, a, b).unwrap();
                let s: f64 = g.weights().iter().sum();
                let want = beta(a, b).unwrap();
                assert!(((s - want) / want).abs() < 1e-12, "a={a} b={b} n={order}: {s} vs {want}");
                assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
                assert!(g.nodes().iter().all(|&t| t > 0.0 && t < 1.0));
            }
        }
    }

    #[test]
    fn exact_for_polynomials() {
        // int t^(a-1+k) (1-t)^(b-1) = B(a+k, b), exact for k <= 2n-1.
        let (a, b) = (0.7, 2.3);
        let g = GaussJacobi::new(6, a, b).unwrap();
        for k in 0..12 {
            let got = g.integrate(|t| t.powi(k));
            let want = beta(a + k as f64, b).unwrap();
            assert!(((got - want) / want).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn legendre_case() {
        let g = GaussJacobi::new(12, 1.0, 1.0).unwrap();
        let got = g.integrate(|t| (3.0 * t).exp());
        let want = ((3.0f64).exp() - 1.0) / 3.0;
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn escalation_converges_and_fails_cleanly() {
        let (v, _) = escalate(4, 256, 1e-13, |n| {
            Ok(GaussJacobi::new(n, 1.5, 0.5)?.integrate(|t| (2.0 * t).cos()))
        })
        .unwrap();
        assert!(v.is_finite());
        let err = escalate(4, 8, 1e-13, |n| Ok(n as f64)).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(GaussJacobi::new(0, 1.0, 1.0).is_err());
        assert!(GaussJacobi::new(4, 0.0, 1.0).is_err());
        assert!(GaussJacobi::new(4, 1.0, -0.5).is_err());
    }
}
