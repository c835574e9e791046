use super::simplex::QuadControl;
use super::{positive_pim_rates, KOracle};
use crate::error::{Error, Result};
use crate::model::{DualState, ModelParams};
use crate::quadrature::{escalate, GaussJacobi};
use crate::specfun::{ln_beta, ln_kummer_1f1, SeriesControl};

/// How the two-locus integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IRoute {
    Series,
    Quadrature,
}

/// Consecutive small terms required before the outer series stops.
const QUIET_TERMS: usize = 5;

/// Largest tolerated ratio between the summed term magnitudes and the result.
/// Beyond this, alternating cancellation has eaten too many digits.
const MAX_CANCELLATION: f64 = 1e6;

fn check_integral_args(a1: f64, a2: f64, b1: f64, b2: f64, j1: f64, j2: f64) -> Result<()> {
    for (name, v) in [("a1", a1), ("a2", a2), ("b1", b1), ("b2", b2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    for (name, v) in [("J1", j1), ("J2", j2)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be nonnegative and finite, got {v}")));
        }
    }
    Ok(())
}

/// Outer-series stopping rule: `QUIET_TERMS` consecutive negligible terms,
/// and only after the largest terms have passed.
struct StopRule {
    quiet: usize,
    min_terms: usize,
    rel_tol: f64,
}

impl StopRule {
    fn done(&mut self, n: usize, term: f64, sum: f64) -> bool {
        if term.abs() < self.rel_tol * sum.abs() {
            self.quiet += 1;
        } else {
            self.quiet = 0;
        }
        n >= self.min_terms && self.quiet >= QUIET_TERMS
    }
}

/// The two-locus integral
/// `I = int int x^{a1-1} (1-x)^{a2-1} y^{b1-1} (1-y)^{b2-1} e^{2[J1 x y + J2 (1-x)(1-y)]} dx dy`
/// by its hypergeometric double series.
///
/// The binomial inner sum is regrouped as a convolution so that `J2 = 0`
/// needs no division; that limit still gets its own simpler branch.
pub fn i_series(a1: f64, a2: f64, b1: f64, b2: f64, j1: f64, j2: f64, ctrl: SeriesControl) -> Result<f64> {
    Ok(ln_i_series(a1, a2, b1, b2, j1, j2, ctrl)?.exp())
}

pub(crate) fn ln_i_series(
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
    j1: f64,
    j2: f64,
    ctrl: SeriesControl,
) -> Result<f64> {
    check_integral_args(a1, a2, b1, b2, j1, j2)?;
    let ln_ba = ln_beta(a1, a2)?;
    if j1 == 0.0 && j2 == 0.0 {
        return Ok(ln_ba + ln_beta(b1, b2)?);
    }
    let mut stop = StopRule {
        quiet: 0,
        min_terms: (2.0 * j1 + 4.0 * j2).ceil() as usize + 1,
        rel_tol: ctrl.rel_tol,
    };

    if j2 == 0.0 {
        // Terms are positive; work relative to the k = 0 term B(b1, b2).
        let ln_bb = ln_beta(b1, b2)?;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..ctrl.max_terms {
            let kf = k as f64;
            term *= (a1 + kf) / (a1 + a2 + kf) * (2.0 * j1) / (kf + 1.0) * (kf + b1) / (kf + b1 + b2);
            sum += term;
            if stop.done(k + 1, term, sum) {
                return Ok(ln_ba + ln_bb + sum.ln());
            }
        }
        return Err(Error::Convergence {
            what: "two-locus series",
            partial: (ln_ba + ln_bb + sum.ln()).exp(),
            terms: ctrl.max_terms,
        });
    }

    // I = e^{2 J2} B(a1, a2) sum_n r_n sum_{k<=n} p_{n-k} q_k with
    //   r_n = [a1]_n / [a1+a2]_n,  p_j = (-2 J2)^j / j!,
    //   q_k = (2(J1+J2))^k / k! * B(k+b1, b2) 1F1(k+b1; k+b1+b2; -2 J2).
    // Everything is scaled by m_0 = B(b1, b2) 1F1(b1; b1+b2; -2 J2).
    let c = 2.0 * (j1 + j2);
    let d = -2.0 * j2;
    let ln_m = |k: usize| -> Result<f64> {
        let b = k as f64 + b1;
        Ok(ln_beta(b, b2)? + ln_kummer_1f1(b, b + b2, d, ctrl)?)
    };
    let ln_m0 = ln_m(0)?;
    let mut q: Vec<f64> = Vec::new();
    let mut p: Vec<f64> = Vec::new();
    let mut r = 1.0;
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for n in 0..ctrl.max_terms {
        let nf = n as f64;
        if n == 0 {
            p.push(1.0);
            q.push(1.0);
        } else {
            r *= (a1 + nf - 1.0) / (a1 + a2 + nf - 1.0);
            p.push(p[n - 1] * d / nf);
            // c > 0 here since J2 > 0.
            let ln_qn = nf * c.ln() - ln_factorial(n) + ln_m(n)? - ln_m0;
            let qn = ln_qn.exp();
            q.push(qn);
        }
        let mut conv = 0.0;
        let mut conv_abs = 0.0;
        for k in 0..=n {
            let t = p[n - k] * q[k];
            conv += t;
            conv_abs += t.abs();
        }
        let term = r * conv;
        sum += term;
        abs_sum += r * conv_abs;
        if stop.done(n, term, sum) {
            if !(sum > 0.0) {
                return Err(Error::Numeric(format!(
                    "two-locus series lost all precision (sum {sum})"
                )));
            }
            if abs_sum / sum > MAX_CANCELLATION {
                return Err(Error::Numeric(format!(
                    "two-locus series cancellation factor {:.1e} at J = ({j1}, {j2}); use the quadrature route",
                    abs_sum / sum
                )));
            }
            return Ok(2.0 * j2 + ln_ba + ln_m0 + sum.ln());
        }
    }
    Err(Error::Convergence {
        what: "two-locus series",
        partial: (2.0 * j2 + ln_ba + ln_m0).exp() * sum,
        terms: ctrl.max_terms,
    })
}

fn ln_factorial(n: usize) -> f64 {
    crate::specfun::ln_rising(1.0, n as u32)
}

/// The same integral by tensor Gauss-Jacobi quadrature, escalating the order
/// until successive results agree to `ctrl.rel_tol`.
pub fn i_quadrature(a1: f64, a2: f64, b1: f64, b2: f64, j1: f64, j2: f64, ctrl: QuadControl) -> Result<f64> {
    check_integral_args(a1, a2, b1, b2, j1, j2)?;
    let (v, _) = escalate(ctrl.start_order, ctrl.max_order, ctrl.rel_tol, |order| {
        let rx = GaussJacobi::new(order, a1, a2)?;
        let ry = GaussJacobi::new(order, b1, b2)?;
        let mut acc = 0.0;
        for (&x, &wx) in rx.nodes().iter().zip(rx.weights()) {
            let mut inner = 0.0;
            for (&y, &wy) in ry.nodes().iter().zip(ry.weights()) {
                inner += wy * (2.0 * (j1 * x * y + j2 * (1.0 - x) * (1.0 - y))).exp();
            }
            acc += wx * inner;
        }
        Ok(acc)
    })?;
    Ok(v)
}

/// Closed form for two loci with two alleles each and interaction only
/// between equal allele labels.
#[derive(Debug, Clone)]
pub struct TwoLocusOracle {
    twice_u: [f64; 4],
    j1: f64,
    j2: f64,
    route: IRoute,
    ctrl: SeriesControl,
    quad: QuadControl,
    ln_z: f64,
}

impl TwoLocusOracle {
    pub fn new(params: &ModelParams, route: IRoute, ctrl: SeriesControl) -> Result<Self> {
        let (j1, j2) = params.two_locus_shape().ok_or_else(|| {
            Error::misuse(
                "the two-locus oracle needs loci (2, 2), h = 0 and interaction only \
                 between matching allele labels",
            )
        })?;
        let u = positive_pim_rates(params, "the two-locus oracle")?;
        let mut o = Self {
            twice_u: [2.0 * u[0][0], 2.0 * u[0][1], 2.0 * u[1][0], 2.0 * u[1][1]],
            j1,
            j2,
            route,
            ctrl,
            quad: QuadControl::default(),
            ln_z: 0.0,
        };
        o.ln_z = o.ln_integral([0; 4], route)?;
        Ok(o)
    }

    pub fn interaction(&self) -> (f64, f64) {
        (self.j1, self.j2)
    }

    /// `ln Z`, the log normalizing integral.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_z
    }

    fn args(&self, n: [u32; 4]) -> [f64; 4] {
        std::array::from_fn(|i| n[i] as f64 + self.twice_u[i])
    }

    fn ln_integral(&self, n: [u32; 4], route: IRoute) -> Result<f64> {
        let [a1, a2, b1, b2] = self.args(n);
        match route {
            IRoute::Series => ln_i_series(a1, a2, b1, b2, self.j1, self.j2, self.ctrl),
            IRoute::Quadrature => Ok(i_quadrature(a1, a2, b1, b2, self.j1, self.j2, self.quad)?.ln()),
        }
    }

    /// `k(n)` by both routes, for consistency checks.
    pub fn both_routes(&self, n: &DualState) -> Result<(f64, f64)> {
        let c = counts(n)?;
        let z_series = self.ln_integral([0; 4], IRoute::Series)?;
        let z_quad = self.ln_integral([0; 4], IRoute::Quadrature)?;
        Ok((
            (self.ln_integral(c, IRoute::Series)? - z_series).exp(),
            (self.ln_integral(c, IRoute::Quadrature)? - z_quad).exp(),
        ))
    }
}

fn counts(n: &DualState) -> Result<[u32; 4]> {
    <[u32; 4]>::try_from(n.as_slice()).map_err(|_| {
        Error::misuse(format!("the two-locus oracle takes four counts, got {}", n.len()))
    })
}

impl KOracle for TwoLocusOracle {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        let c = counts(n)?;
        if n.is_zero() {
            return Ok(0.0);
        }
        Ok(self.ln_integral(c, self.route)? - self.ln_z)
    }

    fn name(&self) -> &'static str {
        match self.route {
            IRoute::Series => "two-locus",
            IRoute::Quadrature => "two-locus-quadrature",
        }
    }
}
