use super::{check_counts, positive_pim_rates, KOracle};
use crate::error::{Error, Result};
use crate::model::{potential_raw, DualState, Layout, ModelParams};
use crate::quadrature::{escalate, GaussJacobi};

/// Largest reduced dimension the tensor rule accepts.
pub(crate) const MAX_REDUCED_DIM: usize = 4;

/// Node budget for one tensor rule.
const MAX_POINTS: f64 = 2.0e7;

/// Order escalation controls for Gauss-Jacobi rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadControl {
    pub rel_tol: f64,
    pub start_order: usize,
    pub max_order: usize,
}

impl Default for QuadControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-13,
            start_order: 8,
            max_order: 600,
        }
    }
}

/// `k` by tensor Gauss-Jacobi quadrature over the product of simplices, for
/// parent-independent mutation and any selection.
///
/// Each locus is parametrized by stick breaking, `x_i = t_i prod_{j<i} (1 - t_j)`,
/// which turns the Dirichlet kernel into a product of Jacobi weights.
#[derive(Debug, Clone)]
pub struct SimplexQuadratureOracle {
    params: ModelParams,
    twice_u: Vec<f64>,
    ctrl: QuadControl,
    ln_z: f64,
}

impl SimplexQuadratureOracle {
    pub fn new(params: &ModelParams, ctrl: QuadControl) -> Result<Self> {
        let dim = params.layout().reduced_dim();
        if dim > MAX_REDUCED_DIM {
            return Err(Error::Unsupported(format!(
                "tensor quadrature handles reduced dimension up to {MAX_REDUCED_DIM}, got {dim}"
            )));
        }
        let u = positive_pim_rates(params, "the quadrature oracle")?;
        let mut o = Self {
            params: params.clone(),
            twice_u: u.into_iter().flatten().map(|v| 2.0 * v).collect(),
            ctrl,
            ln_z: 0.0,
        };
        o.ln_z = o.ln_integral(&vec![0; params.total()])?;
        Ok(o)
    }

    /// `ln Z`, the log normalizing integral of `prod x^{2u-1} e^{2V}`.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_z
    }

    fn ln_integral(&self, n: &[u32]) -> Result<f64> {
        let a: Vec<f64> = self.twice_u.iter().zip(n).map(|(&u, &c)| u + c as f64).collect();
        let dim = self.params.layout().reduced_dim();
        let cap = MAX_POINTS.powf(1.0 / dim.max(1) as f64).floor() as usize;
        let max_order = self.ctrl.max_order.min(cap);
        let (v, _) = escalate(self.ctrl.start_order, max_order, self.ctrl.rel_tol, |order| {
            tensor_integral(&self.params, &a, order)
        })?;
        if !(v > 0.0) {
            return Err(Error::Numeric(format!("quadrature integral is not positive ({v})")));
        }
        Ok(v.ln())
    }
}

/// Jacobi rules for the sticks of every locus, in flat order.
fn stick_rules(layout: &Layout, a: &[f64], order: usize) -> Result<Vec<GaussJacobi>> {
    let mut rules = Vec::with_capacity(layout.reduced_dim());
    for l in 0..layout.num_loci() {
        let al = &a[layout.range(l)];
        for i in 0..al.len() - 1 {
            let rest: f64 = al[i + 1..].iter().sum();
            rules.push(GaussJacobi::new(order, al[i], rest)?);
        }
    }
    Ok(rules)
}

fn tensor_integral(params: &ModelParams, a: &[f64], order: usize) -> Result<f64> {
    let layout = params.layout();
    let rules = stick_rules(layout, a, order)?;
    let dim = rules.len();
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; layout.total()];
    let mut acc = 0.0;
    loop {
        let mut w = 1.0;
        let mut s = 0;
        for l in 0..layout.num_loci() {
            let range = layout.range(l);
            let mut left = 1.0;
            for flat in range.start..range.end - 1 {
                let t = rules[s].nodes()[idx[s]];
                w *= rules[s].weights()[idx[s]];
                x[flat] = left * t;
                left *= 1.0 - t;
                s += 1;
            }
            x[range.end - 1] = left;
        }
        acc += w * (2.0 * potential_raw(params, &x)).exp();

        // Odometer over the tensor grid.
        let mut d = 0;
        loop {
            if d == dim {
                return Ok(acc);
            }
            idx[d] += 1;
            if idx[d] < order {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

impl KOracle for SimplexQuadratureOracle {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        check_counts(&self.params, n)?;
        if n.is_zero() {
            return Ok(0.0);
        }
        Ok(self.ln_integral(n.as_slice())? - self.ln_z)
    }

    fn name(&self) -> &'static str {
        "quadrature"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kfun::{DirichletOracle, IRoute, SingleLocusOracle, TwoLocusOracle};
    use crate::model::{single_locus_params, two_locus_params, MutationSpec};
    use crate::specfun::SeriesControl;

    fn n(v: &[u32]) -> DualState {
        DualState::from_raw(v.to_vec())
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn agrees_with_closed_forms() {
        let c = QuadControl::default();
        let p = single_locus_params([0.5, 0.5], [1.0, 0.0]).unwrap();
        let q = SimplexQuadratureOracle::new(&p, c).unwrap();
        let s = SingleLocusOracle::new(&p, SeriesControl::default()).unwrap();
        for v in [[1, 0], [2, 1], [0, 5]] {
            assert!(rel(q.k(&n(&v)).unwrap(), s.k(&n(&v)).unwrap()) < 1e-11);
        }
        assert!((q.ln_normalizer() - s.ln_normalizer()).abs() < 1e-11);

        let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
        let q = SimplexQuadratureOracle::new(&p, c).unwrap();
        let t = TwoLocusOracle::new(&p, IRoute::Series, SeriesControl::default()).unwrap();
        for v in [[1, 0, 1, 0], [1, 1, 1, 0], [0, 2, 0, 2]] {
            assert!(rel(q.k(&n(&v)).unwrap(), t.k(&n(&v)).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn three_alleles_without_selection_is_dirichlet() {
        let p = ModelParams::new(
            &[3],
            &[MutationSpec::ParentIndependent(vec![0.3, 0.6, 0.9])],
            vec![0.0; 3],
            None,
        )
        .unwrap();
        let q = SimplexQuadratureOracle::new(&p, QuadControl::default()).unwrap();
        let d = DirichletOracle::new(&p).unwrap();
        for v in [[1, 1, 0], [0, 2, 3], [4, 0, 1]] {
            assert!(rel(q.k(&n(&v)).unwrap(), d.k(&n(&v)).unwrap()) < 1e-11);
        }
    }

    #[test]
    fn rejects_large_dimension() {
        let p = ModelParams::new(
            &[6],
            &[MutationSpec::ParentIndependent(vec![0.5; 6])],
            vec![0.0; 6],
            None,
        )
        .unwrap();
        assert!(matches!(
            SimplexQuadratureOracle::new(&p, QuadControl::default()),
            Err(Error::Unsupported(_))
        ));
    }
}
