use super::KOracle;
use crate::dual::row_sum_residual;
use crate::error::{Error, Result};
use crate::model::{DualState, ModelParams};

/// Relative violation of the row-sum identity
/// `sum_{m != n} q(n, m) k(m) / k(n) + q(n, n) = 0`, with the diagonal taken
/// from the explicit generator coefficient. Vanishes for an exact oracle.
pub fn k_recursion_residual(params: &ModelParams, n: &DualState, oracle: &dyn KOracle) -> Result<f64> {
    if n.is_zero() {
        return Err(Error::misuse("the recursion residual is undefined at n = 0"));
    }
    row_sum_residual(params, n, oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kfun::{IRoute, SingleLocusOracle, TwoLocusOracle};
    use crate::model::{single_locus_params, two_locus_params};
    use crate::specfun::SeriesControl;

    fn n(v: &[u32]) -> DualState {
        DualState::from_raw(v.to_vec())
    }

    struct Perturbed<O> {
        inner: O,
        at: DualState,
    }

    impl<O: KOracle> KOracle for Perturbed<O> {
        fn ln_k(&self, n: &DualState) -> Result<f64> {
            let v = self.inner.ln_k(n)?;
            Ok(if *n == self.at { v + 1.01f64.ln() } else { v })
        }
        fn name(&self) -> &'static str {
            "perturbed"
        }
    }

    #[test]
    fn examples() {
        let p = single_locus_params([0.5, 0.5], [1.0, 0.0]).unwrap();
        let o = SingleLocusOracle::new(&p, SeriesControl::default()).unwrap();
        assert!(k_recursion_residual(&p, &n(&[2, 1]), &o).unwrap() < 1e-8);

        let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
        let o = TwoLocusOracle::new(&p, IRoute::Series, SeriesControl::default()).unwrap();
        let s = n(&[1, 1, 1, 0]);
        assert!(k_recursion_residual(&p, &s, &o).unwrap() < 1e-6);

        let bad = Perturbed { inner: o, at: s.clone() };
        assert!(k_recursion_residual(&p, &s, &bad).unwrap() > 1e-3);
        assert!(matches!(
            k_recursion_residual(&p, &n(&[0; 4]), &bad),
            Err(Error::Misuse(_))
        ));
    }

    #[test]
    fn perturbing_a_neighbour_is_detected() {
        let p = single_locus_params([0.5, 0.5], [1.0, 0.0]).unwrap();
        let o = SingleLocusOracle::new(&p, SeriesControl::default()).unwrap();
        let bad = Perturbed { inner: o, at: n(&[1, 1]) };
        assert!(k_recursion_residual(&p, &n(&[2, 1]), &bad).unwrap() > 1e-3);
    }
}
