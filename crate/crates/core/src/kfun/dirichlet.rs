use super::{positive_pim_rates, KOracle};
use crate::error::{Error, Result};
use crate::model::{DualState, Layout, ModelParams};
use crate::specfun::ln_rising;

/// Product of Dirichlet moments, valid without selection.
#[derive(Debug, Clone)]
pub struct DirichletOracle {
    layout: Layout,
    /// `2 u^(l)` per locus.
    twice_u: Vec<Vec<f64>>,
}

impl DirichletOracle {
    pub fn new(params: &ModelParams) -> Result<Self> {
        if params.has_selection() {
            return Err(Error::misuse(
                "the Dirichlet oracle only applies without selection (h = 0, J = 0)",
            ));
        }
        let u = positive_pim_rates(params, "the Dirichlet oracle")?;
        Ok(Self {
            layout: params.layout().clone(),
            twice_u: u.into_iter().map(|v| v.into_iter().map(|x| 2.0 * x).collect()).collect(),
        })
    }

    fn ln_k_unchecked(&self, n: &[u32]) -> f64 {
        let mut s = 0.0;
        for (l, tu) in self.twice_u.iter().enumerate() {
            let nl = &n[self.layout.range(l)];
            let total: u32 = nl.iter().sum();
            let sum_u: f64 = tu.iter().sum();
            for (&a, &ni) in tu.iter().zip(nl) {
                s += ln_rising(a, ni);
            }
            s -= ln_rising(sum_u, total);
        }
        s
    }
}

impl KOracle for DirichletOracle {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        if n.len() != self.layout.total() {
            return Err(Error::param(format!(
                "count vector has length {}, expected {}",
                n.len(),
                self.layout.total()
            )));
        }
        Ok(self.ln_k_unchecked(n.as_slice()))
    }

    fn name(&self) -> &'static str {
        "dirichlet"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{single_locus_params, two_locus_params, MutationSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn n(v: &[u32]) -> DualState {
        DualState::from_raw(v.to_vec())
    }

    #[test]
    fn examples() {
        let p = single_locus_params([0.5, 0.5], [0.0, 0.0]).unwrap();
        let o = DirichletOracle::new(&p).unwrap();
        assert!((o.k(&n(&[1, 0])).unwrap() - 0.5).abs() < 1e-15);
        assert!((o.k(&n(&[2, 0])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(o.k(&n(&[0, 0])).unwrap(), 1.0);
        assert_eq!(o.ratio(&n(&[2, 1]), &n(&[2, 1])).unwrap(), 1.0);
    }

    #[test]
    fn factorizes_across_loci() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u1 = [rng.random_range(0.2..1.5), rng.random_range(0.2..1.5)];
            let u2 = [rng.random_range(0.2..1.5), rng.random_range(0.2..1.5)];
            let both = DirichletOracle::new(&two_locus_params(u1, u2, 0.0, 0.0).unwrap()).unwrap();
            let one = DirichletOracle::new(&single_locus_params(u1, [0.0; 2]).unwrap()).unwrap();
            let two = DirichletOracle::new(&single_locus_params(u2, [0.0; 2]).unwrap()).unwrap();
            let c: Vec<u32> = (0..4).map(|_| rng.random_range(0..6)).collect();
            let k = both.k(&n(&c)).unwrap();
            let prod = one.k(&n(&c[..2])).unwrap() * two.k(&n(&c[2..])).unwrap();
            assert!(((k - prod) / prod).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_three_allele_moment() {
        // E[X1 X2] under Dirichlet(a) = a1 a2 / (A (A + 1)).
        let p = ModelParams::new(
            &[3],
            &[MutationSpec::ParentIndependent(vec![0.3, 0.6, 0.9])],
            vec![0.0; 3],
            None,
        )
        .unwrap();
        let o = DirichletOracle::new(&p).unwrap();
        let (a1, a2, big) = (0.6, 1.2, 3.6);
        let want = a1 * a2 / (big * (big + 1.0));
        assert!((o.k(&n(&[1, 1, 0])).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn rejects_selection_and_zero_rates() {
        let p = single_locus_params([0.5, 0.5], [1.0, 0.0]).unwrap();
        assert!(matches!(DirichletOracle::new(&p), Err(Error::Misuse(_))));
        let p = single_locus_params([0.5, 0.0], [0.0, 0.0]).unwrap();
        assert!(matches!(DirichletOracle::new(&p), Err(Error::Misuse(_))));
    }
}
