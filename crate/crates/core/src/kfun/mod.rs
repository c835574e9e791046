//! Stationary moment function `k(n) = E[prod X~^n]` and its oracles.
//!
//! Every oracle reports `ln k`; ratios are formed by subtracting logarithms so
//! large lineage counts never underflow.

mod dirichlet;
mod monte_carlo;
mod residual;
mod simplex;
mod single_locus;
mod two_locus;

use std::sync::Arc;

use dashmap::DashMap;

use crate::error::{Error, Result};
use crate::model::{DualState, ModelParams};
use crate::specfun::SeriesControl;

pub use dirichlet::DirichletOracle;
pub use monte_carlo::MonteCarloOracle;
pub use residual::k_recursion_residual;
pub use simplex::{QuadControl, SimplexQuadratureOracle};
pub use single_locus::SingleLocusOracle;
pub use two_locus::{i_quadrature, i_series, IRoute, TwoLocusOracle};

/// Source of `k(n)` values.
pub trait KOracle: Send + Sync {
    /// `ln k(n)`.
    fn ln_k(&self, n: &DualState) -> Result<f64>;

    fn k(&self, n: &DualState) -> Result<f64> {
        self.ln_k(n).map(f64::exp)
    }

    /// `k(to) / k(from)`, formed in log space.
    fn ratio(&self, to: &DualState, from: &DualState) -> Result<f64> {
        if to == from {
            return Ok(1.0);
        }
        Ok((self.ln_k(to)? - self.ln_k(from)?).exp())
    }

    fn name(&self) -> &'static str;
}

impl<T: KOracle + ?Sized> KOracle for &T {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        (**self).ln_k(n)
    }
    fn name(&self) -> &'static str {
        (**self).name()
    }
}

impl<T: KOracle + ?Sized> KOracle for Box<T> {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        (**self).ln_k(n)
    }
    fn name(&self) -> &'static str {
        (**self).name()
    }
}

impl<T: KOracle + ?Sized> KOracle for Arc<T> {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        (**self).ln_k(n)
    }
    fn name(&self) -> &'static str {
        (**self).name()
    }
}

/// Memoizing wrapper; safe to share between threads.
pub struct CachedOracle<O> {
    inner: O,
    cache: DashMap<DualState, f64>,
}

impl<O: KOracle> CachedOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            cache: DashMap::new(),
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn cached_states(&self) -> usize {
        self.cache.len()
    }
}

impl<O: KOracle> KOracle for CachedOracle<O> {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        if let Some(v) = self.cache.get(n) {
            return Ok(*v);
        }
        let v = self.inner.ln_k(n)?;
        self.cache.insert(n.clone(), v);
        Ok(v)
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }
}

/// Which oracle to build for a parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    /// Pick the most accurate oracle the parameters support.
    Auto,
    Dirichlet,
    SingleLocus,
    TwoLocus(IRoute),
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

impl OracleKind {
    pub fn label(&self) -> &'static str {
        match self {
            OracleKind::Auto => "auto",
            OracleKind::Dirichlet => "dirichlet",
            OracleKind::SingleLocus => "single",
            OracleKind::TwoLocus(IRoute::Series) => "two-locus",
            OracleKind::TwoLocus(IRoute::Quadrature) => "two-locus-quadrature",
            OracleKind::Quadrature => "quadrature",
            OracleKind::MonteCarlo { .. } => "mc",
        }
    }
}

/// Build a cached oracle of the requested kind.
pub fn build_oracle(params: &ModelParams, kind: OracleKind) -> Result<Arc<dyn KOracle>> {
    let ctrl = SeriesControl::default();
    Ok(match kind {
        OracleKind::Auto => return build_oracle(params, auto_kind(params)?),
        OracleKind::Dirichlet => Arc::new(CachedOracle::new(DirichletOracle::new(params)?)),
        OracleKind::SingleLocus => Arc::new(CachedOracle::new(SingleLocusOracle::new(params, ctrl)?)),
        OracleKind::TwoLocus(route) => {
            Arc::new(CachedOracle::new(TwoLocusOracle::new(params, route, ctrl)?))
        }
        OracleKind::Quadrature => Arc::new(CachedOracle::new(SimplexQuadratureOracle::new(
            params,
            QuadControl::default(),
        )?)),
        OracleKind::MonteCarlo { samples, seed } => {
            Arc::new(CachedOracle::new(MonteCarloOracle::new(params, samples, seed)?))
        }
    })
}

/// Most accurate deterministic oracle for the parameter shape.
pub fn auto_kind(params: &ModelParams) -> Result<OracleKind> {
    if params.parent_independent().is_none() {
        return Err(Error::Unsupported(
            "k has no computable form for parent-dependent mutation".into(),
        ));
    }
    Ok(if !params.has_selection() {
        OracleKind::Dirichlet
    } else if params.layout().alleles() == [2] {
        OracleKind::SingleLocus
    } else if params.two_locus_shape().is_some() {
        OracleKind::TwoLocus(IRoute::Series)
    } else if params.layout().reduced_dim() <= simplex::MAX_REDUCED_DIM {
        OracleKind::Quadrature
    } else {
        OracleKind::MonteCarlo {
            samples: 200_000,
            seed: 0x5eed,
        }
    })
}

/// Parent-independent rates with every entry strictly positive.
pub(crate) fn positive_pim_rates(params: &ModelParams, who: &str) -> Result<Vec<Vec<f64>>> {
    let pi = params
        .parent_independent()
        .ok_or_else(|| Error::misuse(format!("{who} needs parent-independent mutation")))?;
    for (l, u) in pi.iter().enumerate() {
        if let Some(i) = u.iter().position(|&v| v <= 0.0) {
            return Err(Error::misuse(format!(
                "{who} needs positive mutation rates, u[{}] at locus {} is {}",
                i + 1,
                l + 1,
                u[i]
            )));
        }
    }
    Ok(pi.into_iter().map(|u| u.to_vec()).collect())
}

pub(crate) fn check_counts(params: &ModelParams, n: &DualState) -> Result<()> {
    if n.len() != params.total() {
        return Err(Error::param(format!(
            "count vector has length {}, expected {}",
            n.len(),
            params.total()
        )));
    }
    Ok(())
}
