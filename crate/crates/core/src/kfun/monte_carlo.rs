use super::{check_counts, positive_pim_rates, KOracle};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{monomial, DualState, ModelParams};
use crate::stationary::{mcmc_chains, pooled_estimate, McmcConfig, McmcRun};
use crate::stats::Estimate;

const CHAINS: usize = 4;

/// `k` estimated as sample moments of stationary MCMC draws.
#[derive(Debug, Clone)]
pub struct MonteCarloOracle {
    params: ModelParams,
    runs: Vec<McmcRun>,
}

impl MonteCarloOracle {
    /// Draw `samples` states in total, split over four chains.
    pub fn new(params: &ModelParams, samples: usize, seed: u64) -> Result<Self> {
        positive_pim_rates(params, "the Monte Carlo oracle")?;
        let per_chain = samples.div_ceil(CHAINS).max(1);
        let mut cfg = McmcConfig::new(per_chain, 5_000, seed);
        cfg.thin = 2;
        let runs = mcmc_chains(params, &cfg, CHAINS, Execution::default())?;
        Ok(Self { params: params.clone(), runs })
    }

    /// Sample moment with its standard error; exact at `n = 0`.
    pub fn estimate(&self, n: &DualState) -> Result<Estimate> {
        check_counts(&self.params, n)?;
        if n.is_zero() {
            return Ok(Estimate::exact(1.0));
        }
        Ok(pooled_estimate(&self.runs, self.params.layout(), |x| monomial(x, n.as_slice())))
    }

    /// Sampler quality warnings.
    pub fn warnings(&self) -> Vec<String> {
        self.runs.iter().flat_map(|r| r.warnings.iter().cloned()).collect()
    }

    pub fn runs(&self) -> &[McmcRun] {
        &self.runs
    }
}

impl KOracle for MonteCarloOracle {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        let e = self.estimate(n)?;
        if !(e.mean > 0.0) {
            return Err(Error::Numeric(format!("Monte Carlo moment at {:?} is {}", n.as_slice(), e.mean)));
        }
        Ok(e.mean.ln())
    }

    fn name(&self) -> &'static str {
        "monte-carlo"
    }
}
