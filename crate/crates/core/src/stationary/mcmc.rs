use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ln_target_alr, ReducedState};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::io::write_atomic;
use crate::kfun::positive_pim_rates;
use crate::model::{Layout, ModelParams};
use crate::stats::{batch_means, effective_sample_size, Estimate};

/// Acceptance rates outside this band trigger a tuning warning.
const ACCEPT_BAND: (f64, f64) = (0.1, 0.7);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Samples kept after burn-in and thinning.
    pub count: usize,
    /// Iterations discarded while the proposal scale adapts.
    pub burn_in: usize,
    /// Keep every `thin`-th iteration.
    pub thin: usize,
    pub seed: u64,
    /// Target acceptance rate for the adaptation.
    pub target_accept: f64,
}

impl McmcConfig {
    pub fn new(count: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            count,
            burn_in,
            thin: 1,
            seed,
            target_accept: 0.3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 || self.thin == 0 {
            return Err(Error::param("MCMC needs count > 0 and thin > 0"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::param("target acceptance must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// One chain: kept samples in reduced coordinates plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcRun {
    pub samples: Vec<ReducedState>,
    /// Acceptance rate after burn-in.
    pub acceptance: f64,
    /// Proposal scale in log-ratio coordinates after adaptation.
    pub scale: f64,
    /// Smallest effective sample size over the reduced coordinates.
    pub min_ess: f64,
    pub warnings: Vec<String>,
}

/// Map log-ratio coordinates to full frequencies, block by block.
fn softmax_blocks(layout: &Layout, z: &[f64], x: &mut [f64]) {
    let mut zs = 0;
    for l in 0..layout.num_loci() {
        let r = layout.range(l);
        let k = r.len() - 1;
        let zl = &z[zs..zs + k];
        let top = zl.iter().cloned().fold(0.0f64, f64::max);
        let mut s = (-top).exp();
        for (i, &v) in zl.iter().enumerate() {
            let e = (v - top).exp();
            x[r.start + i] = e;
            s += e;
        }
        x[r.end - 1] = (-top).exp();
        for v in &mut x[r] {
            *v /= s;
        }
        zs += k;
    }
}

fn run_chain(params: &ModelParams, twice_u: &[f64], cfg: &McmcConfig, chain: u64) -> McmcRun {
    let layout = params.layout();
    let dim = layout.reduced_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain);

    let mut z = vec![0.0; dim];
    let mut x = vec![0.0; layout.total()];
    softmax_blocks(layout, &z, &mut x);
    let mut ln_p = ln_target_alr(twice_u, params, &x);
    let mut z_new = z.clone();
    let mut x_new = x.clone();
    // Roughly the optimal random-walk scale for a unit-variance target.
    let mut ln_scale = (2.4 / (dim as f64).sqrt()).ln();

    let mut samples = Vec::with_capacity(cfg.count);
    let mut accepted = 0usize;
    let total = cfg.burn_in + cfg.count * cfg.thin;
    for it in 0..total {
        let scale = ln_scale.exp();
        for (n, o) in z_new.iter_mut().zip(&z) {
            let e: f64 = rng.sample(StandardNormal);
            *n = o + scale * e;
        }
        softmax_blocks(layout, &z_new, &mut x_new);
        let ln_new = ln_target_alr(twice_u, params, &x_new);
        let accept = ln_new.is_finite() && (ln_new - ln_p >= 0.0 || rng.random::<f64>().ln() < ln_new - ln_p);
        if accept {
            std::mem::swap(&mut z, &mut z_new);
            std::mem::swap(&mut x, &mut x_new);
            ln_p = ln_new;
        }
        if it < cfg.burn_in {
            let a = if accept { 1.0 } else { 0.0 };
            ln_scale += (a - cfg.target_accept) / (1.0 + it as f64 / 50.0).powf(0.6);
        } else {
            accepted += accept as usize;
            if (it - cfg.burn_in + 1) % cfg.thin == 0 {
                samples.push(ReducedState::from_full_slice(layout, &x));
            }
        }
    }
    let kept_iters = (total - cfg.burn_in).max(1);
    let acceptance = accepted as f64 / kept_iters as f64;
    let min_ess = (0..dim)
        .map(|d| {
            let series: Vec<f64> = samples.iter().map(|s| s.as_slice()[d]).collect();
            effective_sample_size(&series)
        })
        .fold(f64::INFINITY, f64::min);
    let mut warnings = Vec::new();
    if acceptance < ACCEPT_BAND.0 || acceptance > ACCEPT_BAND.1 {
        warnings.push(format!(
            "chain {chain}: acceptance rate {acceptance:.3} outside [{}, {}] after adaptation",
            ACCEPT_BAND.0, ACCEPT_BAND.1
        ));
    }
    McmcRun {
        samples,
        acceptance,
        scale: ln_scale.exp(),
        min_ess,
        warnings,
    }
}

fn prepare(params: &ModelParams, cfg: &McmcConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let u = positive_pim_rates(params, "the stationary sampler")?;
    Ok(u.into_iter().flatten().map(|v| 2.0 * v).collect())
}

/// Random-walk Metropolis on additive log-ratio coordinates targeting the
/// unnormalized stationary density.
pub fn mcmc_sample(params: &ModelParams, cfg: &McmcConfig) -> Result<McmcRun> {
    let twice_u = prepare(params, cfg)?;
    Ok(run_chain(params, &twice_u, cfg, 0))
}

/// Independent chains `0..chains`, each on its own stream of `cfg.seed`.
pub fn mcmc_chains(params: &ModelParams, cfg: &McmcConfig, chains: usize, exec: Execution) -> Result<Vec<McmcRun>> {
    let twice_u = prepare(params, cfg)?;
    if chains == 0 {
        return Err(Error::param("need at least one chain"));
    }
    try_map_indexed(exec, chains, |c| Ok(run_chain(params, &twice_u, cfg, c as u64)))
}

/// Pooled mean of `f` over chains, with per-chain batch-means errors
/// combined as for independent means.
pub fn pooled_estimate(runs: &[McmcRun], layout: &Layout, f: impl Fn(&[f64]) -> f64) -> Estimate {
    let per: Vec<Estimate> = runs
        .iter()
        .map(|run| {
            let vals: Vec<f64> = run.samples.iter().map(|s| f(&s.expand(layout))).collect();
            batch_means(&vals, 40)
        })
        .collect();
    let count: usize = per.iter().map(|e| e.count).sum();
    let mean = per.iter().map(|e| e.mean * e.count as f64).sum::<f64>() / count as f64;
    let se = per
        .iter()
        .map(|e| (e.std_error * e.count as f64 / count as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    Estimate { mean, std_error: se, count }
}

/// Sampler output as CSV `idx,xbar_1_1,...`.
pub fn write_samples_csv(path: &Path, layout: &Layout, runs: &[McmcRun]) -> io::Result<()> {
    write_atomic(path, |w| write_samples(w, layout, runs))
}

pub(crate) fn write_samples(w: &mut dyn Write, layout: &Layout, runs: &[McmcRun]) -> io::Result<()> {
    let labels: Vec<String> = layout
        .alleles()
        .iter()
        .enumerate()
        .flat_map(|(l, &m)| (0..m - 1).map(move |i| format!("xbar_{}_{}", l + 1, i + 1)))
        .collect();
    if runs.len() > 1 {
        writeln!(w, "idx,chain,{}", labels.join(","))?;
    } else {
        writeln!(w, "idx,{}", labels.join(","))?;
    }
    for (c, run) in runs.iter().enumerate() {
        for (i, s) in run.samples.iter().enumerate() {
            write!(w, "{i}")?;
            if runs.len() > 1 {
                write!(w, ",{c}")?;
            }
            for v in s.as_slice() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
