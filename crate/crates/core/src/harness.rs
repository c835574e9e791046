//! Checks of the duality: exactly at the level of generators, and by Monte
//! Carlo at the level of expectations.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{simulate_endpoint_pair, SdeConfig};
use crate::dual::{dual_rates, gillespie_endpoint, RateEvent, StopReason};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::kfun::KOracle;
use crate::model::{generator_on_monomial, monomial, DualState, FrequencyState, ModelParams};
use crate::stats::{mean_se, Estimate};

/// Duality function `F(x, n) = prod x^n / k(n)`.
pub fn f_eval(x: &FrequencyState, n: &DualState, oracle: &dyn KOracle) -> Result<f64> {
    f_raw(x.as_slice(), n, oracle)
}

fn f_raw(x: &[f64], n: &DualState, oracle: &dyn KOracle) -> Result<f64> {
    if x.len() != n.len() {
        return Err(Error::param(format!(
            "state has length {} but counts have length {}",
            x.len(),
            n.len()
        )));
    }
    if n.is_zero() {
        return Ok(1.0);
    }
    let m = monomial(x, n.as_slice());
    if m == 0.0 {
        return Ok(0.0);
    }
    Ok((m.ln() - oracle.ln_k(n)?).exp())
}

fn check_residual_args(params: &ModelParams, x: &FrequencyState, n: &DualState) -> Result<()> {
    if x.len() != params.total() || n.len() != params.total() {
        return Err(Error::param("state or counts do not match the parameters"));
    }
    if !x.is_interior() {
        return Err(Error::param("the generator residual needs an interior state"));
    }
    if n.is_zero() {
        return Err(Error::misuse("the generator residual is trivial at n = 0"));
    }
    Ok(())
}

/// `|L F(., n)(x) - sum_events rate [F(x, target) - F(x, n)]| / max(1, |L F|)`.
pub fn generator_duality_residual(
    params: &ModelParams,
    x: &FrequencyState,
    n: &DualState,
    oracle: &dyn KOracle,
) -> Result<f64> {
    check_residual_args(params, x, n)?;
    let events = dual_rates(params, n, oracle)?;
    generator_residual_with_events(params, x, n, oracle, &events)
}

/// As [`generator_duality_residual`], with the jump rates supplied.
pub fn generator_residual_with_events(
    params: &ModelParams,
    x: &FrequencyState,
    n: &DualState,
    oracle: &dyn KOracle,
    events: &[RateEvent],
) -> Result<f64> {
    check_residual_args(params, x, n)?;
    let f_n = f_eval(x, n, oracle)?;
    let lhs = generator_on_monomial(params, x, n)? * (-oracle.ln_k(n)?).exp();
    let mut rhs = 0.0;
    for e in events {
        rhs += e.rate * (f_eval(x, &e.target, oracle)? - f_n);
    }
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

/// Settings for the Monte Carlo expectation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCheckConfig {
    pub horizon: f64,
    pub replicates: usize,
    /// Dual paths whose lineage count exceeds this are dropped.
    pub cap: u32,
    /// Pass threshold on the combined z-score.
    pub z_tol: f64,
    /// Largest allowed shift under step halving, in standard errors.
    pub halving_tol: f64,
    pub seed: u64,
}

impl McCheckConfig {
    pub fn new(horizon: f64, replicates: usize, seed: u64) -> Self {
        Self {
            horizon,
            replicates,
            cap: 500,
            z_tol: 3.0,
            halving_tol: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResidual {
    pub x: FrequencyState,
    pub n: DualState,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub z_tol: f64,
    pub halving_tol: f64,
}

/// Outcome of [`mc_duality_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub x: FrequencyState,
    pub n: DualState,
    pub horizon: f64,
    pub dt: f64,
    pub oracle: String,
    pub generator_residuals: Vec<GeneratorResidual>,
    /// Diffusion side, `E[F(X(t), n)]`, at step `dt`.
    pub mc_lhs: Estimate,
    /// Dual side, `E[F(x, N(t))]`.
    pub mc_rhs: Estimate,
    pub z_score: f64,
    /// Diffusion side at step `dt / 2` on the same Brownian paths.
    pub lhs_half_step: Estimate,
    /// `|lhs(dt) - lhs(dt/2)| / SE(lhs)`.
    pub halving_shift_se: f64,
    pub capped_paths: usize,
    pub capped_fraction: f64,
    pub warnings: Vec<String>,
    pub verdict: Verdict,
}

impl DualityReport {
    /// Fixed-width summary for terminals.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k:<26}{v}");
        };
        row(&mut s, "oracle", self.oracle.clone());
        row(&mut s, "horizon / dt", format!("{} / {}", self.horizon, self.dt));
        for g in &self.generator_residuals {
            row(&mut s, "generator residual", format!("{:.3e}", g.residual));
        }
        row(&mut s, "diffusion side", format!("{:.6} +- {:.6}", self.mc_lhs.mean, self.mc_lhs.std_error));
        row(&mut s, "dual side", format!("{:.6} +- {:.6}", self.mc_rhs.mean, self.mc_rhs.std_error));
        row(&mut s, "z-score", format!("{:.3} (tol {})", self.z_score, self.verdict.z_tol));
        row(
            &mut s,
            "dt/2 shift",
            format!("{:.3} SE (tol {})", self.halving_shift_se, self.verdict.halving_tol),
        );
        row(
            &mut s,
            "capped dual paths",
            format!("{} ({:.3}%)", self.capped_paths, 100.0 * self.capped_fraction),
        );
        for w in &self.warnings {
            row(&mut s, "warning", w.clone());
        }
        row(&mut s, "verdict", if self.verdict.pass { "PASS".into() } else { "FAIL".into() });
        s
    }
}

/// Compare `E[F(X(t), n) | X(0) = x]` with `E[F(x, N(t)) | N(0) = n]`.
///
/// Diffusion replicates run at `sde.dt` and `sde.dt / 2` on shared Brownian
/// paths; dual replicates use a separate stream family. Dual paths that hit
/// the cap are excluded and counted.
pub fn mc_duality_check(
    params: &ModelParams,
    x: &FrequencyState,
    n: &DualState,
    oracle: &dyn KOracle,
    sde: &SdeConfig,
    cfg: &McCheckConfig,
    exec: Execution,
) -> Result<DualityReport> {
    sde.validate()?;
    if x.len() != params.total() || n.len() != params.total() {
        return Err(Error::param("state or counts do not match the parameters"));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::param(format!("horizon must be positive, got {}", cfg.horizon)));
    }
    if cfg.replicates < 2 {
        return Err(Error::param("need at least two replicates per side"));
    }
    let sde = SdeConfig { seed: cfg.seed, ..*sde };

    let lhs_pairs = try_map_indexed(exec, cfg.replicates, |r| {
        let (coarse, fine) = simulate_endpoint_pair(params, x, cfg.horizon, &sde, r as u64)?;
        Ok((f_raw(&coarse, n, oracle)?, f_raw(&fine, n, oracle)?))
    })?;
    let coarse: Vec<f64> = lhs_pairs.iter().map(|p| p.0).collect();
    let fine: Vec<f64> = lhs_pairs.iter().map(|p| p.1).collect();
    let mc_lhs = mean_se(&coarse);
    let lhs_half_step = mean_se(&fine);

    let dual_seed = cfg.seed ^ 0xD0A1_5EED_0000_0001;
    let rhs_vals = try_map_indexed(exec, cfg.replicates, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(dual_seed);
        rng.set_stream(r as u64);
        let end = gillespie_endpoint(params, n, cfg.horizon, cfg.cap, oracle, &mut rng)?;
        if end.stop == StopReason::Cap {
            return Ok(None);
        }
        Ok(Some(f_eval(x, &end.state, oracle)?))
    })?;
    let capped_paths = rhs_vals.iter().filter(|v| v.is_none()).count();
    let kept: Vec<f64> = rhs_vals.into_iter().flatten().collect();
    let mc_rhs = mean_se(&kept);
    let capped_fraction = capped_paths as f64 / cfg.replicates as f64;

    let mut warnings = Vec::new();
    if capped_fraction > 0.01 {
        warnings.push(format!(
            "{:.2}% of dual paths hit the lineage cap {} and were excluded",
            100.0 * capped_fraction,
            cfg.cap
        ));
    }
    let mut generator_residuals = Vec::new();
    if x.is_interior() && !n.is_zero() {
        generator_residuals.push(GeneratorResidual {
            x: x.clone(),
            n: n.clone(),
            residual: generator_duality_residual(params, x, n, oracle)?,
        });
    }

    let z_score = mc_lhs.z_score(&mc_rhs);
    let shift = (mc_lhs.mean - lhs_half_step.mean).abs();
    let halving_shift_se = if mc_lhs.std_error > 0.0 {
        shift / mc_lhs.std_error
    } else if shift == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let pass = kept.len() >= 2 && z_score < cfg.z_tol && halving_shift_se < cfg.halving_tol;
    Ok(DualityReport {
        x: x.clone(),
        n: n.clone(),
        horizon: cfg.horizon,
        dt: sde.dt,
        oracle: oracle.name().to_string(),
        generator_residuals,
        mc_lhs,
        mc_rhs,
        z_score,
        lhs_half_step,
        halving_shift_se,
        capped_paths,
        capped_fraction,
        warnings,
        verdict: Verdict {
            pass,
            z_tol: cfg.z_tol,
            halving_tol: cfg.halving_tol,
        },
    })
}

/// Settings for [`generator_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub trials: usize,
    /// Largest total count `sum n` drawn.
    pub max_total: u32,
    pub tol: f64,
    pub seed: u64,
    /// If set, the largest rate at each state is multiplied by this factor
    /// before the residual is taken. Used to confirm the check can fail.
    pub perturb_rate: Option<f64>,
}

/// Residuals of the generator identity at random `(x, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub oracle: String,
    pub tol: f64,
    pub perturb_rate: Option<f64>,
    pub residuals: Vec<GeneratorResidual>,
    pub max_residual: f64,
    pub pass: bool,
}

/// Uniform draw on the interior of each simplex, kept `1e-3` from faces.
fn random_interior(params: &ModelParams, rng: &mut ChaCha8Rng) -> FrequencyState {
    use rand::Rng;
    let layout = params.layout();
    let mut x = vec![0.0; layout.total()];
    for l in 0..layout.num_loci() {
        let block = &mut x[layout.range(l)];
        loop {
            let mut sum = 0.0;
            for v in block.iter_mut() {
                *v = -(1.0 - rng.random::<f64>()).ln();
                sum += *v;
            }
            block.iter_mut().for_each(|v| *v /= sum);
            if block.iter().all(|&v| v > 1e-3) {
                break;
            }
        }
    }
    FrequencyState::from_raw(x)
}

/// Generator identity at `trials` random interior states and nonzero counts.
pub fn generator_sweep(
    params: &ModelParams,
    oracle: &dyn KOracle,
    cfg: &SweepConfig,
    exec: Execution,
) -> Result<SweepReport> {
    use rand::Rng;
    if cfg.max_total == 0 || cfg.trials == 0 {
        return Err(Error::param("the sweep needs trials > 0 and max_total > 0"));
    }
    if let Some(f) = cfg.perturb_rate {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::param(format!("perturbation factor must be positive, got {f}")));
        }
    }
    let states: Vec<DualState> = DualState::enumerate(params.layout(), cfg.max_total)
        .into_iter()
        .filter(|s| !s.is_zero())
        .collect();
    let residuals = try_map_indexed(exec, cfg.trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(t as u64);
        let x = random_interior(params, &mut rng);
        let n = states[rng.random_range(0..states.len())].clone();
        let mut events = dual_rates(params, &n, oracle)?;
        if let Some(f) = cfg.perturb_rate {
            if let Some(e) = events.iter_mut().max_by(|a, b| a.rate.total_cmp(&b.rate)) {
                e.rate *= f;
            }
        }
        let residual = generator_residual_with_events(params, &x, &n, oracle, &events)?;
        Ok(GeneratorResidual { x, n, residual })
    })?;
    let max_residual = residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(SweepReport {
        oracle: oracle.name().to_string(),
        tol: cfg.tol,
        perturb_rate: cfg.perturb_rate,
        pass: max_residual < cfg.tol,
        max_residual,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionRow {
    pub n: DualState,
    pub residual: f64,
}

/// The k-recursion residual for every nonzero `n` with `sum n <= max_total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    pub oracle: String,
    pub tol: f64,
    pub rows: Vec<RecursionRow>,
    pub max_residual: f64,
    pub pass: bool,
}

pub fn recursion_table(
    params: &ModelParams,
    oracle: &dyn KOracle,
    max_total: u32,
    tol: f64,
    exec: Execution,
) -> Result<RecursionReport> {
    let states: Vec<DualState> = DualState::enumerate(params.layout(), max_total)
        .into_iter()
        .filter(|s| !s.is_zero())
        .collect();
    let rows = try_map_indexed(exec, states.len(), |i| {
        Ok(RecursionRow {
            n: states[i].clone(),
            residual: crate::kfun::k_recursion_residual(params, &states[i], oracle)?,
        })
    })?;
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(RecursionReport {
        oracle: oracle.name().to_string(),
        tol,
        pass: max_residual < tol,
        max_residual,
        rows,
    })
}
