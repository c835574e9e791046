//! Forward simulation of the coupled Wright-Fisher SDE.

mod streams;

use std::io::{self, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{flat_labels, write_atomic};
use crate::model::{monomial, total_drift_into, DualState, FrequencyState, ModelParams};
use crate::stats::{batch_means, Estimate};

pub use streams::{locus_seed, LocusStreams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler-Maruyama followed by clamp-and-renormalize projection.
    EulerProjected,
    /// Deterministic drift then multinomial resampling of `round(1/dt)` genes.
    JumpChain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Eigenvalues of a covariance block below `eps` are treated as zero.
    pub eps: f64,
}

impl SdeConfig {
    pub fn new(dt: f64, seed: u64) -> Self {
        Self {
            dt,
            scheme: Scheme::EulerProjected,
            seed,
            eps: 1e-12,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!("dt must be positive and finite, got {}", self.dt)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::param(format!("eps must be nonnegative, got {}", self.eps)));
        }
        if self.scheme == Scheme::JumpChain && (1.0 / self.dt).round() < 1.0 {
            return Err(Error::param("the jump chain needs dt <= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<FrequencyState>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv(&self, path: &Path, params: &ModelParams) -> io::Result<()> {
        write_atomic(path, |w| self.write(w, params))
    }

    pub(crate) fn write(&self, w: &mut dyn Write, params: &ModelParams) -> io::Result<()> {
        writeln!(w, "t,{}", flat_labels("x", params.layout().alleles()).join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in x.as_slice() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Reusable buffers for stepping one trajectory.
pub(crate) struct Stepper<'a> {
    params: &'a ModelParams,
    eps: f64,
    drift: Vec<f64>,
    scratch: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(params: &'a ModelParams, eps: f64) -> Self {
        let m = params.total();
        Self {
            params,
            eps,
            drift: vec![0.0; m],
            scratch: vec![0.0; m],
            noise: vec![0.0; m],
        }
    }

    /// Standard normals for one step, one block per locus stream.
    pub(crate) fn draw_noise(&mut self, streams: &mut LocusStreams) {
        let layout = self.params.layout();
        for l in 0..layout.num_loci() {
            let rng = streams.locus(l);
            for v in &mut self.noise[layout.range(l)] {
                *v = StandardNormal.sample(rng);
            }
        }
    }

    pub(crate) fn noise_mut(&mut self) -> &mut [f64] {
        &mut self.noise
    }

    /// One Euler-Maruyama step in place using the staged noise.
    pub(crate) fn euler(&mut self, x: &mut [f64], dt: f64) -> Result<()> {
        total_drift_into(self.params, x, &mut self.drift, &mut self.scratch);
        let layout = self.params.layout();
        let sq = dt.sqrt();
        for l in 0..layout.num_loci() {
            let r = layout.range(l);
            let xl = &x[r.clone()];
            let xi = &self.noise[r.clone()];
            let inc = &mut self.scratch[r.clone()];
            if xl.len() == 2 {
                // Symmetric root of x1 x2 [[1, -1], [-1, 1]].
                let a = (xl[0].max(0.0) * xl[1].max(0.0) / 2.0).sqrt() * (xi[0] - xi[1]);
                inc[0] = a;
                inc[1] = -a;
            } else {
                sym_sqrt_times(xl, xi, self.eps, inc)?;
            }
        }
        for (a, xa) in x.iter_mut().enumerate() {
            *xa += self.drift[a] * dt + self.scratch[a] * sq;
        }
        project(self.params, x);
        Ok(())
    }

    /// One jump-chain step in place.
    pub(crate) fn jump_chain(&mut self, x: &mut [f64], dt: f64, streams: &mut LocusStreams) -> Result<()> {
        total_drift_into(self.params, x, &mut self.drift, &mut self.scratch);
        for (xa, d) in x.iter_mut().zip(&self.drift) {
            *xa += d * dt;
        }
        project(self.params, x);
        let genes = (1.0 / dt).round().max(1.0) as u64;
        let layout = self.params.layout();
        for l in 0..layout.num_loci() {
            let r = layout.range(l);
            let rng = streams.locus(l);
            let mut left = genes;
            let mut mass = 1.0;
            for a in r.clone() {
                let count = if a + 1 == r.end || left == 0 {
                    left
                } else {
                    let p = (x[a] / mass).clamp(0.0, 1.0);
                    let c = Binomial::new(left, p)
                        .map_err(|e| Error::Numeric(format!("binomial draw: {e}")))?
                        .sample(rng);
                    mass -= x[a];
                    c
                };
                left -= count;
                x[a] = count as f64 / genes as f64;
            }
        }
        Ok(())
    }
}

/// `inc = D^{1/2} xi` for `D = diag(x) - x x^T` via a clamped spectral root.
fn sym_sqrt_times(x: &[f64], xi: &[f64], eps: f64, inc: &mut [f64]) -> Result<()> {
    let m = x.len();
    let d = DMatrix::from_fn(m, m, |i, j| x[i] * (if i == j { 1.0 } else { 0.0 } - x[j]));
    let eig = SymmetricEigen::new(d);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("covariance factorization failed at x = {x:?}")));
    }
    let v = &eig.eigenvectors;
    for o in inc.iter_mut() {
        *o = 0.0;
    }
    for k in 0..m {
        let lam = eig.eigenvalues[k];
        if lam <= eps {
            continue;
        }
        let proj: f64 = (0..m).map(|i| v[(i, k)] * xi[i]).sum::<f64>() * lam.sqrt();
        for i in 0..m {
            inc[i] += v[(i, k)] * proj;
        }
    }
    Ok(())
}

/// Clamp negative entries to zero and rescale each locus block to sum 1.
pub(crate) fn project(params: &ModelParams, x: &mut [f64]) {
    let layout = params.layout();
    for l in 0..layout.num_loci() {
        let block = &mut x[layout.range(l)];
        for v in block.iter_mut() {
            if *v < 0.0 || !v.is_finite() {
                *v = 0.0;
            }
        }
        let s: f64 = block.iter().sum();
        if s > 0.0 {
            for v in block.iter_mut() {
                *v /= s;
            }
        } else {
            let u = 1.0 / block.len() as f64;
            block.iter_mut().for_each(|v| *v = u);
        }
    }
}

fn check_start(params: &ModelParams, x: &FrequencyState) -> Result<()> {
    if x.len() != params.total() {
        return Err(Error::param(format!(
            "state has length {}, parameters expect {}",
            x.len(),
            params.total()
        )));
    }
    Ok(())
}

/// One Euler-Maruyama step with projection.
pub fn em_step(
    params: &ModelParams,
    x: &FrequencyState,
    cfg: &SdeConfig,
    streams: &mut LocusStreams,
) -> Result<FrequencyState> {
    cfg.validate()?;
    check_start(params, x)?;
    let mut st = Stepper::new(params, cfg.eps);
    let mut y = x.as_slice().to_vec();
    st.draw_noise(streams);
    st.euler(&mut y, cfg.dt)?;
    Ok(FrequencyState::from_raw(y))
}

/// One step of the configured scheme.
pub fn step(
    params: &ModelParams,
    x: &FrequencyState,
    cfg: &SdeConfig,
    streams: &mut LocusStreams,
) -> Result<FrequencyState> {
    match cfg.scheme {
        Scheme::EulerProjected => em_step(params, x, cfg, streams),
        Scheme::JumpChain => {
            cfg.validate()?;
            check_start(params, x)?;
            let mut st = Stepper::new(params, cfg.eps);
            let mut y = x.as_slice().to_vec();
            st.jump_chain(&mut y, cfg.dt, streams)?;
            Ok(FrequencyState::from_raw(y))
        }
    }
}

/// Step sizes covering `[0, horizon]`: full `dt` steps and a shorter last one.
pub(crate) fn step_sizes(horizon: f64, dt: f64) -> impl Iterator<Item = (f64, f64)> {
    let full = (horizon / dt * (1.0 - 1e-12)).floor() as usize;
    let rest = horizon - full as f64 * dt;
    let extra = rest > dt * 1e-9;
    (0..full + extra as usize).map(move |k| {
        if k < full {
            ((k + 1) as f64 * dt, dt)
        } else {
            (horizon, rest)
        }
    })
}

/// Drive one trajectory, calling `visit(t, x)` after every step.
pub(crate) fn drive(
    params: &ModelParams,
    x: &mut [f64],
    horizon: f64,
    cfg: &SdeConfig,
    streams: &mut LocusStreams,
    mut visit: impl FnMut(f64, &[f64]),
) -> Result<()> {
    let mut st = Stepper::new(params, cfg.eps);
    for (t, h) in step_sizes(horizon, cfg.dt) {
        match cfg.scheme {
            Scheme::EulerProjected => {
                st.draw_noise(streams);
                st.euler(x, h)?;
            }
            Scheme::JumpChain => st.jump_chain(x, h, streams)?,
        }
        visit(t, x);
    }
    Ok(())
}

/// Simulate on `[0, horizon]`, recording every `thin`-th step and the end.
pub fn simulate_path(
    params: &ModelParams,
    x0: &FrequencyState,
    horizon: f64,
    cfg: &SdeConfig,
    thin: usize,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    check_start(params, x0)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::param(format!("horizon must be nonnegative and finite, got {horizon}")));
    }
    let thin = thin.max(1);
    let mut rec = TrajectoryRecord {
        times: vec![0.0],
        states: vec![x0.clone()],
    };
    let mut streams = LocusStreams::new(cfg.seed, 0, params.num_loci());
    let mut x = x0.as_slice().to_vec();
    let mut k = 0;
    let mut last = 0.0;
    drive(params, &mut x, horizon, cfg, &mut streams, |t, x| {
        k += 1;
        last = t;
        if k % thin == 0 {
            rec.times.push(t);
            rec.states.push(FrequencyState::from_raw(x.to_vec()));
        }
    })?;
    if *rec.times.last().expect("nonempty") != last {
        rec.times.push(last);
        rec.states.push(FrequencyState::from_raw(x));
    }
    Ok(rec)
}

/// State at `horizon` for trajectory `traj`.
pub fn simulate_endpoint(
    params: &ModelParams,
    x0: &FrequencyState,
    horizon: f64,
    cfg: &SdeConfig,
    traj: u64,
) -> Result<Vec<f64>> {
    let mut streams = LocusStreams::new(cfg.seed, traj, params.num_loci());
    let mut x = x0.as_slice().to_vec();
    drive(params, &mut x, horizon, cfg, &mut streams, |_, _| {})?;
    Ok(x)
}

/// Endpoints at step `dt` and `dt / 2` driven by the same Brownian path:
/// each coarse increment is the sum of the two fine increments it spans.
pub fn simulate_endpoint_pair(
    params: &ModelParams,
    x0: &FrequencyState,
    horizon: f64,
    cfg: &SdeConfig,
    traj: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if cfg.scheme != Scheme::EulerProjected {
        return Err(Error::Unsupported("coupled step halving needs the Euler scheme".into()));
    }
    let mut streams = LocusStreams::new(cfg.seed, traj, params.num_loci());
    let mut coarse = x0.as_slice().to_vec();
    let mut fine = coarse.clone();
    let mut sc = Stepper::new(params, cfg.eps);
    let mut sf = Stepper::new(params, cfg.eps);
    let mut first = vec![0.0; params.total()];
    for (_, h) in step_sizes(horizon, cfg.dt) {
        sf.draw_noise(&mut streams);
        first.copy_from_slice(sf.noise_mut());
        sf.euler(&mut fine, h / 2.0)?;
        sf.draw_noise(&mut streams);
        for (c, (a, b)) in sc.noise_mut().iter_mut().zip(first.iter().zip(sf.noise_mut().iter())) {
            *c = (a + b) / std::f64::consts::SQRT_2;
        }
        sf.euler(&mut fine, h / 2.0)?;
        sc.euler(&mut coarse, h)?;
    }
    Ok((coarse, fine))
}

/// Time average of `prod x^n` after `burn_in`, with a batch-means error.
pub fn estimate_moment(
    params: &ModelParams,
    n: &DualState,
    burn_in: f64,
    horizon: f64,
    cfg: &SdeConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    if params.parent_independent().is_none() {
        return Err(Error::Unsupported(
            "moment estimation needs parent-independent mutation".into(),
        ));
    }
    if n.len() != params.total() {
        return Err(Error::param(format!(
            "count vector has length {}, expected {}",
            n.len(),
            params.total()
        )));
    }
    if !(burn_in >= 0.0 && horizon > 0.0) {
        return Err(Error::param("need burn_in >= 0 and horizon > 0"));
    }
    if n.is_zero() {
        return Ok(Estimate::exact(1.0));
    }
    let mut streams = LocusStreams::new(cfg.seed, 0, params.num_loci());
    let mut x = FrequencyState::uniform(params.layout()).into_vec();
    drive(params, &mut x, burn_in, cfg, &mut streams, |_, _| {})?;
    let mut values = Vec::with_capacity((horizon / cfg.dt) as usize + 1);
    drive(params, &mut x, horizon, cfg, &mut streams, |_, x| {
        values.push(monomial(x, n.as_slice()));
    })?;
    Ok(batch_means(&values, 50))
}
