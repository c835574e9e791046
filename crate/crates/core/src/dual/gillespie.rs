use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{for_each_transition, EventIndices, EventKind, RateEvent};
use crate::error::{Error, Result};
use crate::io::{flat_labels, write_atomic};
use crate::kfun::KOracle;
use crate::model::{DualState, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Reached the time horizon.
    Horizon,
    /// Entered a state with no outgoing transitions.
    Absorbed,
    /// Total lineage count exceeded the cap; the path is truncated.
    Cap,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Horizon => "horizon",
            StopReason::Absorbed => "absorbed",
            StopReason::Cap => "cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GillespieConfig {
    pub horizon: f64,
    /// Largest total lineage count allowed before truncating.
    pub cap: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualStep {
    pub time: f64,
    pub state: DualState,
    /// The jump that led here; `None` for the initial state.
    pub event: Option<RateEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPath {
    pub steps: Vec<DualStep>,
    pub stop: StopReason,
    /// Time at which the simulation stopped.
    pub end_time: f64,
}

impl DualPath {
    pub fn truncated(&self) -> bool {
        self.stop == StopReason::Cap
    }

    pub fn final_state(&self) -> &DualState {
        &self.steps.last().expect("paths hold the initial state").state
    }

    pub fn jumps(&self) -> usize {
        self.steps.len() - 1
    }
}

/// State of the dual at the horizon, without the path.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEndpoint {
    pub state: DualState,
    pub stop: StopReason,
    pub end_time: f64,
    pub jumps: usize,
}

fn validate(n0: &DualState, params: &ModelParams, horizon: f64, cap: u32) -> Result<()> {
    if n0.len() != params.total() {
        return Err(Error::param(format!(
            "initial state has length {}, expected {}",
            n0.len(),
            params.total()
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param(format!("horizon must be positive and finite, got {horizon}")));
    }
    if cap < n0.total() {
        return Err(Error::param(format!(
            "cap {cap} is below the initial lineage count {}",
            n0.total()
        )));
    }
    Ok(())
}

struct Candidate {
    kind: EventKind,
    indices: EventIndices,
    coefficient: f64,
    rate: f64,
    delta: [(usize, i32); 2],
    len: usize,
}

/// Enumerate rates at `n` into `buf`, returning the total.
fn load_rates(params: &ModelParams, n: &DualState, oracle: &dyn KOracle, buf: &mut Vec<Candidate>) -> Result<f64> {
    buf.clear();
    let mut failure = None;
    for_each_transition(params, n.as_slice(), |kind, indices, coefficient, delta| {
        if failure.is_some() {
            return;
        }
        let target = n.shifted(delta).expect("transitions never go negative");
        match oracle.ratio(&target, n) {
            Ok(ratio) => {
                let mut d = [(0, 0); 2];
                d[..delta.len()].copy_from_slice(delta);
                buf.push(Candidate {
                    kind,
                    indices,
                    coefficient,
                    rate: coefficient * ratio,
                    delta: d,
                    len: delta.len(),
                });
            }
            Err(e) => {
                failure = Some(e.context(format!("{kind} event from {:?}", n.as_slice())));
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let total: f64 = buf.iter().map(|c| c.rate).sum();
    if !total.is_finite() {
        return Err(Error::Numeric(format!("total jump rate at {:?} is {total}", n.as_slice())));
    }
    Ok(total)
}

fn pick<'a>(buf: &'a [Candidate], total: f64, rng: &mut impl Rng) -> &'a Candidate {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for c in buf {
        acc += c.rate;
        if target < acc {
            return c;
        }
    }
    // Rounding can leave `target` at the very top.
    buf.iter().rev().find(|c| c.rate > 0.0).expect("total rate is positive")
}

/// Run the jump chain, calling `on_jump` after each jump.
fn run(
    params: &ModelParams,
    n0: &DualState,
    horizon: f64,
    cap: u32,
    oracle: &dyn KOracle,
    rng: &mut impl Rng,
    mut on_jump: impl FnMut(f64, &DualState, &Candidate),
) -> Result<(DualState, StopReason, f64, usize)> {
    validate(n0, params, horizon, cap)?;
    let mut n = n0.clone();
    let mut t = 0.0;
    let mut jumps = 0;
    let mut buf = Vec::new();
    loop {
        let total = load_rates(params, &n, oracle, &mut buf)?;
        if total <= 0.0 {
            return Ok((n, StopReason::Absorbed, t, jumps));
        }
        let wait = -(1.0 - rng.random::<f64>()).ln() / total;
        if t + wait >= horizon {
            return Ok((n, StopReason::Horizon, horizon, jumps));
        }
        t += wait;
        let c = pick(&buf, total, rng);
        let next = n.shifted(&c.delta[..c.len]).expect("transitions never go negative");
        on_jump(t, &n, c);
        n = next;
        jumps += 1;
        if n.total() > cap {
            return Ok((n, StopReason::Cap, t, jumps));
        }
    }
}

/// Simulate one dual path with the standard Gillespie algorithm.
pub fn gillespie_simulate(
    params: &ModelParams,
    n0: &DualState,
    config: &GillespieConfig,
    oracle: &dyn KOracle,
) -> Result<DualPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut steps = vec![DualStep {
        time: 0.0,
        state: n0.clone(),
        event: None,
    }];
    let (_, stop, end_time, _) = run(params, n0, config.horizon, config.cap, oracle, &mut rng, |t, n, c| {
        let target = n.shifted(&c.delta[..c.len]).expect("checked by caller");
        steps.push(DualStep {
            time: t,
            state: target.clone(),
            event: Some(RateEvent {
                kind: c.kind,
                source: n.clone(),
                target,
                rate: c.rate,
                coefficient: c.coefficient,
                indices: c.indices,
            }),
        });
    })?;
    Ok(DualPath { steps, stop, end_time })
}

/// Endpoint of one dual path driven by a caller-supplied generator.
pub fn gillespie_endpoint(
    params: &ModelParams,
    n0: &DualState,
    horizon: f64,
    cap: u32,
    oracle: &dyn KOracle,
    rng: &mut impl Rng,
) -> Result<DualEndpoint> {
    let (state, stop, end_time, jumps) = run(params, n0, horizon, cap, oracle, rng, |_, _, _| {})?;
    Ok(DualEndpoint { state, stop, end_time, jumps })
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| (x + 1).to_string()).unwrap_or_default()
}

/// Write a path as CSV. Labels are one-based; a leading `#` line records
/// how the simulation stopped.
pub fn write_path_csv(path: &Path, params: &ModelParams, dual: &DualPath) -> io::Result<()> {
    write_atomic(path, |w| write_path(w, params, dual))
}

pub(crate) fn write_path(w: &mut dyn Write, params: &ModelParams, dual: &DualPath) -> io::Result<()> {
    writeln!(
        w,
        "# stop_reason={} truncated={} end_time={} jumps={}",
        dual.stop.as_str(),
        dual.truncated(),
        dual.end_time,
        dual.jumps()
    )?;
    let labels = flat_labels("n", params.layout().alleles());
    writeln!(w, "t,event_kind,l,i,j,r,h,{}", labels.join(","))?;
    // The empty process has no events to report.
    if dual.steps.len() == 1 && dual.steps[0].state.is_zero() {
        return Ok(());
    }
    for s in &dual.steps {
        let counts: Vec<String> = s.state.as_slice().iter().map(|c| c.to_string()).collect();
        match &s.event {
            None => writeln!(w, "{},start,,,,,,{}", s.time, counts.join(","))?,
            Some(e) => {
                let ix = e.indices;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    s.time,
                    e.kind,
                    ix.l + 1,
                    opt(ix.i),
                    opt(ix.j),
                    opt(ix.r),
                    opt(ix.h),
                    counts.join(",")
                )?
            }
        }
    }
    Ok(())
}
