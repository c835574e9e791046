//! The moment dual: a pure-jump process on lineage counts whose rates are
//! explicit coefficients times ratios of the stationary moment `k`.

mod gillespie;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kfun::KOracle;
use crate::model::{DualState, ModelParams};

pub use gillespie::{
    gillespie_endpoint, gillespie_simulate, write_path_csv, DualEndpoint, DualPath, DualStep,
    GillespieConfig, StopReason,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Coalescence,
    Mutation,
    SingleSelection,
    DoubleSelection,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Coalescence => "coalescence",
            EventKind::Mutation => "mutation",
            EventKind::SingleSelection => "single_selection",
            EventKind::DoubleSelection => "double_selection",
        }
    }

    /// Change in total lineage count.
    pub fn size_change(&self) -> i32 {
        match self {
            EventKind::Coalescence => -1,
            EventKind::Mutation => 0,
            EventKind::SingleSelection => 1,
            EventKind::DoubleSelection => 2,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Zero-based labels of an event.
///
/// Coalescence uses `(l, i)`, mutation `(l, i, j)`, single selection
/// `(l, j)` and double selection `(l, j, r, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventIndices {
    pub l: usize,
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub r: Option<usize>,
    pub h: Option<usize>,
}

/// A transition with its explicit coefficient, before the `k` ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub kind: EventKind,
    pub indices: EventIndices,
    pub target: DualState,
    pub coefficient: f64,
}

/// A transition of the dual with its full rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEvent {
    pub kind: EventKind,
    pub source: DualState,
    pub target: DualState,
    /// `coefficient * k(target) / k(source)`.
    pub rate: f64,
    pub coefficient: f64,
    pub indices: EventIndices,
}

fn check_state(params: &ModelParams, n: &DualState) -> Result<()> {
    if n.len() != params.total() {
        return Err(Error::param(format!(
            "count vector has length {}, expected {}",
            n.len(),
            params.total()
        )));
    }
    Ok(())
}

/// Call `f(kind, indices, coefficient, delta)` for every transition with a
/// positive coefficient. `delta` lists flat index increments.
pub(crate) fn for_each_transition(
    params: &ModelParams,
    n: &[u32],
    mut f: impl FnMut(EventKind, EventIndices, f64, &[(usize, i32)]),
) {
    let layout = params.layout();
    let loci = layout.num_loci();
    let totals: Vec<f64> = (0..loci)
        .map(|l| n[layout.range(l)].iter().sum::<u32>() as f64)
        .collect();

    for l in 0..loci {
        let range = layout.range(l);
        let size = range.len();
        let mutation = params.mutation(l);
        for i in 0..size {
            let a = range.start + i;
            let ni = n[a] as f64;
            if ni >= 2.0 {
                let idx = EventIndices { l, i: Some(i), j: None, r: None, h: None };
                f(EventKind::Coalescence, idx, ni * (ni - 1.0) / 2.0, &[(a, -1)]);
            }
            if ni >= 1.0 {
                for j in (0..size).filter(|&j| j != i) {
                    // Lineage of type i traces back to a mutation from j.
                    let c = ni * mutation.rate(j, i);
                    if c > 0.0 {
                        let idx = EventIndices { l, i: Some(i), j: Some(j), r: None, h: None };
                        f(EventKind::Mutation, idx, c, &[(a, -1), (range.start + j, 1)]);
                    }
                }
            }
        }

        let h = &params.h()[range.clone()];
        let h_sum: f64 = h.iter().sum();
        for j in 0..size {
            let mut c = totals[l] * (h_sum - h[j]);
            for r in (0..loci).filter(|&r| r != l) {
                for (i, b) in layout.range(r).enumerate() {
                    if n[b] > 0 {
                        c += n[b] as f64 * params.j_block(l, r, j, i);
                    }
                }
            }
            if c > 0.0 {
                let idx = EventIndices { l, i: None, j: Some(j), r: None, h: None };
                f(EventKind::SingleSelection, idx, c, &[(range.start + j, 1)]);
            }
        }

        for r in l + 1..loci {
            let pair_total = totals[l] + totals[r];
            if pair_total == 0.0 {
                continue;
            }
            let rr = layout.range(r);
            for j in 0..size {
                for hh in 0..rr.len() {
                    // Sum of J^(lr)_km over every pair (k, m) except (j, h).
                    let mut s = 0.0;
                    for k in 0..size {
                        for m in (0..rr.len()).filter(|&m| (k, m) != (j, hh)) {
                            s += params.j_block(l, r, k, m);
                        }
                    }
                    let c = pair_total * s;
                    if c > 0.0 {
                        let idx = EventIndices { l, i: None, j: Some(j), r: Some(r), h: Some(hh) };
                        f(
                            EventKind::DoubleSelection,
                            idx,
                            c,
                            &[(range.start + j, 1), (rr.start + hh, 1)],
                        );
                    }
                }
            }
        }
    }
}

/// Explicit coefficients of every transition out of `n`.
pub fn transitions(params: &ModelParams, n: &DualState) -> Result<Vec<Transition>> {
    check_state(params, n)?;
    let mut out = Vec::new();
    for_each_transition(params, n.as_slice(), |kind, indices, coefficient, delta| {
        let target = n.shifted(delta).expect("transitions never go negative");
        out.push(Transition { kind, indices, target, coefficient });
    });
    Ok(out)
}

/// All transitions out of `n` with their rates.
pub fn dual_rates(params: &ModelParams, n: &DualState, oracle: &dyn KOracle) -> Result<Vec<RateEvent>> {
    transitions(params, n)?
        .into_iter()
        .map(|t| {
            let ratio = oracle.ratio(&t.target, n).map_err(|e| {
                e.context(format!(
                    "{} event {:?} -> {:?}",
                    t.kind,
                    n.as_slice(),
                    t.target.as_slice()
                ))
            })?;
            Ok(RateEvent {
                kind: t.kind,
                source: n.clone(),
                rate: t.coefficient * ratio,
                target: t.target,
                coefficient: t.coefficient,
                indices: t.indices,
            })
        })
        .collect()
}

/// Diagonal rate, `-(sum of off-diagonal rates)`.
pub fn q_diag(params: &ModelParams, n: &DualState, oracle: &dyn KOracle) -> Result<f64> {
    Ok(-dual_rates(params, n, oracle)?.iter().map(|e| e.rate).sum::<f64>())
}

/// The diagonal coefficient read off the generator, independent of `k`:
///
/// `-sum_l [ sum_{i != j} n_i u_ij + n^(l)(n^(l)-1)/2 + sum_i n_i sum_{k != i} h_k
///   + n^(l) sum_{r != l} sum_{k,m} J^(lr)_km ]`.
///
/// For an exact `k` it equals [`q_diag`].
pub fn q_explicit(params: &ModelParams, n: &DualState) -> Result<f64> {
    check_state(params, n)?;
    let layout = params.layout();
    let mut q = 0.0;
    for l in 0..layout.num_loci() {
        let range = layout.range(l);
        let nl = &n.as_slice()[range.clone()];
        let total = nl.iter().sum::<u32>() as f64;
        let mutation = params.mutation(l);
        let h = &params.h()[range.clone()];
        let h_sum: f64 = h.iter().sum();
        q -= total * (total - 1.0) / 2.0;
        for (i, &ni) in nl.iter().enumerate() {
            let ni = ni as f64;
            let out_rate: f64 = (0..nl.len()).filter(|&j| j != i).map(|j| mutation.rate(i, j)).sum();
            q -= ni * (out_rate + h_sum - h[i]);
        }
        for r in (0..layout.num_loci()).filter(|&r| r != l) {
            let mut block = 0.0;
            for k in 0..range.len() {
                for m in 0..layout.alleles()[r] {
                    block += params.j_block(l, r, k, m);
                }
            }
            q -= total * block;
        }
    }
    Ok(q)
}

/// `sum of rates + q_explicit`, relative to `|q_explicit|` (absolute when
/// `q_explicit = 0`). Zero for an exact oracle.
pub(crate) fn row_sum_residual(params: &ModelParams, n: &DualState, oracle: &dyn KOracle) -> Result<f64> {
    let off: f64 = dual_rates(params, n, oracle)?.iter().map(|e| e.rate).sum();
    let q = q_explicit(params, n)?;
    let diff = (off + q).abs();
    Ok(if q == 0.0 { diff } else { diff / q.abs() })
}

#[cfg(test)]
mod tests;
