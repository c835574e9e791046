use serde::{Deserialize, Serialize};

use super::params::Layout;
use crate::error::{Error, Result};

/// Tolerance on per-locus sums of a frequency state.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Allele frequencies: one probability vector per locus, concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyState(Vec<f64>);

impl FrequencyState {
    /// Validate `x` against `layout`. Inputs off the simplex are rejected, not
    /// renormalized.
    pub fn new(layout: &Layout, x: Vec<f64>) -> Result<Self> {
        if x.len() != layout.total() {
            return Err(Error::param(format!(
                "frequency vector has length {}, expected {}",
                x.len(),
                layout.total()
            )));
        }
        if let Some(k) = x.iter().position(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::param(format!("frequency x[{}] = {} is outside [0, 1]", k + 1, x[k])));
        }
        for l in 0..layout.num_loci() {
            let s: f64 = x[layout.range(l)].iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::param(format!("frequencies at locus {} sum to {s}", l + 1)));
            }
        }
        Ok(Self(x))
    }

    /// Wrap without validation. Callers guarantee the simplex invariants.
    pub(crate) fn from_raw(x: Vec<f64>) -> Self {
        Self(x)
    }

    /// Barycenter of every locus simplex.
    pub fn uniform(layout: &Layout) -> Self {
        let mut x = vec![0.0; layout.total()];
        for l in 0..layout.num_loci() {
            let r = layout.range(l);
            let w = 1.0 / r.len() as f64;
            x[r].fill(w);
        }
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn block<'a>(&'a self, layout: &Layout, locus: usize) -> &'a [f64] {
        &self.0[layout.range(locus)]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every coordinate is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }
}

/// Lineage counts of the dual process, one block per locus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualState(Vec<u32>);

impl DualState {
    pub fn new(layout: &Layout, n: Vec<u32>) -> Result<Self> {
        if n.len() != layout.total() {
            return Err(Error::param(format!(
                "count vector has length {}, expected {}",
                n.len(),
                layout.total()
            )));
        }
        Ok(Self(n))
    }

    #[cfg(test)]
    pub(crate) fn from_raw(n: Vec<u32>) -> Self {
        Self(n)
    }

    pub fn zeros(layout: &Layout) -> Self {
        Self(vec![0; layout.total()])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total lineage count `n = sum_l n^(l)`.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    /// Per-locus total `n^(l)`.
    pub fn locus_total(&self, layout: &Layout, locus: usize) -> u32 {
        self.0[layout.range(locus)].iter().sum()
    }

    pub fn get(&self, flat: usize) -> u32 {
        self.0[flat]
    }

    /// Copy with `delta` added at flat indices; `None` if a count would go negative.
    pub fn shifted(&self, delta: &[(usize, i32)]) -> Option<Self> {
        let mut out = self.0.clone();
        for &(idx, d) in delta {
            let v = out[idx] as i64 + d as i64;
            if v < 0 {
                return None;
            }
            out[idx] = v as u32;
        }
        Some(Self(out))
    }

    /// All states with `len` coordinates and total at most `max_total`, in
    /// lexicographic order.
    pub fn enumerate(layout: &Layout, max_total: u32) -> Vec<Self> {
        let m = layout.total();
        let mut out = Vec::new();
        let mut cur = vec![0u32; m];
        fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<DualState>) {
            if pos == cur.len() {
                out.push(DualState(cur.clone()));
                return;
            }
            for v in 0..=left {
                cur[pos] = v;
                rec(pos + 1, left - v, cur, out);
            }
            cur[pos] = 0;
        }
        rec(0, max_total, &mut cur, &mut out);
        out
    }
}

/// `prod x_i^{n_i}` with `0^0 = 1`.
pub fn monomial(x: &[f64], n: &[u32]) -> f64 {
    x.iter()
        .zip(n)
        .filter(|(_, &e)| e > 0)
        .map(|(&v, &e)| v.powi(e as i32))
        .product()
}
