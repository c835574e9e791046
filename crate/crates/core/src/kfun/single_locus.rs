use super::{positive_pim_rates, KOracle};
use crate::error::{Error, Result};
use crate::model::{DualState, ModelParams};
use crate::specfun::{ln_beta, ln_kummer_1f1, SeriesControl};

/// Closed form for one locus with two alleles and selection.
#[derive(Debug, Clone)]
pub struct SingleLocusOracle {
    twice_u: [f64; 2],
    /// `2 (h1 - h2)`.
    z: f64,
    h2: f64,
    ctrl: SeriesControl,
    /// `ln` of the normalizing integral without the `e^{2 h2}` factor.
    ln_z_reduced: f64,
}

impl SingleLocusOracle {
    pub fn new(params: &ModelParams, ctrl: SeriesControl) -> Result<Self> {
        if params.layout().alleles() != [2] {
            return Err(Error::misuse(format!(
                "the single-locus oracle needs one locus with two alleles, got {:?}",
                params.layout().alleles()
            )));
        }
        let u = positive_pim_rates(params, "the single-locus oracle")?;
        let h = params.h();
        let mut o = Self {
            twice_u: [2.0 * u[0][0], 2.0 * u[0][1]],
            z: 2.0 * (h[0] - h[1]),
            h2: h[1],
            ctrl,
            ln_z_reduced: 0.0,
        };
        o.ln_z_reduced = o.ln_integral(0, 0)?;
        Ok(o)
    }

    /// `ln B(a, c) + ln 1F1(a, a + c, z)` with `a = n1 + 2u1`, `c = n2 + 2u2`.
    fn ln_integral(&self, n1: u32, n2: u32) -> Result<f64> {
        let a = n1 as f64 + self.twice_u[0];
        let c = n2 as f64 + self.twice_u[1];
        Ok(ln_beta(a, c)? + ln_kummer_1f1(a, a + c, self.z, self.ctrl)?)
    }

    /// `ln Z` for the density `x^{2u1-1} (1-x)^{2u2-1} e^{2(h1 x + h2 (1-x))}`.
    pub fn ln_normalizer(&self) -> f64 {
        2.0 * self.h2 + self.ln_z_reduced
    }
}

impl KOracle for SingleLocusOracle {
    fn ln_k(&self, n: &DualState) -> Result<f64> {
        if n.len() != 2 {
            return Err(Error::misuse(format!(
                "the single-locus oracle takes two counts, got {}",
                n.len()
            )));
        }
        if n.is_zero() {
            return Ok(0.0);
        }
        Ok(self.ln_integral(n.get(0), n.get(1))? - self.ln_z_reduced)
    }

    fn name(&self) -> &'static str {
        "single-locus"
    }
}
