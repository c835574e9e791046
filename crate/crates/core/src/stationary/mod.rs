//! The stationary density `p = pi e^{2V} / Z` for parent-independent
//! mutation, its normalizing constant, grid export, and an MCMC sampler.

mod mcmc;

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::io::write_atomic;
use crate::kfun::{positive_pim_rates, IRoute, SimplexQuadratureOracle, SingleLocusOracle, TwoLocusOracle};
use crate::kfun::QuadControl;
use crate::model::{potential_raw, FrequencyState, Layout, ModelParams, SIMPLEX_TOL};
use crate::specfun::{ln_gamma_pos, SeriesControl};

pub use mcmc::{mcmc_chains, mcmc_sample, pooled_estimate, write_samples_csv, McmcConfig, McmcRun};

/// Frequencies with the last allele of each locus dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReducedState(Vec<f64>);

impl ReducedState {
    pub fn new(layout: &Layout, xbar: Vec<f64>) -> Result<Self> {
        if xbar.len() != layout.reduced_dim() {
            return Err(Error::param(format!(
                "reduced state has length {}, expected {}",
                xbar.len(),
                layout.reduced_dim()
            )));
        }
        let mut start = 0;
        for (l, &m) in layout.alleles().iter().enumerate() {
            let block = &xbar[start..start + m - 1];
            if block.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::param(format!("locus {} has a negative entry", l + 1)));
            }
            let s: f64 = block.iter().sum();
            if s > 1.0 + SIMPLEX_TOL {
                return Err(Error::param(format!("locus {} entries sum to {s} > 1", l + 1)));
            }
            start += m - 1;
        }
        Ok(Self(xbar))
    }

    #[cfg(test)]
    pub(crate) fn from_raw(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn from_full(layout: &Layout, x: &FrequencyState) -> Self {
        Self::from_full_slice(layout, x.as_slice())
    }

    pub(crate) fn from_full_slice(layout: &Layout, x: &[f64]) -> Self {
        let mut out = Vec::with_capacity(layout.reduced_dim());
        for l in 0..layout.num_loci() {
            let r = layout.range(l);
            out.extend_from_slice(&x[r.start..r.end - 1]);
        }
        Self(out)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Append `1 - block sum` to every locus block.
    pub fn expand(&self, layout: &Layout) -> Vec<f64> {
        let mut out = Vec::with_capacity(layout.total());
        let mut start = 0;
        for &m in layout.alleles() {
            let block = &self.0[start..start + m - 1];
            out.extend_from_slice(block);
            out.push((1.0 - block.iter().sum::<f64>()).max(0.0));
            start += m - 1;
        }
        out
    }
}

fn pim_rates(params: &ModelParams) -> Result<Vec<Vec<f64>>> {
    params
        .parent_independent()
        .map(|u| u.into_iter().map(|v| v.to_vec()).collect())
        .ok_or_else(|| Error::Unsupported("the stationary density needs parent-independent mutation".into()))
}

/// `ln pi` at full coordinates; `+inf` where a zero coordinate meets a
/// negative exponent.
fn ln_pi_full(twice_u: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &xi) in twice_u.iter().zip(x) {
        let e = a - 1.0;
        if e == 0.0 {
            continue;
        }
        if xi == 0.0 {
            if e < 0.0 {
                return f64::INFINITY;
            }
            return f64::NEG_INFINITY;
        }
        s += e * xi.ln();
    }
    s
}

fn check_reduced(params: &ModelParams, xbar: &ReducedState) -> Result<()> {
    if xbar.0.len() != params.layout().reduced_dim() {
        return Err(Error::param(format!(
            "reduced state has length {}, expected {}",
            xbar.0.len(),
            params.layout().reduced_dim()
        )));
    }
    Ok(())
}

/// Product of Dirichlet kernels `prod x_i^{2u_i - 1}` over all loci.
///
/// At a boundary point where a coordinate with exponent below zero vanishes
/// the value is `f64::INFINITY`.
pub fn pi_unnormalized(params: &ModelParams, xbar: &ReducedState) -> Result<f64> {
    check_reduced(params, xbar)?;
    let twice_u: Vec<f64> = pim_rates(params)?.into_iter().flatten().map(|v| 2.0 * v).collect();
    Ok(ln_pi_full(&twice_u, &xbar.expand(params.layout())).exp())
}

/// How `Z` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZRoute {
    Dirichlet,
    SingleLocus,
    TwoLocus,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizingConstant {
    pub ln_z: f64,
    pub route: ZRoute,
}

impl NormalizingConstant {
    pub fn value(&self) -> f64 {
        self.ln_z.exp()
    }
}

/// `Z = int pi e^{2V}` by the most direct route the shape allows.
pub fn normalizing_z(params: &ModelParams) -> Result<NormalizingConstant> {
    let u = positive_pim_rates(params, "the normalizing constant")?;
    let ctrl = SeriesControl::default();
    if !params.has_selection() {
        let ln_z = u
            .iter()
            .map(|ul| {
                let a: Vec<f64> = ul.iter().map(|v| 2.0 * v).collect();
                a.iter().map(|&v| ln_gamma_pos(v)).sum::<f64>() - ln_gamma_pos(a.iter().sum())
            })
            .sum();
        return Ok(NormalizingConstant { ln_z, route: ZRoute::Dirichlet });
    }
    if params.layout().alleles() == [2] {
        let o = SingleLocusOracle::new(params, ctrl)?;
        return Ok(NormalizingConstant { ln_z: o.ln_normalizer(), route: ZRoute::SingleLocus });
    }
    if params.two_locus_shape().is_some() {
        let o = TwoLocusOracle::new(params, IRoute::Series, ctrl)?;
        return Ok(NormalizingConstant { ln_z: o.ln_normalizer(), route: ZRoute::TwoLocus });
    }
    let o = SimplexQuadratureOracle::new(params, QuadControl::default()).map_err(|e| match e {
        Error::Unsupported(m) => Error::Unsupported(format!("no route to Z: {m}")),
        e => e,
    })?;
    Ok(NormalizingConstant { ln_z: o.ln_normalizer(), route: ZRoute::Quadrature })
}

/// Normalized stationary density with `Z` computed once.
#[derive(Debug, Clone)]
pub struct StationaryDensity {
    params: ModelParams,
    twice_u: Vec<f64>,
    z: NormalizingConstant,
}

impl StationaryDensity {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let z = normalizing_z(params)?;
        let twice_u = pim_rates(params)?.into_iter().flatten().map(|v| 2.0 * v).collect();
        Ok(Self { params: params.clone(), twice_u, z })
    }

    pub fn normalizer(&self) -> NormalizingConstant {
        self.z
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// `ln p` at full coordinates.
    pub(crate) fn ln_density_full(&self, x: &[f64]) -> f64 {
        ln_pi_full(&self.twice_u, x) + 2.0 * potential_raw(&self.params, x) - self.z.ln_z
    }

    pub fn ln_density(&self, xbar: &ReducedState) -> Result<f64> {
        check_reduced(&self.params, xbar)?;
        Ok(self.ln_density_full(&xbar.expand(self.params.layout())))
    }

    pub fn density(&self, xbar: &ReducedState) -> Result<f64> {
        self.ln_density(xbar).map(f64::exp)
    }
}

/// Unnormalized log target `sum 2u ln x + 2V` used by samplers working in
/// log-ratio coordinates (the Jacobian is folded in).
pub(crate) fn ln_target_alr(twice_u: &[f64], params: &ModelParams, x: &[f64]) -> f64 {
    let mut s = 2.0 * potential_raw(params, x);
    for (&a, &xi) in twice_u.iter().zip(x) {
        s += a * xi.ln();
    }
    s
}

/// One cell of a density grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub p: f64,
}

/// `R x R` midpoint grid of a two-locus, two-allele density; `x` and `y` are
/// the frequencies of the first allele at each locus. Rows run over `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub resolution: usize,
    pub points: Vec<GridPoint>,
}

impl DensityGrid {
    pub fn at(&self, i: usize, j: usize) -> &GridPoint {
        &self.points[i * self.resolution + j]
    }

    /// Midpoint estimate of the total mass.
    pub fn mass(&self) -> f64 {
        let r = self.resolution as f64;
        self.points.iter().map(|p| p.p).sum::<f64>() / (r * r)
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, |w| self.write(w))
    }

    pub(crate) fn write(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "x,y,p")?;
        for g in &self.points {
            writeln!(w, "{},{},{:e}", g.x, g.y, g.p)?;
        }
        Ok(())
    }
}

fn check_grid_shape(params: &ModelParams, resolution: usize) -> Result<()> {
    if params.layout().alleles() != [2, 2] {
        return Err(Error::misuse(format!(
            "density grids need two loci with two alleles, got {:?}",
            params.layout().alleles()
        )));
    }
    if resolution == 0 {
        return Err(Error::param("grid resolution must be positive"));
    }
    Ok(())
}

/// Rows of midpoint density values, `rows[i][j] = p((i+.5)/R, (j+.5)/R)`.
fn grid_rows(density: &StationaryDensity, resolution: usize, exec: Execution) -> Vec<Vec<f64>> {
    let r = resolution as f64;
    map_indexed(exec, resolution, |i| {
        let x = (i as f64 + 0.5) / r;
        let mut full = [x, 1.0 - x, 0.0, 0.0];
        (0..resolution)
            .map(|j| {
                let y = (j as f64 + 0.5) / r;
                full[2] = y;
                full[3] = 1.0 - y;
                density.ln_density_full(&full).exp()
            })
            .collect()
    })
}

/// Density over the cell midpoints `((i + 0.5)/R, (j + 0.5)/R)`.
pub fn density_grid(params: &ModelParams, resolution: usize, exec: Execution) -> Result<DensityGrid> {
    check_grid_shape(params, resolution)?;
    let density = StationaryDensity::new(params)?;
    let r = resolution as f64;
    let rows = grid_rows(&density, resolution, exec);
    let points = rows
        .into_iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.into_iter().enumerate().map(move |(j, p)| GridPoint {
                x: (i as f64 + 0.5) / r,
                y: (j as f64 + 0.5) / r,
                p,
            })
        })
        .collect();
    Ok(DensityGrid { resolution, points })
}

/// Total mass from successively doubled midpoint grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    /// `(resolution, midpoint sum)` for each level.
    pub levels: Vec<(usize, f64)>,
    /// Richardson extrapolation from the last three levels.
    pub extrapolated: f64,
    /// Observed convergence order of the midpoint sums.
    pub order: f64,
}

/// Integrate the density by midpoint sums on grids `R, 2R, 4R, ...`,
/// stopping once the extrapolated mass moves by less than `tol`.
pub fn integrate_mass(
    params: &ModelParams,
    start: usize,
    max_resolution: usize,
    tol: f64,
    exec: Execution,
) -> Result<MassEstimate> {
    check_grid_shape(params, start)?;
    let density = StationaryDensity::new(params)?;
    let mut levels: Vec<(usize, f64)> = Vec::new();
    let mut prev_extrap: Option<f64> = None;
    let mut r = start;
    loop {
        let rows = grid_rows(&density, r, exec);
        let mass = rows.iter().flatten().sum::<f64>() / (r * r) as f64;
        levels.push((r, mass));
        if levels.len() >= 3 {
            let n = levels.len();
            let (m0, m1, m2) = (levels[n - 3].1, levels[n - 2].1, levels[n - 1].1);
            let (d1, d2) = (m1 - m0, m2 - m1);
            let (extrapolated, order) = if d2 == 0.0 || d1 == 0.0 || d1.signum() != d2.signum() {
                (m2, f64::NAN)
            } else {
                let order = (d1 / d2).log2();
                (m2 + d2 / (2f64.powf(order) - 1.0), order)
            };
            if let Some(p) = prev_extrap {
                if (extrapolated - p).abs() < tol {
                    return Ok(MassEstimate { levels, extrapolated, order });
                }
            }
            prev_extrap = Some(extrapolated);
            if 2 * r > max_resolution {
                return Err(Error::Convergence {
                    what: "midpoint mass refinement",
                    partial: extrapolated,
                    terms: r,
                });
            }
        }
        r *= 2;
    }
}
