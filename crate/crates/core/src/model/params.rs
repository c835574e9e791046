use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability rows and parent-independence detection.
const ROW_TOL: f64 = 1e-12;
/// Absolute tolerance used when checking symmetry of a user supplied `J`.
const SYM_TOL: f64 = 1e-12;

/// Block structure of the concatenated allele vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    alleles: Vec<usize>,
    offsets: Vec<usize>,
}

impl Layout {
    pub fn new(alleles: &[usize]) -> Result<Self> {
        if alleles.is_empty() {
            return Err(Error::param("at least one locus is required"));
        }
        if let Some(l) = alleles.iter().position(|&m| m < 2) {
            return Err(Error::param(format!(
                "locus {} has {} alleles, need at least 2",
                l + 1,
                alleles[l]
            )));
        }
        let mut offsets = Vec::with_capacity(alleles.len() + 1);
        let mut acc = 0;
        for &m in alleles {
            offsets.push(acc);
            acc += m;
        }
        offsets.push(acc);
        Ok(Self {
            alleles: alleles.to_vec(),
            offsets,
        })
    }

    pub fn num_loci(&self) -> usize {
        self.alleles.len()
    }

    /// Allele counts `(M_1, ..., M_L)`.
    pub fn alleles(&self) -> &[usize] {
        &self.alleles
    }

    /// Total number of coordinates `M`.
    pub fn total(&self) -> usize {
        self.offsets[self.alleles.len()]
    }

    /// Dimension of the reduced space, `M - L`.
    pub fn reduced_dim(&self) -> usize {
        self.total() - self.num_loci()
    }

    pub fn range(&self, locus: usize) -> Range<usize> {
        self.offsets[locus]..self.offsets[locus + 1]
    }

    /// Flat index of allele `i` at `locus` (both zero based).
    pub fn index(&self, locus: usize, allele: usize) -> usize {
        debug_assert!(allele < self.alleles[locus]);
        self.offsets[locus] + allele
    }

    /// Inverse of [`Layout::index`].
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let l = self.offsets.partition_point(|&o| o <= flat) - 1;
        (l, flat - self.offsets[l])
    }
}

/// Mutation input for one locus, in any of the accepted presentations.
#[derive(Debug, Clone, PartialEq)]
pub enum MutationSpec {
    /// Rate `theta / 2` and a row-stochastic jump matrix `P`.
    ThetaP { theta: f64, p: Vec<Vec<f64>> },
    /// Full rate matrix `u_ij` (rate of mutation from `i` to `j`).
    Matrix(Vec<Vec<f64>>),
    /// Parent-independent rates `u_j`.
    ParentIndependent(Vec<f64>),
}

/// Normalized per-locus mutation rates.
#[derive(Debug, Clone, PartialEq)]
pub struct LocusMutation {
    /// Row-major `M_l x M_l` matrix with zero diagonal.
    rates: Vec<f64>,
    size: usize,
    parent_independent: Option<Vec<f64>>,
}

impl LocusMutation {
    fn from_spec(spec: &MutationSpec, size: usize, locus: usize) -> Result<Self> {
        let ctx = |msg: String| Error::param(format!("mutation at locus {}: {msg}", locus + 1));
        let mut rates = vec![0.0; size * size];
        match spec {
            MutationSpec::ThetaP { theta, p } => {
                if !(theta.is_finite() && *theta >= 0.0) {
                    return Err(ctx(format!("theta must be finite and >= 0, got {theta}")));
                }
                check_square(p, size).map_err(ctx)?;
                for (i, row) in p.iter().enumerate() {
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_TOL {
                        return Err(ctx(format!("row {} of P sums to {s}, expected 1", i + 1)));
                    }
                    for (j, &pij) in row.iter().enumerate() {
                        if !(pij.is_finite() && pij >= 0.0) {
                            return Err(ctx(format!("P[{}][{}] = {pij} is not a probability", i + 1, j + 1)));
                        }
                        if i != j {
                            rates[i * size + j] = 0.5 * theta * pij;
                        }
                    }
                }
            }
            MutationSpec::Matrix(u) => {
                check_square(u, size).map_err(ctx)?;
                for (i, row) in u.iter().enumerate() {
                    for (j, &uij) in row.iter().enumerate() {
                        if !(uij.is_finite() && uij >= 0.0) {
                            return Err(ctx(format!("u[{}][{}] = {uij} must be finite and >= 0", i + 1, j + 1)));
                        }
                        if i != j {
                            rates[i * size + j] = uij;
                        }
                    }
                }
            }
            MutationSpec::ParentIndependent(u) => {
                if u.len() != size {
                    return Err(ctx(format!("expected {size} rates, got {}", u.len())));
                }
                for (j, &uj) in u.iter().enumerate() {
                    if !(uj.is_finite() && uj >= 0.0) {
                        return Err(ctx(format!("u[{}] = {uj} must be finite and >= 0", j + 1)));
                    }
                }
                for i in 0..size {
                    for j in 0..size {
                        if i != j {
                            rates[i * size + j] = u[j];
                        }
                    }
                }
            }
        }
        let parent_independent = detect_parent_independent(&rates, size);
        Ok(Self {
            rates,
            size,
            parent_independent,
        })
    }

    /// Rate `u_ij` of mutation from allele `i` to allele `j`; zero on the diagonal.
    #[inline]
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.size + to]
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Parent-independent rate vector `u_j`, when the rates have that form.
    pub fn parent_independent(&self) -> Option<&[f64]> {
        self.parent_independent.as_deref()
    }
}

fn check_square(m: &[Vec<f64>], size: usize) -> std::result::Result<(), String> {
    if m.len() != size || m.iter().any(|r| r.len() != size) {
        return Err(format!("expected a {size}x{size} matrix"));
    }
    Ok(())
}

fn detect_parent_independent(rates: &[f64], size: usize) -> Option<Vec<f64>> {
    let mut u = vec![0.0; size];
    for j in 0..size {
        let first = if j == 0 { 1 } else { 0 };
        let reference = rates[first * size + j];
        for i in (0..size).filter(|&i| i != j) {
            if (rates[i * size + j] - reference).abs() > ROW_TOL * (1.0 + reference.abs()) {
                return None;
            }
        }
        u[j] = reference;
    }
    Some(u)
}

/// Static model parameters: layout, mutation, and selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layout: Layout,
    mutation: Vec<LocusMutation>,
    h: Vec<f64>,
    /// Row-major `M x M`.
    j: Vec<f64>,
}

impl ModelParams {
    /// Build and validate. `j` is the full `M x M` interaction matrix given
    /// row by row, or `None` for no pairwise selection.
    pub fn new(
        alleles: &[usize],
        mutation: &[MutationSpec],
        h: Vec<f64>,
        j: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let layout = Layout::new(alleles)?;
        let m = layout.total();
        if mutation.len() != layout.num_loci() {
            return Err(Error::param(format!(
                "expected mutation for {} loci, got {}",
                layout.num_loci(),
                mutation.len()
            )));
        }
        let mutation = mutation
            .iter()
            .enumerate()
            .map(|(l, spec)| LocusMutation::from_spec(spec, alleles[l], l))
            .collect::<Result<Vec<_>>>()?;
        if h.len() != m {
            return Err(Error::param(format!("h has length {}, expected {m}", h.len())));
        }
        if let Some(k) = h.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param(format!("h[{}] = {} must be finite and >= 0", k + 1, h[k])));
        }
        let j = match j {
            None => vec![0.0; m * m],
            Some(rows) => {
                check_square(&rows, m).map_err(|e| Error::param(format!("J: {e}")))?;
                rows.into_iter().flatten().collect()
            }
        };
        let params = Self {
            layout,
            mutation,
            h,
            j,
        };
        params.validate_interaction()?;
        Ok(params)
    }

    fn validate_interaction(&self) -> Result<()> {
        let m = self.layout.total();
        for a in 0..m {
            let (la, ia) = self.layout.locate(a);
            for b in 0..m {
                let v = self.j[a * m + b];
                let (lb, ib) = self.layout.locate(b);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::param(format!(
                        "J^({},{})[{}][{}] = {v} must be finite and >= 0",
                        la + 1, lb + 1, ia + 1, ib + 1
                    )));
                }
                if la == lb && v != 0.0 {
                    return Err(Error::param(format!(
                        "diagonal block J^({0},{0}) must be zero, found {v} at [{1}][{2}]",
                        la + 1, ia + 1, ib + 1
                    )));
                }
                let t = self.j[b * m + a];
                if (v - t).abs() > SYM_TOL * (1.0 + v.abs().max(t.abs())) {
                    return Err(Error::param(format!(
                        "J is not symmetric: J^({},{})[{}][{}] = {v} but the transposed entry is {t}",
                        la + 1, lb + 1, ia + 1, ib + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Read parameters from a JSON document.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: ParamsDoc =
            serde_json::from_str(s).map_err(|e| Error::param(format!("parameter JSON: {e}")))?;
        doc.into_params()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::param(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_loci(&self) -> usize {
        self.layout.num_loci()
    }

    pub fn total(&self) -> usize {
        self.layout.total()
    }

    pub fn mutation(&self, locus: usize) -> &LocusMutation {
        &self.mutation[locus]
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Entry `J_ab` by flat indices.
    #[inline]
    pub fn j(&self, a: usize, b: usize) -> f64 {
        self.j[a * self.layout.total() + b]
    }

    /// Entry `J^(lr)_km` by locus and allele indices.
    #[inline]
    pub fn j_block(&self, l: usize, r: usize, k: usize, m: usize) -> f64 {
        self.j(self.layout.index(l, k), self.layout.index(r, m))
    }

    pub fn has_selection(&self) -> bool {
        self.h.iter().any(|&v| v != 0.0) || self.j.iter().any(|&v| v != 0.0)
    }

    pub fn has_interaction(&self) -> bool {
        self.j.iter().any(|&v| v != 0.0)
    }

    /// Parent-independent rates for every locus, if all loci have that form.
    pub fn parent_independent(&self) -> Option<Vec<&[f64]>> {
        self.mutation.iter().map(|m| m.parent_independent()).collect()
    }

    /// `Some((J1, J2))` when the parameters have the two-locus, two-allele
    /// shape with only the type-1/type-1 and type-2/type-2 interactions and no
    /// single-locus selection.
    pub fn two_locus_shape(&self) -> Option<(f64, f64)> {
        if self.layout.alleles() != [2, 2] || self.h.iter().any(|&v| v != 0.0) {
            return None;
        }
        if self.j_block(0, 1, 0, 1) != 0.0 || self.j_block(0, 1, 1, 0) != 0.0 {
            return None;
        }
        Some((self.j_block(0, 1, 0, 0), self.j_block(0, 1, 1, 1)))
    }

    /// Return a copy with the interaction replaced.
    pub fn with_interaction(&self, j: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = self.clone();
        let m = self.total();
        check_square(&j, m).map_err(|e| Error::param(format!("J: {e}")))?;
        out.j = j.into_iter().flatten().collect();
        out.validate_interaction()?;
        Ok(out)
    }

    /// Parameters for locus `l` alone, with interactions dropped.
    pub fn single_locus(&self, l: usize) -> Self {
        let range = self.layout.range(l);
        let size = range.len();
        Self {
            layout: Layout::new(&[size]).expect("valid locus"),
            mutation: vec![self.mutation[l].clone()],
            h: self.h[range].to_vec(),
            j: vec![0.0; size * size],
        }
    }
}

/// Build a two-locus, two-allele parameter set with parent-independent
/// mutation `u1` (locus 1), `u2` (locus 2) and interaction `J1`, `J2`.
pub fn two_locus_params(u1: [f64; 2], u2: [f64; 2], j1: f64, j2: f64) -> Result<ModelParams> {
    let j = vec![
        vec![0.0, 0.0, j1, 0.0],
        vec![0.0, 0.0, 0.0, j2],
        vec![j1, 0.0, 0.0, 0.0],
        vec![0.0, j2, 0.0, 0.0],
    ];
    ModelParams::new(
        &[2, 2],
        &[
            MutationSpec::ParentIndependent(u1.to_vec()),
            MutationSpec::ParentIndependent(u2.to_vec()),
        ],
        vec![0.0; 4],
        Some(j),
    )
}

/// Single-locus, two-allele parameters with parent-independent mutation.
pub fn single_locus_params(u: [f64; 2], h: [f64; 2]) -> Result<ModelParams> {
    ModelParams::new(
        &[2],
        &[MutationSpec::ParentIndependent(u.to_vec())],
        h.to_vec(),
        None,
    )
}

// JSON document layout.

#[derive(Debug, Serialize, Deserialize)]
struct ParamsDoc {
    loci: Vec<usize>,
    mutation: Vec<MutationDoc>,
    #[serde(default)]
    h: Option<Vec<f64>>,
    #[serde(default, rename = "J")]
    j: Vec<JBlockDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum MutationDoc {
    ThetaP {
        theta: ThetaDoc,
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
    },
    Rates {
        u: RatesDoc,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ThetaDoc {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RatesDoc {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

/// One block `J^(lr)`, loci numbered from 1.
#[derive(Debug, Serialize, Deserialize)]
struct JBlockDoc {
    l: usize,
    r: usize,
    matrix: Vec<Vec<f64>>,
}

impl ParamsDoc {
    fn into_params(self) -> Result<ModelParams> {
        let layout = Layout::new(&self.loci)?;
        let m = layout.total();
        let mutation = self
            .mutation
            .into_iter()
            .enumerate()
            .map(|(l, doc)| match doc {
                MutationDoc::ThetaP { theta, p } => {
                    let theta = match theta {
                        ThetaDoc::Scalar(t) => t,
                        ThetaDoc::List(v) if v.len() == 1 => v[0],
                        ThetaDoc::List(v) => {
                            return Err(Error::param(format!(
                                "mutation at locus {}: theta must be a single value, got {} values",
                                l + 1,
                                v.len()
                            )))
                        }
                    };
                    Ok(MutationSpec::ThetaP { theta, p })
                }
                MutationDoc::Rates { u: RatesDoc::Vector(u) } => Ok(MutationSpec::ParentIndependent(u)),
                MutationDoc::Rates { u: RatesDoc::Matrix(u) } => Ok(MutationSpec::Matrix(u)),
            })
            .collect::<Result<Vec<_>>>()?;
        let h = self.h.unwrap_or_else(|| vec![0.0; m]);

        let n_loci = layout.num_loci();
        let mut given = vec![false; n_loci * n_loci];
        for block in &self.j {
            if block.l == 0 || block.r == 0 || block.l > n_loci || block.r > n_loci {
                return Err(Error::param(format!(
                    "J block ({}, {}) out of range: loci are numbered 1..={n_loci}",
                    block.l, block.r
                )));
            }
            let (l, r) = (block.l - 1, block.r - 1);
            let (ml, mr) = (layout.alleles()[l], layout.alleles()[r]);
            if block.matrix.len() != ml || block.matrix.iter().any(|row| row.len() != mr) {
                return Err(Error::param(format!(
                    "J block ({}, {}) must be {ml}x{mr}",
                    block.l, block.r
                )));
            }
            if std::mem::replace(&mut given[l * n_loci + r], true) {
                return Err(Error::param(format!("J block ({}, {}) given twice", block.l, block.r)));
            }
        }
        // Explicit blocks first, then transposes of blocks whose partner is absent.
        let mut full = vec![vec![0.0; m]; m];
        for block in &self.j {
            let (l, r) = (block.l - 1, block.r - 1);
            for (k, row) in block.matrix.iter().enumerate() {
                for (q, &v) in row.iter().enumerate() {
                    full[layout.index(l, k)][layout.index(r, q)] = v;
                }
            }
        }
        for block in &self.j {
            let (l, r) = (block.l - 1, block.r - 1);
            if given[r * n_loci + l] {
                continue;
            }
            for (k, row) in block.matrix.iter().enumerate() {
                for (q, &v) in row.iter().enumerate() {
                    full[layout.index(r, q)][layout.index(l, k)] = v;
                }
            }
        }
        ModelParams::new(&self.loci, &mutation, h, Some(full))
    }
}
