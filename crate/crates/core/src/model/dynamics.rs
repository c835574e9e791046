//! Drift, diffusion, potential and the generator acting on monomials.

use nalgebra::DMatrix;

use super::params::ModelParams;
use super::state::{DualState, FrequencyState};
use crate::error::{Error, Result};

fn check_len(params: &ModelParams, len: usize, what: &str) -> Result<()> {
    if len != params.total() {
        return Err(Error::param(format!(
            "{what} has length {len}, parameters expect {}",
            params.total()
        )));
    }
    Ok(())
}

fn check_locus(params: &ModelParams, locus: usize) -> Result<()> {
    if locus >= params.num_loci() {
        return Err(Error::param(format!(
            "locus {} out of range (model has {} loci)",
            locus + 1,
            params.num_loci()
        )));
    }
    Ok(())
}

/// Selection potential `V(x) = x.h + x.Jx / 2`.
pub fn potential_v(params: &ModelParams, x: &FrequencyState) -> Result<f64> {
    check_len(params, x.len(), "state")?;
    Ok(potential_raw(params, x.as_slice()))
}

pub(crate) fn potential_raw(params: &ModelParams, x: &[f64]) -> f64 {
    let m = x.len();
    let mut lin = 0.0;
    let mut quad = 0.0;
    for a in 0..m {
        lin += x[a] * params.h()[a];
        let mut row = 0.0;
        for b in 0..m {
            row += params.j(a, b) * x[b];
        }
        quad += x[a] * row;
    }
    lin + 0.5 * quad
}

/// `grad V(x) = h + Jx`.
pub fn grad_v(params: &ModelParams, x: &FrequencyState) -> Result<Vec<f64>> {
    check_len(params, x.len(), "state")?;
    let x = x.as_slice();
    let m = x.len();
    Ok((0..m)
        .map(|a| params.h()[a] + (0..m).map(|b| params.j(a, b) * x[b]).sum::<f64>())
        .collect())
}

/// Mutation drift `mu_i = sum_j (u_ji x_j - u_ij x_i)`, blockwise.
pub fn drift_mu(params: &ModelParams, x: &FrequencyState) -> Result<Vec<f64>> {
    check_len(params, x.len(), "state")?;
    let mut out = vec![0.0; x.len()];
    drift_mu_into(params, x.as_slice(), &mut out);
    Ok(out)
}

pub(crate) fn drift_mu_into(params: &ModelParams, x: &[f64], out: &mut [f64]) {
    let layout = params.layout();
    for l in 0..layout.num_loci() {
        let r = layout.range(l);
        let mu = params.mutation(l);
        let xl = &x[r.clone()];
        for i in 0..xl.len() {
            let mut s = 0.0;
            for j in 0..xl.len() {
                s += mu.rate(j, i) * xl[j] - mu.rate(i, j) * xl[i];
            }
            out[r.start + i] = s;
        }
    }
}

/// Effective single-locus selection at `locus`:
/// `h~_k = h_k + sum_{r != l} sum_m J^(lr)_km x^(r)_m`.
pub fn tilde_h(params: &ModelParams, x: &FrequencyState, locus: usize) -> Result<Vec<f64>> {
    check_len(params, x.len(), "state")?;
    check_locus(params, locus)?;
    let mut out = vec![0.0; params.layout().alleles()[locus]];
    tilde_h_into(params, x.as_slice(), locus, &mut out);
    Ok(out)
}

pub(crate) fn tilde_h_into(params: &ModelParams, x: &[f64], locus: usize, out: &mut [f64]) {
    let layout = params.layout();
    let rl = layout.range(locus);
    for (k, o) in out.iter_mut().enumerate() {
        let a = rl.start + k;
        let mut s = params.h()[a];
        for r in (0..layout.num_loci()).filter(|&r| r != locus) {
            for b in layout.range(r) {
                s += params.j(a, b) * x[b];
            }
        }
        *o = s;
    }
}

/// Wright-Fisher covariance block `d_ij = x_i (delta_ij - x_j)`.
pub fn diffusion_d(params: &ModelParams, x: &FrequencyState, locus: usize) -> Result<DMatrix<f64>> {
    check_len(params, x.len(), "state")?;
    check_locus(params, locus)?;
    let xl = x.block(params.layout(), locus);
    let n = xl.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        xl[i] * (if i == j { 1.0 } else { 0.0 } - xl[j])
    }))
}

/// Interaction drift `g = D grad V`, computed blockwise as `d^(l) h~^(l)`.
pub fn interaction_g(params: &ModelParams, x: &FrequencyState) -> Result<Vec<f64>> {
    check_len(params, x.len(), "state")?;
    let mut out = vec![0.0; x.len()];
    interaction_g_into(params, x.as_slice(), &mut out);
    Ok(out)
}

pub(crate) fn interaction_g_into(params: &ModelParams, x: &[f64], out: &mut [f64]) {
    let layout = params.layout();
    for l in 0..layout.num_loci() {
        let r = layout.range(l);
        // h~ only reads x, so it can be staged in the output block.
        tilde_h_into(params, x, l, &mut out[r.clone()]);
        let xl = &x[r.clone()];
        // sum_k x_i (delta_ik - x_k) h~_k = x_i (h~_i - <x, h~>)
        let mean: f64 = xl.iter().zip(&out[r.clone()]).map(|(a, b)| a * b).sum();
        for (i, &xi) in xl.iter().enumerate() {
            out[r.start + i] = xi * (out[r.start + i] - mean);
        }
    }
}

/// Total drift `mu + g`.
pub(crate) fn total_drift_into(params: &ModelParams, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    drift_mu_into(params, x, out);
    interaction_g_into(params, x, scratch);
    for (o, s) in out.iter_mut().zip(scratch.iter()) {
        *o += s;
    }
}

/// Product of `x_a^{e_a}` where `e = n` with `dec` subtracted at the given
/// flat indices. Returns 0 if an exponent would go negative.
fn reduced_monomial(x: &[f64], n: &[u32], dec: &[usize]) -> f64 {
    let mut p = 1.0;
    for (a, (&xa, &na)) in x.iter().zip(n).enumerate() {
        let d = dec.iter().filter(|&&k| k == a).count() as i64;
        let e = na as i64 - d;
        if e < 0 {
            return 0.0;
        }
        if e > 0 {
            p *= xa.powi(e as i32);
        }
    }
    p
}

/// Apply the diffusion generator to the raw monomial `prod x^n` at `x`.
///
/// Derivatives are taken analytically as lower-order monomials, so zero
/// coordinates need no special treatment: a factor with zero exponent never
/// produces a `1/x` term.
pub fn generator_on_monomial(params: &ModelParams, x: &FrequencyState, n: &DualState) -> Result<f64> {
    check_len(params, x.len(), "state")?;
    check_len(params, n.len(), "count vector")?;
    Ok(generator_on_monomial_raw(params, x.as_slice(), n.as_slice()))
}

pub(crate) fn generator_on_monomial_raw(params: &ModelParams, x: &[f64], n: &[u32]) -> f64 {
    if n.iter().all(|&v| v == 0) {
        return 0.0;
    }
    let m = x.len();
    let mut drift = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    total_drift_into(params, x, &mut drift, &mut scratch);

    let layout = params.layout();
    let mut total = 0.0;
    for l in 0..layout.num_loci() {
        let r = layout.range(l);
        for a in r.clone() {
            if n[a] == 0 {
                continue;
            }
            let first = n[a] as f64 * reduced_monomial(x, n, &[a]);
            total += drift[a] * first;
            for b in r.clone() {
                let d_ab = x[a] * (if a == b { 1.0 } else { 0.0 } - x[b]);
                let second = if a == b {
                    if n[a] < 2 {
                        continue;
                    }
                    (n[a] * (n[a] - 1)) as f64 * reduced_monomial(x, n, &[a, a])
                } else {
                    if n[b] == 0 {
                        continue;
                    }
                    (n[a] * n[b]) as f64 * reduced_monomial(x, n, &[a, b])
                };
                total += 0.5 * d_ab * second;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{single_locus_params, two_locus_params, MutationSpec};
    use crate::model::state::monomial;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(params: &ModelParams, x: &[f64]) -> FrequencyState {
        FrequencyState::new(params.layout(), x.to_vec()).unwrap()
    }

    fn random_simplex_point(rng: &mut impl Rng, alleles: &[usize]) -> Vec<f64> {
        let mut x = Vec::new();
        for &m in alleles {
            let raw: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let s: f64 = raw.iter().sum();
            x.extend(raw.iter().map(|v| v / s));
        }
        x
    }

    fn random_params(rng: &mut impl Rng) -> ModelParams {
        let alleles = [2, 3];
        let mutation = [
            MutationSpec::Matrix(vec![vec![0.0, rng.random_range(0.1..1.0)], vec![rng.random_range(0.1..1.0), 0.0]]),
            MutationSpec::Matrix(
                (0..3).map(|i| (0..3).map(|j| if i == j { 0.0 } else { rng.random_range(0.1..1.0) }).collect()).collect(),
            ),
        ];
        let h: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut j = vec![vec![0.0; 5]; 5];
        for a in 0..2 {
            for b in 2..5 {
                let v = rng.random_range(0.0..2.0);
                j[a][b] = v;
                j[b][a] = v;
            }
        }
        ModelParams::new(&alleles, &mutation, h, Some(j)).unwrap()
    }

    #[test]
    fn potential_examples() {
        let p = two_locus_params([0.5, 0.5], [0.5, 0.5], 0.0, 0.0).unwrap();
        assert_eq!(potential_v(&p, &state(&p, &[0.3, 0.7, 0.6, 0.4])).unwrap(), 0.0);

        let p = two_locus_params([0.5, 0.5], [0.5, 0.5], 1.0, 0.0).unwrap();
        assert_eq!(potential_v(&p, &state(&p, &[1.0, 0.0, 1.0, 0.0])).unwrap(), 1.0);

        let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
        let v = potential_v(&p, &state(&p, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grad_examples() {
        let p = single_locus_params([0.5, 0.5], [0.3, 1.2]).unwrap();
        assert_eq!(grad_v(&p, &state(&p, &[0.2, 0.8])).unwrap(), vec![0.3, 1.2]);

        let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
        let g = grad_v(&p, &state(&p, &[0.5, 0.5, 1.0, 0.0])).unwrap();
        assert_eq!(&g[..2], &[2.0, 0.0]);
    }

    #[test]
    fn grad_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let x = random_simplex_point(&mut rng, &[2, 3]);
            let g = grad_v(&p, &state(&p, &x)).unwrap();
            let step = 1e-5;
            for a in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[a] += step;
                xm[a] -= step;
                let fd = (potential_raw(&p, &xp) - potential_raw(&p, &xm)) / (2.0 * step);
                assert!((fd - g[a]).abs() <= 1e-6 * g[a].abs().max(1.0), "{fd} vs {}", g[a]);
            }
        }
    }

    #[test]
    fn drift_examples() {
        let p = single_locus_params([0.5, 0.5], [0.0, 0.0]).unwrap();
        assert_eq!(drift_mu(&p, &state(&p, &[0.5, 0.5])).unwrap(), vec![0.0, 0.0]);
        assert_eq!(drift_mu(&p, &state(&p, &[1.0, 0.0])).unwrap(), vec![-0.5, 0.5]);

        let p = ModelParams::new(
            &[2],
            &[MutationSpec::Matrix(vec![vec![0.0, 1.0], vec![0.0, 0.0]])],
            vec![0.0, 0.0],
            None,
        )
        .unwrap();
        assert_eq!(drift_mu(&p, &state(&p, &[0.5, 0.5])).unwrap(), vec![-0.5, 0.5]);
    }

    #[test]
    fn tilde_h_and_g_examples() {
        let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
        let x = state(&p, &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(tilde_h(&p, &x, 0).unwrap(), vec![1.0, 1.0]);
        // Constant h~ gives zero interaction drift.
        assert_eq!(&interaction_g(&p, &x).unwrap()[..2], &[0.0, 0.0]);

        let x = state(&p, &[0.5, 0.5, 1.0, 0.0]);
        assert_eq!(tilde_h(&p, &x, 0).unwrap(), vec![2.0, 0.0]);
        let g = interaction_g(&p, &x).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] + 0.5).abs() < 1e-15);

        let p1 = single_locus_params([0.5, 0.5], [0.7, 0.1]).unwrap();
        let x1 = state(&p1, &[0.3, 0.7]);
        assert_eq!(tilde_h(&p1, &x1, 0).unwrap(), vec![0.7, 0.1]);
        assert!(tilde_h(&p1, &x1, 1).is_err());
    }

    #[test]
    fn g_equals_d_times_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let x = state(&p, &random_simplex_point(&mut rng, &[2, 3]));
            let g = interaction_g(&p, &x).unwrap();
            let grad = grad_v(&p, &x).unwrap();
            for l in 0..2 {
                let d = diffusion_d(&p, &x, l).unwrap();
                let r = p.layout().range(l);
                for (i, a) in r.clone().enumerate() {
                    let dg: f64 = r.clone().enumerate().map(|(k, b)| d[(i, k)] * grad[b]).sum();
                    assert!((dg - g[a]).abs() <= 1e-12 * dg.abs().max(1e-300) + 1e-15, "{dg} vs {}", g[a]);
                }
            }
        }
    }

    #[test]
    fn diffusion_examples_and_psd() {
        let p = single_locus_params([0.5, 0.5], [0.0, 0.0]).unwrap();
        let d = diffusion_d(&p, &state(&p, &[0.5, 0.5]), 0).unwrap();
        assert_eq!(d.as_slice(), &[0.25, -0.25, -0.25, 0.25]);
        let d = diffusion_d(&p, &state(&p, &[1.0, 0.0]), 0).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let q = random_params(&mut rng);
        for _ in 0..1000 {
            let x = state(&q, &random_simplex_point(&mut rng, &[2, 3]));
            for l in 0..2 {
                let d = diffusion_d(&q, &x, l).unwrap();
                assert!((&d - d.transpose()).amax() == 0.0);
                for i in 0..d.nrows() {
                    assert!(d.row(i).sum().abs() < 1e-15);
                }
                let eig = d.symmetric_eigenvalues();
                assert!(eig.iter().all(|&e| e >= -1e-12), "{eig}");
            }
        }
    }

    #[test]
    fn drifts_preserve_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let p = random_params(&mut rng);
            let x = state(&p, &random_simplex_point(&mut rng, &[2, 3]));
            let mu = drift_mu(&p, &x).unwrap();
            let g = interaction_g(&p, &x).unwrap();
            for l in 0..2 {
                let r = p.layout().range(l);
                assert!(mu[r.clone()].iter().sum::<f64>().abs() < 1e-14);
                assert!(g[r].iter().sum::<f64>().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn generator_annihilates_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let p = random_params(&mut rng);
        let x = state(&p, &random_simplex_point(&mut rng, &[2, 3]));
        assert_eq!(generator_on_monomial(&p, &x, &DualState::zeros(p.layout())).unwrap(), 0.0);
    }

    /// Single-locus, two-allele expansion of L m written out term by term
    /// (coalescence, mutation and selection pieces) for comparison.
    fn single_locus_expansion(u: [f64; 2], h: [f64; 2], x: [f64; 2], n: [u32; 2]) -> f64 {
        let m = monomial(&x, &n);
        let nn = (n[0] + n[1]) as f64;
        let opp = |i: usize| 1 - i;
        let mut s = 0.0;
        for i in 0..2 {
            let ni = n[i] as f64;
            s += ni * (ni - 1.0) / 2.0 / x[i] * m;
            s += u[i] * ni * x[opp(i)] / x[i] * m;
            s -= h[i] * (ni + n[opp(i)] as f64) * x[i] * m;
        }
        let diag = nn / 2.0 * (nn - 1.0)
            + (0..2).map(|i| n[i] as f64 * u[opp(i)]).sum::<f64>()
            - (0..2).map(|i| n[i] as f64 * h[i]).sum::<f64>();
        s - diag * m
    }

    #[test]
    fn generator_matches_single_locus_expansion() {
        let (u, h) = ([0.5, 0.5], [1.0, 0.3]);
        let p = single_locus_params(u, h).unwrap();
        let x = [0.3, 0.7];
        let n = [2, 1];
        let got = generator_on_monomial(&p, &state(&p, &x), &DualState::from_raw(n.to_vec())).unwrap();
        let want = single_locus_expansion(u, h, x, n);
        assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");

        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..50 {
            let u = [rng.random_range(0.2..1.5), rng.random_range(0.2..1.5)];
            let h = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
            let a = rng.random_range(0.05..0.95);
            let n = [rng.random_range(0..5), rng.random_range(0..5)];
            let p = single_locus_params(u, h).unwrap();
            let got = generator_on_monomial(&p, &state(&p, &[a, 1.0 - a]), &DualState::from_raw(n.to_vec())).unwrap();
            let want = single_locus_expansion(u, h, [a, 1.0 - a], n);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-3), "{got} vs {want}");
        }
    }

    #[test]
    fn generator_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let step = 1e-4;
        for _ in 0..30 {
            let p = random_params(&mut rng);
            let x = random_simplex_point(&mut rng, &[2, 3]);
            if x.iter().any(|&v| v < 0.02) {
                continue;
            }
            let n: Vec<u32> = (0..5).map(|_| rng.random_range(0..4)).collect();
            let f = |y: &[f64]| monomial(y, &n);
            let mut drift = vec![0.0; 5];
            let mut scratch = vec![0.0; 5];
            total_drift_into(&p, &x, &mut drift, &mut scratch);
            let mut fd = 0.0;
            for l in 0..2 {
                for a in p.layout().range(l) {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[a] += step;
                    xm[a] -= step;
                    fd += drift[a] * (f(&xp) - f(&xm)) / (2.0 * step);
                    for b in p.layout().range(l) {
                        let d_ab = x[a] * (if a == b { 1.0 } else { 0.0 } - x[b]);
                        let mut pp = x.clone();
                        let mut pm = x.clone();
                        let mut mp = x.clone();
                        let mut mm = x.clone();
                        pp[a] += step;
                        pp[b] += step;
                        pm[a] += step;
                        pm[b] -= step;
                        mp[a] -= step;
                        mp[b] += step;
                        mm[a] -= step;
                        mm[b] -= step;
                        let second = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * step * step);
                        fd += 0.5 * d_ab * second;
                    }
                }
            }
            let got = generator_on_monomial(&p, &state(&p, &x), &DualState::from_raw(n.clone())).unwrap();
            assert!((got - fd).abs() <= 1e-5 * got.abs().max(1e-2), "{got} vs {fd} at n={n:?}");
        }
    }

    #[test]
    fn generator_at_boundary_is_finite() {
        let p = single_locus_params([0.5, 0.5], [1.0, 0.0]).unwrap();
        let x = state(&p, &[0.0, 1.0]);
        // m = x1 x2^2: only the drift into allele 1 survives at x1 = 0.
        let v = generator_on_monomial(&p, &x, &DualState::from_raw(vec![1, 2])).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "{v}");
        let v = generator_on_monomial(&p, &x, &DualState::from_raw(vec![0, 2])).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn dimension_mismatch_is_param_error() {
        let p = single_locus_params([0.5, 0.5], [0.0, 0.0]).unwrap();
        let q = two_locus_params([0.5, 0.5], [0.5, 0.5], 0.0, 0.0).unwrap();
        let x = FrequencyState::uniform(q.layout());
        assert!(matches!(potential_v(&p, &x), Err(Error::Param(_))));
        assert!(matches!(grad_v(&p, &x), Err(Error::Param(_))));
        assert!(matches!(drift_mu(&p, &x), Err(Error::Param(_))));
    }
}
