use super::*;
use crate::kfun::{DirichletOracle, IRoute, SingleLocusOracle, TwoLocusOracle};
use crate::model::{single_locus_params, two_locus_params, Layout, MutationSpec};
use crate::specfun::SeriesControl;
use proptest::prelude::*;

fn n(v: &[u32]) -> DualState {
    DualState::from_raw(v.to_vec())
}

fn single(u: [f64; 2], h: [f64; 2]) -> (ModelParams, SingleLocusOracle) {
    let p = single_locus_params(u, h).unwrap();
    let o = SingleLocusOracle::new(&p, SeriesControl::default()).unwrap();
    (p, o)
}

#[test]
fn zero_state_has_no_events() {
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
    let o = TwoLocusOracle::new(&p, IRoute::Series, SeriesControl::default()).unwrap();
    assert!(dual_rates(&p, &n(&[0; 4]), &o).unwrap().is_empty());
    assert_eq!(q_diag(&p, &n(&[0; 4]), &o).unwrap(), 0.0);
    assert_eq!(q_explicit(&p, &n(&[0; 4])).unwrap(), 0.0);
}

#[test]
fn lone_coalescence_example() {
    let p = single_locus_params([0.5, 0.5], [0.0; 2]).unwrap();
    let o = DirichletOracle::new(&p).unwrap();
    // u = (0.5, 0.5) still allows mutation away from type 1, so restrict to
    // the coalescence event the example describes.
    let ev = dual_rates(&p, &n(&[2, 0]), &o).unwrap();
    let coal: Vec<_> = ev.iter().filter(|e| e.kind == EventKind::Coalescence).collect();
    assert_eq!(coal.len(), 1);
    assert_eq!(coal[0].target, n(&[1, 0]));
    assert!((coal[0].rate - 1.5).abs() < 1e-14);
}

#[test]
fn lone_coalescence_without_mutation_into_state() {
    // With u_2 = 0 nothing can mutate into type 1 lineages from type 2.
    let p = ModelParams::new(
        &[2],
        &[MutationSpec::Matrix(vec![vec![0.0, 0.5], vec![0.0, 0.0]])],
        vec![0.0; 2],
        None,
    )
    .unwrap();
    let t = transitions(&p, &n(&[2, 0])).unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!(t[0].kind, EventKind::Coalescence);
    assert_eq!(t[0].coefficient, 1.0);
}

#[test]
fn double_selection_coefficient() {
    let (j1, j2) = (1.3, 0.4);
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], j1, j2).unwrap();
    for c in [[1, 0, 1, 0], [2, 1, 0, 3], [0, 0, 1, 0]] {
        let s = n(&c);
        let t = transitions(&p, &s).unwrap();
        let total = (c[0] + c[1] + c[2] + c[3]) as f64;
        let find = |j: usize, h: usize| {
            t.iter()
                .find(|t| t.kind == EventKind::DoubleSelection && t.indices.j == Some(j) && t.indices.h == Some(h))
                .map(|t| t.coefficient)
        };
        assert!((find(1, 1).unwrap() - total * j1).abs() < 1e-14);
        assert!((find(0, 0).unwrap() - total * j2).abs() < 1e-14);
        // Mixed labels exclude only the (j, h) entry itself, which is zero here.
        assert!((find(0, 1).unwrap() - total * (j1 + j2)).abs() < 1e-14);
        assert!((find(1, 0).unwrap() - total * (j1 + j2)).abs() < 1e-14);
    }
}

#[test]
fn single_locus_diagonal_example() {
    let (p, o) = single([0.5, 0.5], [1.0, 0.0]);
    let q = q_diag(&p, &n(&[1, 1]), &o).unwrap();
    assert!((q + 3.0).abs() < 1e-10, "{q}");
    assert!(row_sum_residual(&p, &n(&[1, 1]), &o).unwrap() < 1e-8);
}

/// Single-locus, two-allele diagonal written out by hand.
fn hand_diag(u: [f64; 2], h: [f64; 2], c: [u32; 2]) -> f64 {
    let (n1, n2) = (c[0] as f64, c[1] as f64);
    let t = n1 + n2;
    -(t * (t - 1.0) / 2.0 + n1 * u[1] + n2 * u[0] + n2 * h[0] + n1 * h[1])
}

#[test]
fn single_locus_diagonal_identity() {
    for (u, h) in [([0.5, 0.5], [1.0, 0.0]), ([0.2, 0.9], [0.3, 1.4]), ([1.1, 0.4], [0.0, 0.0])] {
        let (p, o) = single(u, h);
        for s in DualState::enumerate(p.layout(), 8) {
            let c = [s.get(0), s.get(1)];
            let want = hand_diag(u, h, c);
            let q = q_diag(&p, &s, &o).unwrap();
            assert!((q - want).abs() <= 1e-10 * want.abs().max(1.0), "{c:?}: {q} vs {want}");
            assert!((q_explicit(&p, &s).unwrap() - want).abs() < 1e-12);
        }
    }
}

#[test]
fn kingman_closed_forms() {
    let layout = Layout::new(&[2, 2]).unwrap();
    for (u1, u2) in [([0.8, 0.8], [0.8, 0.8]), ([0.3, 1.2], [0.55, 0.05])] {
        let p = two_locus_params(u1, u2, 0.0, 0.0).unwrap();
        let o = DirichletOracle::new(&p).unwrap();
        let us = [u1, u2];
        for s in DualState::enumerate(&layout, 8) {
            for e in dual_rates(&p, &s, &o).unwrap() {
                let l = e.indices.l;
                let u = us[l];
                let base = 2 * l;
                let nl = (s.get(base) + s.get(base + 1)) as f64;
                let i = e.indices.i.unwrap();
                let ni = s.get(base + i) as f64;
                let want = match e.kind {
                    EventKind::Coalescence => {
                        ni * (ni - 1.0) / 2.0 * (nl + 2.0 * (u[0] + u[1]) - 1.0) / (ni + 2.0 * u[i] - 1.0)
                    }
                    EventKind::Mutation => {
                        let j = e.indices.j.unwrap();
                        let nj = s.get(base + j) as f64;
                        ni * u[i] * (2.0 * u[j] + nj) / (2.0 * u[i] + ni - 1.0)
                    }
                    k => panic!("unexpected {k} without selection"),
                };
                assert!(((e.rate - want) / want).abs() < 1e-12, "{s:?} {e:?}: want {want}");
            }
        }
    }
}

#[test]
fn explicit_diagonal_matches_exact_oracles() {
    let p = ModelParams::new(
        &[3],
        &[MutationSpec::ParentIndependent(vec![0.3, 0.6, 0.9])],
        vec![0.0; 3],
        None,
    )
    .unwrap();
    let o = DirichletOracle::new(&p).unwrap();
    for s in DualState::enumerate(p.layout(), 5) {
        assert!(row_sum_residual(&p, &s, &o).unwrap() < 1e-12);
    }
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
    let o = TwoLocusOracle::new(&p, IRoute::Series, SeriesControl::default()).unwrap();
    for s in DualState::enumerate(p.layout(), 3) {
        let r = row_sum_residual(&p, &s, &o).unwrap();
        assert!(r < 1e-9, "{s:?} {r} {:?}", dual_rates(&p, &s, &o).unwrap().iter().map(|e| (e.kind, e.rate)).collect::<Vec<_>>());
    }
}

#[test]
fn gillespie_zero_state() {
    let (p, o) = single([0.5, 0.5], [1.0, 0.0]);
    let cfg = GillespieConfig { horizon: 1.0, cap: 10, seed: 1 };
    let path = gillespie_simulate(&p, &n(&[0, 0]), &cfg, &o).unwrap();
    assert_eq!(path.steps.len(), 1);
    assert_eq!(path.stop, StopReason::Absorbed);
}

#[test]
fn gillespie_neutral_kinds_and_determinism() {
    let p = two_locus_params([0.3, 0.6], [0.5, 0.5], 0.0, 0.0).unwrap();
    let o = DirichletOracle::new(&p).unwrap();
    let cfg = GillespieConfig { horizon: 5.0, cap: 50, seed: 42 };
    let a = gillespie_simulate(&p, &n(&[3, 2, 1, 4]), &cfg, &o).unwrap();
    let b = gillespie_simulate(&p, &n(&[3, 2, 1, 4]), &cfg, &o).unwrap();
    assert_eq!(a, b);
    assert!(a.jumps() > 0);
    for s in &a.steps[1..] {
        let e = s.event.as_ref().unwrap();
        assert!(matches!(e.kind, EventKind::Coalescence | EventKind::Mutation));
        assert!(s.time > 0.0 && s.time <= cfg.horizon);
    }
}

#[test]
fn gillespie_truncates_at_cap() {
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], 2.0, 2.0).unwrap();
    let o = TwoLocusOracle::new(&p, IRoute::Series, SeriesControl::default()).unwrap();
    let cfg = GillespieConfig { horizon: 1e6, cap: 3, seed: 7 };
    let path = gillespie_simulate(&p, &n(&[1, 0, 1, 0]), &cfg, &o).unwrap();
    assert_eq!(path.stop, StopReason::Cap);
    assert!(path.final_state().total() > 3);

    let mut out = Vec::new();
    gillespie::write_path(&mut out, &p, &path).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# stop_reason=cap truncated=true"));
    assert_eq!(lines.next().unwrap(), "t,event_kind,l,i,j,r,h,n_1_1,n_1_2,n_2_1,n_2_2");
    assert_eq!(lines.next().unwrap(), "0,start,,,,,,1,0,1,0");
    assert_eq!(lines.count(), path.jumps());
}

#[test]
fn gillespie_rejects_bad_config() {
    let (p, o) = single([0.5, 0.5], [0.0, 0.0]);
    let bad = |h: f64, cap: u32| gillespie_simulate(&p, &n(&[3, 1]), &GillespieConfig { horizon: h, cap, seed: 0 }, &o);
    assert!(matches!(bad(0.0, 10), Err(Error::Param(_))));
    assert!(matches!(bad(1.0, 3), Err(Error::Param(_))));
}

fn arb_params() -> impl Strategy<Value = ModelParams> {
    (
        prop::array::uniform3(0.05f64..1.5),
        prop::array::uniform2(0.05f64..1.5),
        prop::array::uniform5(0.0f64..2.0),
        prop::array::uniform6(0.0f64..1.0),
    )
        .prop_map(|(u1, u2, h, j)| {
            let mut jm = vec![vec![0.0; 5]; 5];
            for k in 0..3 {
                for m in 0..2 {
                    jm[k][3 + m] = j[2 * k + m];
                    jm[3 + m][k] = j[2 * k + m];
                }
            }
            ModelParams::new(
                &[3, 2],
                &[
                    MutationSpec::ParentIndependent(u1.to_vec()),
                    MutationSpec::ParentIndependent(u2.to_vec()),
                ],
                h.to_vec(),
                Some(jm),
            )
            .unwrap()
        })
}

proptest! {
    #[test]
    fn events_respect_conservation(p in arb_params(), c in prop::collection::vec(0u32..4, 5)) {
        let s = DualState::from_raw(c);
        for t in transitions(&p, &s).unwrap() {
            prop_assert!(t.coefficient > 0.0);
            let change = t.target.total() as i64 - s.total() as i64;
            prop_assert_eq!(change, t.kind.size_change() as i64);
            let diff: Vec<i64> = t.target.as_slice().iter().zip(s.as_slice())
                .map(|(&a, &b)| a as i64 - b as i64).collect();
            let layout = p.layout();
            let ix = t.indices;
            let mut want = vec![0i64; 5];
            match t.kind {
                EventKind::Coalescence => want[layout.index(ix.l, ix.i.unwrap())] = -1,
                EventKind::Mutation => {
                    want[layout.index(ix.l, ix.i.unwrap())] = -1;
                    want[layout.index(ix.l, ix.j.unwrap())] = 1;
                }
                EventKind::SingleSelection => want[layout.index(ix.l, ix.j.unwrap())] = 1,
                EventKind::DoubleSelection => {
                    prop_assert!(ix.r.unwrap() > ix.l);
                    want[layout.index(ix.l, ix.j.unwrap())] = 1;
                    want[layout.index(ix.r.unwrap(), ix.h.unwrap())] = 1;
                }
            }
            prop_assert_eq!(diff, want);
        }
    }
}

#[test]
fn row_and_column_exclusion_breaks_row_sums() {
    // Reading the double-selection sum as k != j, m != h gives coefficients
    // that no longer balance the diagonal.
    let (j1, j2) = (2.0, 2.0);
    let p = two_locus_params([0.8, 0.8], [0.8, 0.8], j1, j2).unwrap();
    let o = TwoLocusOracle::new(&p, IRoute::Series, SeriesControl::default()).unwrap();
    let s = n(&[0, 0, 0, 1]);
    let jm = [[j1, 0.0], [0.0, j2]];
    let mut off = 0.0;
    for e in dual_rates(&p, &s, &o).unwrap() {
        let coef = if e.kind == EventKind::DoubleSelection {
            let (j, h) = (e.indices.j.unwrap(), e.indices.h.unwrap());
            s.total() as f64 * jm[1 - j][1 - h]
        } else {
            e.coefficient
        };
        off += coef * e.rate / e.coefficient;
    }
    let q = q_explicit(&p, &s).unwrap();
    assert!(((off + q) / q).abs() > 0.1);
    assert!(row_sum_residual(&p, &s, &o).unwrap() < 1e-12);
}
