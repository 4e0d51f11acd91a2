mod common;

use common::order;
use proptest::prelude::*;
use rt_core::calculus::{ext_d, vectorize};
use rt_core::corpus::*;
use rt_core::geometry::{regularity_indicator, riemann, transform_curvature, DIAGNOSTIC_WINDOW};
use rt_core::norms::{lp_norm, lp_norm_interior};
use rt_core::rt::{invert_jacobian, run, SolverConfig};
use rt_core::{Grid, MatrixForm};

fn box2(n: usize) -> Grid {
    Grid::cube(2, n, -1.0, 1.0).unwrap()
}

fn spec(kind: CaseKind, n: usize) -> CaseSpec {
    CaseSpec {
        kind,
        seed: 17,
        amplitude: 0.1,
        grid: GridSpec::from(&box2(n)),
        family_size: 3,
        bound_m: 1.5,
        norm_p: 4.0,
    }
}

#[test]
fn flat_case() {
    let g = box2(9);
    let f = gen_flat(&g);
    assert_eq!(f.max_abs(), 0.0);
    assert_eq!(riemann(&f).unwrap().max_abs(), 0.0);
    let sol = run(&f, &[0.0, 0.0], &SolverConfig::default()).unwrap();
    assert_eq!(sol.iterations, 1);
}

#[test]
fn generation_is_deterministic() {
    for kind in [
        CaseKind::Flat,
        CaseKind::PureGauge,
        CaseKind::Manufactured,
        CaseKind::Roughened,
        CaseKind::Family,
    ] {
        let a = generate(&spec(kind, 17)).unwrap();
        let b = generate(&spec(kind, 17)).unwrap();
        assert_eq!(a.connections.len(), b.connections.len());
        for (x, y) in a.connections.iter().zip(&b.connections) {
            assert!(x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
            assert!(x.is_finite());
        }
    }
    let g = box2(17);
    assert_ne!(gen_manufactured(&g, 1, 1.0).sample(&g), gen_manufactured(&g, 2, 1.0).sample(&g));
}

#[test]
fn pure_gauge_is_curl_free_and_flat() {
    let levels = [33, 65, 129];
    let mut es = Vec::new();
    for n in levels {
        let g = box2(n);
        let (gamma, j) = gen_pure_gauge(&g, 5, 0.1).unwrap();
        assert!(ext_d(&vectorize(&j).unwrap()).unwrap().max_abs() < 1e-12);
        es.push(lp_norm_interior(&riemann(&gamma).unwrap(), 4.0, 2).unwrap());
    }
    let hs: Vec<f64> = levels.iter().map(|&n| 2.0 / (n - 1) as f64).collect();
    assert!(order(&hs, &es) >= 0.9, "{es:?}");
}

#[test]
fn pure_gauge_rejects_degenerate_amplitude() {
    let g = box2(17);
    assert!(gen_pure_gauge(&g, 5, 0.05).is_ok());
    assert!(matches!(gen_pure_gauge(&g, 5, 50.0), Err(rt_core::Error::InvalidArgument(_))));
}

#[test]
fn manufactured_d_matches_closed_form() {
    let levels = [17, 33, 65];
    let mut es = Vec::new();
    for n in levels {
        let g = box2(n);
        let m = gen_manufactured(&g, 23, 1.0);
        let d = ext_d(&m.sample(&g)).unwrap();
        es.push(lp_norm(&d.sub(&m.exact_d(&g)).unwrap(), 4.0).unwrap());
    }
    let hs: Vec<f64> = levels.iter().map(|&n| 2.0 / (n - 1) as f64).collect();
    assert!(order(&hs, &es) >= 0.9, "{es:?}");
}

#[test]
fn manufactured_draw_order_is_documented() {
    let g = box2(5);
    let m = gen_manufactured(&g, 3, 1.0);
    let mut rng = rt_core::rng::SplitMix64::new(3);
    let (_, first) = &m.modes[0];
    assert_eq!(m.modes[0].0, (0, 0, 0));
    assert_eq!(first[0].c, rng.symmetric());
    let mm = rng.below(3) as f64;
    assert_eq!(first[0].k[0], std::f64::consts::PI * mm / 2.0);
}

#[test]
fn roughened_is_rough_with_bounded_curvature() {
    let mut rough = Vec::new();
    let mut curv = Vec::new();
    for n in [33, 65, 129] {
        let g = box2(n);
        let r = gen_roughened(&g, 8, 0.6).unwrap();
        assert!(r.min_det > 0.0);
        let c = r.kink;
        let h = g.spacing()[0];
        assert!(((c - g.lo()[0]) / h).fract() > 0.05);
        curv.push(riemann(&r.rough).unwrap());
        rough.push(r.rough);
    }
    let rr = regularity_indicator(&rough, 4.0, DIAGNOSTIC_WINDOW).unwrap();
    let rc = regularity_indicator(&curv, 4.0, 1.0).unwrap();
    assert!(rr.rate > 0.5, "{rr:?}");
    let lp_growth = (rc.lp[2] / rc.lp[0]).log2() / 2.0;
    assert!(lp_growth.abs() < 0.1, "{rc:?}");
}

#[test]
fn roughened_curvature_is_tensorial_off_the_kink() {
    let levels = [33, 65, 129];
    let mut es = Vec::new();
    for n in levels {
        let g = box2(n);
        let r = gen_roughened(&g, 8, 0.6).unwrap();
        let kinv = invert_jacobian(&r.k, 1e-12).unwrap().jinv;
        let mut r_hat = MatrixForm::zeros(&g, 2);
        for p in 0..g.len() {
            let y = [r.map.get(0, 0, p), r.map.get(1, 0, p)];
            for (slot, v) in r.smooth_def.riemann_at(&y).into_iter().enumerate() {
                r_hat.set(slot, 0, p, v);
            }
        }
        let expect = transform_curvature(&r_hat, &r.k, &kinv).unwrap();
        let diff = riemann(&r.rough).unwrap().sub(&expect).unwrap();
        let h = g.spacing()[0];
        let mut masked = MatrixForm::zeros(&g, 2);
        for c in 0..diff.n_components() {
            for p in 0..g.len() {
                if (g.coord(p, 0) - r.kink).abs() > 3.0 * h && g.is_interior(p, 2) {
                    masked.data_mut()[c * g.len() + p] = diff.component(c)[p];
                }
            }
        }
        es.push(lp_norm(&masked, 4.0).unwrap());
    }
    let hs: Vec<f64> = levels.iter().map(|&n| 2.0 / (n - 1) as f64).collect();
    assert!(order(&hs, &es) >= 0.9, "{es:?}");
}

#[test]
fn roughened_with_zero_amplitude_is_smooth() {
    let g = box2(17);
    let r = gen_roughened(&g, 2, 0.0).unwrap();
    assert!(r.rough.sub(&r.smooth).unwrap().max_abs() < 1e-12);
}

#[test]
fn family_members_share_bound() {
    let g = box2(33);
    let fam = gen_family(&g, 4, 1.5, 6, 4.0).unwrap();
    assert_eq!(fam.len(), 6);
    for m in &fam {
        let b = family_bound(m, 4.0).unwrap();
        assert!((b - 1.5).abs() < 1e-12, "{b}");
    }
    let zero = gen_family(&g, 4, 0.0, 2, 4.0).unwrap();
    assert!(zero.iter().all(|m| m.max_abs() == 0.0));
    assert!(gen_family(&g, 4, 1.0, 1, 4.0).is_err());
}

#[test]
fn spec_validation_and_serde() {
    let mut s = spec(CaseKind::Family, 9);
    s.family_size = 1;
    assert!(s.validate().is_err());
    let mut s = spec(CaseKind::Manufactured, 9);
    s.amplitude = -1.0;
    assert!(s.validate().is_err());
    let s = spec(CaseKind::Roughened, 9);
    let json = serde_json::to_string(&s).unwrap();
    assert!(json.contains("\"roughened\""));
    let back: CaseSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generators_are_finite(seed in 0u64..u64::MAX, amp in 0.0f64..0.1) {
        let g = box2(9);
        prop_assert!(gen_manufactured(&g, seed, amp).sample(&g).is_finite());
        prop_assert!(gen_pure_gauge(&g, seed, amp).unwrap().0.is_finite());
        let r = gen_roughened(&g, seed, amp).unwrap();
        prop_assert!(r.rough.is_finite() && r.min_det > 0.0);
    }

    #[test]
    fn manufactured_is_seed_deterministic(seed in 0u64..u64::MAX) {
        let g = box2(7);
        let a = gen_manufactured(&g, seed, 1.0).sample(&g);
        let b = gen_manufactured(&g, seed, 1.0).sample(&g);
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
