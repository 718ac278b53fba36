use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;
use crate::matcore::{qc_distortion, GradientMatrix, Mat2};
use crate::rng::sample_rng;

fn small(samples: u64) -> ScanConfig {
    ScanConfig {
        samples,
        seed: 11,
        ..ScanConfig::default()
    }
}

#[test]
fn config_validation() {
    assert!(ScanConfig::default().validate().is_ok());
    for bad in [
        ScanConfig { k: 1.5, ..Default::default() },
        ScanConfig { n: 1, ..Default::default() },
        ScanConfig { samples: 0, ..Default::default() },
        ScanConfig { eps3: 0.0, ..Default::default() },
        ScanConfig { l: f64::NAN, ..Default::default() },
        ScanConfig { c1_grid: vec![], ..Default::default() },
        ScanConfig { c1_grid: vec![1.0, -1.0], ..Default::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
    let tight = ScanConfig { k: 4.0, eps3: 1.0, cap: 1.9, ..Default::default() };
    assert!(tight.validate().is_ok());
    assert!(tight.validate_qc().is_err());
}

#[test]
fn scan_kinds_round_trip_through_names() {
    for k in ScanKind::ALL {
        assert_eq!(k.name().parse::<ScanKind>().unwrap(), k);
    }
    assert!("rank-2".parse::<ScanKind>().is_err());
}

#[test]
fn rank_one_samples() {
    let mut rng = sample_rng(1, 0, 0);
    let zero = rank_one_sample(0.0, 3, &mut rng);
    assert_eq!(zero.norm(), 0.0);
    for i in 0..200 {
        let mut rng = sample_rng(2, 0, i);
        let x = rank_one_sample(2.0, 4, &mut rng);
        let scale = x.norm_squared();
        assert!(x.norm() <= 2.0 * (1.0 + 1e-15));
        assert!(x.max_abs_minor() <= 4.0 * f64::EPSILON * scale, "{}", x.max_abs_minor());
    }
    let a = rank_one_sample(2.0, 2, &mut sample_rng(42, 3, 0));
    let b = rank_one_sample(2.0, 2, &mut sample_rng(42, 3, 0));
    let bits = |m: &GradientMatrix| m.matrix().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn convexity_floor_and_small_norm_limit() {
    for lambda in [0.5, 1.0, 2.0, 4.0] {
        let r = convexity_rank_one_scan(&ScanConfig { lambda_bound: lambda, ..small(20_000) }).unwrap();
        let floor = (1.0 + lambda * lambda).powf(-1.5);
        assert_eq!(r.violation_count, 0);
        assert!(r.constants["min_ratio"] >= floor - 1e-6, "lambda {lambda}: {:?}", r.constants);
        assert!((r.constants["lambda_est"] - 0.5 * r.constants["min_ratio"]).abs() < 1e-15);
    }
    // Near zero the Hessian of A is the identity quadratic form.
    let r = convexity_rank_one_scan(&ScanConfig { lambda_bound: 1e-3, ..small(5_000) }).unwrap();
    let lo = r.constants["min_ratio"];
    let hi = r.constants["max_ratio"];
    assert!(lo >= 0.999 && hi <= 1.001, "{lo} {hi}");
}

#[test]
fn coincident_pairs_are_excluded_not_flagged() {
    let x = GradientMatrix::outer(&[1.0, 2.0], [0.6, 0.8]).unwrap();
    let y = GradientMatrix::outer(&[0.5, -1.0], [1.0, 0.0]).unwrap();
    assert!(convexity_ratio(&x, &x).unwrap().is_none());
    let r = convexity_pairs_report(&[(x.clone(), x.clone()), (x, y)]).unwrap();
    assert_eq!(r.excluded, 1);
    assert_eq!(r.violation_count, 0);
    assert_eq!(r.items["rank1-convexity"].checked, 1);
}

#[test]
fn hessian_margin_examples() {
    let zero = GradientMatrix::zeros(2);
    let w = GradientMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
    let c = hessian_margin(&zero, &w).unwrap();
    assert!((c.value - 1.0).abs() < 1e-7 && c.bound == 1.0 && c.margin.abs() < 1e-7);
    // A(3 + t, 0) = sqrt(1 + (3 + t)^2) has second derivative 10^{-3/2}.
    let x = GradientMatrix::from_rows(&[[3.0, 0.0], [0.0, 0.0]]).unwrap();
    let c = hessian_margin(&x, &w).unwrap();
    let oracle = 10f64.powf(-1.5);
    assert!((c.value - oracle).abs() < 1e-8, "{}", c.value);
    assert!((c.bound - oracle).abs() < 1e-15);
    assert!(c.margin.abs() < 1e-8);
}

#[test]
fn hessian_scan_is_clean() {
    let r = hessian_rank_one_scan(&small(5_000)).unwrap();
    assert_eq!(r.violation_count, 0);
    assert!(r.constants["min_margin"] >= -1e-6);
}

#[test]
fn small_det_at_zero_eps_is_rank_one() {
    let cfg = small(5_000);
    let floor = (1.0f64 + 4.0).powf(-1.5);
    let r = small_det_level(&cfg, floor, 0.0).unwrap();
    assert_eq!(r.violation_count, 0, "{:?}", r.violations.first());
    let mut rng = sample_rng(3, 0, 0);
    for _ in 0..100 {
        let (x, y) = small_det_sample(2.0, 0.0, 3, &mut rng).unwrap();
        assert!(x.max_abs_minor() <= 1e-14 && y.max_abs_minor() <= 1e-14);
    }
}

#[test]
fn small_det_samples_respect_constraints() {
    for eps in [1e-3, 0.1, 4.0] {
        for i in 0..300 {
            let mut rng = sample_rng(5, 1, i);
            let (x, y) = small_det_sample(2.0, eps, 3, &mut rng).unwrap();
            for m in [&x, &y] {
                assert!(m.norm() <= 2.0 + 1e-12);
                assert!(m.max_abs_minor() <= eps * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn small_det_search_brackets_a_violation() {
    let cfg = ScanConfig { bisection_steps: 3, ..small(20_000) };
    let r = run_scan(ScanKind::SmallDet, &cfg).unwrap();
    let eps = r.constants["eps_est"];
    assert!(eps > 0.0);
    assert_eq!(r.violation_count, 0);
    let first = &r.levels["level-00"];
    assert_eq!(first.constants["eps"], 4.0);
    assert!(first.violation_count > 0);
    for v in &first.violations {
        assert!(replay(&cfg, v).unwrap());
        assert!(v.lhs < v.rhs, "{v:?}");
    }
    let again = run_scan(ScanKind::SmallDet, &cfg).unwrap();
    assert_eq!(r.to_json().unwrap(), again.to_json().unwrap());
}

#[test]
fn qc_pairs_satisfy_the_constraints() {
    for i in 0..500 {
        let mut rng = sample_rng(9, 2, i);
        let (x, y) = qc_pair_sample(4.0, 0.5, 10.0, &mut rng).unwrap();
        for m in [x, y] {
            assert!(qc_distortion(&m) <= 4.0 * (1.0 + 1e-12));
            assert!(m.determinant() >= 0.5);
            assert!(m.norm() <= 10.0);
        }
    }
    let mut rng = sample_rng(9, 2, 0);
    for _ in 0..50 {
        let (x, _) = qc_pair_sample(2.0, 0.5, 10.0, &mut rng).unwrap();
        // Conformal: a rotation times a scalar.
        assert!((x[(0, 0)] - x[(1, 1)]).abs() < 1e-9 * x.norm());
        assert!((x[(0, 1)] + x[(1, 0)]).abs() < 1e-9 * x.norm());
    }
    assert!(qc_pair_sample(4.0, 1.0, 1.9, &mut rng).is_err());
    let a = qc_pair_sample(4.0, 0.5, 10.0, &mut sample_rng(1, 1, 1)).unwrap();
    let b = qc_pair_sample(4.0, 0.5, 10.0, &mut sample_rng(1, 1, 1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn orthogonal_split_examples() {
    let y = Mat2::new(1.0, -2.0, 2.0, 1.0);
    let (yo, ye) = orthogonal_split(&y).unwrap();
    assert_eq!(ye, Mat2::zeros());
    assert!((yo - y).norm() < 1e-15);
    let y = Mat2::new(0.3, 1.7, -1.1, 0.4);
    let (yo, ye) = orthogonal_split(&y).unwrap();
    assert!((yo + ye - y).norm() < 1e-12);
    assert!(ye.dot(&yo).abs() < 1e-12);
    for t in [0.0, 0.25, 0.5, 1.0] {
        assert!(((yo + ye * t).determinant() - y.determinant()).abs() < 1e-12);
    }
    assert!(matches!(
        orthogonal_split(&Mat2::new(0.0, 1.0, 0.0, 2.0)),
        Err(crate::Error::Degenerate(_))
    ));
}

#[test]
fn orthogonal_split_scan_is_clean() {
    let r = orthogonal_split_scan(20_000, 4, 1e-12).unwrap();
    assert_eq!(r.violation_count, 0, "{:?}", r.violations.first());
    assert_eq!(r.items["reconstruction"].checked + r.items["reconstruction"].skipped, 20_000);
}

#[test]
fn reduction_to_m0_examples() {
    let x = Mat2::new(1.2, -0.3, 0.5, 0.9);
    let c = reduction_to_m0_check(&x, &DMatrix::zeros(0, 2)).unwrap();
    assert!(c.pass && c.deviation < 1e-15);
    assert!((c.s - Mat2::identity()).norm() < 1e-15);
    let mut rng = sample_rng(6, 0, 0);
    for _ in 0..200 {
        let x = Mat2::from_fn(|_, _| crate::rng::uniform(&mut rng, -3.0, 3.0));
        let m = DMatrix::from_fn(2, 2, |_, _| crate::rng::uniform(&mut rng, -1.0, 1.0));
        let c = reduction_to_m0_check(&x, &m).unwrap();
        assert!(c.pass, "{c:?}");
        // The largest eigenvalue of sqrt(id + M^T M) is sqrt(1 + s_max(M)^2).
        let s_max = m.singular_values().max();
        assert!((c.s_eigenvalues[1] - (1.0 + s_max * s_max).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn sptnull_terms_exclude_coincident_pairs() {
    let x = Mat2::new(2.0, 0.0, 0.0, 1.0);
    let t = SptnullTerms::new(&x, &x, &DMatrix::zeros(1, 2)).unwrap();
    assert!(t.is_degenerate());
    assert!(t.ratio(1.0).is_none());
    // B is invariant under left rotations, so Y = R X leaves only the
    // determinant term, det(X) / |X|^2.
    let y = crate::rng::rotation(0.7) * x;
    let t = SptnullTerms::new(&x, &y, &DMatrix::zeros(0, 2)).unwrap();
    assert!(t.b_gap_sq < 1e-28);
    assert!((t.ratio(1e6).unwrap() - 2.0 / 5.0).abs() < 1e-12);
}

#[test]
fn sptnull_scan_small_and_strata() {
    let cfg = ScanConfig { n: 3, ..small(20_000) };
    let r = sptnull_scan(&cfg, &default_c1_grid()).unwrap();
    assert!(r.is_clean(), "{:?}", r.violations.first());
    assert!(r.constants["delta_est"] > 0.0);
    let general = r.constants["delta_est"];
    let ortho = r.strata["orthogonal-columns"].constants["delta_est"];
    assert!(ortho >= general - 0.05, "{ortho} vs {general}");
    assert!(r.strata.contains_key("m-zero"));
    let again = sptnull_scan(&cfg, &default_c1_grid()).unwrap();
    assert_eq!(r.to_json().unwrap(), again.to_json().unwrap());
}

#[test]
fn replay_reproduces_forced_violations() {
    // With a single tiny C1 the determinant term dominates and independent
    // pairs with det(X - Y) < 0 turn into violations.
    let cfg = ScanConfig { n: 3, c1_grid: vec![1e-6], ..small(2_000) };
    let r = sptnull_scan(&cfg, &cfg.c1_grid).unwrap();
    assert!(r.violation_count > 0);
    for v in &r.violations {
        assert!(replay(&cfg, v).unwrap(), "{v:?}");
    }
    let mut tampered = r.violations[0].clone();
    tampered.index += 1;
    assert!(!replay(&cfg, &tampered).unwrap_or(false));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_identities_hold(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64, d in -5.0..5.0f64) {
        let y = Mat2::new(a, b, c, d);
        prop_assume!(a.hypot(c) >= 1e-6 * y.norm() && y.norm() > 1e-3);
        let (yo, ye) = orthogonal_split(&y).unwrap();
        let s = 1.0 + y.norm_squared();
        prop_assert!((yo + ye - y).norm() <= 1e-12 * s);
        prop_assert!(ye.dot(&yo).abs() <= 1e-12 * s);
        prop_assert!((yo.determinant() - y.determinant()).abs() <= 1e-12 * s);
        prop_assert!(yo.column(0).dot(&yo.column(1)).abs() <= 1e-12 * s);
    }

    #[test]
    fn rank_one_ratio_is_above_the_floor(seed in any::<u64>(), lambda in 0.1..5.0f64) {
        let mut rng = sample_rng(seed, 0, 0);
        let x = rank_one_sample(lambda, 3, &mut rng);
        let y = rank_one_sample(lambda, 3, &mut rng);
        if let Some(r) = convexity_ratio(&x, &y).unwrap() {
            prop_assert!(r >= (1.0 + lambda * lambda).powf(-1.5) - 1e-9);
        }
    }

    #[test]
    fn reduction_identity(entries in proptest::collection::vec(-3.0..3.0f64, 4), m in proptest::collection::vec(-1.0..1.0f64, 4)) {
        let x = Mat2::from_column_slice(&entries);
        let m = DMatrix::from_column_slice(2, 2, &m);
        prop_assert!(reduction_to_m0_check(&x, &m).unwrap().pass);
    }
}
