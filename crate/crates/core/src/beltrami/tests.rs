use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::fem::TestSpace;
use crate::graphsolve::{minimize, presets::Preset, BoundaryData, SolveConfig};
use crate::matcore::{GradientMatrix, InducedMetric};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn metric_of(e: f64, f: f64, g: f64) -> InducedMetric {
    InducedMetric {
        g: Mat2::new(e, f, f, g),
    }
}

#[test]
fn coefficient_examples() {
    assert_eq!(beltrami_coefficient(&metric_of(1.0, 0.0, 1.0), 0).unwrap(), c(0.0, 0.0));
    assert_eq!(beltrami_coefficient(&metric_of(3.5, 0.0, 3.5), 0).unwrap(), c(0.0, 0.0));
    let mu = beltrami_coefficient(&metric_of(4.0, 0.0, 1.0), 0).unwrap();
    assert!((mu - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
}

#[test]
fn coefficient_rejects_metrics_below_identity() {
    match beltrami_coefficient(&metric_of(0.5, 0.0, 2.0), 7) {
        Err(Error::InvalidMetric { cell, .. }) => assert_eq!(cell, 7),
        other => panic!("unexpected {other:?}"),
    }
    assert!(beltrami_coefficient(&metric_of(f64::NAN, 0.0, 2.0), 0).is_err());
}

proptest! {
    /// The linear map `z + mu zbar` is conformal for `g`.
    #[test]
    fn linear_solution_is_conformal_for_the_metric(
        e in prop::collection::vec(-3.0f64..3.0, 6)
    ) {
        let z = GradientMatrix::from_rows(&[[e[0], e[1]], [e[2], e[3]], [e[4], e[5]]]).unwrap();
        let g = crate::matcore::metric(&z);
        let mu = beltrami_coefficient(&g, 0).unwrap();
        prop_assert!(mu.norm() < 1.0);
        let d = Mat2::new(1.0 + mu.re, mu.im, mu.im, 1.0 - mu.re);
        let dtd = d.transpose() * d;
        let rho = g.g.determinant().sqrt() / d.determinant();
        prop_assert!((g.g / rho - dtd).norm() < 1e-10 * dtd.norm());
    }
}

#[test]
fn wirtinger_examples() {
    let n = 64;
    let id = ComplexGrid::from_fn(n, 2.0, |z| z).unwrap();
    let (fz, fzb) = wirtinger(&id);
    assert!(fz.values().iter().all(|v| (v - 1.0).norm() < 1e-12));
    assert!(fzb.values().iter().all(|v| v.norm() < 1e-12));

    let conj = ComplexGrid::from_fn(n, 2.0, |z| z.conj()).unwrap();
    let (fz, fzb) = wirtinger(&conj);
    assert!(fz.values().iter().all(|v| v.norm() < 1e-12));
    assert!(fzb.values().iter().all(|v| (v - 1.0).norm() < 1e-12));
}

#[test]
fn wirtinger_of_square_converges_at_second_order() {
    let mut errors = Vec::new();
    for n in [32, 64, 128] {
        let sq = ComplexGrid::from_fn(n, 2.0, |z| z * z * z).unwrap();
        let (fz, fzb) = wirtinger(&sq);
        let mut err: f64 = 0.0;
        for k in 0..n * n {
            let z = sq.point(k);
            err = err.max((fz.values()[k] - 3.0 * z * z).norm()).max(fzb.values()[k].norm());
        }
        errors.push(err);
    }
    // Boundary rows use the second-order one-sided stencil.
    for w in errors.windows(2) {
        assert!(w[1] < w[0] / 3.5, "{errors:?}");
    }
    let sq = ComplexGrid::from_fn(64, 2.0, |z| z * z).unwrap();
    let (fz, _) = wirtinger(&sq);
    for k in 0..64 * 64 {
        assert!((fz.values()[k] - 2.0 * sq.point(k)).norm() < 1e-10);
    }
}

#[test]
fn grid_validation() {
    assert!(ComplexGrid::new(48, 4.0, vec![c(0.0, 0.0); 48 * 48]).is_err());
    assert!(ComplexGrid::new(64, 1.0, vec![c(0.0, 0.0); 64 * 64]).is_err());
    assert!(ComplexGrid::new(64, 4.0, vec![c(0.0, 0.0); 10]).is_err());
    let g = ComplexGrid::from_fn(64, 4.0, |z| z).unwrap();
    assert_eq!(g.point(32 * 64 + 32), c(0.0, 0.0));
    let s = g.sample(c(0.3, -0.77)).unwrap();
    assert!((s - c(0.3, -0.77)).norm() < 1e-14);
    assert!(g.sample(c(4.5, 0.0)).is_none());
}

#[test]
fn field_validation() {
    let outside = ComplexGrid::from_fn(64, 4.0, |z| if z.norm() < 1.5 { c(0.1, 0.0) } else { c(0.0, 0.0) }).unwrap();
    assert!(BeltramiField::new(outside).is_err());
    let big = ComplexGrid::from_fn(64, 4.0, |z| if z.norm() < 0.5 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
    assert!(matches!(BeltramiField::new(big), Err(Error::InvalidInput(_))));
}

#[test]
fn zero_coefficient_gives_identity_exactly() {
    let mu = BeltramiField::from_fn(128, 4.0, |_| c(0.0, 0.0)).unwrap();
    let sol = solve_beltrami(&mu, &BeltramiConfig::default()).unwrap();
    assert_eq!(sol.iterations, 0);
    for k in 0..128 * 128 {
        assert_eq!(sol.phi.values()[k], sol.phi.point(k));
    }
}

#[test]
fn cauchy_transform_of_disc_indicator() {
    // C(1_{|z|<r})(z) = zbar inside, r^2 / z outside.
    let n = 256;
    let grid = ComplexGrid::from_fn(n, 4.0, |z| if z.norm() < 1.0 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
    let ch = Convolver::cauchy(n, grid.spacing()).apply(&grid);
    for &z in &[c(0.3, 0.2), c(-0.5, 0.1), c(2.0, 1.0), c(-3.0, -2.5)] {
        let exact = if z.norm() < 1.0 { z.conj() } else { 1.0 / z };
        let v = ch.sample(z).unwrap();
        assert!((v - exact).norm() < 0.02, "{z}: {v} vs {exact}");
    }
}

#[test]
fn beurling_transform_is_nearly_isometric() {
    let n = 256;
    let f = ComplexGrid::from_fn(n, 4.0, |z| c(smooth_cutoff(z.norm(), 0.3, 0.9), 0.0) * z).unwrap();
    let sf = Convolver::beurling(n, f.spacing()).apply(&f);
    let (a, b) = (f.l2_norm_in_disc(10.0), sf.l2_norm_in_disc(10.0));
    assert!((b / a - 1.0).abs() < 0.05, "{a} {b}");
}

#[test]
fn bump_solution_satisfies_the_equation() {
    let n = 256;
    let mu = BeltramiField::from_fn(n, 4.0, smooth_bump(0.5, 0.7)).unwrap();
    assert!((mu.bound() - 0.5).abs() < 1e-12);
    let sol = solve_beltrami(&mu, &BeltramiConfig { tol: 1e-8, max_iter: 60 }).unwrap();
    assert!(sol.residual <= 1e-8);
    for w in sol.residual_history.windows(2) {
        assert!(w[1] <= 1.05 * w[0], "{:?}", sol.residual_history);
    }
    for &r in &sol.contraction {
        assert!(r > 0.0 && r < 0.5 + 0.05, "{:?}", sol.contraction);
    }
    // Independent check: differentiate phi on the grid.
    let (fz, fzb) = wirtinger(&sol.phi);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n * n {
        if sol.phi.point(k).norm() <= 1.0 {
            num += (fzb.values()[k] - mu.grid().values()[k] * fz.values()[k]).norm_sqr();
            den += fz.values()[k].norm_sqr();
        }
    }
    assert!((num / den).sqrt() < 2e-3, "{}", (num / den).sqrt());
    // Normalization phi = z + O(1/z).
    assert!(sol.far_field < 0.1, "{}", sol.far_field);
    let jac_min = (0..n * n)
        .map(|k| fz.values()[k].norm_sqr() - fzb.values()[k].norm_sqr())
        .fold(f64::INFINITY, f64::min);
    assert!(jac_min > 0.0);
}

#[test]
fn non_convergence_reports_history() {
    let mu = BeltramiField::from_fn(64, 4.0, smooth_bump(0.5, 0.0)).unwrap();
    match solve_beltrami(&mu, &BeltramiConfig { tol: 1e-14, max_iter: 3 }) {
        Err(Error::NotConverged { iterations, history, .. }) => {
            assert_eq!(iterations, 3);
            assert_eq!(history.len(), 4);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn inversion_of_identity_and_affine_maps() {
    let mesh = Arc::new(Mesh::disc(6).unwrap());
    let id = PlanarMap::identity(mesh.clone());
    let pts = vec![[0.1, 0.2], [-0.4, 0.5], [0.0, 0.0]];
    let pre = invert_points(&id, &pts).unwrap();
    for (p, q) in pts.iter().zip(&pre) {
        assert!((p[0] - q[0]).abs() < 1e-14 && (p[1] - q[1]).abs() < 1e-14);
    }
    let a = Mat2::new(2.0, 0.5, -0.3, 1.5);
    let b = [0.2, -0.1];
    let phi = PlanarMap::from_fn(mesh.clone(), |p| {
        [a[(0, 0)] * p[0] + a[(0, 1)] * p[1] + b[0], a[(1, 0)] * p[0] + a[(1, 1)] * p[1] + b[1]]
    })
    .unwrap();
    let ainv = a.try_inverse().unwrap();
    let targets = vec![[0.3, 0.1], [-0.5, -0.4], [1.0, 0.2]];
    for (y, x) in targets.iter().zip(invert_points(&phi, &targets).unwrap()) {
        let d = [y[0] - b[0], y[1] - b[1]];
        let e = [ainv[(0, 0)] * d[0] + ainv[(0, 1)] * d[1], ainv[(1, 0)] * d[0] + ainv[(1, 1)] * d[1]];
        assert!((x[0] - e[0]).abs() < 1e-13 && (x[1] - e[1]).abs() < 1e-13);
    }
}

#[test]
fn inversion_errors() {
    let mesh = Arc::new(Mesh::disc(4).unwrap());
    let id = PlanarMap::identity(mesh.clone());
    match invert_points(&id, &[[0.0, 0.0], [3.0, 0.0]]) {
        Err(Error::OutOfDomain { index, .. }) => assert_eq!(index, 1),
        other => panic!("unexpected {other:?}"),
    }
    let flip = PlanarMap::from_fn(mesh, |p| [p[0], -p[1]]).unwrap();
    assert!(matches!(invert_points(&flip, &[[0.0, 0.0]]), Err(Error::NotInjective { .. })));
}

#[test]
fn inverse_of_quasiconformal_solution() {
    let n = 256;
    let mu = BeltramiField::from_fn(n, 4.0, smooth_bump(0.4, 1.1)).unwrap();
    let sol = solve_beltrami(&mu, &BeltramiConfig::default()).unwrap();
    let mesh = Arc::new(Mesh::rectangle(-1.5, 1.5, -1.5, 1.5, 96, 96).unwrap());
    let phi = PlanarMap::from_fn(mesh.clone(), |p| {
        let w = sol.eval(c(p[0], p[1])).unwrap();
        [w.re, w.im]
    })
    .unwrap()
    .with_qc_bound(4.0)
    .unwrap();
    let h = mesh.mesh_size();
    let targets: Vec<[f64; 2]> = (0..400)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / 400.0;
            let r = 1.2 * (k as f64 / 400.0);
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    let pre = invert_points(&phi, &targets).unwrap();
    let mut worst: f64 = 0.0;
    for (y, x) in targets.iter().zip(&pre) {
        // Forward evaluation through the grid solution, not the mesh.
        let fx = sol.eval(c(x[0], x[1])).unwrap();
        worst = worst.max((fx - c(y[0], y[1])).norm());
    }
    assert!(worst < 2.0 * h, "{worst} vs h = {h}");

    // D(phi^{-1}) = (Dphi)^{-1} cell by cell on the image mesh.
    let image = Arc::new(phi.image_mesh().unwrap());
    let w = invert_map(&phi, image.clone()).unwrap();
    for t in 0..image.triangle_count() {
        let prod = w.jacobian(t) * phi.jacobian(t);
        assert!((prod - Mat2::identity()).norm() < 1e-9);
    }
}

#[test]
fn chain_rule_through_the_solution() {
    // D(f o phi) = Df(phi) Dphi for f(w) = (Re w^2, Im w^2), on interior cells.
    let n = 256;
    let mu = BeltramiField::from_fn(n, 4.0, smooth_bump(0.3, 0.0)).unwrap();
    let sol = solve_beltrami(&mu, &BeltramiConfig::default()).unwrap();
    let mut errs = Vec::new();
    for cells in [16, 32] {
        let mesh = Arc::new(Mesh::rectangle(-0.8, 0.8, -0.8, 0.8, cells, cells).unwrap());
        let phi = PlanarMap::from_fn(mesh.clone(), |p| {
            let w = sol.eval(c(p[0], p[1])).unwrap();
            [w.re, w.im]
        })
        .unwrap();
        let comp = DiscreteMap::from_fn(mesh.clone(), 2, |p| {
            let w = sol.eval(c(p[0], p[1])).unwrap();
            let f = w * w;
            vec![f.re, f.im]
        })
        .unwrap();
        let mut worst: f64 = 0.0;
        for t in 0..mesh.triangle_count() {
            let x = mesh.centroid(t);
            let w = phi.eval(x).unwrap();
            let df = Mat2::new(2.0 * w[0], -2.0 * w[1], 2.0 * w[1], 2.0 * w[0]);
            let lhs = comp.gradient(t).top_block();
            worst = worst.max((lhs - df * phi.jacobian(t)).norm());
        }
        errs.push(worst);
    }
    assert!(errs[1] < 0.7 * errs[0], "{errs:?}");
}

fn square_grid_map(cells: usize, f: impl Fn([f64; 2]) -> Vec<f64>, codim: usize) -> DiscreteMap {
    let mesh = Arc::new(Mesh::rectangle(-1.0, 1.0, -1.0, 1.0, cells, cells).unwrap());
    DiscreteMap::from_fn(mesh, codim, f).unwrap()
}

#[test]
fn harmonic_residual_examples() {
    let lin = square_grid_map(16, |p| vec![2.0 * p[0] - p[1], p[1]], 2);
    for norm in [HarmonicNorm::StrongL2, HarmonicNorm::DualH1] {
        assert!(harmonic_residual(&lin, norm).unwrap() < 1e-12);
    }
    // Five-point stencil is exact on quadratics, so z^2 has no defect.
    let sq = square_grid_map(16, |p| vec![p[0] * p[0] - p[1] * p[1], 2.0 * p[0] * p[1]], 2);
    assert!(harmonic_residual(&sq, HarmonicNorm::StrongL2).unwrap() < 1e-10);
    // Laplacian of |z|^2 is 4; the lumped interior cells cover a square of side 2 - h.
    let h = 2.0 / 16.0;
    let para = square_grid_map(16, |p| vec![p[0] * p[0] + p[1] * p[1]], 1);
    let r = harmonic_residual(&para, HarmonicNorm::StrongL2).unwrap();
    let expect = 4.0 * (2.0 - h);
    assert!((r - expect).abs() < 1e-10, "{r} vs {expect}");
}

#[test]
fn region_examples() {
    let id = square_grid_map(8, |p| vec![p[0], p[1]], 2);
    let l = classify_regions(&id, 1e-3, 1e-3).unwrap();
    assert!(l.labels.iter().all(|&r| r == Region::Oset));

    let rank_one = square_grid_map(8, |p| vec![p[0] * 2.0, p[0] * -1.0, p[0] * 0.5], 3);
    let l = classify_regions(&rank_one, 1e-3, 1e-9).unwrap();
    assert!(l.labels.iter().all(|&r| r == Region::Zset));

    // |Dv| = 2 sqrt(2) |z| for v = (Re z^2, Im z^2).
    let cells = 20;
    let sq = square_grid_map(cells, |p| vec![p[0] * p[0] - p[1] * p[1], 2.0 * p[0] * p[1]], 2);
    let tol = 0.9;
    let l = classify_regions(&sq, tol, 1e-9).unwrap();
    let mesh = sq.mesh();
    for i in mesh.interior_nodes() {
        let p = mesh.nodes()[i];
        let r = p[0].hypot(p[1]);
        let expect_e1 = 2.0 * 2f64.sqrt() * r <= tol;
        assert_eq!(l.labels[i] == Region::E1, expect_e1, "node {i} at {p:?}");
    }
    assert_eq!(l.counts.iter().sum::<usize>(), mesh.node_count());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn regions_are_monotone_in_tolerances(
        a in 0.0f64..2.0, b in 0.0f64..2.0, grow in 0.0f64..1.0
    ) {
        let v = square_grid_map(10, |p| vec![p[0] * p[0] - p[1], p[0] * p[1], (p[0] + p[1]).sin()], 3);
        let base = classify_regions(&v, a, b).unwrap();
        let wider_grad = classify_regions(&v, a + grow, b).unwrap();
        let wider_minor = classify_regions(&v, a, b + grow).unwrap();
        for i in 0..base.labels.len() {
            if base.labels[i] == Region::E1 {
                prop_assert_eq!(wider_grad.labels[i], Region::E1);
            }
            if base.labels[i] != Region::Oset {
                prop_assert!(wider_minor.labels[i] != Region::Oset);
            }
        }
    }
}

#[test]
fn inner_residual_examples() {
    let mesh = Arc::new(Mesh::disc(6).unwrap());
    let id = PlanarMap::identity(mesh.clone());
    assert!(inner_residual(&id, None, TestSpace::Refined).unwrap() < 1e-12);
    let psi = DiscreteMap::from_fn(mesh.clone(), 2, |p| vec![0.5 * p[0] - p[1], 2.0 * p[1] + 1.0]).unwrap();
    assert!(inner_residual(&id, Some(&psi), TestSpace::Refined).unwrap() < 1e-12);
    let curved = DiscreteMap::from_fn(mesh.clone(), 1, |p| vec![p[0] * p[0]]).unwrap();
    assert!(inner_residual(&id, Some(&curved), TestSpace::Refined).unwrap() > 1e-3);
    let other = DiscreteMap::zeros(Arc::new(Mesh::disc(5).unwrap()), 1);
    assert!(inner_residual(&id, Some(&other), TestSpace::Native).is_err());
}

#[test]
fn factorize_conformal_metric_is_trivial() {
    let mesh = Arc::new(Mesh::disc(8).unwrap());
    let u = DiscreteMap::from_fn(mesh.clone(), 2, |p| vec![2.0 * p[0] + 1.0, 2.0 * p[1]]).unwrap();
    let cfg = FactorizeConfig { grid: 128, ..FactorizeConfig::default() };
    let f = factorize(&u, &cfg).unwrap();
    assert!(f.mu_sup < 1e-12);
    assert_eq!(f.iterations, 0);
    for i in 0..mesh.node_count() {
        let p = mesh.nodes()[i];
        let q = f.phi.point(i);
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }
    assert_eq!(f.v.values(), u.values());
    assert!(harmonic_residual(&f.v, HarmonicNorm::DualH1).unwrap() < 1e-12);
    assert!(f.conformal_mismatch < 1e-12);
}

#[test]
fn factorize_affine_map() {
    let mesh = Arc::new(Mesh::disc(8).unwrap());
    let u = DiscreteMap::from_fn(mesh, 3, |p| vec![p[0] + 0.5 * p[1], -0.2 * p[0], 0.7 * p[1]]).unwrap();
    let f = factorize(&u, &FactorizeConfig { grid: 256, ..FactorizeConfig::default() }).unwrap();
    assert!(f.mu_sup > 0.01 && f.mu_sup < 1.0);
    assert!(f.min_jacobian > 0.0);
    assert!(f.beltrami_residual <= 1e-10);
    // v is affine only up to the discretization of phi; it stays nearly harmonic.
    let r = harmonic_residual(&f.v, HarmonicNorm::DualH1).unwrap();
    assert!(r < 0.05, "{r}");
    assert!(f.conformal_mismatch < 0.3, "{}", f.conformal_mismatch);
}

#[test]
fn factorize_rejects_meshes_outside_the_disc() {
    let u = square_grid_map(4, |p| vec![p[0], p[1]], 2);
    assert!(matches!(factorize(&u, &FactorizeConfig::default()), Err(Error::InvalidInput(_))));
}

#[test]
fn factorize_minimizer_of_holomorphic_data() {
    let preset = Preset::Holomorphic { scale: 0.25 };
    let mesh = Arc::new(Mesh::disc(8).unwrap());
    let data = BoundaryData::from_fn(&mesh, 2, |p| preset.eval(p)).unwrap();
    let u = minimize(&data, &SolveConfig::default(), mesh).unwrap().map;
    let f = factorize(&u, &FactorizeConfig { grid: 256, ..FactorizeConfig::default() }).unwrap();
    assert!(f.mu_sup < 0.05, "{}", f.mu_sup);
    assert!(f.min_jacobian > 0.0);
}
