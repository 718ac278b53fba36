//! The inner-stress inequality for quasiconformal pairs:
//! `C1 min(|X|^2, |Y|^2) |B(X|M) - B(Y|M)|^2 + det(X - Y) >= delta |X - Y|^2`.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::sample::{ball_matrix, qc_pair_mixture, QcRange};
use super::{ScanConfig, PAIR_EXCLUSION};
use crate::error::{Error, Result};
use crate::matcore::{kernel, spd_sqrt, svd2, sym_eigenvalues, Mat2};
use crate::report::{for_each_sample, row_major, Histogram, ScanReport, Violation};
use crate::rng::{log_uniform, sample_rng, stream, uniform};
use crate::tolerance::scaled_deviation;

pub(crate) const ITEM_PREFIX: &str = "sptnull";
const ASSU_SUFFIX: &str = ":assu";

/// `|Y^1| <= SPLIT_TOL |Y|` is too degenerate to split.
pub const SPLIT_TOL: f64 = 1e-12;

/// `B(X|M)` for the `n x 2` matrix with `X` on top of `M`.
fn stress(x: &Mat2, m: &DMatrix<f64>) -> Mat2 {
    let rows = m.nrows();
    let mut z1 = Vec::with_capacity(2 + rows);
    let mut z2 = Vec::with_capacity(2 + rows);
    z1.extend([x[(0, 0)], x[(1, 0)]]);
    z2.extend([x[(0, 1)], x[(1, 1)]]);
    for i in 0..rows {
        z1.push(m[(i, 0)]);
        z2.push(m[(i, 1)]);
    }
    kernel::inner_stress(&z1, &z2)
}

fn check_m(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() > 0 && m.ncols() != 2 {
        return Err(Error::invalid(format!("M must have two columns, got {}", m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("M has non-finite entries"));
    }
    Ok(())
}

/// The pieces of the inequality for one pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SptnullTerms {
    /// `|B(X|M) - B(Y|M)|^2`.
    pub b_gap_sq: f64,
    /// `min(|X|^2, |Y|^2)`.
    pub min_norm_sq: f64,
    pub max_norm_sq: f64,
    pub det_diff: f64,
    /// `|X - Y|^2`.
    pub diff_sq: f64,
}

impl SptnullTerms {
    pub fn new(x: &Mat2, y: &Mat2, m: &DMatrix<f64>) -> Result<Self> {
        check_m(m)?;
        let d = x - y;
        let (nx, ny) = (x.norm_squared(), y.norm_squared());
        Ok(Self {
            b_gap_sq: (stress(x, m) - stress(y, m)).norm_squared(),
            min_norm_sq: nx.min(ny),
            max_norm_sq: nx.max(ny),
            det_diff: d.determinant(),
            diff_sq: d.norm_squared(),
        })
    }

    /// Coincident or nearly coincident pairs carry no information.
    pub fn is_degenerate(&self) -> bool {
        self.diff_sq == 0.0 || self.diff_sq.sqrt() < PAIR_EXCLUSION * self.max_norm_sq.sqrt()
    }

    /// Left side over `|X - Y|^2`, or `None` for degenerate pairs.
    pub fn ratio(&self, c1: f64) -> Option<f64> {
        (!self.is_degenerate()).then(|| self.numerator(c1) / self.diff_sq)
    }

    pub fn numerator(&self, c1: f64) -> f64 {
        c1 * self.min_norm_sq * self.b_gap_sq + self.det_diff
    }

    /// `min(|X|, |Y|)^2 |B(X|M) - B(Y|M)|^2 <= eps |X - Y|^2`.
    pub fn assu_holds(&self, eps: f64) -> bool {
        self.min_norm_sq * self.b_gap_sq <= eps * self.diff_sq
    }
}

/// Splits `Y = Y_o + Y_e` with
/// `Y_e = (0 | (Y^1 . Y^2) Y^1 / |Y^1|^2)` and
/// `Y_o = (Y^1 | det(Y) J Y^1 / |Y^1|^2)`. Returns `(Y_o, Y_e)`.
pub fn orthogonal_split(y: &Mat2) -> Result<(Mat2, Mat2)> {
    let (a, c) = (y[(0, 0)], y[(1, 0)]);
    let n1 = a * a + c * c;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    if n1 == 0.0 || n1.sqrt() <= SPLIT_TOL * y.norm() {
        return Err(Error::Degenerate(format!(
            "first column norm {} is too small to split",
            n1.sqrt()
        )));
    }
    let p = (a * y[(0, 1)] + c * y[(1, 1)]) / n1;
    let q = y.determinant() / n1;
    let ye = Mat2::new(0.0, p * a, 0.0, p * c);
    let yo = Mat2::new(a, -q * c, c, q * a);
    Ok((yo, ye))
}

/// Checks the splitting identities on random matrices. Items, each measured
/// as `|lhs - rhs| / (1 + scale)`: `reconstruction`, `orthogonality`
/// (`<Y_e, Y_o> = 0`), `det-preservation`, `segment-det` (`det(Y_o + t Y_e)`
/// for `t` in `{0, 1/4, 1/2, 1}`) and `orthogonal-columns` of `Y_o`.
/// Matrices with `|Y^1| < 1e-6 |Y|` are skipped.
pub fn orthogonal_split_scan(samples: u64, seed: u64, tol: f64) -> Result<ScanReport> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let start = Instant::now();
    let mut report = ScanReport::new("orthogonal-split", seed, samples).with_config("tol", tol);
    for_each_sample(
        samples,
        |i| {
            let mut rng = sample_rng(seed, stream::ORTHO_SPLIT, i);
            let s = log_uniform(&mut rng, 1e-2, 1e2);
            let y = Mat2::from_fn(|_, _| s * uniform(&mut rng, -1.0, 1.0));
            (y, split_checks(&y))
        },
        |i, (y, checks)| {
            report.evaluated += 1;
            let Some(checks) = checks else {
                for item in SPLIT_ITEMS {
                    report.item_mut(item).skip();
                }
                return;
            };
            for (item, lhs, rhs, dev) in checks {
                let violated = !(dev <= tol);
                report.item_mut(item).record(dev, violated);
                if violated {
                    report.push_violation(Violation {
                        item: item.into(),
                        index: i,
                        inputs: BTreeMap::from([("Y".to_string(), row_major(&y))]),
                        lhs,
                        rhs,
                    });
                }
            }
        },
    );
    report.wall_time = start.elapsed();
    Ok(report)
}

const SPLIT_ITEMS: [&str; 5] = [
    "reconstruction",
    "orthogonality",
    "det-preservation",
    "segment-det",
    "orthogonal-columns",
];

type Check = (&'static str, f64, f64, f64);

fn split_checks(y: &Mat2) -> Option<Vec<Check>> {
    let c1 = y.column(0).norm();
    if c1 < 1e-6 * y.norm() {
        return None;
    }
    let (yo, ye) = orthogonal_split(y).ok()?;
    let scale = y.norm_squared();
    let det = y.determinant();
    let recon = (yo + ye - y).norm();
    let inner = ye.dot(&yo);
    let seg = [0.0, 0.25, 0.5, 1.0]
        .iter()
        .map(|&t| ((yo + ye * t).determinant() - det).abs())
        .fold(0.0, f64::max);
    let cols = yo.column(0).dot(&yo.column(1));
    Some(vec![
        ("reconstruction", recon, 0.0, scaled_deviation(recon, y.norm())),
        ("orthogonality", inner, 0.0, scaled_deviation(inner.abs(), scale)),
        (
            "det-preservation",
            yo.determinant(),
            det,
            scaled_deviation((yo.determinant() - det).abs(), scale),
        ),
        ("segment-det", seg, 0.0, scaled_deviation(seg, scale)),
        ("orthogonal-columns", cols, 0.0, scaled_deviation(cols.abs(), scale)),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionCheck {
    /// `S = sqrt(id + M^T M)`.
    pub s: Mat2,
    pub s_eigenvalues: [f64; 2],
    /// `sqrt(1 + |M|^2)`, an upper bound for the eigenvalues of `S`.
    pub eigenvalue_bound: f64,
    /// `B(X|M)`.
    pub lhs: Mat2,
    /// `det(S) S^{-1} B(X S^{-1}|0) S^{-1}`.
    pub rhs: Mat2,
    pub deviation: f64,
    pub relative_deviation: f64,
    pub pass: bool,
}

/// Compares `B(X|M)` with its expression through `B(X S^{-1}|0)`.
pub fn reduction_to_m0_check(x: &Mat2, m: &DMatrix<f64>) -> Result<ReductionCheck> {
    check_m(m)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("X has non-finite entries"));
    }
    let mtm = if m.nrows() == 0 {
        Mat2::zeros()
    } else {
        let p = m.transpose() * m;
        Mat2::new(p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)])
    };
    let s = spd_sqrt(&(Mat2::identity() + mtm))?;
    let s_inv = s.try_inverse().ok_or_else(|| Error::Degenerate("S is singular".into()))?;
    let b0 = stress(&(x * s_inv), &DMatrix::zeros(0, 2));
    let rhs = s.determinant() * s_inv * b0 * s_inv;
    let lhs = stress(x, m);
    let deviation = (lhs - rhs).norm();
    let relative_deviation = deviation / lhs.norm();
    let s_eigenvalues = sym_eigenvalues(&s);
    let eigenvalue_bound = (1.0 + m.norm_squared()).sqrt();
    let pass = relative_deviation <= 1e-10
        && s_eigenvalues[0] >= 1.0 - 1e-12
        && s_eigenvalues[1] <= eigenvalue_bound * (1.0 + 1e-12);
    Ok(ReductionCheck {
        s,
        s_eigenvalues,
        eigenvalue_bound,
        lhs,
        rhs,
        deviation,
        relative_deviation,
        pass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stratum {
    General,
    /// `M = 0` with both matrices of the form `R diag(a, b)`: up to a common
    /// rotation, `X` diagonal and `Y` with orthogonal columns.
    OrthogonalColumns,
    MZero,
}

impl Stratum {
    const ALL: [Stratum; 3] = [Stratum::General, Stratum::OrthogonalColumns, Stratum::MZero];

    fn item(self) -> &'static str {
        match self {
            Stratum::General => "sptnull",
            Stratum::OrthogonalColumns => "sptnull/orthogonal-columns",
            Stratum::MZero => "sptnull/m-zero",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Stratum::General => stream::SPTNULL,
            Stratum::OrthogonalColumns => stream::SPTNULL_ORTHO,
            Stratum::MZero => stream::SPTNULL_M0,
        }
    }

    fn key(self) -> &'static str {
        match self {
            Stratum::General => "general",
            Stratum::OrthogonalColumns => "orthogonal-columns",
            Stratum::MZero => "m-zero",
        }
    }
}

fn sample_at(cfg: &ScanConfig, range: &QcRange, stratum: Stratum, index: u64) -> (Mat2, Mat2, DMatrix<f64>) {
    let mut rng = sample_rng(cfg.seed, stratum.stream(), index);
    let (x, y, _) = qc_pair_mixture(range, stratum == Stratum::OrthogonalColumns, &mut rng);
    let m = match stratum {
        Stratum::General => ball_matrix(cfg.n - 2, cfg.l, &mut rng),
        _ => DMatrix::zeros(cfg.n - 2, 2),
    };
    (x, y, m)
}

/// `|Y_e|^2` in the reduced frame: both matrices are multiplied by
/// `S^{-1}`, the larger one is brought to diagonal form by its singular
/// vectors, and the smaller one is split in that frame.
fn reduced_split_sq(x: &Mat2, y: &Mat2, m: &DMatrix<f64>) -> Option<f64> {
    let (x, y) = if m.nrows() > 0 {
        let p = m.transpose() * m;
        let s = spd_sqrt(&(Mat2::identity() + Mat2::new(p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]))).ok()?;
        let s_inv = s.try_inverse()?;
        (x * s_inv, y * s_inv)
    } else {
        (*x, *y)
    };
    let (big, small) = if y.norm_squared() <= x.norm_squared() { (x, y) } else { (y, x) };
    let f = svd2(&big);
    let small = f.u.transpose() * small * f.v;
    orthogonal_split(&small).ok().map(|(_, ye)| ye.norm_squared())
}

struct Record {
    terms: SptnullTerms,
    ye_sq: Option<f64>,
}

fn c1_key(c1: f64) -> String {
    format!("ratio[c1={c1:e}]")
}

fn pair_inputs(x: &Mat2, y: &Mat2, m: &DMatrix<f64>) -> BTreeMap<String, Vec<f64>> {
    BTreeMap::from([
        ("X".to_string(), row_major(x)),
        ("Y".to_string(), row_major(y)),
        ("M".to_string(), row_major(m)),
    ])
}

fn run_stratum(cfg: &ScanConfig, range: &QcRange, grid: &[f64], stratum: Stratum) -> ScanReport {
    let start = Instant::now();
    let mut report = cfg
        .echo(ScanReport::new(stratum.item(), cfg.seed, cfg.samples))
        .with_config("stratum", stratum.key())
        .with_config("c1_grid", grid.to_vec());
    report.histogram = Some(Histogram::new(-1.0, 1.0, 100));
    let c1_max = grid.iter().copied().fold(f64::MIN, f64::max);
    let mut records = Vec::with_capacity(cfg.samples as usize);
    for_each_sample(
        cfg.samples,
        |i| {
            let (x, y, m) = sample_at(cfg, range, stratum, i);
            let terms = SptnullTerms::new(&x, &y, &m).expect("sampled shapes are consistent");
            let ye_sq = reduced_split_sq(&x, &y, &m);
            (x, y, m, Record { terms, ye_sq })
        },
        |i, (x, y, m, rec)| {
            report.evaluated += 1;
            let t = rec.terms;
            if t.is_degenerate() {
                report.push_excluded(i, "pair closer than 1e-9 max(|X|, |Y|)");
            } else {
                for &c1 in grid {
                    let q = t.numerator(c1) / t.diff_sq;
                    report.item_mut(&c1_key(c1)).record(q, false);
                }
                if let Some(h) = report.histogram.as_mut() {
                    h.add(t.det_diff / t.diff_sq);
                }
                let worst = t.numerator(c1_max);
                let violated = !(worst > 0.0);
                report.item_mut(stratum.item()).record(worst / t.diff_sq, violated);
                if violated {
                    let mut inputs = pair_inputs(&x, &y, &m);
                    inputs.insert("c1".into(), vec![c1_max]);
                    report.push_violation(Violation {
                        item: stratum.item().into(),
                        index: i,
                        inputs,
                        lhs: worst,
                        rhs: 0.0,
                    });
                }
            }
            records.push(rec);
        },
    );

    // delta_est(C1) is the smaller of the sampled sptnull minimum and the
    // minimum of det(X - Y) / |X - Y|^2 over pairs satisfying the hypothesis
    // with eps = 2 / C1.
    let mut best: Option<(f64, f64)> = None;
    for &c1 in grid {
        let Some(d_spt) = report.items.get(&c1_key(c1)).and_then(|s| s.min) else {
            continue;
        };
        let eps = 2.0 / c1;
        let d_assu = records
            .iter()
            .filter(|r| !r.terms.is_degenerate() && r.terms.assu_holds(eps))
            .map(|r| r.terms.det_diff / r.terms.diff_sq)
            .fold(f64::INFINITY, f64::min);
        let d = d_spt.min(d_assu);
        report.set_constant(&format!("delta_est[c1={c1:e}]"), d);
        if best.is_none_or(|(_, b)| d > b) {
            best = Some((c1, d));
        }
    }
    if let Some((c1, delta)) = best {
        let eps = 2.0 / c1;
        report.set_constant("c1", c1);
        report.set_constant("delta_est", delta);
        report.set_constant("eps_assu", eps);
        let assu_item = format!("{}{ASSU_SUFFIX}", stratum.item());
        for (i, r) in records.iter().enumerate() {
            let t = &r.terms;
            if t.is_degenerate() || !t.assu_holds(eps) {
                continue;
            }
            if let Some(ye) = r.ye_sq {
                report.item_mut("step4-chain").record(ye / (eps * t.diff_sq), false);
            }
            let ratio = t.det_diff / t.diff_sq;
            let violated = !(t.det_diff > 0.0);
            report.item_mut(&assu_item).record(ratio, violated);
            if violated {
                let (x, y, m) = sample_at(cfg, range, stratum, i as u64);
                let mut inputs = pair_inputs(&x, &y, &m);
                inputs.insert("eps".into(), vec![eps]);
                report.push_violation(Violation {
                    item: assu_item.clone(),
                    index: i as u64,
                    inputs,
                    lhs: t.det_diff,
                    rhs: 0.0,
                });
            }
        }
        if let Some(c) = report.items.get("step4-chain").and_then(|s| s.max) {
            report.set_constant("step4_chain_max", c);
        }
    }
    report.wall_time = start.elapsed();
    report
}

/// Samples quasiconformal pairs and `|M| <= L`, and reports the grid value of
/// `C1` with the largest `delta_est`. The orthogonal-columns and `M = 0`
/// families are rerun as strata.
pub fn sptnull_scan(cfg: &ScanConfig, c1_grid: &[f64]) -> Result<ScanReport> {
    let cfg = ScanConfig {
        c1_grid: c1_grid.to_vec(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let range = QcRange::new(cfg.k, cfg.eps3, cfg.cap)?;
    let start = Instant::now();
    let mut main = run_stratum(&cfg, &range, c1_grid, Stratum::General);
    for s in [Stratum::OrthogonalColumns, Stratum::MZero] {
        main.strata.insert(s.key().into(), run_stratum(&cfg, &range, c1_grid, s));
    }
    main.wall_time = start.elapsed();
    Ok(main)
}

fn same<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(
    v: &Violation,
    key: &str,
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> bool {
    v.inputs.get(key).is_some_and(|stored| {
        let now = row_major(m);
        stored.len() == now.len() && stored.iter().zip(&now).all(|(a, b)| a.to_bits() == b.to_bits())
    })
}

pub(crate) fn replay(cfg: &ScanConfig, v: &Violation) -> Result<bool> {
    let (name, assu) = match v.item.strip_suffix(ASSU_SUFFIX) {
        Some(base) => (base, true),
        None => (v.item.as_str(), false),
    };
    let stratum = Stratum::ALL
        .into_iter()
        .find(|s| s.item() == name)
        .ok_or_else(|| Error::invalid(format!("unknown sptnull item '{}'", v.item)))?;
    let range = QcRange::new(cfg.k, cfg.eps3, cfg.cap)?;
    let (x, y, m) = sample_at(cfg, &range, stratum, v.index);
    let t = SptnullTerms::new(&x, &y, &m)?;
    let key = if assu { "eps" } else { "c1" };
    let param = v
        .inputs
        .get(key)
        .and_then(|s| s.first().copied())
        .ok_or_else(|| Error::invalid(format!("violation record lacks '{key}'")))?;
    let still = if assu {
        t.assu_holds(param) && !(t.det_diff > 0.0)
    } else {
        !(t.numerator(param) > 0.0)
    };
    Ok(same(v, "X", &x) && same(v, "Y", &y) && same(v, "M", &m) && !t.is_degenerate() && still)
}
