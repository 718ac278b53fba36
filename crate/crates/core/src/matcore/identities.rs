//! Randomized verification of the structural identities of `A`, `DA` and `B`.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, MatrixXx2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    area, area_gradient, inner_stress, inner_stress_blocks, metric, qc_matrix, spd_sqrt,
    stress_jacobian_norm_fd, BlockPair, GradientMatrix, Mat2,
};
use crate::error::{Error, Result};
use crate::report::{for_each_sample, row_major, ScanReport, Violation};
use crate::rng::{self, stream};
use crate::tolerance::scaled_deviation;

/// Entries of random test matrices are uniform in `[-ENTRY_RANGE, ENTRY_RANGE]`.
pub const ENTRY_RANGE: f64 = 3.0;
/// Samples whose top block has `det X < CONDITION_FLOOR |X|^2` are skipped by
/// the inverse-block identity, which involves `X^{-1}`.
pub const CONDITION_FLOOR: f64 = 1e-6;
/// Quasiconformality constant and bottom-block bound used by the
/// boundedness diagnostics of the identity suite.
const DIAG_K: f64 = 4.0;
const DIAG_L: f64 = 1.0;

pub const ITEMS: [&str; 11] = [
    "left_orthogonal_invariance",
    "right_orthogonal_covariance",
    "gradient_equivariance",
    "stress_unimodular",
    "inverse_block_transform",
    "metric_reduction",
    "stress_bounded",
    "stress_gradient_decay",
    "metric_form",
    "gradient_factorization",
    "rank_one_area",
];

/// Items reported as diagnostics only: the constants are not quantified, so
/// only non-finite values count as violations.
const DIAGNOSTIC_ITEMS: [&str; 2] = ["stress_bounded", "stress_gradient_decay"];

struct Check {
    item: &'static str,
    value: f64,
    lhs: f64,
    rhs: f64,
}

struct SampleOutcome {
    checks: Vec<Check>,
    skipped: Vec<&'static str>,
    inputs: BTreeMap<String, Vec<f64>>,
}

fn random_gradient(rng: &mut impl Rng, n: usize, range: f64) -> GradientMatrix {
    GradientMatrix::new(MatrixXx2::from_fn(n, |_, _| rng::uniform(rng, -range, range)))
        .expect("finite entries")
}

fn dmat(z: &GradientMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(z.codim(), 2, z.matrix().as_slice())
}

fn mat_dev(lhs: &Mat2, rhs: &Mat2) -> (f64, f64, f64) {
    let (l, r) = (lhs.norm(), rhs.norm());
    (scaled_deviation((lhs - rhs).norm(), l.max(r)), l, r)
}

fn evaluate(n: usize, seed: u64, index: u64) -> SampleOutcome {
    let mut rng = rng::sample_rng(seed, stream::IDENTITIES, index);
    let z = random_gradient(&mut rng, n, ENTRY_RANGE);
    let big_n = rng::random_orthogonal(&mut rng, n);
    let m = rng::random_orthogonal2(&mut rng);
    let mut checks = Vec::with_capacity(ITEMS.len());
    let mut skipped = Vec::new();
    let mut inputs = BTreeMap::new();
    inputs.insert("Z".to_string(), row_major(z.matrix()));
    inputs.insert("N".to_string(), row_major(&big_n));
    inputs.insert("M".to_string(), row_major(&m));

    let b = *inner_stress(&z).matrix();
    let nz = z.transform(&big_n, &Mat2::identity()).expect("finite");
    let (v, l, r) = mat_dev(inner_stress(&nz).matrix(), &b);
    checks.push(Check { item: ITEMS[0], value: v, lhs: l, rhs: r });

    let zm = z.transform(&DMatrix::identity(n, n), &m).expect("finite");
    let (v, l, r) = mat_dev(inner_stress(&zm).matrix(), &(m.transpose() * b * m));
    checks.push(Check { item: ITEMS[1], value: v, lhs: l, rhs: r });

    let nzm = z.transform(&big_n, &m).expect("finite");
    let lhs = dmat(&area_gradient(&nzm));
    let rhs = &big_n * dmat(&area_gradient(&z)) * m;
    let (l, r) = (lhs.norm(), rhs.norm());
    checks.push(Check {
        item: ITEMS[2],
        value: scaled_deviation((&lhs - &rhs).norm(), l.max(r)),
        lhs: l,
        rhs: r,
    });

    let asym = (b[(0, 1)] - b[(1, 0)]).abs();
    let det_err = (b.determinant() - 1.0).abs();
    let positive = b[(0, 0)] > 0.0 && b[(1, 1)] > 0.0;
    checks.push(Check {
        item: ITEMS[3],
        value: if positive {
            scaled_deviation(asym.max(det_err), b.norm())
        } else {
            f64::INFINITY
        },
        lhs: b.determinant(),
        rhs: 1.0,
    });

    if n >= 2 {
        let mut x = z.top_block();
        if x.determinant() < 0.0 {
            x.set_row(0, &(-x.row(0)));
        }
        let y = z.bottom_block();
        let det = x.determinant();
        if det < CONDITION_FLOOR * x.norm_squared() {
            skipped.push(ITEMS[4]);
        } else {
            let x_inv = x.try_inverse().expect("det > 0");
            let lhs = inner_stress_blocks(&BlockPair::new(x_inv, y.clone()).expect("shape"));
            let yx = nalgebra::DMatrix::from_column_slice(y.nrows(), 2, (&y * x).as_slice());
            let inner = inner_stress_blocks(&BlockPair::new(x, yx).expect("shape"));
            let rhs = x * inner.matrix() * x.transpose() / det;
            let (v, l, r) = mat_dev(lhs.matrix(), &rhs);
            checks.push(Check { item: ITEMS[4], value: v, lhs: l, rhs: r });
        }

        let s = spd_sqrt(&(Mat2::identity() + y.transpose() * &y)).expect("spd");
        let s_inv = s.try_inverse().expect("spd");
        let lhs = inner_stress_blocks(&BlockPair::new(x, y.clone()).expect("shape"));
        let reduced = inner_stress_blocks(
            &BlockPair::new(x * s_inv, DMatrix::zeros(0, 2)).expect("shape"),
        );
        let rhs = s.determinant() * s_inv * reduced.matrix() * s_inv;
        let (v, l, r) = mat_dev(lhs.matrix(), &rhs);
        checks.push(Check { item: ITEMS[5], value: v, lhs: l, rhs: r });

        // Quasiconformal top block with |X| spread over five decades.
        let norm = rng::log_uniform(&mut rng, 1e-2, 1e3);
        let xq = qc_matrix(&mut rng, DIAG_K, norm);
        let yq = if n > 2 {
            let dir = rng::unit_vector(&mut rng, 2 * (n - 2));
            let len = DIAG_L * rng.random::<f64>();
            DMatrix::from_column_slice(n - 2, 2, (dir * len).as_slice())
        } else {
            DMatrix::zeros(0, 2)
        };
        let pair = BlockPair::new(xq, yq).expect("shape");
        let bq = inner_stress_blocks(&pair).matrix().norm();
        checks.push(Check { item: ITEMS[6], value: bq, lhs: bq, rhs: xq.norm() });
        let zq = pair.stacked().expect("finite");
        let dbq = stress_jacobian_norm_fd(&zq, 1e-6) * (1.0 + xq.norm());
        checks.push(Check { item: ITEMS[7], value: dbq, lhs: dbq, rhs: xq.norm() });
    }

    let g = metric(&z);
    let ginv = g.g.try_inverse().expect("g >= id");
    let (v, l, r) = mat_dev(&b, &(g.det().sqrt() * ginv));
    checks.push(Check { item: ITEMS[8], value: v, lhs: l, rhs: r });

    let lhs = dmat(&area_gradient(&z));
    let rhs = dmat(&z) * b;
    let (l, r) = (lhs.norm(), rhs.norm());
    checks.push(Check {
        item: ITEMS[9],
        value: scaled_deviation((&lhs - &rhs).norm(), l.max(r)),
        lhs: l,
        rhs: r,
    });

    let a = rng::unit_vector(&mut rng, n) * rng::uniform(&mut rng, 0.0, ENTRY_RANGE);
    let theta = rng::uniform(&mut rng, 0.0, std::f64::consts::TAU);
    let r1 = GradientMatrix::outer(a.as_slice(), [theta.cos(), theta.sin()]).expect("finite");
    let lhs = area(&r1);
    let rhs = (1.0 + r1.norm_squared()).sqrt();
    checks.push(Check {
        item: ITEMS[10],
        value: scaled_deviation(lhs - rhs, rhs),
        lhs,
        rhs,
    });

    SampleOutcome {
        checks,
        skipped,
        inputs,
    }
}

/// Checks every identity on `samples` random matrices of codimension `n`.
///
/// Deviations are measured as `|lhs - rhs| / (1 + max(|lhs|, |rhs|))` and a
/// violation is any deviation above `tol`. The two boundedness items report
/// raw suprema (`|B|` and `|DB| (1 + |X|)`) for quasiconformal top blocks with
/// `K = 4`, `|Y| <= 1`; they never count as violations unless non-finite.
pub fn verify_identities(n: usize, samples: u64, seed: u64, tol: f64) -> Result<ScanReport> {
    if n < 2 {
        return Err(Error::invalid("identity suite needs n >= 2"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let start = Instant::now();
    let mut report = ScanReport::new("identities", seed, samples)
        .with_config("n", n)
        .with_config("tol", tol)
        .with_config("entry_range", ENTRY_RANGE);
    for_each_sample(
        samples,
        |i| evaluate(n, seed, i),
        |i, out| {
            report.evaluated += 1;
            for item in &out.skipped {
                report.item_mut(item).skip();
            }
            for c in &out.checks {
                let diagnostic = DIAGNOSTIC_ITEMS.contains(&c.item);
                let violated = if diagnostic {
                    !c.value.is_finite()
                } else {
                    !(c.value <= tol)
                };
                report.item_mut(c.item).record(c.value, violated);
                if violated {
                    report.push_violation(Violation {
                        item: c.item.to_string(),
                        index: i,
                        inputs: out.inputs.clone(),
                        lhs: c.lhs,
                        rhs: c.rhs,
                    });
                }
            }
        },
    );
    report.wall_time = start.elapsed();
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessConfig {
    pub n: usize,
    pub k: f64,
    pub l: f64,
    /// `|X|` is swept over the decades `[10^e, 10^{e+1}]` for `e` in this range.
    pub min_exponent: i32,
    pub max_exponent: i32,
    pub samples_per_decade: u64,
    pub seed: u64,
}

impl Default for BoundednessConfig {
    fn default() -> Self {
        Self {
            n: 3,
            k: 4.0,
            l: 1.0,
            min_exponent: 0,
            max_exponent: 2,
            samples_per_decade: 20_000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecadeStats {
    pub lower: f64,
    pub upper: f64,
    pub max_stress: f64,
    pub max_scaled_gradient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub config: BoundednessConfig,
    pub decades: Vec<DecadeStats>,
    /// Least-squares slope of `log10(max |B|)` against `log10` of the decade centre.
    pub stress_slope: f64,
    /// Same for `max |DB| (1 + |X|)`.
    pub gradient_slope: f64,
    pub sup_stress: f64,
    pub sup_scaled_gradient: f64,
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Sweeps `|X|` over decades for quasiconformal `X` (`|X|^2 <= K det X`) and
/// `|Y| <= L`, recording per decade the largest `|B(X|Y)|` and
/// `|DB(X|Y)| (1 + |X|)`.
pub fn boundedness_scan(cfg: &BoundednessConfig) -> Result<BoundednessReport> {
    if cfg.n < 2 || !(cfg.k >= 2.0) || !(cfg.l >= 0.0) || cfg.max_exponent < cfg.min_exponent {
        return Err(Error::invalid("boundedness scan needs n >= 2, K >= 2, L >= 0"));
    }
    if cfg.samples_per_decade == 0 {
        return Err(Error::invalid("boundedness scan needs samples"));
    }
    let n = cfg.n;
    let mut decades = Vec::new();
    for (d, e) in (cfg.min_exponent..=cfg.max_exponent).enumerate() {
        let lower = 10f64.powi(e);
        let upper = 10f64.powi(e + 1);
        let mut max_stress: f64 = 0.0;
        let mut max_grad: f64 = 0.0;
        for_each_sample(
            cfg.samples_per_decade,
            |i| {
                let mut rng = rng::sample_rng(cfg.seed, stream::BOUNDEDNESS + 100 * d as u64, i);
                let norm = rng::log_uniform(&mut rng, lower, upper);
                let x = qc_matrix(&mut rng, cfg.k, norm);
                let y = if n > 2 {
                    let dir = rng::unit_vector(&mut rng, 2 * (n - 2));
                    let len = cfg.l * rng.random::<f64>();
                    DMatrix::from_column_slice(n - 2, 2, (dir * len).as_slice())
                } else {
                    DMatrix::zeros(0, 2)
                };
                let pair = BlockPair::new(x, y).expect("shape");
                let b = inner_stress_blocks(&pair).matrix().norm();
                let z = pair.stacked().expect("finite");
                let db = stress_jacobian_norm_fd(&z, 1e-6) * (1.0 + x.norm());
                (b, db)
            },
            |_, (b, db)| {
                max_stress = max_stress.max(b);
                max_grad = max_grad.max(db);
            },
        );
        decades.push(DecadeStats {
            lower,
            upper,
            max_stress,
            max_scaled_gradient: max_grad,
        });
    }
    let xs: Vec<f64> = decades.iter().map(|d| (d.lower * d.upper).sqrt().log10()).collect();
    let bs: Vec<f64> = decades.iter().map(|d| d.max_stress.log10()).collect();
    let gs: Vec<f64> = decades.iter().map(|d| d.max_scaled_gradient.log10()).collect();
    Ok(BoundednessReport {
        config: cfg.clone(),
        stress_slope: ls_slope(&xs, &bs),
        gradient_slope: ls_slope(&xs, &gs),
        sup_stress: decades.iter().map(|d| d.max_stress).fold(0.0, f64::max),
        sup_scaled_gradient: decades.iter().map(|d| d.max_scaled_gradient).fold(0.0, f64::max),
        decades,
    })
}
