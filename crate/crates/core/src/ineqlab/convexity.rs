//! Convexity of the area integrand near rank-one matrices.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::sample::{rank_one_pair, SmallDetPairDraw};
use super::{ScanConfig, PAIR_EXCLUSION};
use crate::error::{Error, Result};
use crate::matcore::{area, area_gradient, area_hessian_fd, GradientMatrix, HESSIAN_STEP};
use crate::report::{for_each_sample, row_major, Histogram, ScanReport, Violation};
use crate::rng::{normal, sample_rng, stream};

pub(crate) const RANK_ONE_ITEM: &str = "rank1-convexity";
pub(crate) const HESSIAN_ITEM: &str = "rank1-hessian";
pub(crate) const SMALL_DET_ITEM: &str = "small-det";

/// Decades tried below `Lambda^2` before the small determinant search gives up.
const MAX_DECADES: i32 = 12;

/// `<DA(X) - DA(Y), X - Y> / |X - Y|^2`, or `None` when the pair is too close
/// for the quotient to mean anything.
pub fn convexity_ratio(x: &GradientMatrix, y: &GradientMatrix) -> Result<Option<f64>> {
    Ok(convexity_terms(x, y)?.map(|(num, d2)| num / d2))
}

fn convexity_terms(x: &GradientMatrix, y: &GradientMatrix) -> Result<Option<(f64, f64)>> {
    if x.codim() != y.codim() {
        return Err(Error::invalid("pair has different codimensions"));
    }
    let diff = x.matrix() - y.matrix();
    let d2 = diff.norm_squared();
    if d2 == 0.0 || d2.sqrt() < PAIR_EXCLUSION * x.norm().max(y.norm()) {
        return Ok(None);
    }
    let g = area_gradient(x).into_matrix() - area_gradient(y).into_matrix();
    Ok(Some((g.dot(&diff), d2)))
}

fn inputs(pairs: &[(&str, &GradientMatrix)]) -> BTreeMap<String, Vec<f64>> {
    pairs.iter().map(|(k, m)| (k.to_string(), row_major(m.matrix()))).collect()
}

const CLOSE_PAIR: &str = "pair closer than 1e-9 max(|X|, |Y|)";

fn rank_one_sample_at(cfg: &ScanConfig, index: u64) -> (GradientMatrix, GradientMatrix) {
    let mut rng = sample_rng(cfg.seed, stream::RANK_ONE_CONVEXITY, index);
    rank_one_pair(cfg.lambda_bound, cfg.n, &mut rng)
}

/// Records one pair into a convexity report; violations are ratios `<= 0`.
fn record_pair(report: &mut ScanReport, index: u64, x: &GradientMatrix, y: &GradientMatrix) {
    report.evaluated += 1;
    match convexity_terms(x, y).expect("pairs share a codimension") {
        None => report.push_excluded(index, CLOSE_PAIR),
        Some((num, d2)) => {
            let r = num / d2;
            let violated = !(r > 0.0);
            report.item_mut(RANK_ONE_ITEM).record(r, violated);
            if let Some(h) = report.histogram.as_mut() {
                h.add(r);
            }
            if violated {
                report.push_violation(Violation {
                    item: RANK_ONE_ITEM.into(),
                    index,
                    inputs: inputs(&[("X", x), ("Y", y)]),
                    lhs: num,
                    rhs: 0.0,
                });
            }
        }
    }
}

fn finish_convexity(report: &mut ScanReport, lambda_bound: f64) {
    report.set_constant("floor", (1.0 + lambda_bound * lambda_bound).powf(-1.5));
    if let Some(stats) = report.items.get(RANK_ONE_ITEM).cloned() {
        if let (Some(lo), Some(hi)) = (stats.min, stats.max) {
            report.set_constant("min_ratio", lo);
            report.set_constant("max_ratio", hi);
            report.set_constant("lambda_est", 0.5 * lo);
        }
    }
}

/// Samples rank-one pairs with `|X|, |Y| <= Lambda` and estimates the
/// convexity constant `lambda_est = min r / 2`.
pub fn convexity_rank_one_scan(cfg: &ScanConfig) -> Result<ScanReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = cfg.echo(ScanReport::new(RANK_ONE_ITEM, cfg.seed, cfg.samples));
    report.histogram = Some(Histogram::new(0.0, 1.05, 105));
    for_each_sample(
        cfg.samples,
        |i| rank_one_sample_at(cfg, i),
        |i, (x, y)| record_pair(&mut report, i, &x, &y),
    );
    finish_convexity(&mut report, cfg.lambda_bound);
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Evaluates given pairs the way [`convexity_rank_one_scan`] evaluates
/// sampled ones. Coincident pairs are excluded, not flagged.
pub fn convexity_pairs_report(pairs: &[(GradientMatrix, GradientMatrix)]) -> Result<ScanReport> {
    let mut report = ScanReport::new(RANK_ONE_ITEM, 0, pairs.len() as u64);
    let mut bound: f64 = 0.0;
    for (i, (x, y)) in pairs.iter().enumerate() {
        if x.codim() != y.codim() {
            return Err(Error::invalid(format!("pair {i} has different codimensions")));
        }
        bound = bound.max(x.norm()).max(y.norm());
        record_pair(&mut report, i as u64, x, y);
    }
    finish_convexity(&mut report, bound);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianCheck {
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
}

/// `D^2 A(X)[W, W]` by finite differences against the floor `1 / A(X)^3`.
pub fn hessian_margin(x: &GradientMatrix, w: &GradientMatrix) -> Result<HessianCheck> {
    let value = area_hessian_fd(x, w, HESSIAN_STEP)?;
    let bound = area(x).powi(-3);
    Ok(HessianCheck {
        value,
        bound,
        margin: value - bound,
    })
}

fn hessian_sample_at(cfg: &ScanConfig, index: u64) -> (GradientMatrix, GradientMatrix) {
    let mut rng = sample_rng(cfg.seed, stream::RANK_ONE_HESSIAN, index);
    let x = super::rank_one_sample(cfg.lambda_bound, cfg.n, &mut rng);
    let raw: Vec<f64> = (0..2 * cfg.n).map(|_| normal(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit: Vec<f64> = raw.iter().map(|v| v / norm).collect();
    let (c1, c2) = unit.split_at(cfg.n);
    (x, GradientMatrix::from_columns(c1, c2).expect("finite direction"))
}

/// Rank-one `X` with `|X| <= Lambda` and unit `W`; a violation is a margin
/// below `-tol`.
pub fn hessian_rank_one_scan(cfg: &ScanConfig) -> Result<ScanReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = cfg.echo(ScanReport::new(HESSIAN_ITEM, cfg.seed, cfg.samples));
    report.histogram = Some(Histogram::new(0.0, 1.0, 100));
    let mut failure = None;
    for_each_sample(
        cfg.samples,
        |i| {
            let (x, w) = hessian_sample_at(cfg, i);
            let check = hessian_margin(&x, &w);
            (x, w, check)
        },
        |i, (x, w, check)| {
            report.evaluated += 1;
            let check = match check {
                Ok(c) => c,
                Err(e) => {
                    failure.get_or_insert(e);
                    return;
                }
            };
            let violated = !(check.margin >= -cfg.tol);
            report.item_mut(HESSIAN_ITEM).record(check.margin, violated);
            if let Some(h) = report.histogram.as_mut() {
                h.add(check.margin);
            }
            if violated {
                report.push_violation(Violation {
                    item: HESSIAN_ITEM.into(),
                    index: i,
                    inputs: inputs(&[("X", &x), ("W", &w)]),
                    lhs: check.value,
                    rhs: check.bound,
                });
            }
        },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(stats) = report.items.get(HESSIAN_ITEM).cloned() {
        if let (Some(lo), Some(hi)) = (stats.min, stats.max) {
            report.set_constant("min_margin", lo);
            report.set_constant("max_margin", hi);
        }
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

fn small_det_sample_at(cfg: &ScanConfig, eps: f64, index: u64) -> (GradientMatrix, GradientMatrix) {
    let mut rng = sample_rng(cfg.seed, stream::SMALL_DET, index);
    SmallDetPairDraw::draw(cfg.n, &mut rng).matrices(cfg.lambda_bound, eps)
}

/// One level of the small determinant search: pairs with all minors at most
/// `eps`, violations are ratios below `lambda`.
pub fn small_det_level(cfg: &ScanConfig, lambda: f64, eps: f64) -> Result<ScanReport> {
    cfg.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("margin must be positive, got {lambda}")));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be finite and non-negative, got {eps}")));
    }
    let start = Instant::now();
    let mut report = cfg
        .echo(ScanReport::new(SMALL_DET_ITEM, cfg.seed, cfg.samples))
        .with_config("eps", eps)
        .with_config("lambda", lambda);
    for_each_sample(
        cfg.samples,
        |i| {
            let (x, y) = small_det_sample_at(cfg, eps, i);
            let terms = convexity_terms(&x, &y).expect("pairs share a codimension");
            (x, y, terms)
        },
        |i, (x, y, terms)| {
            report.evaluated += 1;
            let Some((num, d2)) = terms else {
                report.push_excluded(i, CLOSE_PAIR);
                return;
            };
            let r = num / d2;
            let violated = !(r >= lambda);
            report.item_mut(SMALL_DET_ITEM).record(r, violated);
            if violated {
                let mut inp = inputs(&[("X", &x), ("Y", &y)]);
                inp.insert("eps".into(), vec![eps]);
                inp.insert("lambda".into(), vec![lambda]);
                report.push_violation(Violation {
                    item: SMALL_DET_ITEM.into(),
                    index: i,
                    inputs: inp,
                    lhs: num,
                    rhs: lambda * d2,
                });
            }
        },
    );
    report.set_constant("eps", eps);
    report.set_constant("lambda", lambda);
    if let Some(lo) = report.items.get(SMALL_DET_ITEM).and_then(|s| s.min) {
        report.set_constant("min_ratio", lo);
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Searches for the largest `eps` at which no sampled pair violates the
/// convexity inequality with margin `lambda`.
///
/// Starts at `eps = Lambda^2`, walks down by decades until a level is clean,
/// then bisects geometrically between the last clean and the first violating
/// level. The returned report is the clean level at `eps_est`; every level
/// is attached under `levels`. All levels share random numbers.
pub fn small_det_convexity_scan(cfg: &ScanConfig, lambda: f64) -> Result<ScanReport> {
    let start = Instant::now();
    let top = cfg.lambda_bound * cfg.lambda_bound;
    let mut levels = Vec::new();
    let first = small_det_level(cfg, lambda, top)?;
    let mut hi = None;
    let mut lo = None;
    if first.violation_count == 0 {
        lo = Some((top, first.clone()));
    } else {
        hi = Some(top);
    }
    levels.push(first);
    if lo.is_none() {
        for k in 1..=MAX_DECADES {
            let eps = top * 10f64.powi(-k);
            let rep = small_det_level(cfg, lambda, eps)?;
            let clean = rep.violation_count == 0;
            levels.push(rep.clone());
            if clean {
                lo = Some((eps, rep));
                break;
            }
            hi = Some(eps);
        }
    }
    if let (Some((mut l, mut best)), Some(mut h)) = (lo.clone(), hi) {
        for _ in 0..cfg.bisection_steps {
            let mid = (l * h).sqrt();
            let rep = small_det_level(cfg, lambda, mid)?;
            let clean = rep.violation_count == 0;
            levels.push(rep.clone());
            if clean {
                l = mid;
                best = rep;
            } else {
                h = mid;
            }
        }
        lo = Some((l, best));
        hi = Some(h);
    }
    let (eps_est, mut report) = match lo {
        Some(found) => found,
        None => {
            let last = levels.last().cloned().expect("at least one level");
            (0.0, last)
        }
    };
    report.config.remove("eps");
    report.config.insert("bisection_steps".into(), cfg.bisection_steps.into());
    report.constants.remove("eps");
    report.set_constant("eps_est", eps_est);
    if let Some(h) = hi {
        report.set_constant("eps_violating", h);
    }
    report.set_constant("levels", levels.len() as f64);
    report.levels = levels
        .into_iter()
        .enumerate()
        .map(|(k, r)| (format!("level-{k:02}"), r))
        .collect();
    report.wall_time = start.elapsed();
    Ok(report)
}

fn same(v: &Violation, key: &str, m: &GradientMatrix) -> bool {
    v.inputs.get(key).is_some_and(|stored| {
        let now = row_major(m.matrix());
        stored.len() == now.len() && stored.iter().zip(&now).all(|(a, b)| a.to_bits() == b.to_bits())
    })
}

fn scalar(v: &Violation, key: &str) -> Result<f64> {
    v.inputs
        .get(key)
        .and_then(|s| s.first().copied())
        .ok_or_else(|| Error::invalid(format!("violation record lacks '{key}'")))
}

pub(crate) fn replay_rank_one(cfg: &ScanConfig, v: &Violation) -> Result<bool> {
    let (x, y) = rank_one_sample_at(cfg, v.index);
    let r = convexity_ratio(&x, &y)?;
    Ok(same(v, "X", &x) && same(v, "Y", &y) && r.is_some_and(|r| !(r > 0.0)))
}

pub(crate) fn replay_hessian(cfg: &ScanConfig, v: &Violation) -> Result<bool> {
    let (x, w) = hessian_sample_at(cfg, v.index);
    let check = hessian_margin(&x, &w)?;
    Ok(same(v, "X", &x) && same(v, "W", &w) && !(check.margin >= -cfg.tol))
}

pub(crate) fn replay_small_det(cfg: &ScanConfig, v: &Violation) -> Result<bool> {
    let eps = scalar(v, "eps")?;
    let lambda = scalar(v, "lambda")?;
    let (x, y) = small_det_sample_at(cfg, eps, v.index);
    let r = convexity_ratio(&x, &y)?;
    Ok(same(v, "X", &x) && same(v, "Y", &y) && r.is_some_and(|r| !(r >= lambda)))
}
