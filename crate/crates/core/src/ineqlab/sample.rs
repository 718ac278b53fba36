//! Samplers for the inequality scans.
//!
//! Pair samplers mix independent draws with local pairs, where `Y` is a small
//! perturbation of `X` in the sampler's own coordinates. Local pairs probe the
//! second-order regime that independent draws almost never reach.

use nalgebra::{DMatrix, DVector, MatrixXx2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matcore::{max_stretch, sym_eigenvalues, GradientMatrix, Mat2};
use crate::rng::{log_uniform, normal, rotation, uniform, unit_vector};

/// Relative size of local perturbations is log-uniform in `[LOCAL_MIN, 1]`.
const LOCAL_MIN: f64 = 1e-6;

/// Rank-one matrix `s a (x) (cos t, sin t)` with `|a| = 1`.
#[derive(Clone, Debug)]
pub(crate) struct RankOneParams {
    s: f64,
    a: DVector<f64>,
    theta: f64,
}

impl RankOneParams {
    pub(crate) fn draw(lambda: f64, n: usize, rng: &mut impl Rng) -> Self {
        let s = lambda * rng.random::<f64>().sqrt();
        let a = unit_vector(rng, n);
        let theta = uniform(rng, 0.0, std::f64::consts::TAU);
        Self { s, a, theta }
    }

    pub(crate) fn matrix(&self) -> GradientMatrix {
        let (sn, cs) = self.theta.sin_cos();
        let a: Vec<f64> = self.a.iter().map(|v| self.s * v).collect();
        GradientMatrix::outer(&a, [cs, sn]).expect("finite rank-one factors")
    }

    pub(crate) fn perturbed(&self, delta: f64, lambda: f64, rng: &mut impl Rng) -> Self {
        let s = (self.s * (1.0 + delta * normal(rng))).clamp(0.0, lambda);
        let a = &self.a + unit_vector(rng, self.a.len()) * delta;
        let norm = a.norm();
        let a = if norm > 1e-12 { a / norm } else { self.a.clone() };
        let theta = self.theta + delta * normal(rng);
        Self { s, a, theta }
    }
}

/// Random rank-one `n x 2` matrix with `|X| <= lambda`.
///
/// Panics unless `lambda` is finite and non-negative.
pub fn rank_one_sample(lambda: f64, n: usize, rng: &mut impl Rng) -> GradientMatrix {
    assert!(lambda.is_finite() && lambda >= 0.0, "bound must be finite and non-negative");
    RankOneParams::draw(lambda, n, rng).matrix()
}

pub(crate) fn rank_one_pair(lambda: f64, n: usize, rng: &mut impl Rng) -> (GradientMatrix, GradientMatrix) {
    let x = RankOneParams::draw(lambda, n, rng);
    let y = if rng.random::<bool>() {
        let delta = log_uniform(rng, LOCAL_MIN, 1.0);
        x.perturbed(delta, lambda, rng)
    } else {
        RankOneParams::draw(lambda, n, rng)
    };
    (x.matrix(), y.matrix())
}

/// `max |det(X^{ab})|`, which Cauchy-Binet bounds by `s1 s2`.
fn max_minor(m: &MatrixXx2<f64>) -> f64 {
    let (z1, z2) = m.as_slice().split_at(m.nrows());
    crate::matcore::kernel::max_abs_minor(z1, z2)
}

/// Uniform draws of one small-determinant sample. The matrix is built from
/// them for a given `eps`, so different `eps` levels see common random
/// numbers.
#[derive(Clone, Debug)]
struct SmallDetDraw {
    u1: f64,
    u2: f64,
    q1: DVector<f64>,
    q2: DVector<f64>,
    v: Mat2,
}

impl SmallDetDraw {
    fn draw(n: usize, rng: &mut impl Rng) -> Self {
        let u1 = rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let q1 = unit_vector(rng, n);
        let q2 = loop {
            let w = unit_vector(rng, n);
            let w = &w - &q1 * q1.dot(&w);
            let norm = w.norm();
            if norm > 1e-6 {
                break w / norm;
            }
        };
        let v = crate::rng::random_orthogonal2(rng);
        Self { u1, u2, q1, q2, v }
    }

    /// `[q1 q2] diag(s1, s2) V` with `|X| <= lambda` and `s1 s2 <= eps`.
    fn matrix(&self, lambda: f64, eps: f64) -> MatrixXx2<f64> {
        let s1 = lambda * self.u1.sqrt();
        let mut s2max = s1.min((lambda * lambda - s1 * s1).max(0.0).sqrt());
        if s1 > 0.0 {
            s2max = s2max.min(eps / s1 * (1.0 - 1e-12));
        }
        let s2 = s2max * self.u2;
        let n = self.q1.len();
        let left = MatrixXx2::from_fn(n, |i, j| if j == 0 { s1 * self.q1[i] } else { s2 * self.q2[i] });
        left * self.v
    }
}

/// Unit eigenvector of a symmetric 2x2 matrix for eigenvalue `l`.
fn eigenvector(g: &Mat2, l: f64) -> [f64; 2] {
    let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let p = [b, l - a];
    let q = [l - d, b];
    let np = p[0].hypot(p[1]);
    let nq = q[0].hypot(q[1]);
    if np.max(nq) < 1e-300 {
        return [1.0, 0.0];
    }
    if np >= nq {
        [p[0] / np, p[1] / np]
    } else {
        [q[0] / nq, q[1] / nq]
    }
}

/// Pulls `y` back into `{|Y| <= lambda, s1 s2 <= eps}`: first a radial
/// scaling, then a shrink of the smaller singular direction.
fn admissible(mut y: MatrixXx2<f64>, lambda: f64, eps: f64) -> Option<MatrixXx2<f64>> {
    let norm = y.norm();
    if norm > lambda {
        y *= lambda / norm * (1.0 - 1e-12);
    }
    let g = y.transpose() * &y;
    let [lo, hi] = sym_eigenvalues(&g);
    let (s1, s2) = (hi.max(0.0).sqrt(), lo.max(0.0).sqrt());
    if s1 * s2 > eps && s2 > 0.0 {
        let target = eps / s1 * (1.0 - 1e-9);
        let v = eigenvector(&g, lo);
        let yv = &y * nalgebra::Vector2::new(v[0], v[1]);
        let k = 1.0 - target / s2;
        for i in 0..y.nrows() {
            y[(i, 0)] -= k * yv[i] * v[0];
            y[(i, 1)] -= k * yv[i] * v[1];
        }
    }
    (y.norm() <= lambda && max_minor(&y) <= eps).then_some(y)
}

/// All random numbers of one small-determinant pair.
#[derive(Clone, Debug)]
pub(crate) struct SmallDetPairDraw {
    x: SmallDetDraw,
    y: SmallDetDraw,
    local: bool,
    delta: f64,
    w: MatrixXx2<f64>,
}

impl SmallDetPairDraw {
    pub(crate) fn draw(n: usize, rng: &mut impl Rng) -> Self {
        let x = SmallDetDraw::draw(n, rng);
        let y = SmallDetDraw::draw(n, rng);
        let local = rng.random::<bool>();
        let delta = log_uniform(rng, LOCAL_MIN, 1.0);
        let w = MatrixXx2::from_fn(n, |_, _| normal(rng));
        let w = &w / w.norm().max(1e-300);
        Self { x, y, local, delta, w }
    }

    pub(crate) fn matrices(&self, lambda: f64, eps: f64) -> (GradientMatrix, GradientMatrix) {
        let x = self.x.matrix(lambda, eps);
        let independent = || self.y.matrix(lambda, eps);
        let y = if self.local {
            admissible(&x + &self.w * (self.delta * lambda), lambda, eps).unwrap_or_else(independent)
        } else {
            independent()
        };
        (
            GradientMatrix::new(x).expect("finite sample"),
            GradientMatrix::new(y).expect("finite sample"),
        )
    }
}

/// Random pair with `|X|, |Y| <= lambda` and all 2x2 minors at most `eps`
/// in absolute value.
pub fn small_det_sample(
    lambda: f64,
    eps: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<(GradientMatrix, GradientMatrix)> {
    if !(lambda.is_finite() && lambda >= 0.0 && eps >= 0.0) || n < 2 {
        return Err(Error::invalid("need lambda >= 0, eps >= 0 and n >= 2"));
    }
    Ok(SmallDetPairDraw::draw(n, rng).matrices(lambda, eps))
}

/// Admissible parameters of quasiconformal matrices `|X|^2 <= K det X`,
/// `det X >= eps3`, `|X| <= cap`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct QcRange {
    eps3: f64,
    cap: f64,
    t_max: f64,
}

impl QcRange {
    pub(crate) fn new(k: f64, eps3: f64, cap: f64) -> Result<Self> {
        if !(k >= 2.0 && k.is_finite()) {
            return Err(Error::invalid(format!("K must be finite and at least 2, got {k}")));
        }
        if !(eps3 > 0.0 && eps3.is_finite() && cap.is_finite()) {
            return Err(Error::invalid("eps3 must be positive and the cap finite"));
        }
        if cap < (k * eps3).sqrt() {
            return Err(Error::invalid(format!(
                "infeasible sampler: cap {cap} is below sqrt(K eps3) = {}",
                (k * eps3).sqrt()
            )));
        }
        // det >= eps3 and |X| <= cap force t + 1/t <= cap^2 / eps3 as well.
        let bound = k.min(cap * cap / eps3);
        let t_max = (max_stretch(bound) * (1.0 - 1e-9)).max(1.0);
        Ok(Self { eps3, cap, t_max })
    }

    /// Range of the squared smaller singular value for ratio `t`.
    fn b2_range(&self, t: f64) -> (f64, f64) {
        let lo = self.eps3 / t * (1.0 + 1e-9);
        let hi = self.cap * self.cap / (t * t + 1.0) * (1.0 - 1e-9);
        (lo, hi.max(lo))
    }
}

/// `R(theta_l) diag(t b, b) R(theta_r)`, with the diagonal swapped when
/// `swap` is set.
#[derive(Clone, Copy, Debug)]
pub(crate) struct QcParams {
    t: f64,
    b2: f64,
    theta_l: f64,
    theta_r: f64,
    swap: bool,
}

impl QcParams {
    /// With `orthogonal` the right factor is the identity, so the columns
    /// are orthogonal.
    pub(crate) fn draw(range: &QcRange, orthogonal: bool, rng: &mut impl Rng) -> Self {
        let t = log_uniform(rng, 1.0, range.t_max);
        let (lo, hi) = range.b2_range(t);
        let b2 = log_uniform(rng, lo, hi);
        let theta_l = uniform(rng, 0.0, std::f64::consts::TAU);
        let theta_r = uniform(rng, 0.0, std::f64::consts::TAU);
        let swap = rng.random::<bool>();
        Self {
            t,
            b2,
            theta_l,
            theta_r: if orthogonal { 0.0 } else { theta_r },
            swap,
        }
    }

    pub(crate) fn matrix(&self) -> Mat2 {
        let b = self.b2.sqrt();
        let (p, q) = if self.swap { (b, self.t * b) } else { (self.t * b, b) };
        rotation(self.theta_l) * Mat2::new(p, 0.0, 0.0, q) * rotation(self.theta_r)
    }

    fn perturbed(&self, range: &QcRange, delta: f64, orthogonal: bool, rng: &mut impl Rng) -> Self {
        let t = (self.t * (delta * normal(rng)).exp()).clamp(1.0, range.t_max);
        let (lo, hi) = range.b2_range(t);
        let b2 = (self.b2 * (delta * normal(rng)).exp()).clamp(lo, hi);
        let theta_l = self.theta_l + delta * normal(rng);
        let dr = delta * normal(rng);
        Self {
            t,
            b2,
            theta_l,
            theta_r: if orthogonal { 0.0 } else { self.theta_r + dr },
            swap: self.swap,
        }
    }
}

/// How the second matrix of a pair was drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PairMode {
    Independent,
    Local,
    /// `Y = R X` for a random rotation `R`, on which `B(.|M)` is constant.
    Rotated,
}

pub(crate) fn qc_pair_mixture(range: &QcRange, orthogonal: bool, rng: &mut impl Rng) -> (Mat2, Mat2, PairMode) {
    let x = QcParams::draw(range, orthogonal, rng);
    let u = rng.random::<f64>();
    let (y, mode) = if u < 0.5 {
        (QcParams::draw(range, orthogonal, rng), PairMode::Independent)
    } else if u < 0.875 {
        let delta = log_uniform(rng, LOCAL_MIN, 1.0);
        (x.perturbed(range, delta, orthogonal, rng), PairMode::Local)
    } else {
        let mut y = x;
        y.theta_l += uniform(rng, 0.0, std::f64::consts::TAU);
        (y, PairMode::Rotated)
    };
    (x.matrix(), y.matrix(), mode)
}

/// Two independent quasiconformal matrices, each with `|X|^2 <= K det X`,
/// `det X >= eps3` and `|X| <= cap`.
pub fn qc_pair_sample(k: f64, eps3: f64, cap: f64, rng: &mut impl Rng) -> Result<(Mat2, Mat2)> {
    let range = QcRange::new(k, eps3, cap)?;
    let x = QcParams::draw(&range, false, rng).matrix();
    let y = QcParams::draw(&range, false, rng).matrix();
    Ok((x, y))
}

/// Uniform sample of the ball `|M| <= radius` in `R^{rows x 2}`.
pub(crate) fn ball_matrix(rows: usize, radius: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    if rows == 0 {
        return DMatrix::zeros(0, 2);
    }
    let dir = unit_vector(rng, 2 * rows);
    let r = radius * rng.random::<f64>().powf(1.0 / (2 * rows) as f64);
    DMatrix::from_column_slice(rows, 2, (dir * r).as_slice())
}
