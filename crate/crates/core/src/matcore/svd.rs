use serde::{Deserialize, Serialize};

use super::Mat2;
use crate::rng::rotation;

/// `M = U diag(s1, s2) V^T` with `s1 >= s2 >= 0` and `det U = +1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Svd2 {
    pub u: Mat2,
    pub s: [f64; 2],
    pub v: Mat2,
}

impl Svd2 {
    pub fn reconstruct(&self) -> Mat2 {
        self.u * Mat2::new(self.s[0], 0.0, 0.0, self.s[1]) * self.v.transpose()
    }
}

/// Closed-form SVD of a 2x2 matrix.
///
/// Writing `M = [[a, b], [c, d]]`, the conformal part `(E, H)` and the
/// anti-conformal part `(F, G)` give `s1 = Q + R`, `s2 = |Q - R|` with
/// `Q = |(E, H)|`, `R = |(F, G)|`. When `det M < 0` the reflection is carried
/// by `V` so that `U` stays a rotation. Conformal inputs (`R = 0`) get
/// `U = V` whenever `M` is a positive multiple of the identity.
pub fn svd2(m: &Mat2) -> Svd2 {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let e = 0.5 * (a + d);
    let f = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let sx = q + r;
    let sy = q - r;
    let a1 = g.atan2(f);
    let a2 = h.atan2(e);
    let theta = 0.5 * (a2 - a1);
    let phi = 0.5 * (a2 + a1);
    let u = rotation(phi);
    let mut v = rotation(-theta);
    let s2 = if sy < 0.0 {
        v.set_column(1, &(-v.column(1)));
        -sy
    } else {
        sy
    };
    Svd2 { u, s: [sx, s2], v }
}
