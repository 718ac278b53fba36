//! Allocation-free evaluation on column slices `(z1, z2)`, both of length `n`.

use super::Mat2;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_{a<b} det(Z^{ab})^2`.
#[inline]
pub fn minor_sum_sq(z1: &[f64], z2: &[f64]) -> f64 {
    let n = z1.len();
    let mut s = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let d = z1[a] * z2[b] - z2[a] * z1[b];
            s += d * d;
        }
    }
    s
}

pub fn max_abs_minor(z1: &[f64], z2: &[f64]) -> f64 {
    let n = z1.len();
    let mut m: f64 = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            m = m.max((z1[a] * z2[b] - z2[a] * z1[b]).abs());
        }
    }
    m
}

#[inline]
pub fn area(z1: &[f64], z2: &[f64]) -> f64 {
    (1.0 + dot(z1, z1) + dot(z2, z2) + minor_sum_sq(z1, z2)).sqrt()
}

/// Writes `DA(Z)` into `(o1, o2)` and returns `A(Z)`.
pub fn area_gradient(z1: &[f64], z2: &[f64], o1: &mut [f64], o2: &mut [f64]) -> f64 {
    let n = z1.len();
    o1.copy_from_slice(z1);
    o2.copy_from_slice(z2);
    // d_ab * C_ab(Z): rows a and b carry cof(Z^{ab})^T.
    for a in 0..n {
        for b in (a + 1)..n {
            let d = z1[a] * z2[b] - z2[a] * z1[b];
            o1[a] += d * z2[b];
            o2[a] -= d * z1[b];
            o1[b] -= d * z2[a];
            o2[b] += d * z1[a];
        }
    }
    let a = area(z1, z2);
    for v in o1.iter_mut().chain(o2.iter_mut()) {
        *v /= a;
    }
    a
}

#[inline]
pub fn inner_stress(z1: &[f64], z2: &[f64]) -> Mat2 {
    let a = area(z1, z2);
    let c = dot(z1, z2);
    Mat2::new(1.0 + dot(z2, z2), -c, -c, 1.0 + dot(z1, z1)) / a
}

#[inline]
pub fn metric(z1: &[f64], z2: &[f64]) -> Mat2 {
    let c = dot(z1, z2);
    Mat2::new(1.0 + dot(z1, z1), c, c, 1.0 + dot(z2, z2))
}
