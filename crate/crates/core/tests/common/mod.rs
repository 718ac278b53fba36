//! Scalar minimal-graph Newton solver used as an oracle.
//!
//! Minimizes `sum_T |T| sqrt(1 + |grad u_T|^2)` over P1 functions with fixed
//! boundary values. Assembly and the linear solver are written from scratch
//! here so they share nothing with the library's descent code.

use std::collections::BTreeMap;

pub struct ScalarProblem {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub fixed: Vec<bool>,
}

struct Geometry {
    area: f64,
    grads: [[f64; 2]; 3],
}

fn geometry(p: [[f64; 2]; 3]) -> Geometry {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut grads = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        grads[k] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    Geometry { area: 0.5 * det.abs(), grads }
}

fn cg(rows: &[BTreeMap<usize, f64>], b: &[f64], tol: f64) -> Vec<f64> {
    let n = b.len();
    let apply = |x: &[f64]| -> Vec<f64> { rows.iter().map(|r| r.iter().map(|(&j, &v)| v * x[j]).sum()).collect() };
    let diag: Vec<f64> = (0..n).map(|i| rows[i][&i]).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..10 * n {
        let ap = apply(&p);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= tol * bnorm {
            break;
        }
        z = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

impl ScalarProblem {
    fn energy(&self, u: &[f64], geo: &[Geometry]) -> f64 {
        let mut e = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            let g = &geo[t];
            let mut du = [0.0; 2];
            for k in 0..3 {
                du[0] += u[tri[k]] * g.grads[k][0];
                du[1] += u[tri[k]] * g.grads[k][1];
            }
            e += g.area * (1.0 + du[0] * du[0] + du[1] * du[1]).sqrt();
        }
        e
    }


    /// Newton iteration from `u0` (whose fixed entries are kept) until the
    /// update drops below `tol` in sup norm.
    pub fn newton(&self, mut u: Vec<f64>, tol: f64) -> Vec<f64> {
        let free: Vec<usize> = (0..self.nodes.len()).filter(|&i| !self.fixed[i]).collect();
        let mut slot = vec![usize::MAX; self.nodes.len()];
        for (k, &i) in free.iter().enumerate() {
            slot[i] = k;
        }
        let geo: Vec<Geometry> = self
            .triangles
            .iter()
            .map(|t| geometry([self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]))
            .collect();
        for _ in 0..50 {
            let mut grad = vec![0.0; free.len()];
            let mut hess: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); free.len()];
            for (t, tri) in self.triangles.iter().enumerate() {
                let g = &geo[t];
                let mut du = [0.0; 2];
                for k in 0..3 {
                    du[0] += u[tri[k]] * g.grads[k][0];
                    du[1] += u[tri[k]] * g.grads[k][1];
                }
                let w = (1.0 + du[0] * du[0] + du[1] * du[1]).sqrt();
                let proj: Vec<f64> = (0..3).map(|k| du[0] * g.grads[k][0] + du[1] * g.grads[k][1]).collect();
                for p in 0..3 {
                    let i = slot[tri[p]];
                    if i == usize::MAX {
                        continue;
                    }
                    grad[i] += g.area * proj[p] / w;
                    for q in 0..3 {
                        let gg = g.grads[p][0] * g.grads[q][0] + g.grads[p][1] * g.grads[q][1];
                        let h = g.area * (gg / w - proj[p] * proj[q] / (w * w * w));
                        let j = slot[tri[q]];
                        if j != usize::MAX {
                            *hess[i].entry(j).or_insert(0.0) += h;
                        }
                    }
                }
            }
            let step = cg(&hess, &grad, 1e-14);
            let change = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            // Damped while far from the solution, full steps once close.
            let e0 = self.energy(&u, &geo);
            let mut t = 1.0;
            loop {
                let mut trial = u.clone();
                for (k, &i) in free.iter().enumerate() {
                    trial[i] -= t * step[k];
                }
                if change * t < 1e-8 || self.energy(&trial, &geo) < e0 || t < 1e-10 {
                    u = trial;
                    break;
                }
                t *= 0.5;
            }
            if change < tol {
                return u;
            }
        }
        panic!("scalar Newton oracle did not converge");
    }
}
