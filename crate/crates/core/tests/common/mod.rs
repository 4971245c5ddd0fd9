//! Dense brute-force oracles shared by the integration tests.
//!
//! Basis functions are evaluated globally from vertex coordinates, without
//! the element map, dof map or sparsity machinery used by the library.

#![allow(dead_code)]

use eoflow::fem::quad_rule;
use eoflow::mesh::{generate, GeometrySpec, TriMesh};
use rand::{Rng, SeedableRng};

pub type Dense = Vec<Vec<f64>>;

/// 4×4 unit square (32 triangles) with interior vertices jittered.
pub fn jittered_square(seed: u64) -> TriMesh {
    let mut m = generate(&GeometrySpec::unit_square(4)).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let boundary = m.boundary_mask();
    for (v, x) in m.vertices.iter_mut().enumerate() {
        if !boundary[v] {
            x[0] += rng.gen_range(-0.06..0.06);
            x[1] += rng.gen_range(-0.06..0.06);
        }
    }
    m
}

fn barycentric(c: [[f64; 2]; 3], x: [f64; 2]) -> ([f64; 3], [[f64; 2]; 3]) {
    let twice = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
    let mut l = [0.0; 3];
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let (p, q) = (c[(k + 1) % 3], c[(k + 2) % 3]);
        l[k] = ((q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0])) / twice;
        g[k] = [-(q[1] - p[1]) / twice, (q[0] - p[0]) / twice];
    }
    (l, g)
}

/// Value and gradient of global scalar basis function `dof` at `x` in triangle `t`.
/// Dofs: vertices first, then one bubble per triangle when `bubble` is set.
pub fn global_basis(mesh: &TriMesh, bubble: bool, t: usize, dof: usize, x: [f64; 2]) -> (f64, [f64; 2]) {
    let tri = mesh.triangles[t];
    let c = [mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]];
    let (l, g) = barycentric(c, x);
    if let Some(k) = tri.iter().position(|&v| v == dof) {
        return (l[k], g[k]);
    }
    if bubble && dof == mesh.n_vertices() + t {
        let v = 27.0 * l[0] * l[1] * l[2];
        let grad = [0, 1].map(|d| 27.0 * (g[0][d] * l[1] * l[2] + l[0] * g[1][d] * l[2] + l[0] * l[1] * g[2][d]));
        return (v, grad);
    }
    (0.0, [0.0, 0.0])
}

pub fn n_scalar(mesh: &TriMesh, bubble: bool) -> usize {
    mesh.n_vertices() + if bubble { mesh.n_triangles() } else { 0 }
}

/// Physical quadrature points and weights (same degree as the library).
pub fn quad_points(mesh: &TriMesh, t: usize) -> Vec<([f64; 2], f64)> {
    let rule = quad_rule(6).unwrap();
    let tri = mesh.triangles[t];
    let c = [mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]];
    let area = 0.5 * ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]));
    rule.iter()
        .map(|(l, w)| {
            let x = [0, 1].map(|d| l[0] * c[0][d] + l[1] * c[1][d] + l[2] * c[2][d]);
            (x, 2.0 * area * w)
        })
        .collect()
}

pub fn eval_field(mesh: &TriMesh, bubble: bool, coeffs: &[f64], t: usize, x: [f64; 2]) -> (f64, [f64; 2]) {
    let mut v = 0.0;
    let mut g = [0.0; 2];
    for (dof, &c) in coeffs.iter().enumerate() {
        let (b, gb) = global_basis(mesh, bubble, t, dof, x);
        v += c * b;
        g[0] += c * gb[0];
        g[1] += c * gb[1];
    }
    (v, g)
}

/// `Σ_t Σ_q w · k(t, x, i, j)` over all test `i` and trial `j`.
pub fn dense_form<K>(mesh: &TriMesh, row_bubble: bool, col_bubble: bool, kernel: K) -> Dense
where
    K: Fn(usize, [f64; 2], (f64, [f64; 2]), (f64, [f64; 2])) -> f64,
{
    dense_form_with(mesh, row_bubble, col_bubble, |_, _| (), |t, x, _, r, c| kernel(t, x, r, c))
}

/// As [`dense_form`], with per-point data `pre(t, x)` computed once.
pub fn dense_form_with<P, Pre, K>(mesh: &TriMesh, row_bubble: bool, col_bubble: bool, pre: Pre, kernel: K) -> Dense
where
    Pre: Fn(usize, [f64; 2]) -> P,
    K: Fn(usize, [f64; 2], &P, (f64, [f64; 2]), (f64, [f64; 2])) -> f64,
{
    let (nr, nc) = (n_scalar(mesh, row_bubble), n_scalar(mesh, col_bubble));
    let mut a = vec![vec![0.0; nc]; nr];
    for t in 0..mesh.n_triangles() {
        for (x, w) in quad_points(mesh, t) {
            let p = pre(t, x);
            let rows: Vec<_> = (0..nr).map(|i| global_basis(mesh, row_bubble, t, i, x)).collect();
            let cols: Vec<_> = (0..nc).map(|j| global_basis(mesh, col_bubble, t, j, x)).collect();
            for (i, r) in rows.iter().enumerate() {
                for (j, c) in cols.iter().enumerate() {
                    a[i][j] += w * kernel(t, x, &p, *r, *c);
                }
            }
        }
    }
    a
}

pub fn mass(mesh: &TriMesh, bubble: bool) -> Dense {
    dense_form(mesh, bubble, bubble, |_, _, (vi, _), (vj, _)| vi * vj)
}

pub fn stiffness(mesh: &TriMesh, bubble: bool, kappa: f64) -> Dense {
    dense_form(mesh, bubble, bubble, |_, _, (_, gi), (_, gj)| kappa * (gi[0] * gj[0] + gi[1] * gj[1]))
}

/// Plain or skew convection by a two-component wind stored `[w1; w2]`.
pub fn convection(mesh: &TriMesh, wind: &[f64], skew: bool) -> Dense {
    let ns = n_scalar(mesh, true);
    let (w1, w2) = wind.split_at(ns);
    let pre = |t, x| [eval_field(mesh, true, w1, t, x).0, eval_field(mesh, true, w2, t, x).0];
    dense_form_with(mesh, true, true, pre, |_, _, w, (vi, gi), (vj, gj)| {
        let adv_j = w[0] * gj[0] + w[1] * gj[1];
        let adv_i = w[0] * gi[0] + w[1] * gi[1];
        if skew {
            0.5 * (adv_j * vi - adv_i * vj)
        } else {
            adv_j * vi
        }
    })
}

pub fn drift(mesh: &TriMesh, phi: &[f64], gamma: f64) -> Dense {
    let pre = |t, x| eval_field(mesh, true, phi, t, x).1;
    dense_form_with(mesh, true, true, pre, |_, _, gp, (_, gi), (vj, _)| gamma * vj * (gp[0] * gi[0] + gp[1] * gi[1]))
}

/// `n_pressure × 2 n_scalar` with entries `−∫ q ∂_k φ_j`.
pub fn divergence(mesh: &TriMesh) -> Dense {
    let bx = dense_form(mesh, false, true, |_, _, (q, _), (_, gj)| -q * gj[0]);
    let by = dense_form(mesh, false, true, |_, _, (q, _), (_, gj)| -q * gj[1]);
    bx.into_iter()
        .zip(by)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect()
}

pub fn body_force(mesh: &TriMesh, rho: &[f64], phi: &[f64]) -> Vec<f64> {
    let ns = n_scalar(mesh, true);
    let mut out = vec![0.0; 2 * ns];
    for t in 0..mesh.n_triangles() {
        for (x, w) in quad_points(mesh, t) {
            let (r, _) = eval_field(mesh, true, rho, t, x);
            let (_, gp) = eval_field(mesh, true, phi, t, x);
            for i in 0..ns {
                let (vi, _) = global_basis(mesh, true, t, i, x);
                out[i] += w * r * gp[0] * vi;
                out[ns + i] += w * r * gp[1] * vi;
            }
        }
    }
    out
}

/// Largest entrywise difference relative to the largest oracle entry.
pub fn rel_diff(a: &Dense, oracle: &Dense) -> f64 {
    assert_eq!(a.len(), oracle.len());
    let scale = oracle.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(oracle)
        .flat_map(|(r, o)| {
            assert_eq!(r.len(), o.len());
            r.iter().zip(o).map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, f64::max)
        / scale
}

pub fn rel_diff_vec(a: &[f64], oracle: &[f64]) -> f64 {
    rel_diff(&vec![a.to_vec()], &vec![oracle.to_vec()])
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Dense, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}
