//! Evaluation, interpolation and norms of finite element fields.

use crate::error::{Error, Result};
use crate::fem::basis::{eval_unchecked, ElementMap};
use crate::fem::dofmap::DofMap;
use crate::fem::quadrature::{quad_rule, QuadRule, DEFAULT_DEGREE};
use crate::mesh::TriMesh;

fn check_len(coeffs: &[f64], dofs: &DofMap) -> Result<()> {
    if coeffs.len() != dofs.n_dofs {
        return Err(Error::Shape { what: "field coefficients", expected: dofs.n_dofs, got: coeffs.len() });
    }
    Ok(())
}

fn default_rule() -> QuadRule {
    quad_rule(DEFAULT_DEGREE).expect("default degree is supported")
}

/// Value and physical gradient of component `comp` inside triangle `t`.
pub fn eval_in_cell(
    mesh: &TriMesh,
    dofs: &DofMap,
    coeffs: &[f64],
    comp: usize,
    t: usize,
    bary: [f64; 3],
) -> (f64, [f64; 2]) {
    let map = ElementMap::new(mesh.corners(t));
    eval_with_map(&map, dofs, coeffs, comp, t, bary)
}

pub(crate) fn eval_with_map(
    map: &ElementMap,
    dofs: &DofMap,
    coeffs: &[f64],
    comp: usize,
    t: usize,
    bary: [f64; 3],
) -> (f64, [f64; 2]) {
    let basis = eval_unchecked(dofs.space, bary);
    let off = dofs.offset(comp);
    let mut v = 0.0;
    let mut g = [0.0, 0.0];
    for (i, &dof) in dofs.cell(t).iter().enumerate() {
        let c = coeffs[off + dof];
        v += c * basis.values[i];
        let gi = map.grad(basis.grads[i]);
        g[0] += c * gi[0];
        g[1] += c * gi[1];
    }
    (v, g)
}

/// Nodal interpolation: vertex dofs take `f(component, x)`, bubbles are zero.
pub fn interpolate<F>(f: F, dofs: &DofMap, mesh: &TriMesh) -> Vec<f64>
where
    F: Fn(usize, [f64; 2]) -> f64,
{
    let mut out = vec![0.0; dofs.n_dofs];
    for comp in 0..dofs.components() {
        for (v, x) in mesh.vertices.iter().enumerate() {
            out[dofs.vertex_dof(v, comp)] = f(comp, *x);
        }
    }
    out
}

pub fn interpolate_scalar<F: Fn([f64; 2]) -> f64>(f: F, dofs: &DofMap, mesh: &TriMesh) -> Vec<f64> {
    interpolate(|_, x| f(x), dofs, mesh)
}

/// Vertex values of one component (bubble contributions vanish at vertices).
pub fn vertex_values(coeffs: &[f64], dofs: &DofMap, comp: usize) -> Vec<f64> {
    dofs.component(coeffs, comp)[..dofs.n_vertices].to_vec()
}

/// `sqrt(Σ_c ∫ (u_c − f_c)²)` by quadrature.
pub fn l2_error<F>(coeffs: &[f64], dofs: &DofMap, mesh: &TriMesh, exact: F) -> Result<f64>
where
    F: Fn(usize, [f64; 2]) -> f64,
{
    check_len(coeffs, dofs)?;
    let rule = default_rule();
    let mut sum = 0.0;
    for t in 0..mesh.n_triangles() {
        let map = ElementMap::new(mesh.corners(t));
        for (p, w) in rule.iter() {
            let x = map.to_physical(p);
            for comp in 0..dofs.components() {
                let (v, _) = eval_with_map(&map, dofs, coeffs, comp, t, p);
                let e = v - exact(comp, x);
                sum += w * map.det() * e * e;
            }
        }
    }
    Ok(sum.sqrt())
}

/// `sqrt(Σ_c ∫ |∇u_c − g_c|²)` by quadrature.
pub fn h1_error<G>(coeffs: &[f64], dofs: &DofMap, mesh: &TriMesh, exact_grad: G) -> Result<f64>
where
    G: Fn(usize, [f64; 2]) -> [f64; 2],
{
    check_len(coeffs, dofs)?;
    let rule = default_rule();
    let mut sum = 0.0;
    for t in 0..mesh.n_triangles() {
        let map = ElementMap::new(mesh.corners(t));
        for (p, w) in rule.iter() {
            let x = map.to_physical(p);
            for comp in 0..dofs.components() {
                let (_, g) = eval_with_map(&map, dofs, coeffs, comp, t, p);
                let ge = exact_grad(comp, x);
                let (a, b) = (g[0] - ge[0], g[1] - ge[1]);
                sum += w * map.det() * (a * a + b * b);
            }
        }
    }
    Ok(sum.sqrt())
}

pub fn l2_norm(coeffs: &[f64], dofs: &DofMap, mesh: &TriMesh) -> Result<f64> {
    l2_error(coeffs, dofs, mesh, |_, _| 0.0)
}

pub fn h1_seminorm(coeffs: &[f64], dofs: &DofMap, mesh: &TriMesh) -> Result<f64> {
    h1_error(coeffs, dofs, mesh, |_, _| [0.0, 0.0])
}

/// `∫ u` of a scalar field.
pub fn integral(coeffs: &[f64], dofs: &DofMap, mesh: &TriMesh) -> Result<f64> {
    check_len(coeffs, dofs)?;
    let rule = default_rule();
    let mut sum = 0.0;
    for t in 0..mesh.n_triangles() {
        let map = ElementMap::new(mesh.corners(t));
        for (p, w) in rule.iter() {
            sum += w * map.det() * eval_with_map(&map, dofs, coeffs, 0, t, p).0;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::SpaceKind;
    use crate::mesh::{generate, refine_uniform, GeometrySpec};
    use std::f64::consts::PI;

    fn square(n: usize) -> TriMesh {
        generate(&GeometrySpec::unit_square(n)).unwrap()
    }

    #[test]
    fn zero_and_constant_fields() {
        let m = square(4);
        let d = DofMap::new(SpaceKind::P1Bubble, &m);
        assert_eq!(l2_norm(&vec![0.0; d.n_dofs], &d, &m).unwrap(), 0.0);
        let one = interpolate_scalar(|_| 1.0, &d, &m);
        assert!(one[..m.n_vertices()].iter().all(|&v| v == 1.0));
        assert!(one[m.n_vertices()..].iter().all(|&v| v == 0.0));
        assert!((l2_norm(&one, &d, &m).unwrap() - 1.0).abs() < 1e-14);
        assert!(h1_seminorm(&one, &d, &m).unwrap() < 1e-14);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let m = square(2);
        let d = DofMap::new(SpaceKind::P1, &m);
        assert!(matches!(l2_norm(&[1.0], &d, &m), Err(Error::Shape { .. })));
    }

    #[test]
    fn linears_are_reproduced_exactly() {
        let m = square(3);
        for space in [SpaceKind::P1, SpaceKind::P1Bubble] {
            let d = DofMap::new(space, &m);
            let u = interpolate_scalar(|x| x[0] + x[1], &d, &m);
            assert!(l2_error(&u, &d, &m, |_, x| x[0] + x[1]).unwrap() < 1e-14);
            assert!(h1_error(&u, &d, &m, |_, _| [1.0, 1.0]).unwrap() < 1e-13);
        }
    }

    #[test]
    fn p1_norm_matches_exact_element_mass_matrix() {
        let m = generate(&GeometrySpec::t_junction(1.0, 0.3)).unwrap();
        let d = DofMap::new(SpaceKind::P1, &m);
        let u = interpolate_scalar(|x| (3.0 * x[0]).sin() + x[1] * x[1], &d, &m);
        let mut exact = 0.0;
        for t in 0..m.n_triangles() {
            let a = m.signed_area(t);
            let c: Vec<f64> = m.triangles[t].iter().map(|&v| u[v]).collect();
            for i in 0..3 {
                for j in 0..3 {
                    let mij = if i == j { a / 6.0 } else { a / 12.0 };
                    exact += c[i] * mij * c[j];
                }
            }
        }
        let q = l2_norm(&u, &d, &m).unwrap();
        assert!((q - exact.sqrt()).abs() <= 1e-12 * exact.sqrt());
    }

    #[test]
    fn sine_product_norm_tends_to_one_half() {
        let mut m = square(4);
        let d0 = DofMap::new(SpaceKind::P1, &m);
        let f = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
        let mut prev = (l2_norm(&interpolate_scalar(f, &d0, &m), &d0, &m).unwrap() - 0.5).abs();
        for _ in 0..4 {
            m = refine_uniform(&m);
            let d = DofMap::new(SpaceKind::P1, &m);
            let err = (l2_norm(&interpolate_scalar(f, &d, &m), &d, &m).unwrap() - 0.5).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn interpolation_error_decays_at_rate_two() {
        let f = |x: [f64; 2]| (PI * x[0]).sin();
        let mut m = square(4);
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for _ in 0..4 {
            let d = DofMap::new(SpaceKind::P1Bubble, &m);
            errs.push(l2_error(&interpolate_scalar(f, &d, &m), &d, &m, |_, x| f(x)).unwrap());
            hs.push(m.h_max);
            m = refine_uniform(&m);
        }
        for k in 1..errs.len() {
            let rate = (errs[k - 1] / errs[k]).ln() / (hs[k - 1] / hs[k]).ln();
            assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
        }
    }

    #[test]
    fn vector_field_norm_sums_components() {
        let m = square(2);
        let d = DofMap::new(SpaceKind::MiniVelocity, &m);
        let u = interpolate(|c, _| if c == 0 { 3.0 } else { 4.0 }, &d, &m);
        assert!((l2_norm(&u, &d, &m).unwrap() - 5.0).abs() < 1e-13);
        assert_eq!(vertex_values(&u, &d, 1), vec![4.0; m.n_vertices()]);
    }
}
