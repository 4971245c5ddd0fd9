//! Bilinear and linear forms of the discrete system, and Dirichlet elimination.
//!
//! Every matrix on a given pair of spaces shares one sparsity pattern (the
//! element connectivity, explicit zeros included). Combinations of forms stay
//! on that pattern and reuse one symbolic factorization across time steps.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fem::{eval_unchecked, quad_rule, DofMap, ElementMap, SpaceKind, DEFAULT_DEGREE};
use crate::mesh::TriMesh;
use crate::sparse::{compress, CsrMatrix, TripletBuffer};

/// Material constants of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    pub viscosity: f64,
    pub permittivity: f64,
    pub mobility: Vec<f64>,
    pub diffusivity: Vec<f64>,
    pub valence: Vec<f64>,
}

impl PhysParams {
    pub fn n_species(&self) -> usize {
        self.diffusivity.len()
    }

    /// `D0`, the arithmetic mean of the species diffusivities.
    pub fn averaged_diffusivity(&self) -> f64 {
        self.diffusivity.iter().sum::<f64>() / self.n_species() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_species();
        if m == 0 {
            return Err(Error::param("at least one species is required"));
        }
        if self.mobility.len() != m || self.valence.len() != m {
            return Err(Error::param(format!(
                "species lists differ in length: {} diffusivities, {} mobilities, {} valences",
                m,
                self.mobility.len(),
                self.valence.len()
            )));
        }
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return Err(Error::param(format!("viscosity must be positive, got {}", self.viscosity)));
        }
        if !(self.permittivity > 0.0 && self.permittivity.is_finite()) {
            return Err(Error::param(format!("permittivity must be positive, got {}", self.permittivity)));
        }
        if let Some(d) = self.diffusivity.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::param(format!("diffusivities must be positive, got {d}")));
        }
        if self.mobility.iter().chain(&self.valence).any(|v| !v.is_finite()) {
            return Err(Error::param("mobilities and valences must be finite"));
        }
        Ok(())
    }
}

/// Form used for every convection term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convection {
    /// `½[(w·∇u, v) − (w·∇v, u)]`.
    #[default]
    Skew,
    /// `(w·∇u, v)`.
    Plain,
}

impl Convection {
    pub fn name(self) -> &'static str {
        match self {
            Convection::Skew => "skew",
            Convection::Plain => "plain",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "skew" => Some(Convection::Skew),
            "plain" => Some(Convection::Plain),
            _ => None,
        }
    }
}

/// One quadrature point on one element, with the physical data forms need.
#[derive(Debug, Clone, Copy)]
pub struct QpData {
    /// Weight times Jacobian determinant.
    pub wdet: f64,
    pub x: [f64; 2],
    pub values: [f64; 4],
    pub grads: [[f64; 2]; 4],
}

struct Pattern {
    template: CsrMatrix,
    /// `scatter[(t * nr + a) * nc + b]` is the value slot of local entry `(a, b)`.
    scatter: Vec<usize>,
    nr: usize,
    nc: usize,
}

impl Pattern {
    fn new(rows: &DofMap, cols: &DofMap) -> Self {
        let (nr, nc) = (rows.space.local_dofs(), cols.space.local_dofs());
        let mut t = TripletBuffer::with_capacity(rows.n_scalar, cols.n_scalar, rows.n_cells() * nr * nc);
        for e in 0..rows.n_cells() {
            for &i in rows.cell(e) {
                for &j in cols.cell(e) {
                    t.push(i, j, 0.0);
                }
            }
        }
        let template = compress(&t).expect("cell dofs are in range");
        let mut scatter = Vec::with_capacity(rows.n_cells() * nr * nc);
        for e in 0..rows.n_cells() {
            for &i in rows.cell(e) {
                let lo = template.row_ptr()[i];
                let hi = template.row_ptr()[i + 1];
                let cols_i = &template.col_idx()[lo..hi];
                for &j in cols.cell(e) {
                    scatter.push(lo + cols_i.binary_search(&j).expect("entry in pattern"));
                }
            }
        }
        Self { template, scatter, nr, nc }
    }
}

/// Mesh-bound assembly context: the three spaces of the scheme, element
/// maps, tabulated reference basis and the matrix patterns.
pub struct FormContext<'a> {
    pub mesh: &'a TriMesh,
    /// P1-bubble space of ρ, φ, c and each velocity component.
    pub scalar: DofMap,
    pub velocity: DofMap,
    pub pressure: DofMap,
    maps: Vec<ElementMap>,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    ref_values: Vec<[f64; 4]>,
    ref_grads: Vec<[[f64; 2]; 4]>,
    pat_ww: Pattern,
    pat_pp: Pattern,
    pat_pw: Pattern,
}

impl<'a> FormContext<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        let scalar = DofMap::new(SpaceKind::P1Bubble, mesh);
        let velocity = DofMap::new(SpaceKind::MiniVelocity, mesh);
        let pressure = DofMap::new(SpaceKind::P1Pressure, mesh);
        let rule = quad_rule(DEFAULT_DEGREE).expect("default degree is supported");
        let (ref_values, ref_grads) = rule
            .points
            .iter()
            .map(|&p| {
                let b = eval_unchecked(SpaceKind::P1Bubble, p);
                (b.values, b.grads)
            })
            .unzip();
        Self {
            mesh,
            maps: (0..mesh.n_triangles()).map(|t| ElementMap::new(mesh.corners(t))).collect(),
            points: rule.points,
            weights: rule.weights,
            ref_values,
            ref_grads,
            pat_ww: Pattern::new(&scalar, &scalar),
            pat_pp: Pattern::new(&pressure, &pressure),
            pat_pw: Pattern::new(&pressure, &scalar),
            scalar,
            velocity,
            pressure,
        }
    }

    pub fn n_quad(&self) -> usize {
        self.weights.len()
    }

    pub fn element_map(&self, t: usize) -> &ElementMap {
        &self.maps[t]
    }

    pub fn qp(&self, t: usize, q: usize) -> QpData {
        let map = &self.maps[t];
        let mut grads = [[0.0; 2]; 4];
        for (g, r) in grads.iter_mut().zip(&self.ref_grads[q]) {
            *g = map.grad(*r);
        }
        QpData {
            wdet: self.weights[q] * map.det(),
            x: map.to_physical(self.points[q]),
            values: self.ref_values[q],
            grads,
        }
    }

    /// Value and gradient at a quadrature point of component `comp` of a
    /// field on `dofs` (one of this context's spaces).
    pub fn field_at(&self, dofs: &DofMap, coeffs: &[f64], comp: usize, t: usize, qp: &QpData) -> (f64, [f64; 2]) {
        let off = dofs.offset(comp);
        let mut v = 0.0;
        let mut g = [0.0, 0.0];
        for (a, &dof) in dofs.cell(t).iter().enumerate() {
            let c = coeffs[off + dof];
            v += c * qp.values[a];
            g[0] += c * qp.grads[a][0];
            g[1] += c * qp.grads[a][1];
        }
        (v, g)
    }

    fn scalar_pattern(&self, dofs: &DofMap) -> Result<&Pattern> {
        match dofs.space {
            SpaceKind::P1Bubble if dofs.n_scalar == self.scalar.n_scalar => Ok(&self.pat_ww),
            SpaceKind::P1 | SpaceKind::P1Pressure if dofs.n_scalar == self.pressure.n_scalar => Ok(&self.pat_pp),
            _ => Err(Error::param(format!("space {:?} does not belong to this context", dofs.space))),
        }
    }

    fn check_field(&self, dofs: &DofMap, coeffs: &[f64], what: &'static str) -> Result<()> {
        if coeffs.len() != dofs.n_dofs {
            return Err(Error::Shape { what, expected: dofs.n_dofs, got: coeffs.len() });
        }
        Ok(())
    }

    fn assemble<F>(&self, pat: &Pattern, mut local: F) -> CsrMatrix
    where
        F: FnMut(usize, &mut [[f64; 4]; 4]),
    {
        let mut m = pat.template.clone();
        let values = m.values_mut();
        let block = pat.nr * pat.nc;
        let mut loc = [[0.0; 4]; 4];
        for t in 0..self.mesh.n_triangles() {
            loc = [[0.0; 4]; 4];
            local(t, &mut loc);
            let s = &pat.scatter[t * block..(t + 1) * block];
            for a in 0..pat.nr {
                for b in 0..pat.nc {
                    values[s[a * pat.nc + b]] += loc[a][b];
                }
            }
        }
        let _ = loc;
        m
    }

    /// `∫ φ_j ψ_i` on a scalar space.
    pub fn mass_matrix(&self, dofs: &DofMap) -> Result<CsrMatrix> {
        let pat = self.scalar_pattern(dofs)?;
        let n = pat.nr;
        Ok(self.assemble(pat, |t, loc| {
            for q in 0..self.n_quad() {
                let qp = self.qp(t, q);
                for a in 0..n {
                    for b in 0..n {
                        loc[a][b] += qp.wdet * (qp.values[a] * qp.values[b]);
                    }
                }
            }
        }))
    }

    /// `κ ∫ ∇φ_j·∇ψ_i` on a scalar space.
    pub fn stiffness_matrix(&self, dofs: &DofMap, kappa: f64) -> Result<CsrMatrix> {
        let pat = self.scalar_pattern(dofs)?;
        let n = pat.nr;
        Ok(self.assemble(pat, |t, loc| {
            for q in 0..self.n_quad() {
                let qp = self.qp(t, q);
                for a in 0..n {
                    for b in 0..n {
                        let g = qp.grads[a][0] * qp.grads[b][0] + qp.grads[a][1] * qp.grads[b][1];
                        loc[a][b] += kappa * qp.wdet * g;
                    }
                }
            }
        }))
    }

    /// Convection by a MINI velocity `wind` on the P1-bubble space.
    pub fn convection_matrix(&self, wind: &[f64], form: Convection) -> Result<CsrMatrix> {
        self.check_field(&self.velocity, wind, "convection wind")?;
        let skew = form == Convection::Skew;
        Ok(self.assemble(&self.pat_ww, |t, loc| {
            for q in 0..self.n_quad() {
                let qp = self.qp(t, q);
                let (w0, _) = self.field_at(&self.velocity, wind, 0, t, &qp);
                let (w1, _) = self.field_at(&self.velocity, wind, 1, t, &qp);
                let adv: [f64; 4] = std::array::from_fn(|b| w0 * qp.grads[b][0] + w1 * qp.grads[b][1]);
                for a in 0..4 {
                    for b in 0..4 {
                        let c = if skew {
                            0.5 * (adv[b] * qp.values[a] - adv[a] * qp.values[b])
                        } else {
                            adv[b] * qp.values[a]
                        };
                        loc[a][b] += qp.wdet * c;
                    }
                }
            }
        }))
    }

    /// `γ ∫ φ_j (∇φ_h·∇ψ_i)` on the P1-bubble space.
    pub fn drift_matrix(&self, potential: &[f64], gamma: f64) -> Result<CsrMatrix> {
        self.check_field(&self.scalar, potential, "drift potential")?;
        Ok(self.assemble(&self.pat_ww, |t, loc| {
            if gamma == 0.0 {
                return;
            }
            for q in 0..self.n_quad() {
                let qp = self.qp(t, q);
                let (_, gp) = self.field_at(&self.scalar, potential, 0, t, &qp);
                for a in 0..4 {
                    let ga = gp[0] * qp.grads[a][0] + gp[1] * qp.grads[a][1];
                    for b in 0..4 {
                        loc[a][b] += gamma * qp.wdet * qp.values[b] * ga;
                    }
                }
            }
        }))
    }

    /// `B` with `B[q, (k, j)] = −∫ q ∂_k φ_j`; shape `n_pressure × n_velocity`.
    pub fn divergence_matrix(&self) -> CsrMatrix {
        let part = |k: usize| {
            self.assemble(&self.pat_pw, |t, loc| {
                for q in 0..self.n_quad() {
                    let qp = self.qp(t, q);
                    for a in 0..3 {
                        for b in 0..4 {
                            loc[a][b] -= qp.wdet * qp.values[a] * qp.grads[b][k];
                        }
                    }
                }
            })
        };
        let (bx, by) = (part(0), part(1));
        let ns = self.scalar.n_scalar;
        let mut t = TripletBuffer::with_capacity(self.pressure.n_dofs, 2 * ns, bx.nnz() + by.nnz());
        t.push_block(&bx, 0, 0, 1.0);
        t.push_block(&by, 0, ns, 1.0);
        compress(&t).expect("blocks fit")
    }

    /// `∫ ρ_h ∇φ_h · v_i` on the velocity dofs.
    pub fn body_force_vector(&self, rho: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
        self.check_field(&self.scalar, rho, "body force charge")?;
        self.check_field(&self.scalar, phi, "body force potential")?;
        let ns = self.scalar.n_scalar;
        let mut out = vec![0.0; self.velocity.n_dofs];
        for t in 0..self.mesh.n_triangles() {
            for q in 0..self.n_quad() {
                let qp = self.qp(t, q);
                let (r, _) = self.field_at(&self.scalar, rho, 0, t, &qp);
                let (_, gp) = self.field_at(&self.scalar, phi, 0, t, &qp);
                for (a, &i) in self.scalar.cell(t).iter().enumerate() {
                    let s = qp.wdet * r * qp.values[a];
                    out[i] += s * gp[0];
                    out[ns + i] += s * gp[1];
                }
            }
        }
        Ok(out)
    }

    /// `∫ f ψ_i` on a scalar space.
    pub fn load_vector<F: Fn([f64; 2]) -> f64>(&self, dofs: &DofMap, f: F) -> Result<Vec<f64>> {
        let n = self.scalar_pattern(dofs)?.nr;
        let mut out = vec![0.0; dofs.n_dofs];
        for t in 0..self.mesh.n_triangles() {
            for q in 0..self.n_quad() {
                let qp = self.qp(t, q);
                let fx = f(qp.x);
                for (a, &i) in dofs.cell(t).iter().enumerate().take(n) {
                    out[i] += qp.wdet * fx * qp.values[a];
                }
            }
        }
        Ok(out)
    }

    /// `∫ f · v_i` on the velocity dofs.
    pub fn vector_load<F: Fn([f64; 2]) -> [f64; 2]>(&self, f: F) -> Vec<f64> {
        let ns = self.scalar.n_scalar;
        let mut out = vec![0.0; self.velocity.n_dofs];
        for t in 0..self.mesh.n_triangles() {
            for q in 0..self.n_quad() {
                let qp = self.qp(t, q);
                let fx = f(qp.x);
                for (a, &i) in self.scalar.cell(t).iter().enumerate() {
                    out[i] += qp.wdet * fx[0] * qp.values[a];
                    out[ns + i] += qp.wdet * fx[1] * qp.values[a];
                }
            }
        }
        out
    }

    /// `∫ q_i`, the pressure mean functional.
    pub fn pressure_mean_vector(&self) -> Vec<f64> {
        self.load_vector(&self.pressure, |_| 1.0).expect("pressure space belongs to the context")
    }
}

/// Prescribed values for a set of dofs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dirichlet {
    values: BTreeMap<usize, f64>,
}

impl Dirichlet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a constraint; a second, different value for one dof is an error.
    pub fn insert(&mut self, dof: usize, value: f64) -> Result<()> {
        match self.values.get(&dof) {
            Some(&first) if first.to_bits() != value.to_bits() && first != value => {
                Err(Error::Constraint { dof, first, second: value })
            }
            _ => {
                self.values.insert(dof, value);
                Ok(())
            }
        }
    }

    /// Adds a constraint unless the dof is already constrained.
    pub fn insert_weak(&mut self, dof: usize, value: f64) {
        self.values.entry(dof).or_insert(value);
    }

    pub fn get(&self, dof: usize) -> Option<f64> {
        self.values.get(&dof).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }
}

/// Eliminates constrained dofs: their rows become unit rows with the
/// prescribed value on the right, their columns move to the right-hand side.
/// The sparsity pattern is preserved (eliminated entries are stored zeros).
pub fn apply_dirichlet(a: &mut CsrMatrix, b: &mut [f64], bc: &Dirichlet) -> Result<()> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(Error::Shape { what: "Dirichlet system", expected: n, got: b.len().min(a.n_cols()) });
    }
    if bc.is_empty() {
        return Ok(());
    }
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for (dof, v) in bc.iter() {
        if dof >= n {
            return Err(Error::Shape { what: "Dirichlet dof index", expected: n, got: dof });
        }
        fixed[dof] = Some(v);
    }
    let row_ptr = a.row_ptr().to_vec();
    let col_idx = a.col_idx().to_vec();
    let values = a.values_mut();
    for i in 0..n {
        if fixed[i].is_some() {
            continue;
        }
        for k in row_ptr[i]..row_ptr[i + 1] {
            if let Some(g) = fixed[col_idx[k]] {
                b[i] -= values[k] * g;
                values[k] = 0.0;
            }
        }
    }
    for (dof, v) in bc.iter() {
        a.set_unit_row(dof);
        b[dof] = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{interpolate_scalar, l2_error};
    use crate::mesh::{generate, refine_uniform, GeometrySpec};
    use crate::sparse::solve_direct;
    use std::f64::consts::PI;

    fn one_triangle() -> TriMesh {
        TriMesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            boundary_edges: Vec::new(),
            h_max: 2f64.sqrt(),
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn elemental_mass_and_stiffness_closed_forms() {
        let m = one_triangle();
        let ctx = FormContext::new(&m);
        let p1 = DofMap::new(SpaceKind::P1, &m);
        let mass = ctx.mass_matrix(&p1).unwrap().to_dense();
        let stiff = ctx.stiffness_matrix(&p1, 1.0).unwrap().to_dense();
        let k = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                let mij = if i == j { 2.0 } else { 1.0 } / 24.0;
                assert!(close(mass[i][j], mij, 1e-12), "mass {i}{j}");
                assert!(close(stiff[i][j], 0.5 * k[i][j], 1e-12), "stiffness {i}{j}");
            }
        }
    }

    #[test]
    fn mass_sums_to_area_and_stiffness_kills_constants() {
        let m = generate(&GeometrySpec::t_junction(1.0, 0.25)).unwrap();
        let ctx = FormContext::new(&m);
        let p1 = DofMap::new(SpaceKind::P1, &m);
        let mass = ctx.mass_matrix(&p1).unwrap();
        let total: f64 = mass.values().iter().sum();
        assert!(close(total, m.total_area(), 1e-12));
        let k = ctx.stiffness_matrix(&ctx.scalar, 1.0).unwrap();
        let ones: Vec<f64> = (0..ctx.scalar.n_dofs).map(|i| if i < m.n_vertices() { 1.0 } else { 0.0 }).collect();
        assert!(crate::sparse::norm2(&k.mul_vec(&ones)) < 1e-12);
        let k2 = ctx.stiffness_matrix(&ctx.scalar, 2.0).unwrap();
        assert!(k2.values().iter().zip(k.values()).all(|(a, b)| *a == 2.0 * b));
    }

    #[test]
    fn mass_and_stiffness_are_exactly_symmetric() {
        let m = generate(&GeometrySpec::channel(1.0, 3.0, 0.4)).unwrap();
        let ctx = FormContext::new(&m);
        for a in [ctx.mass_matrix(&ctx.scalar).unwrap(), ctx.stiffness_matrix(&ctx.scalar, 1.3).unwrap()] {
            let at = a.transpose();
            assert_eq!(a.values(), at.values());
        }
    }

    #[test]
    fn zero_wind_and_constant_potential_give_zero_matrices() {
        let m = generate(&GeometrySpec::unit_square(3)).unwrap();
        let ctx = FormContext::new(&m);
        let c = ctx.convection_matrix(&vec![0.0; ctx.velocity.n_dofs], Convection::Plain).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
        let phi = interpolate_scalar(|_| 4.0, &ctx.scalar, &m);
        let d = ctx.drift_matrix(&phi, 1.0).unwrap();
        assert!(d.values().iter().all(|&v| v.abs() < 1e-12));
        let x = interpolate_scalar(|x| x[0], &ctx.scalar, &m);
        assert!(ctx.drift_matrix(&x, 0.0).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_kills_constant_and_rotation() {
        let m = generate(&GeometrySpec::unit_square(4)).unwrap();
        let ctx = FormContext::new(&m);
        let b = ctx.divergence_matrix();
        for f in [|_: usize, _: [f64; 2]| 1.0, |c: usize, x: [f64; 2]| if c == 0 { -x[1] } else { x[0] }] {
            let u = crate::fem::interpolate(f, &ctx.velocity, &m);
            assert!(crate::sparse::norm2(&b.mul_vec(&u)) < 1e-13);
        }
        let u = crate::fem::interpolate(|c, x| if c == 0 { x[0] } else { 0.0 }, &ctx.velocity, &m);
        let mean = ctx.pressure_mean_vector();
        for (bu, mq) in b.mul_vec(&u).iter().zip(&mean) {
            assert!(close(*bu, -mq, 1e-14));
        }
    }

    #[test]
    fn body_force_of_unit_charge_in_linear_potential() {
        let m = generate(&GeometrySpec::unit_square(4)).unwrap();
        let ctx = FormContext::new(&m);
        let zero = vec![0.0; ctx.scalar.n_dofs];
        let phi = interpolate_scalar(|x| x[0], &ctx.scalar, &m);
        assert!(ctx.body_force_vector(&zero, &phi).unwrap().iter().all(|&v| v == 0.0));
        let rho = interpolate_scalar(|_| 1.0, &ctx.scalar, &m);
        let konst = interpolate_scalar(|_| 2.0, &ctx.scalar, &m);
        assert!(ctx.body_force_vector(&rho, &konst).unwrap().iter().all(|&v| v.abs() < 1e-13));
        let f = ctx.body_force_vector(&rho, &phi).unwrap();
        let ns = ctx.scalar.n_scalar;
        // P1 functions sum to one; bubbles add their own integrals.
        let vertex_sum: f64 = f[..m.n_vertices()].iter().sum();
        assert!(close(vertex_sum, 1.0, 1e-13));
        assert!(f[ns..].iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn skew_convection_is_antisymmetric() {
        use rand::{Rng, SeedableRng};
        let m = generate(&GeometrySpec::unit_square(3)).unwrap();
        let ctx = FormContext::new(&m);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let wind: Vec<f64> = (0..ctx.velocity.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = ctx.convection_matrix(&wind, Convection::Skew).unwrap();
        let fro = c.frobenius_norm();
        for _ in 0..100 {
            let x: Vec<f64> = (0..ctx.scalar.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xax = crate::sparse::dot(&x, &c.mul_vec(&x));
            assert!(xax.abs() <= 1e-13 * fro * crate::sparse::dot(&x, &x));
        }
    }

    #[test]
    fn dirichlet_keeps_pattern_and_rejects_conflicts() {
        let mut bc = Dirichlet::new();
        bc.insert(1, 2.0).unwrap();
        bc.insert(1, 2.0).unwrap();
        assert!(matches!(bc.insert(1, 3.0), Err(Error::Constraint { dof: 1, .. })));
        bc.insert_weak(1, 5.0);
        assert_eq!(bc.get(1), Some(2.0));

        let a0 = CsrMatrix::from_dense(&[vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]]);
        let mut a = a0.clone();
        let mut b = vec![1.0, 1.0, 1.0];
        apply_dirichlet(&mut a, &mut b, &Dirichlet::new()).unwrap();
        assert_eq!(a, a0);
        assert_eq!(b, vec![1.0, 1.0, 1.0]);
        apply_dirichlet(&mut a, &mut b, &bc).unwrap();
        assert!(a.same_pattern(&a0));
        assert_eq!(b, vec![-1.0, 2.0, -1.0]);
        let x = solve_direct(&a, &b).unwrap();
        assert!(close(x[1], 2.0, 1e-15));
    }

    #[test]
    fn constraining_everything_returns_the_data() {
        let m = generate(&GeometrySpec::unit_square(2)).unwrap();
        let ctx = FormContext::new(&m);
        let mut a = ctx.stiffness_matrix(&ctx.scalar, 1.0).unwrap();
        let mut b = vec![0.0; ctx.scalar.n_dofs];
        let mut bc = Dirichlet::new();
        for i in 0..b.len() {
            bc.insert(i, 0.5 + i as f64).unwrap();
        }
        apply_dirichlet(&mut a, &mut b, &bc).unwrap();
        let x = solve_direct(&a, &b).unwrap();
        assert!(x.iter().enumerate().all(|(i, v)| *v == 0.5 + i as f64));
    }

    fn poisson_error(n: usize) -> (f64, f64) {
        let m = generate(&GeometrySpec::unit_square(n)).unwrap();
        let ctx = FormContext::new(&m);
        let exact = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
        let mut a = ctx.stiffness_matrix(&ctx.scalar, 1.0).unwrap();
        let mut b = ctx.load_vector(&ctx.scalar, |x| 2.0 * PI * PI * exact(x)).unwrap();
        let mut bc = Dirichlet::new();
        for v in m.all_boundary_vertices() {
            bc.insert(v, 0.0).unwrap();
        }
        apply_dirichlet(&mut a, &mut b, &bc).unwrap();
        let u = solve_direct(&a, &b).unwrap();
        (m.h_max, l2_error(&u, &ctx.scalar, &m, |_, x| exact(x)).unwrap())
    }

    #[test]
    fn poisson_manufactured_solution_converges_at_rate_two() {
        let runs: Vec<_> = [8, 16, 32].into_iter().map(poisson_error).collect();
        for w in runs.windows(2) {
            let rate = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
            assert!(rate > 1.8, "rate {rate}");
        }
    }

    #[test]
    fn patterns_are_shared_between_forms() {
        let m = refine_uniform(&generate(&GeometrySpec::unit_square(2)).unwrap());
        let ctx = FormContext::new(&m);
        let mass = ctx.mass_matrix(&ctx.scalar).unwrap();
        let wind = vec![0.1; ctx.velocity.n_dofs];
        let phi = interpolate_scalar(|x| x[1], &ctx.scalar, &m);
        assert!(mass.same_pattern(&ctx.stiffness_matrix(&ctx.scalar, 1.0).unwrap()));
        assert!(mass.same_pattern(&ctx.convection_matrix(&wind, Convection::Skew).unwrap()));
        assert!(mass.same_pattern(&ctx.drift_matrix(&phi, 1.0).unwrap()));
    }

    #[test]
    fn params_validation_and_mean_diffusivity() {
        let p = PhysParams {
            viscosity: 1.0,
            permittivity: 1.0,
            mobility: vec![5e-8, 3e-7, 3e-8],
            diffusivity: vec![2e-10, 3e-10, 2e-10],
            valence: vec![1.0, -1.0, -2.0],
        };
        p.validate().unwrap();
        assert_eq!(p.averaged_diffusivity(), (2e-10 + 3e-10 + 2e-10) / 3.0);
        let mut bad = p.clone();
        bad.diffusivity[1] = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = p;
        bad.valence.pop();
        assert!(bad.validate().is_err());
    }
}
