//! Decoupled linearly implicit backward-Euler stepper.
//!
//! One step solves, in order: charge, potential, wall slip, Stokes-Oseen
//! with a lagged wind, then each species concentration. Every solve is a
//! single linear system with coefficients from the previous level.

use std::sync::Arc;

use crate::assembly::{apply_dirichlet, Convection, Dirichlet, FormContext, PhysParams};
use crate::error::{Error, Result};
use crate::fem::{h1_seminorm, l2_norm};
use crate::mesh::{BoundaryTag, TriMesh};
use crate::sparse::{compress, solve_iterative, CsrMatrix, DirectSolver, TripletBuffer};

/// Boundary data of a physical run.
#[derive(Debug, Clone, PartialEq)]
pub struct BcSet {
    pub inlet_velocity: [f64; 2],
    pub inlet_concentration: Vec<f64>,
    pub phi_in: f64,
    pub phi_out: f64,
    /// Slip coefficient in `u = −ξ ∇φ` on walls.
    pub xi: f64,
}

impl BcSet {
    pub fn validate(&self, n_species: usize) -> Result<()> {
        if self.inlet_concentration.len() != n_species {
            return Err(Error::param(format!(
                "{} inlet concentrations given for {} species",
                self.inlet_concentration.len(),
                n_species
            )));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::param(format!("slip coefficient must be nonnegative, got {}", self.xi)));
        }
        let all = self.inlet_velocity.iter().chain(&self.inlet_concentration).chain([&self.phi_in, &self.phi_out]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::param("boundary values must be finite"));
        }
        Ok(())
    }
}

/// Closed-form fields and the sources they induce, for verification runs.
/// All boundary vertex dofs take the exact values at the new time level.
pub trait ManufacturedSolution: Send + Sync {
    fn rho(&self, t: f64, x: [f64; 2]) -> f64;
    fn phi(&self, t: f64, x: [f64; 2]) -> f64;
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2];
    fn pressure(&self, t: f64, x: [f64; 2]) -> f64;
    fn concentration(&self, i: usize, t: f64, x: [f64; 2]) -> f64;

    fn charge_source(&self, t: f64, x: [f64; 2]) -> f64;
    fn momentum_source(&self, t: f64, x: [f64; 2]) -> [f64; 2];
    fn concentration_source(&self, i: usize, t: f64, x: [f64; 2]) -> f64;
    fn potential_source(&self, _t: f64, _x: [f64; 2]) -> f64 {
        0.0
    }
}

#[derive(Clone)]
pub enum Problem {
    Physical(BcSet),
    Manufactured(Arc<dyn ManufacturedSolution>),
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Problem::Physical(b) => f.debug_tuple("Physical").field(b).finish(),
            Problem::Manufactured(_) => f.write_str("Manufactured"),
        }
    }
}

/// Which potential feeds the wall slip of the same step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlipPotential {
    #[default]
    Current,
    Previous,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverChoice {
    #[default]
    Direct,
    /// Restarted GMRES with Jacobi preconditioning.
    Iterative { tol: f64, max_iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SchemeOptions {
    pub convection: Convection,
    pub slip_potential: SlipPotential,
    pub solver: SolverChoice,
}

/// Discrete fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step: usize,
    pub time: f64,
    pub tau: f64,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub c: Vec<Vec<f64>>,
}

impl SimState {
    pub fn zeros(ctx: &FormContext, n_species: usize, tau: f64) -> Self {
        let ns = ctx.scalar.n_dofs;
        Self {
            step: 0,
            time: 0.0,
            tau,
            rho: vec![0.0; ns],
            phi: vec![0.0; ns],
            u: vec![0.0; ctx.velocity.n_dofs],
            p: vec![0.0; ctx.pressure.n_dofs],
            c: vec![vec![0.0; ns]; n_species],
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.rho, &self.phi, &self.u, &self.p].into_iter().chain(&self.c).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Norms monitored for stability.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub step: usize,
    pub time: f64,
    pub rho_l2: f64,
    pub u_l2: f64,
    pub c_l2: Vec<f64>,
    pub phi_h1: f64,
}

impl EnergyRecord {
    pub fn measure(ctx: &FormContext, state: &SimState) -> Result<Self> {
        let m = ctx.mesh;
        Ok(Self {
            step: state.step,
            time: state.time,
            rho_l2: l2_norm(&state.rho, &ctx.scalar, m)?,
            u_l2: l2_norm(&state.u, &ctx.velocity, m)?,
            c_l2: state.c.iter().map(|c| l2_norm(c, &ctx.scalar, m)).collect::<Result<_>>()?,
            phi_h1: h1_seminorm(&state.phi, &ctx.scalar, m)?,
        })
    }

    /// Entries in a fixed order: ρ, u, φ, then each species.
    pub fn entries(&self) -> Vec<f64> {
        let mut v = vec![self.rho_l2, self.u_l2, self.phi_h1];
        v.extend(&self.c_l2);
        v
    }

    pub fn entry_names(n_species: usize) -> Vec<String> {
        let mut v: Vec<String> = ["rho_l2", "u_l2", "phi_h1"].map(String::from).into();
        v.extend((1..=n_species).map(|i| format!("c{i}_l2")));
        v
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Rational approximation of `erf` with absolute error below 1.5e-7.
pub fn erf(x: f64) -> f64 {
    const P: f64 = 0.327_591_1;
    const A: [f64; 5] = [0.254_829_592, -0.284_496_736, 1.421_413_741, -1.453_152_027, 1.061_405_429];
    if x == 0.0 {
        // the approximation leaves 1e-9 at the origin; erf is odd
        return 0.0;
    }
    let s = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + P * x);
    let poly = t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * A[4]))));
    s * (1.0 - poly * (-x * x).exp())
}

/// Initial concentrations.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Three species with an erf front at `x = x0`:
    /// `c1 = ½ b1 (γ + 1 − (γ − 1) erf(α(x − x0)))`, `c3 = b3 (1 + erf(α(x − x0)))`,
    /// and `c2` chosen so that the mixture is neutral.
    ErfFront { alpha: f64, b1: f64, b3: f64, gamma: f64, x0: f64 },
    /// Constant value per species.
    Uniform(Vec<f64>),
}

impl InitialCondition {
    pub fn erf_front() -> Self {
        InitialCondition::ErfFront { alpha: 4e4, b1: 100.0, b3: 0.1, gamma: 50.0, x0: 0.0 }
    }

    /// Nodal concentrations of every species at `x`.
    pub fn concentrations(&self, valence: &[f64], x: [f64; 2]) -> Result<Vec<f64>> {
        match self {
            InitialCondition::ErfFront { alpha, b1, b3, gamma, x0 } => {
                if valence.len() != 3 || valence[1] == 0.0 {
                    return Err(Error::param("the erf front needs three species with a nonzero second valence"));
                }
                let e = erf(alpha * (x[0] - x0));
                let c1 = 0.5 * b1 * (gamma + 1.0 - (gamma - 1.0) * e);
                let c3 = b3 * (1.0 + e);
                let c2 = -(valence[0] * c1 + valence[2] * c3) / valence[1];
                Ok(vec![c1, c2, c3])
            }
            InitialCondition::Uniform(v) => {
                if v.len() != valence.len() {
                    return Err(Error::param(format!("{} initial values for {} species", v.len(), valence.len())));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Default)]
struct Solvers {
    charge: DirectSolver,
    potential: DirectSolver,
    stokes: DirectSolver,
    concentration: DirectSolver,
}

/// Time stepper bound to one mesh.
pub struct Stepper<'a> {
    pub ctx: FormContext<'a>,
    pub params: PhysParams,
    pub problem: Problem,
    pub options: SchemeOptions,
    mass: CsrMatrix,
    laplace: CsrMatrix,
    div: CsrMatrix,
    div_t: CsrMatrix,
    mean: Vec<f64>,
    enclosed: bool,
    inlet: Vec<usize>,
    outlet: Vec<usize>,
    wall: Vec<usize>,
    boundary: Vec<usize>,
    vertex_triangles: Vec<Vec<usize>>,
    solvers: Solvers,
}

/// Fields produced by one velocity solve.
#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

const P1_REF_GRADS: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

impl<'a> Stepper<'a> {
    pub fn new(mesh: &'a TriMesh, params: PhysParams, problem: Problem, options: SchemeOptions) -> Result<Self> {
        params.validate()?;
        if let Problem::Physical(b) = &problem {
            b.validate(params.n_species())?;
        }
        let ctx = FormContext::new(mesh);
        let mass = ctx.mass_matrix(&ctx.scalar)?;
        let laplace = ctx.stiffness_matrix(&ctx.scalar, 1.0)?;
        let div = ctx.divergence_matrix();
        let div_t = div.transpose();
        let mean = ctx.pressure_mean_vector();
        let set = |tag| mesh.boundary_vertices(tag).into_iter().collect::<Vec<_>>();
        let (inlet, outlet, wall) = (set(BoundaryTag::Inlet), set(BoundaryTag::Outlet), set(BoundaryTag::Wall));
        let enclosed = matches!(problem, Problem::Manufactured(_)) || outlet.is_empty();
        Ok(Self {
            mass,
            laplace,
            div,
            div_t,
            mean,
            enclosed,
            inlet,
            outlet,
            wall,
            boundary: mesh.all_boundary_vertices().into_iter().collect(),
            vertex_triangles: mesh.vertex_triangles(),
            solvers: Solvers::default(),
            ctx,
            params,
            problem,
            options,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.ctx.mesh
    }

    /// True when the pressure level is fixed by `∫ p = 0` rather than by an outlet.
    pub fn is_enclosed(&self) -> bool {
        self.enclosed
    }

    pub fn divergence(&self) -> &CsrMatrix {
        &self.div
    }

    pub fn pressure_mean(&self, p: &[f64]) -> f64 {
        crate::sparse::dot(&self.mean, p)
    }

    fn solve(
        &mut self,
        which: fn(&mut Solvers) -> &mut DirectSolver,
        a: &CsrMatrix,
        b: &[f64],
        stage: &'static str,
    ) -> Result<Vec<f64>> {
        let r = match self.options.solver {
            SolverChoice::Direct => which(&mut self.solvers).solve(a, b).map(|(x, _)| x),
            SolverChoice::Iterative { tol, max_iter } => {
                let (x, report) = solve_iterative(a, b, tol, max_iter)?;
                if report.converged {
                    Ok(x)
                } else {
                    Err(Error::Solver { stage, report })
                }
            }
        };
        r.map_err(|e| e.in_stage(stage))
    }

    fn scalar_dirichlet_exact(&self, t: f64, f: impl Fn(f64, [f64; 2]) -> f64) -> Dirichlet {
        let mut bc = Dirichlet::new();
        for &v in &self.boundary {
            bc.insert_weak(v, f(t, self.mesh().vertices[v]));
        }
        bc
    }

    fn add_source(&self, rhs: &mut [f64], f: impl Fn([f64; 2]) -> f64) -> Result<()> {
        let s = self.ctx.load_vector(&self.ctx.scalar, f)?;
        rhs.iter_mut().zip(s).for_each(|(r, s)| *r += s);
        Ok(())
    }

    fn transport_matrix(&self, tau: f64, kappa: f64, extra: &[(f64, &CsrMatrix)]) -> Result<CsrMatrix> {
        let mut terms = vec![(1.0 / tau, &self.mass), (kappa, &self.laplace)];
        terms.extend_from_slice(extra);
        CsrMatrix::linear_combination(&terms)
    }

    fn mass_rhs(&self, tau: f64, prev: &[f64]) -> Vec<f64> {
        let mut r = self.mass.mul_vec(prev);
        r.iter_mut().for_each(|v| *v /= tau);
        r
    }

    /// Charge density at the new level.
    ///
    /// `conv_prev` is the convection matrix of `u^{n−1}`; `drift_prev` is the
    /// unit drift matrix of `φ^{n−1}`.
    pub fn step_charge(&mut self, state: &SimState, conv_prev: &CsrMatrix, drift_prev: &CsrMatrix) -> Result<Vec<f64>> {
        let tau = state.tau;
        let t_new = state.time + tau;
        let d0 = self.params.averaged_diffusivity();
        let mut a = self.transport_matrix(tau, d0, &[(1.0, conv_prev)])?;
        let mut b = self.mass_rhs(tau, &state.rho);
        for (i, c) in state.c.iter().enumerate() {
            let g = self.params.mobility[i] * self.params.valence[i] * self.params.valence[i];
            if g != 0.0 {
                let dc = drift_prev.mul_vec(c);
                b.iter_mut().zip(dc).for_each(|(r, d)| *r -= g * d);
            }
        }
        let bc = match &self.problem {
            Problem::Physical(bcs) => {
                let rho_in: f64 = bcs.inlet_concentration.iter().zip(&self.params.valence).map(|(c, z)| c * z).sum();
                let mut bc = Dirichlet::new();
                for &v in &self.inlet {
                    bc.insert(v, rho_in)?;
                }
                bc
            }
            Problem::Manufactured(ms) => {
                let ms = ms.clone();
                self.add_source(&mut b, |x| ms.charge_source(t_new, x))?;
                self.scalar_dirichlet_exact(t_new, |t, x| ms.rho(t, x))
            }
        };
        apply_dirichlet(&mut a, &mut b, &bc)?;
        self.solve(|s| &mut s.charge, &a, &b, "charge")
    }

    /// Potential from `−ε Δφ = ρ`.
    pub fn step_potential(&mut self, rho: &[f64], t_new: f64) -> Result<Vec<f64>> {
        let mut a = self.laplace.scaled(self.params.permittivity);
        let mut b = self.mass.mul_vec(rho);
        let bc = match &self.problem {
            Problem::Physical(bcs) => {
                let mut bc = Dirichlet::new();
                for &v in &self.inlet {
                    bc.insert(v, bcs.phi_in)?;
                }
                for &v in &self.outlet {
                    bc.insert(v, bcs.phi_out)?;
                }
                for &v in &self.wall {
                    bc.insert_weak(v, 0.0);
                }
                bc
            }
            Problem::Manufactured(ms) => {
                let ms = ms.clone();
                self.add_source(&mut b, |x| ms.potential_source(t_new, x))?;
                self.scalar_dirichlet_exact(t_new, |t, x| ms.phi(t, x))
            }
        };
        apply_dirichlet(&mut a, &mut b, &bc)?;
        self.solve(|s| &mut s.potential, &a, &b, "potential")
    }

    /// Area-weighted average of the element gradients of `phi` at a vertex.
    pub fn nodal_gradient(&self, phi: &[f64], v: usize) -> [f64; 2] {
        let mesh = self.mesh();
        let mut g = [0.0; 2];
        let mut area = 0.0;
        for &t in &self.vertex_triangles[v] {
            let map = self.ctx.element_map(t);
            for (k, &w) in mesh.triangles[t].iter().enumerate() {
                let gk = map.grad(P1_REF_GRADS[k]);
                g[0] += map.area * phi[w] * gk[0];
                g[1] += map.area * phi[w] * gk[1];
            }
            area += map.area;
        }
        [g[0] / area, g[1] / area]
    }

    /// Wall velocity `−ξ ∇φ` at every wall vertex.
    pub fn slip_velocity(&self, phi: &[f64], xi: f64) -> Vec<(usize, [f64; 2])> {
        self.wall
            .iter()
            .map(|&v| {
                let g = self.nodal_gradient(phi, v);
                (v, [-xi * g[0], -xi * g[1]])
            })
            .collect()
    }

    fn velocity_dirichlet(&self, slip_phi: &[f64], t_new: f64) -> Result<Dirichlet> {
        let ns = self.ctx.scalar.n_scalar;
        let mut bc = Dirichlet::new();
        match &self.problem {
            Problem::Physical(bcs) => {
                for (v, w) in self.slip_velocity(slip_phi, bcs.xi) {
                    bc.insert(v, w[0])?;
                    bc.insert(ns + v, w[1])?;
                }
                for &v in &self.inlet {
                    bc.insert_weak(v, bcs.inlet_velocity[0]);
                    bc.insert_weak(ns + v, bcs.inlet_velocity[1]);
                }
            }
            Problem::Manufactured(ms) => {
                for &v in &self.boundary {
                    let w = ms.velocity(t_new, self.mesh().vertices[v]);
                    bc.insert(v, w[0])?;
                    bc.insert(ns + v, w[1])?;
                }
            }
        }
        Ok(bc)
    }

    /// Velocity and pressure from the linearized momentum and continuity equations.
    pub fn step_stokes(
        &mut self,
        state: &SimState,
        rho: &[f64],
        phi: &[f64],
        slip_phi: &[f64],
        conv_prev: &CsrMatrix,
    ) -> Result<StokesSolution> {
        let tau = state.tau;
        let t_new = state.time + tau;
        let ns = self.ctx.scalar.n_scalar;
        let np = self.ctx.pressure.n_dofs;
        let nu = 2 * ns;
        let n = nu + np;
        let a = self.transport_matrix(tau, self.params.viscosity, &[(1.0, conv_prev)])?;

        let mut t = TripletBuffer::with_capacity(n, n, 2 * a.nnz() + 2 * self.div.nnz());
        t.push_block(&a, 0, 0, 1.0);
        t.push_block(&a, ns, ns, 1.0);
        t.push_block(&self.div, nu, 0, 1.0);
        t.push_block(&self.div_t, 0, nu, 1.0);
        let mut k = compress(&t)?;

        let mut b = vec![0.0; n];
        let f = self.ctx.body_force_vector(rho, phi)?;
        let mu = self.mass_rhs(tau, &state.u[..ns]);
        let mv = self.mass_rhs(tau, &state.u[ns..]);
        for i in 0..ns {
            b[i] = mu[i] + f[i];
            b[ns + i] = mv[i] + f[ns + i];
        }
        if let Problem::Manufactured(ms) = &self.problem {
            let ms = ms.clone();
            let s = self.ctx.vector_load(|x| ms.momentum_source(t_new, x));
            b[..nu].iter_mut().zip(s).for_each(|(r, s)| *r += s);
        }
        let mut bc = self.velocity_dirichlet(slip_phi, t_new)?;
        // An enclosed flow fixes the pressure constant by pinning one dof and
        // shifting to zero mean afterwards. A bordered mean row would be dense
        // and ruins the fill of the factorization.
        if self.enclosed {
            bc.insert(nu + np - 1, 0.0)?;
        }
        apply_dirichlet(&mut k, &mut b, &bc)?;
        let x = self.solve(|s| &mut s.stokes, &k, &b, "stokes")?;
        let mut p = x[nu..].to_vec();
        if self.enclosed {
            let shift = self.pressure_mean(&p) / self.mean.iter().sum::<f64>();
            p.iter_mut().for_each(|v| *v -= shift);
        }
        Ok(StokesSolution { u: x[..nu].to_vec(), p })
    }

    /// Concentration of species `i` at the new level.
    pub fn step_concentration(
        &mut self,
        state: &SimState,
        i: usize,
        conv_new: &CsrMatrix,
        drift_prev: &CsrMatrix,
    ) -> Result<Vec<f64>> {
        let tau = state.tau;
        let t_new = state.time + tau;
        let g = self.params.mobility[i] * self.params.valence[i];
        let mut a = self.transport_matrix(tau, self.params.diffusivity[i], &[(1.0, conv_new), (g, drift_prev)])?;
        let mut b = self.mass_rhs(tau, &state.c[i]);
        let bc = match &self.problem {
            Problem::Physical(bcs) => {
                let mut bc = Dirichlet::new();
                for &v in &self.inlet {
                    bc.insert(v, bcs.inlet_concentration[i])?;
                }
                bc
            }
            Problem::Manufactured(ms) => {
                let ms = ms.clone();
                self.add_source(&mut b, |x| ms.concentration_source(i, t_new, x))?;
                self.scalar_dirichlet_exact(t_new, |t, x| ms.concentration(i, t, x))
            }
        };
        apply_dirichlet(&mut a, &mut b, &bc)?;
        self.solve(|s| &mut s.concentration, &a, &b, "concentration")
    }

    /// One full step. On error the input state is untouched and nothing is returned.
    pub fn advance(&mut self, state: &SimState) -> Result<(SimState, EnergyRecord)> {
        self.check_state(state)?;
        let t_new = state.time + state.tau;
        let form = self.options.convection;
        let conv_prev = self.ctx.convection_matrix(&state.u, form)?;
        let drift_prev = self.ctx.drift_matrix(&state.phi, 1.0)?;

        let rho = self.step_charge(state, &conv_prev, &drift_prev)?;
        let phi = self.step_potential(&rho, t_new)?;
        let slip_phi = match self.options.slip_potential {
            SlipPotential::Current => phi.clone(),
            SlipPotential::Previous => state.phi.clone(),
        };
        let stokes = self.step_stokes(state, &rho, &phi, &slip_phi, &conv_prev)?;
        let conv_new = self.ctx.convection_matrix(&stokes.u, form)?;
        let mut c = Vec::with_capacity(state.c.len());
        for i in 0..state.c.len() {
            c.push(self.step_concentration(state, i, &conv_new, &drift_prev)?);
        }
        let next =
            SimState { step: state.step + 1, time: t_new, tau: state.tau, rho, phi, u: stokes.u, p: stokes.p, c };
        let energy = EnergyRecord::measure(&self.ctx, &next)?;
        if !energy.is_finite() {
            return Err(Error::Domain(format!("non-finite energy at step {}", next.step)));
        }
        Ok((next, energy))
    }

    fn check_state(&self, s: &SimState) -> Result<()> {
        let ns = self.ctx.scalar.n_dofs;
        let checks = [
            ("charge", s.rho.len(), ns),
            ("potential", s.phi.len(), ns),
            ("velocity", s.u.len(), self.ctx.velocity.n_dofs),
            ("pressure", s.p.len(), self.ctx.pressure.n_dofs),
            ("species count", s.c.len(), self.params.n_species()),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(Error::Shape { what, expected, got });
            }
        }
        if let Some(c) = s.c.iter().find(|c| c.len() != ns) {
            return Err(Error::Shape { what: "concentration", expected: ns, got: c.len() });
        }
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return Err(Error::param(format!("time step must be positive, got {}", s.tau)));
        }
        Ok(())
    }

    /// Initial state of a physical run: nodal concentrations, `ρ⁰ = Σ z_i c_i`,
    /// zero velocity and pressure, and `φ⁰` from one potential solve.
    pub fn initial_state(&mut self, ic: &InitialCondition, tau: f64) -> Result<SimState> {
        let mut s = SimState::zeros(&self.ctx, self.params.n_species(), tau);
        let valence = self.params.valence.clone();
        for (v, x) in self.mesh().vertices.iter().enumerate() {
            let cv = ic.concentrations(&valence, *x)?;
            for (i, ci) in cv.iter().enumerate() {
                s.c[i][v] = *ci;
            }
            s.rho[v] = cv.iter().zip(&valence).map(|(c, z)| c * z).sum();
        }
        s.phi = self.step_potential(&s.rho, 0.0)?;
        Ok(s)
    }

    /// Interpolated exact fields at time `t` (manufactured problems only).
    pub fn exact_state(&self, t: f64, tau: f64) -> Result<SimState> {
        let Problem::Manufactured(ms) = &self.problem else {
            return Err(Error::param("exact state requires a manufactured problem"));
        };
        let ctx = &self.ctx;
        let m = ctx.mesh;
        use crate::fem::{interpolate, interpolate_scalar};
        Ok(SimState {
            step: 0,
            time: t,
            tau,
            rho: interpolate_scalar(|x| ms.rho(t, x), &ctx.scalar, m),
            phi: interpolate_scalar(|x| ms.phi(t, x), &ctx.scalar, m),
            u: interpolate(|k, x| ms.velocity(t, x)[k], &ctx.velocity, m),
            p: interpolate_scalar(|x| ms.pressure(t, x), &ctx.pressure, m),
            c: (0..self.params.n_species())
                .map(|i| interpolate_scalar(|x| ms.concentration(i, t, x), &ctx.scalar, m))
                .collect(),
        })
    }
}
