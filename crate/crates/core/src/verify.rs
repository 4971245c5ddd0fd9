//! Manufactured solutions, convergence tables, stability sweeps, the
//! roughness study and vortex detection.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::assembly::PhysParams;
use crate::config::{ProblemKind, SimConfig};
use crate::error::{Error, Result};
use crate::fem::{h1_error, l2_error};
use crate::mesh::{generate, refine_uniform, GeometrySpec, TriMesh};
use crate::scheme::{EnergyRecord, ManufacturedSolution, Problem, SchemeOptions, SimState, Stepper};
use crate::sparse::norm2;

/// Smooth manufactured solution on the unit square:
///
/// * `φ* = a g(t) sin πx sin πy`, `ρ* = −ε Δφ*`,
/// * `u* = a g(t) (sin²πx sin 2πy, −sin 2πx sin²πy)`, divergence-free,
/// * `p* = a g(t) cos πx cos πy`, mean zero,
/// * `c*_i = c0 + ½ φ*`,
///
/// with `g = e^{−λt}`; `λ = 0` gives a steady solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsCase {
    pub physics: PhysParams,
    pub amplitude: f64,
    pub base_concentration: f64,
    /// Decay rate `λ`.
    pub decay: f64,
}

fn sc(x: f64) -> (f64, f64) {
    ((PI * x).sin(), (PI * x).cos())
}

impl MmsCase {
    pub fn new(physics: PhysParams) -> Self {
        Self { physics, amplitude: 1.0, base_concentration: 1.0, decay: 1.0 }
    }

    /// Every field identically zero.
    pub fn zero(physics: PhysParams) -> Self {
        Self { physics, amplitude: 0.0, base_concentration: 0.0, decay: 1.0 }
    }

    pub fn steady(physics: PhysParams) -> Self {
        Self { decay: 0.0, ..Self::new(physics) }
    }

    /// Fast decay, so that time stepping error dominates on fine meshes.
    pub fn transient(physics: PhysParams, decay: f64) -> Self {
        Self { decay, ..Self::new(physics) }
    }

    fn g(&self, t: f64) -> f64 {
        self.amplitude * (-self.decay * t).exp()
    }

    fn dg(&self, t: f64) -> f64 {
        -self.decay * self.g(t)
    }

    fn phi_hat(x: [f64; 2]) -> (f64, [f64; 2]) {
        let (sx, cx) = sc(x[0]);
        let (sy, cy) = sc(x[1]);
        (sx * sy, [PI * cx * sy, PI * sx * cy])
    }

    pub fn grad_phi(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let g = self.g(t);
        Self::phi_hat(x).1.map(|d| g * d)
    }

    pub fn grad_rho(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let k = 2.0 * PI * PI * self.physics.permittivity;
        self.grad_phi(t, x).map(|d| k * d)
    }

    pub fn grad_concentration(&self, _i: usize, t: f64, x: [f64; 2]) -> [f64; 2] {
        self.grad_phi(t, x).map(|d| 0.5 * d)
    }

    pub fn grad_pressure(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let g = self.g(t);
        let (sx, cx) = sc(x[0]);
        let (sy, cy) = sc(x[1]);
        [-PI * g * sx * cy, -PI * g * cx * sy]
    }

    /// `[∇u₁, ∇u₂]`.
    pub fn grad_velocity(&self, t: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        let g = self.g(t);
        let (s2x, c2x) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[0]).cos());
        let (s2y, c2y) = ((2.0 * PI * x[1]).sin(), (2.0 * PI * x[1]).cos());
        let (sx, _) = sc(x[0]);
        let (sy, _) = sc(x[1]);
        [[g * PI * s2x * s2y, g * 2.0 * PI * sx * sx * c2y], [-g * 2.0 * PI * c2x * sy * sy, -g * PI * s2x * s2y]]
    }

    fn laplace_velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let g = self.g(t);
        let (s2x, c2x) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[0]).cos());
        let (s2y, c2y) = ((2.0 * PI * x[1]).sin(), (2.0 * PI * x[1]).cos());
        let (sx, _) = sc(x[0]);
        let (sy, _) = sc(x[1]);
        let pi2 = PI * PI;
        [
            g * (2.0 * pi2 * c2x * s2y - 4.0 * pi2 * sx * sx * s2y),
            -g * (-4.0 * pi2 * s2x * sy * sy + 2.0 * pi2 * s2x * c2y),
        ]
    }

    /// `∇·(c ∇φ)` for the common concentration profile.
    fn drift_divergence(&self, t: f64, x: [f64; 2]) -> f64 {
        let gp = self.grad_phi(t, x);
        let lap_phi = -2.0 * PI * PI * self.phi(t, x);
        0.5 * (gp[0] * gp[0] + gp[1] * gp[1]) + self.concentration(0, t, x) * lap_phi
    }
}

impl ManufacturedSolution for MmsCase {
    fn rho(&self, t: f64, x: [f64; 2]) -> f64 {
        2.0 * PI * PI * self.physics.permittivity * self.phi(t, x)
    }

    fn phi(&self, t: f64, x: [f64; 2]) -> f64 {
        self.g(t) * Self::phi_hat(x).0
    }

    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let g = self.g(t);
        let (sx, _) = sc(x[0]);
        let (sy, _) = sc(x[1]);
        [g * sx * sx * (2.0 * PI * x[1]).sin(), -g * (2.0 * PI * x[0]).sin() * sy * sy]
    }

    fn pressure(&self, t: f64, x: [f64; 2]) -> f64 {
        let (_, cx) = sc(x[0]);
        let (_, cy) = sc(x[1]);
        self.g(t) * cx * cy
    }

    fn concentration(&self, _i: usize, t: f64, x: [f64; 2]) -> f64 {
        self.base_concentration + 0.5 * self.phi(t, x)
    }

    fn charge_source(&self, t: f64, x: [f64; 2]) -> f64 {
        let p = &self.physics;
        let k = 2.0 * PI * PI * p.permittivity;
        let ph = Self::phi_hat(x).0;
        let rho_t = k * self.dg(t) * ph;
        let lap_rho = -2.0 * PI * PI * self.rho(t, x);
        let s: f64 = p.mobility.iter().zip(&p.valence).map(|(n, z)| n * z * z).sum();
        let u = self.velocity(t, x);
        let gr = self.grad_rho(t, x);
        rho_t - p.averaged_diffusivity() * lap_rho - s * self.drift_divergence(t, x) + u[0] * gr[0] + u[1] * gr[1]
    }

    fn momentum_source(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let g = self.g(t);
        let u = self.velocity(t, x);
        let du = self.grad_velocity(t, x);
        let lap = self.laplace_velocity(t, x);
        let gp = self.grad_pressure(t, x);
        let rho = self.rho(t, x);
        let gphi = self.grad_phi(t, x);
        let ratio = if g == 0.0 { 0.0 } else { self.dg(t) / g };
        let mu = self.physics.viscosity;
        std::array::from_fn(|k| ratio * u[k] - mu * lap[k] + u[0] * du[k][0] + u[1] * du[k][1] + gp[k] - rho * gphi[k])
    }

    fn concentration_source(&self, i: usize, t: f64, x: [f64; 2]) -> f64 {
        let p = &self.physics;
        let ph = Self::phi_hat(x).0;
        let c_t = 0.5 * self.dg(t) * ph;
        let lap_c = -PI * PI * self.phi(t, x);
        let u = self.velocity(t, x);
        let gc = self.grad_concentration(i, t, x);
        c_t - p.diffusivity[i] * lap_c - p.mobility[i] * p.valence[i] * self.drift_divergence(t, x)
            + u[0] * gc[0]
            + u[1] * gc[1]
    }

    fn potential_source(&self, t: f64, x: [f64; 2]) -> f64 {
        let lap_phi = -2.0 * PI * PI * self.phi(t, x);
        -self.physics.permittivity * lap_phi - self.rho(t, x)
    }
}

/// Largest difference between the coded sources and sources rebuilt from
/// the fields by central differences, relative to the source scale.
pub fn fd_source_residual(case: &dyn ManufacturedSolution, p: &PhysParams, t: f64, points: &[[f64; 2]]) -> f64 {
    let h = 1e-3;
    let dt = 1e-4;
    // fourth-order central differences
    let d1 = |f: &dyn Fn(f64) -> f64, s: f64, h: f64| {
        (f(s - 2.0 * h) - 8.0 * f(s - h) + 8.0 * f(s + h) - f(s + 2.0 * h)) / (12.0 * h)
    };
    let d2 = |f: &dyn Fn(f64) -> f64, s: f64| {
        (-f(s - 2.0 * h) + 16.0 * f(s - h) - 30.0 * f(s) + 16.0 * f(s + h) - f(s + 2.0 * h)) / (12.0 * h * h)
    };
    let grad =
        |f: &dyn Fn([f64; 2]) -> f64, x: [f64; 2]| [d1(&|s| f([s, x[1]]), x[0], h), d1(&|s| f([x[0], s]), x[1], h)];
    let lap = |f: &dyn Fn([f64; 2]) -> f64, x: [f64; 2]| d2(&|s| f([s, x[1]]), x[0]) + d2(&|s| f([x[0], s]), x[1]);
    let div = |f: &dyn Fn([f64; 2]) -> [f64; 2], x: [f64; 2]| {
        d1(&|s| f([s, x[1]])[0], x[0], h) + d1(&|s| f([x[0], s])[1], x[1], h)
    };
    let mut worst = 0.0f64;
    for &x in points {
        let u = case.velocity(t, x);
        let drift = |i: usize| {
            div(
                &|y| {
                    let c = case.concentration(i, t, y);
                    grad(&|z| case.phi(t, z), y).map(|g| c * g)
                },
                x,
            )
        };
        let adv = |f: &dyn Fn([f64; 2]) -> f64| {
            let g = grad(f, x);
            u[0] * g[0] + u[1] * g[1]
        };
        let rho_t = d1(&|s| case.rho(s, x), t, dt);
        let s_drift: f64 = (0..p.n_species()).map(|i| p.mobility[i] * p.valence[i] * p.valence[i] * drift(i)).sum();
        let charge =
            rho_t - p.averaged_diffusivity() * lap(&|y| case.rho(t, y), x) - s_drift + adv(&|y| case.rho(t, y));
        let mut diffs = vec![(charge, case.charge_source(t, x))];
        for k in 0..2 {
            let uk = |y: [f64; 2]| case.velocity(t, y)[k];
            let f = d1(&|s| case.velocity(s, x)[k], t, dt) - p.viscosity * lap(&uk, x)
                + adv(&uk)
                + grad(&|y| case.pressure(t, y), x)[k]
                - case.rho(t, x) * grad(&|y| case.phi(t, y), x)[k];
            diffs.push((f, case.momentum_source(t, x)[k]));
        }
        for i in 0..p.n_species() {
            let ci = |y: [f64; 2]| case.concentration(i, t, y);
            let f = d1(&|s| case.concentration(i, s, x), t, dt)
                - p.diffusivity[i] * lap(&ci, x)
                - p.mobility[i] * p.valence[i] * drift(i)
                + adv(&ci);
            diffs.push((f, case.concentration_source(i, t, x)));
        }
        let pot = -p.permittivity * lap(&|y| case.phi(t, y), x) - case.rho(t, x);
        diffs.push((pot, case.potential_source(t, x)));
        let div_u = div(&|y| case.velocity(t, y), x);
        diffs.push((div_u, 0.0));
        for (fd, coded) in diffs {
            worst = worst.max((fd - coded).abs() / (1.0 + coded.abs()));
        }
    }
    worst
}

/// Error of one field at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub level: usize,
    pub h: f64,
    pub tau: f64,
    pub field: String,
    pub l2: f64,
    pub h1: f64,
}

/// Invariants monitored during one verification run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunDiagnostics {
    /// `max_n ‖B u^n‖ / ‖u^n‖`.
    pub divergence_ratio: f64,
    /// `max_n |∫ p^n|`.
    pub pressure_mean: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAxis {
    Space,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub axis: RateAxis,
    pub rows: Vec<RateRow>,
    pub diagnostics: Vec<RunDiagnostics>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

impl RateTable {
    pub fn fields(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.rows.iter().filter(|r| seen.insert(r.field.clone())).map(|r| r.field.clone()).collect()
    }

    pub fn series(&self, field: &str) -> Vec<&RateRow> {
        self.rows.iter().filter(|r| r.field == field).collect()
    }

    fn abscissa(&self, r: &RateRow) -> f64 {
        match self.axis {
            RateAxis::Space => r.h,
            RateAxis::Time => r.tau,
        }
    }

    fn fit(&self, field: &str, skip: usize, h1: bool) -> Option<f64> {
        let s = self.series(field);
        if s.len() < 3 + skip {
            return None;
        }
        let xs: Vec<f64> = s[skip..].iter().map(|r| self.abscissa(r)).collect();
        let ys: Vec<f64> = s[skip..].iter().map(|r| if h1 { r.h1 } else { r.l2 }).collect();
        Some(fit_slope(&xs, &ys))
    }

    /// Fitted L2 slope; needs at least three levels.
    pub fn slope(&self, field: &str) -> Option<f64> {
        self.fit(field, 0, false)
    }

    pub fn h1_slope(&self, field: &str) -> Option<f64> {
        self.fit(field, 0, true)
    }

    /// L2 slope fitted without the coarsest level.
    pub fn slope_without_coarsest(&self, field: &str) -> Option<f64> {
        self.fit(field, 1, false)
    }

    /// Columns `level,h,tau,field,L2,H1,slope`. Data rows carry the local
    /// L2 slope against the previous level; `fit` rows carry the fitted
    /// slopes (`<field>` for L2, `<field>.h1` for H1).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,h,tau,field,L2,H1,slope\n");
        for field in self.fields() {
            let series = self.series(&field);
            for (k, r) in series.iter().enumerate() {
                let local = if k == 0 {
                    String::new()
                } else {
                    let p = series[k - 1];
                    format!("{:.6}", (r.l2 / p.l2).ln() / (self.abscissa(r) / self.abscissa(p)).ln())
                };
                let _ = writeln!(
                    s,
                    "{},{:.6e},{:.6e},{},{:.6e},{:.6e},{}",
                    r.level, r.h, r.tau, r.field, r.l2, r.h1, local
                );
            }
        }
        for field in self.fields() {
            if let Some(v) = self.slope(&field) {
                let _ = writeln!(s, "fit,,,{field},,,{v:.6}");
            }
            if let Some(v) = self.h1_slope(&field) {
                let _ = writeln!(s, "fit,,,{field}.h1,,,{v:.6}");
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Spatial study: uniform refinements of an `n × n` unit square with
/// `τ = tau_factor · h_max²` (rounded so that `T` is hit exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialStudy {
    pub base_divisions: usize,
    pub levels: usize,
    pub t_final: f64,
    pub tau_factor: f64,
    pub options: SchemeOptions,
}

impl Default for SpatialStudy {
    fn default() -> Self {
        Self { base_divisions: 8, levels: 4, t_final: 0.05, tau_factor: 0.25, options: SchemeOptions::default() }
    }
}

/// Decay rate of the case used for temporal rates. With `e^{−t}` the time
/// stepping error on a 64 × 64 mesh sits below the spatial error.
pub const TEMPORAL_DECAY: f64 = 20.0;

/// Temporal study: fixed `n × n` mesh, `T / steps` for each entry of `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalStudy {
    pub divisions: usize,
    pub t_final: f64,
    pub steps: Vec<usize>,
    pub options: SchemeOptions,
}

impl Default for TemporalStudy {
    fn default() -> Self {
        Self { divisions: 64, t_final: 0.1, steps: vec![10, 20, 40, 80], options: SchemeOptions::default() }
    }
}

/// `(field, L2 error, H1 error)` for each field.
pub type FieldErrors = Vec<(String, f64, f64)>;

/// Field errors at the final time of one manufactured run.
pub fn run_mms_once(
    case: &MmsCase,
    mesh: &TriMesh,
    steps: usize,
    t_final: f64,
    options: SchemeOptions,
) -> Result<(FieldErrors, RunDiagnostics)> {
    let tau = t_final / steps as f64;
    let ms: Arc<dyn ManufacturedSolution> = Arc::new(case.clone());
    let mut stepper = Stepper::new(mesh, case.physics.clone(), Problem::Manufactured(ms), options)?;
    let mut state = stepper.exact_state(0.0, tau)?;
    let mut diag = RunDiagnostics::default();
    for _ in 0..steps {
        state = stepper.advance(&state)?.0;
        let un = norm2(&state.u);
        let bu = norm2(&stepper.divergence().mul_vec(&state.u));
        if un > 0.0 {
            diag.divergence_ratio = diag.divergence_ratio.max(bu / un);
        }
        diag.pressure_mean = diag.pressure_mean.max(stepper.pressure_mean(&state.p).abs());
        diag.steps += 1;
    }
    // the last step lands on t_final up to rounding of the accumulated time
    let t = t_final;
    let ctx = &stepper.ctx;
    let mut out = Vec::new();
    let mut push = |name: String, l2: f64, h1: f64| out.push((name, l2, h1));
    push(
        "rho".into(),
        l2_error(&state.rho, &ctx.scalar, mesh, |_, x| case.rho(t, x))?,
        h1_error(&state.rho, &ctx.scalar, mesh, |_, x| case.grad_rho(t, x))?,
    );
    push(
        "phi".into(),
        l2_error(&state.phi, &ctx.scalar, mesh, |_, x| case.phi(t, x))?,
        h1_error(&state.phi, &ctx.scalar, mesh, |_, x| case.grad_phi(t, x))?,
    );
    push(
        "u".into(),
        l2_error(&state.u, &ctx.velocity, mesh, |k, x| case.velocity(t, x)[k])?,
        h1_error(&state.u, &ctx.velocity, mesh, |k, x| case.grad_velocity(t, x)[k])?,
    );
    push(
        "p".into(),
        l2_error(&state.p, &ctx.pressure, mesh, |_, x| case.pressure(t, x))?,
        h1_error(&state.p, &ctx.pressure, mesh, |_, x| case.grad_pressure(t, x))?,
    );
    for (i, c) in state.c.iter().enumerate() {
        push(
            format!("c{}", i + 1),
            l2_error(c, &ctx.scalar, mesh, |_, x| case.concentration(i, t, x))?,
            h1_error(c, &ctx.scalar, mesh, |_, x| case.grad_concentration(i, t, x))?,
        );
    }
    Ok((out, diag))
}

pub fn run_mms_spatial(case: &MmsCase, study: &SpatialStudy) -> Result<RateTable> {
    if study.levels == 0 || study.base_divisions == 0 || !(study.tau_factor > 0.0) || !(study.t_final > 0.0) {
        return Err(Error::param("spatial study needs levels, divisions, tau factor and T positive"));
    }
    let mut mesh = generate(&GeometrySpec::unit_square(study.base_divisions))?;
    let mut table = RateTable { axis: RateAxis::Space, rows: Vec::new(), diagnostics: Vec::new() };
    for level in 0..study.levels {
        if level > 0 {
            mesh = refine_uniform(&mesh);
        }
        let tau_target = study.tau_factor * mesh.h_max * mesh.h_max;
        let steps = (study.t_final / tau_target).ceil().max(1.0) as usize;
        let tau = study.t_final / steps as f64;
        let (errors, diag) = run_mms_once(case, &mesh, steps, study.t_final, study.options)?;
        for (field, l2, h1) in errors {
            table.rows.push(RateRow { level, h: mesh.h_max, tau, field, l2, h1 });
        }
        table.diagnostics.push(diag);
    }
    Ok(table)
}

pub fn run_mms_temporal(case: &MmsCase, study: &TemporalStudy) -> Result<RateTable> {
    if study.steps.is_empty() || study.steps.contains(&0) || study.divisions == 0 || !(study.t_final > 0.0) {
        return Err(Error::param("temporal study needs positive step counts, divisions and T"));
    }
    let mesh = generate(&GeometrySpec::unit_square(study.divisions))?;
    let mut table = RateTable { axis: RateAxis::Time, rows: Vec::new(), diagnostics: Vec::new() };
    for (level, &steps) in study.steps.iter().enumerate() {
        let (errors, diag) = run_mms_once(case, &mesh, steps, study.t_final, study.options)?;
        for (field, l2, h1) in errors {
            table.rows.push(RateRow { level, h: mesh.h_max, tau: study.t_final / steps as f64, field, l2, h1 });
        }
        table.diagnostics.push(diag);
    }
    Ok(table)
}

/// Builds the stepper problem and initial state described by a config.
pub fn setup<'a>(cfg: &SimConfig, mesh: &'a TriMesh) -> Result<(Stepper<'a>, SimState)> {
    cfg.validate()?;
    match cfg.problem {
        ProblemKind::Physical => {
            let mut s = Stepper::new(mesh, cfg.physics.clone(), Problem::Physical(cfg.bcs.clone()), cfg.options)?;
            let state = s.initial_state(&cfg.initial, cfg.tau)?;
            Ok((s, state))
        }
        ProblemKind::Manufactured => {
            let case: Arc<dyn ManufacturedSolution> = Arc::new(MmsCase::new(cfg.physics.clone()));
            let s = Stepper::new(mesh, cfg.physics.clone(), Problem::Manufactured(case), cfg.options)?;
            let state = s.exact_state(0.0, cfg.tau)?;
            Ok((s, state))
        }
    }
}

/// Runs `steps` steps of a config, calling `on_step` after each one.
pub fn simulate<F>(cfg: &SimConfig, mesh: &TriMesh, steps: usize, mut on_step: F) -> Result<SimState>
where
    F: FnMut(&Stepper, &SimState, &EnergyRecord) -> Result<()>,
{
    let (mut stepper, mut state) = setup(cfg, mesh)?;
    for _ in 0..steps {
        let (next, energy) = stepper.advance(&state)?;
        state = next;
        on_step(&stepper, &state, &energy)?;
    }
    Ok(state)
}

/// Maxima of every energy entry for one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub tau: f64,
    /// Steps actually completed.
    pub steps: usize,
    /// Per-entry maximum over the first `STABILITY_WINDOW` steps.
    pub initial_max: Vec<f64>,
    pub max: Vec<f64>,
    pub finite: bool,
    /// Solver or step failure, if the run stopped early.
    pub failure: Option<String>,
}

/// Steps whose energies define the reference transient.
pub const STABILITY_WINDOW: usize = 5;

impl StabilityRow {
    /// Every entry finite and at most `factor` times its early maximum.
    pub fn bounded(&self, factor: f64) -> bool {
        self.finite && self.failure.is_none() && self.max.iter().zip(&self.initial_max).all(|(m, i)| *m <= factor * *i)
    }
}

/// Runs the config to `t_final` once per step size.
pub fn run_stability_sweep(cfg: &SimConfig, taus: &[f64], t_final: f64) -> Result<Vec<StabilityRow>> {
    let mesh = cfg.mesh()?;
    let mut rows = Vec::new();
    for &tau in taus {
        let mut c = cfg.clone();
        c.tau = tau;
        c.t_final = t_final;
        c.validate()?;
        let n = c.n_steps();
        let names = EnergyRecord::entry_names(c.physics.n_species()).len();
        let mut row = StabilityRow {
            tau,
            steps: 0,
            initial_max: vec![0.0; names],
            max: vec![0.0; names],
            finite: true,
            failure: None,
        };
        let result = simulate(&c, &mesh, n, |_, _, e| {
            let v = e.entries();
            row.finite &= v.iter().all(|x| x.is_finite());
            for (k, x) in v.iter().enumerate() {
                row.max[k] = row.max[k].max(*x);
                if row.steps < STABILITY_WINDOW {
                    row.initial_max[k] = row.initial_max[k].max(*x);
                }
            }
            row.steps += 1;
            Ok(())
        });
        if let Err(e) = result {
            row.finite &= !matches!(e, Error::Domain(_));
            row.failure = Some(e.to_string());
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoughnessPoint {
    pub height: f64,
    pub max_u1: f64,
}

/// Largest nodal `|u₁|` of a MINI velocity.
pub fn max_abs_u1(state: &SimState, mesh: &TriMesh) -> f64 {
    state.u[..mesh.n_vertices()].iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Runs a rough-channel config once per block height and reports the
/// final `max |u₁|`.
pub fn run_roughness_study(base: &SimConfig, heights: &[f64]) -> Result<Vec<RoughnessPoint>> {
    let mut out = Vec::new();
    for &h in heights {
        let mut c = base.clone();
        c.geometry.roughness_height = h;
        c.validate()?;
        let mesh = c.mesh()?;
        let state = simulate(&c, &mesh, c.n_steps(), |_, _, _| Ok(()))?;
        out.push(RoughnessPoint { height: h, max_u1: max_abs_u1(&state, &mesh) });
    }
    Ok(out)
}

/// Relative stagnation threshold for vortex candidates.
pub const VORTEX_SPEED_FRACTION: f64 = 1e-3;

/// Interior vertices that look like vortex centers: nearly stagnant, with
/// every one-ring neighbour turning the same way about the vertex and a
/// circulation of that sign around the ring.
pub fn vortex_candidates(u: &[f64], mesh: &TriMesh) -> Vec<usize> {
    let ns = u.len() / 2;
    let nv = mesh.n_vertices();
    if ns < nv {
        return Vec::new();
    }
    let vel = |v: usize| [u[v], u[ns + v]];
    let speed = |v: usize| {
        let w = vel(v);
        w[0].hypot(w[1])
    };
    let umax = (0..nv).map(speed).fold(0.0, f64::max);
    if umax == 0.0 {
        return Vec::new();
    }
    let boundary = mesh.boundary_mask();
    let vt = mesh.vertex_triangles();
    let mut out = Vec::new();
    for v in 0..nv {
        if boundary[v] || speed(v) >= VORTEX_SPEED_FRACTION * umax {
            continue;
        }
        let xv = mesh.vertices[v];
        let mut sign = 0.0f64;
        let mut consistent = true;
        let mut circulation = 0.0;
        for &t in &vt[v] {
            let tri = mesh.triangles[t];
            let k = tri.iter().position(|&w| w == v).expect("vertex in its triangle");
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            for w in [a, b] {
                let d = [mesh.vertices[w][0] - xv[0], mesh.vertices[w][1] - xv[1]];
                let uw = vel(w);
                let cross = d[0] * uw[1] - d[1] * uw[0];
                if cross == 0.0 || (sign != 0.0 && cross.signum() != sign) {
                    consistent = false;
                }
                sign = cross.signum();
            }
            let (ua, ub) = (vel(a), vel(b));
            let (xa, xb) = (mesh.vertices[a], mesh.vertices[b]);
            circulation += 0.5 * ((ua[0] + ub[0]) * (xb[0] - xa[0]) + (ua[1] + ub[1]) * (xb[1] - xa[1]));
        }
        if consistent && circulation * sign > 0.0 {
            out.push(v);
        }
    }
    out
}

/// Number of vortices: connected groups of [`vortex_candidates`].
pub fn vortex_detect(u: &[f64], mesh: &TriMesh) -> usize {
    let cand = vortex_candidates(u, mesh);
    if cand.is_empty() {
        return 0;
    }
    let set: BTreeSet<usize> = cand.iter().copied().collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_vertices()];
    for [a, b] in mesh.edges() {
        if set.contains(&a) && set.contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = BTreeSet::new();
    let mut groups = 0;
    for &v in &cand {
        if !seen.insert(v) {
            continue;
        }
        groups += 1;
        let mut stack = vec![v];
        while let Some(w) = stack.pop() {
            for &n in &adj[w] {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::mms_physics;
    use crate::fem::{interpolate, DofMap, SpaceKind};

    fn sample_points() -> Vec<[f64; 2]> {
        vec![[0.13, 0.71], [0.5, 0.5], [0.82, 0.27], [0.31, 0.44], [0.05, 0.93]]
    }

    #[test]
    fn sources_agree_with_finite_differences() {
        let case = MmsCase::new(mms_physics());
        for t in [0.0, 0.03, 0.1] {
            let r = fd_source_residual(&case, &case.physics, t, &sample_points());
            assert!(r < 1e-6, "t = {t}: residual {r}");
        }
        let mut p = mms_physics();
        p.viscosity = 0.3;
        p.permittivity = 2.0;
        assert!(fd_source_residual(&MmsCase::steady(p.clone()), &p, 0.0, &sample_points()) < 1e-6);
    }

    #[test]
    fn fd_check_detects_a_wrong_source() {
        struct Perturbed(MmsCase);
        impl ManufacturedSolution for Perturbed {
            fn rho(&self, t: f64, x: [f64; 2]) -> f64 {
                self.0.rho(t, x)
            }
            fn phi(&self, t: f64, x: [f64; 2]) -> f64 {
                self.0.phi(t, x)
            }
            fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
                self.0.velocity(t, x)
            }
            fn pressure(&self, t: f64, x: [f64; 2]) -> f64 {
                self.0.pressure(t, x)
            }
            fn concentration(&self, i: usize, t: f64, x: [f64; 2]) -> f64 {
                self.0.concentration(i, t, x)
            }
            fn charge_source(&self, t: f64, x: [f64; 2]) -> f64 {
                self.0.charge_source(t, x)
            }
            fn momentum_source(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
                self.0.momentum_source(t, x)
            }
            fn concentration_source(&self, i: usize, t: f64, x: [f64; 2]) -> f64 {
                // a drift coefficient off by 1%
                self.0.concentration_source(i, t, x) + 0.01 * self.0.drift_divergence(t, x)
            }
        }
        let p = mms_physics();
        let r = fd_source_residual(&Perturbed(MmsCase::new(p.clone())), &p, 0.0, &sample_points());
        assert!(r > 1e-3, "residual {r}");
    }

    #[test]
    fn slope_fit_recovers_power_laws() {
        let xs = [0.1, 0.05, 0.025, 0.0125];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((fit_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let mut t = RateTable { axis: RateAxis::Space, rows: Vec::new(), diagnostics: Vec::new() };
        for (k, h) in [0.4f64, 0.2, 0.1].iter().enumerate() {
            t.rows.push(RateRow { level: k, h: *h, tau: 0.01, field: "rho".into(), l2: h * h, h1: *h });
        }
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "level,h,tau,field,L2,H1,slope");
        assert_eq!(lines.len(), 1 + 3 + 2);
        assert!(lines[1].ends_with(','));
        assert!(lines[2].ends_with("2.000000"));
        assert_eq!(lines[4], "fit,,,rho,,,2.000000");
        assert_eq!(lines[5], "fit,,,rho.h1,,,1.000000");
        assert_eq!(t.slope("rho"), Some(2.0));
        assert_eq!(t.slope_without_coarsest("rho"), None);
    }

    #[test]
    fn zero_solution_has_zero_error() {
        let case = MmsCase::zero(mms_physics());
        let mesh = generate(&GeometrySpec::unit_square(4)).unwrap();
        let (errors, _) = run_mms_once(&case, &mesh, 3, 0.01, SchemeOptions::default()).unwrap();
        assert!(errors.iter().all(|(_, l2, h1)| *l2 == 0.0 && *h1 == 0.0), "{errors:?}");
    }

    #[test]
    fn uniform_flow_has_no_vortex_and_rigid_rotation_has_one() {
        let mesh = generate(&GeometrySpec::unit_square(10)).unwrap();
        let d = DofMap::new(SpaceKind::MiniVelocity, &mesh);
        let uniform = interpolate(|k, _| if k == 0 { 1.0 } else { 0.0 }, &d, &mesh);
        assert_eq!(vortex_detect(&uniform, &mesh), 0);
        let rot = interpolate(|k, x| if k == 0 { -(x[1] - 0.5) } else { x[0] - 0.5 }, &d, &mesh);
        assert_eq!(vortex_detect(&rot, &mesh), 1);
        let reverse: Vec<f64> = rot.iter().map(|v| -v).collect();
        assert_eq!(vortex_detect(&reverse, &mesh), 1);
        assert_eq!(vortex_detect(&vec![0.0; d.n_dofs], &mesh), 0);
    }

    #[test]
    fn two_counter_rotating_cells_are_two_vortices() {
        let mesh = generate(&GeometrySpec::unit_square(16)).unwrap();
        let d = DofMap::new(SpaceKind::MiniVelocity, &mesh);
        // stream function sin(2πx) sin(πy): centers at (1/4, 1/2) and (3/4, 1/2)
        let u = interpolate(
            |k, x| {
                let (a, b) = (2.0 * PI * x[0], PI * x[1]);
                if k == 0 {
                    PI * a.sin() * b.cos()
                } else {
                    -2.0 * PI * a.cos() * b.sin()
                }
            },
            &d,
            &mesh,
        );
        assert_eq!(vortex_detect(&u, &mesh), 2);
    }
}
