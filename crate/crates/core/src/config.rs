//! Run configuration, named presets and the `key = value` text format.
//!
//! A config file is UTF-8 lines `key = value` with `#` comments. An optional
//! `preset = "name"` line selects the base configuration; every other key
//! overrides one field of it. Without a preset the base is `tjunction-nu1`.
//! Lists are comma-separated. Keys may appear at most once.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::{Convection, PhysParams};
use crate::error::{Error, Result};
use crate::mesh::{generate, GeometryKind, GeometrySpec, TriMesh};
use crate::scheme::{BcSet, InitialCondition, SchemeOptions, SlipPotential, SolverChoice};

/// Which boundary data and sources drive a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Physical,
    /// The built-in manufactured solution on the unit square.
    Manufactured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub preset: Option<String>,
    pub problem: ProblemKind,
    pub geometry: GeometrySpec,
    pub physics: PhysParams,
    pub bcs: BcSet,
    pub initial: InitialCondition,
    pub tau: f64,
    pub t_final: f64,
    pub output_interval: usize,
    pub options: SchemeOptions,
}

/// Channel width of every physical preset (m).
pub const CHANNEL_WIDTH: f64 = 1e-6;

pub const PRESETS: [&str; 7] =
    ["tjunction-nu1", "tjunction-nu01", "rough-01h", "rough-02h", "rough-03h", "rough-04h", "mms-default"];

fn table_physics(viscosity: f64) -> PhysParams {
    PhysParams {
        viscosity,
        permittivity: 1.0,
        mobility: vec![5e-8, 3e-7, 3e-8],
        diffusivity: vec![2e-10, 3e-10, 2e-10],
        valence: vec![1.0, -1.0, -2.0],
    }
}

/// Physics of the manufactured-solution runs.
pub fn mms_physics() -> PhysParams {
    PhysParams {
        viscosity: 1.0,
        permittivity: 1.0,
        mobility: vec![0.5, 0.25],
        diffusivity: vec![1.0, 0.5],
        valence: vec![1.0, -1.0],
    }
}

fn physical(geometry: GeometrySpec, viscosity: f64, inlet_u1: f64, t_final: f64) -> SimConfig {
    SimConfig {
        preset: None,
        problem: ProblemKind::Physical,
        geometry,
        physics: table_physics(viscosity),
        bcs: BcSet {
            inlet_velocity: [inlet_u1, 0.0],
            inlet_concentration: vec![1.0; 3],
            phi_in: 0.0,
            phi_out: 0.0,
            xi: 1e-6,
        },
        initial: InitialCondition::erf_front(),
        tau: 1e-7,
        t_final,
        output_interval: 10,
        options: SchemeOptions::default(),
    }
}

/// Rough channel of the roughness study with block height `fraction · H`.
pub fn rough_channel_config(fraction: f64) -> SimConfig {
    let h = CHANNEL_WIDTH;
    let l = 2.0 * h;
    let geometry = GeometrySpec::rough_channel(h, l, fraction * h, h / 4.0, l / 3.0, h / 20.0);
    physical(geometry, 1.0, 1e-2, 2e-5)
}

pub fn preset(name: &str) -> Result<SimConfig> {
    let h = CHANNEL_WIDTH;
    let mut cfg = match name {
        "tjunction-nu1" => physical(GeometrySpec::t_junction(h, h / 16.0), 1.0, -1.0, 6e-6),
        "tjunction-nu01" => physical(GeometrySpec::t_junction(h, h / 16.0), 0.1, -1.0, 1.36e-5),
        "rough-01h" => rough_channel_config(0.1),
        "rough-02h" => rough_channel_config(0.2),
        "rough-03h" => rough_channel_config(0.3),
        "rough-04h" => rough_channel_config(0.4),
        "mms-default" => SimConfig {
            preset: None,
            problem: ProblemKind::Manufactured,
            geometry: GeometrySpec::unit_square(8),
            physics: mms_physics(),
            bcs: BcSet {
                inlet_velocity: [0.0, 0.0],
                inlet_concentration: vec![1.0; 2],
                phi_in: 0.0,
                phi_out: 0.0,
                xi: 0.0,
            },
            initial: InitialCondition::Uniform(vec![1.0; 2]),
            tau: 1e-3,
            t_final: 0.05,
            output_interval: 10,
            options: SchemeOptions::default(),
        },
        other => {
            return Err(Error::param(format!("unknown preset '{other}' (known: {})", PRESETS.join(", "))));
        }
    };
    cfg.preset = Some(name.to_string());
    Ok(cfg)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.physics.validate()?;
        self.bcs.validate(self.physics.n_species())?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param(format!("time.tau must be positive, got {}", self.tau)));
        }
        if !(self.t_final >= self.tau && self.t_final.is_finite()) {
            return Err(Error::param(format!("time.T = {} must be at least time.tau = {}", self.t_final, self.tau)));
        }
        if self.output_interval == 0 {
            return Err(Error::param("output.interval must be at least 1"));
        }
        if let SolverChoice::Iterative { tol, max_iter } = self.options.solver {
            if !(tol > 0.0) || max_iter == 0 {
                return Err(Error::param("iterative solver needs tol > 0 and max_iter ≥ 1"));
            }
        }
        let z = &self.physics.valence;
        self.initial.concentrations(z, [0.0, 0.0])?;
        if self.problem == ProblemKind::Manufactured && self.geometry.kind != GeometryKind::UnitSquare {
            return Err(Error::param("the manufactured problem is defined on the unit square only"));
        }
        Ok(())
    }

    /// Number of steps to reach `t_final` with the configured step (rounded up).
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.tau - 1e-9).ceil().max(1.0) as usize
    }

    pub fn mesh(&self) -> Result<TriMesh> {
        generate(&self.geometry)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_config(&text)
    }

    /// Full text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        if let Some(p) = &self.preset {
            let _ = writeln!(s, "preset = \"{p}\"");
        }
        let problem = match self.problem {
            ProblemKind::Physical => "physical",
            ProblemKind::Manufactured => "manufactured",
        };
        let g = &self.geometry;
        let ph = &self.physics;
        let b = &self.bcs;
        let _ = writeln!(s, "problem = {problem}");
        let _ = writeln!(s, "geometry.kind = {}", g.kind.name());
        let _ = writeln!(s, "geometry.width = {:?}", g.width);
        let _ = writeln!(s, "geometry.length = {:?}", g.length);
        let _ = writeln!(s, "geometry.roughness_height = {:?}", g.roughness_height);
        let _ = writeln!(s, "geometry.roughness_width = {:?}", g.roughness_width);
        let _ = writeln!(s, "geometry.roughness_spacing = {:?}", g.roughness_spacing);
        let _ = writeln!(s, "geometry.target_edge = {:?}", g.target_edge);
        let _ = writeln!(s, "physics.viscosity = {:?}", ph.viscosity);
        let _ = writeln!(s, "physics.permittivity = {:?}", ph.permittivity);
        let _ = writeln!(s, "physics.mobility = {}", list(&ph.mobility));
        let _ = writeln!(s, "physics.diffusivity = {}", list(&ph.diffusivity));
        let _ = writeln!(s, "physics.valence = {}", list(&ph.valence));
        let _ = writeln!(s, "bcs.inlet_velocity = {}", list(&b.inlet_velocity));
        let _ = writeln!(s, "bcs.inlet_concentration = {}", list(&b.inlet_concentration));
        let _ = writeln!(s, "bcs.phi_in = {:?}", b.phi_in);
        let _ = writeln!(s, "bcs.phi_out = {:?}", b.phi_out);
        let _ = writeln!(s, "bcs.xi = {:?}", b.xi);
        match &self.initial {
            InitialCondition::ErfFront { alpha, b1, b3, gamma, x0 } => {
                let _ = writeln!(s, "initial.kind = erf");
                let _ = writeln!(s, "initial.alpha = {alpha:?}");
                let _ = writeln!(s, "initial.b1 = {b1:?}");
                let _ = writeln!(s, "initial.b3 = {b3:?}");
                let _ = writeln!(s, "initial.gamma = {gamma:?}");
                let _ = writeln!(s, "initial.x0 = {x0:?}");
            }
            InitialCondition::Uniform(v) => {
                let _ = writeln!(s, "initial.kind = uniform");
                let _ = writeln!(s, "initial.values = {}", list(v));
            }
        }
        let _ = writeln!(s, "time.tau = {:?}", self.tau);
        let _ = writeln!(s, "time.T = {:?}", self.t_final);
        let _ = writeln!(s, "output.interval = {}", self.output_interval);
        let _ = writeln!(s, "scheme.convection = {}", self.options.convection.name());
        let slip = match self.options.slip_potential {
            SlipPotential::Current => "current",
            SlipPotential::Previous => "previous",
        };
        let _ = writeln!(s, "scheme.slip_potential = {slip}");
        match self.options.solver {
            SolverChoice::Direct => {
                let _ = writeln!(s, "solver.kind = direct");
            }
            SolverChoice::Iterative { tol, max_iter } => {
                let _ = writeln!(s, "solver.kind = iterative");
                let _ = writeln!(s, "solver.tol = {tol:?}");
                let _ = writeln!(s, "solver.max_iter = {max_iter}");
            }
        }
        s
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v)
}

/// Drops a `#` comment that is not inside double quotes.
fn strip_comment(raw: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in raw.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &raw[..i],
            _ => {}
        }
    }
    raw
}

fn number(e: &Entry) -> Result<f64> {
    let v = unquote(&e.value);
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Parse { line: e.line, message: format!("expected a number, got '{v}'") })
}

fn integer(e: &Entry) -> Result<usize> {
    let v = unquote(&e.value);
    v.parse::<usize>()
        .map_err(|_| Error::Parse { line: e.line, message: format!("expected a nonnegative integer, got '{v}'") })
}

fn numbers(e: &Entry) -> Result<Vec<f64>> {
    unquote(&e.value).split(',').map(|item| number(&Entry { line: e.line, value: item.trim().to_string() })).collect()
}

/// Parses the text format. Errors carry the 1-based line number.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut entries: HashMap<String, Entry> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse { line, message: format!("expected 'key = value', got '{content}'") });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse { line, message: "empty key or value".into() });
        }
        if let Some(prev) = entries.get(&key) {
            return Err(Error::Parse { line, message: format!("duplicate key '{key}' (first on line {})", prev.line) });
        }
        order.push(key.clone());
        entries.insert(key, Entry { line, value });
    }

    let mut cfg = match entries.get("preset") {
        Some(e) => preset(unquote(&e.value)).map_err(|err| Error::Parse { line: e.line, message: err.to_string() })?,
        None => preset("tjunction-nu1")?,
    };
    if !entries.contains_key("preset") {
        cfg.preset = None;
    }

    // initial.kind changes which other initial.* keys are meaningful
    if let Some(e) = entries.get("initial.kind") {
        cfg.initial = match unquote(&e.value) {
            "erf" => InitialCondition::erf_front(),
            "uniform" => InitialCondition::Uniform(vec![1.0; cfg.physics.n_species()]),
            other => return Err(Error::Parse { line: e.line, message: format!("unknown initial.kind '{other}'") }),
        };
    }
    if let Some(e) = entries.get("solver.kind") {
        cfg.options.solver = match unquote(&e.value) {
            "direct" => SolverChoice::Direct,
            "iterative" => SolverChoice::Iterative { tol: 1e-10, max_iter: 2000 },
            other => return Err(Error::Parse { line: e.line, message: format!("unknown solver.kind '{other}'") }),
        };
    }

    for key in &order {
        let e = &entries[key];
        let bad = |message: String| Error::Parse { line: e.line, message };
        let word = unquote(&e.value);
        match key.as_str() {
            "preset" | "initial.kind" | "solver.kind" => {}
            "problem" => {
                cfg.problem = match word {
                    "physical" => ProblemKind::Physical,
                    "manufactured" => ProblemKind::Manufactured,
                    other => return Err(bad(format!("unknown problem '{other}'"))),
                }
            }
            "geometry.kind" => {
                cfg.geometry.kind =
                    GeometryKind::from_name(word).ok_or_else(|| bad(format!("unknown geometry.kind '{word}'")))?
            }
            "geometry.width" => cfg.geometry.width = number(e)?,
            "geometry.length" => cfg.geometry.length = number(e)?,
            "geometry.roughness_height" => cfg.geometry.roughness_height = number(e)?,
            "geometry.roughness_width" => cfg.geometry.roughness_width = number(e)?,
            "geometry.roughness_spacing" => cfg.geometry.roughness_spacing = number(e)?,
            "geometry.target_edge" => cfg.geometry.target_edge = number(e)?,
            "physics.viscosity" => cfg.physics.viscosity = number(e)?,
            "physics.permittivity" => cfg.physics.permittivity = number(e)?,
            "physics.mobility" => cfg.physics.mobility = numbers(e)?,
            "physics.diffusivity" => cfg.physics.diffusivity = numbers(e)?,
            "physics.valence" => cfg.physics.valence = numbers(e)?,
            "bcs.inlet_velocity" => {
                let v = numbers(e)?;
                let [a, b] = v[..] else {
                    return Err(bad(format!("bcs.inlet_velocity needs 2 components, got {}", v.len())));
                };
                cfg.bcs.inlet_velocity = [a, b];
            }
            "bcs.inlet_concentration" => cfg.bcs.inlet_concentration = numbers(e)?,
            "bcs.phi_in" => cfg.bcs.phi_in = number(e)?,
            "bcs.phi_out" => cfg.bcs.phi_out = number(e)?,
            "bcs.xi" => cfg.bcs.xi = number(e)?,
            "initial.alpha" | "initial.b1" | "initial.b3" | "initial.gamma" | "initial.x0" => {
                let x = number(e)?;
                let InitialCondition::ErfFront { alpha, b1, b3, gamma, x0 } = &mut cfg.initial else {
                    return Err(bad(format!("{key} requires initial.kind = erf")));
                };
                match key.as_str() {
                    "initial.alpha" => *alpha = x,
                    "initial.b1" => *b1 = x,
                    "initial.b3" => *b3 = x,
                    "initial.gamma" => *gamma = x,
                    _ => *x0 = x,
                }
            }
            "initial.values" => {
                let v = numbers(e)?;
                match &mut cfg.initial {
                    InitialCondition::Uniform(u) => *u = v,
                    _ => return Err(bad("initial.values requires initial.kind = uniform".into())),
                }
            }
            "time.tau" => cfg.tau = number(e)?,
            "time.T" => cfg.t_final = number(e)?,
            "output.interval" => cfg.output_interval = integer(e)?,
            "scheme.convection" => {
                cfg.options.convection =
                    Convection::from_name(word).ok_or_else(|| bad(format!("unknown convection form '{word}'")))?
            }
            "scheme.slip_potential" => {
                cfg.options.slip_potential = match word {
                    "current" => SlipPotential::Current,
                    "previous" => SlipPotential::Previous,
                    other => return Err(bad(format!("unknown slip potential '{other}'"))),
                }
            }
            "solver.tol" | "solver.max_iter" => {
                let SolverChoice::Iterative { tol, max_iter } = &mut cfg.options.solver else {
                    return Err(bad(format!("{key} requires solver.kind = iterative")));
                };
                if key == "solver.tol" {
                    *tol = number(e)?;
                } else {
                    *max_iter = integer(e)?;
                }
            }
            other => return Err(bad(format!("unknown key '{other}'"))),
        }
    }

    // invariant violations are reported on the line that set the offending key
    cfg.validate().map_err(|err| {
        let line = blame(&err, &entries);
        Error::Parse { line, message: err.to_string() }
    })?;
    Ok(cfg)
}

fn blame(err: &Error, entries: &HashMap<String, Entry>) -> usize {
    let msg = err.to_string();
    let mut best: Option<usize> = None;
    for (key, e) in entries {
        let short = key.rsplit('.').next().unwrap_or(key);
        if msg.contains(key.as_str()) || msg.contains(short) {
            best = Some(best.map_or(e.line, |b| b.min(e.line)));
        }
    }
    best.unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid_and_round_trips() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let back = parse_config(&cfg.to_text()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }

    #[test]
    fn preset_reference_gives_table_values() {
        let cfg = parse_config("preset = \"tjunction-nu1\"\n").unwrap();
        assert_eq!(cfg.physics.mobility, vec![5e-8, 3e-7, 3e-8]);
        assert_eq!(cfg.physics.diffusivity, vec![2e-10, 3e-10, 2e-10]);
        assert_eq!(cfg.physics.valence, vec![1.0, -1.0, -2.0]);
        assert_eq!(cfg.bcs.inlet_velocity, [-1.0, 0.0]);
        assert_eq!(cfg.bcs.xi, 1e-6);
        assert_eq!(cfg.tau, 1e-7);
        assert_eq!(cfg.t_final, 6e-6);
        let rough = preset("rough-03h").unwrap();
        assert_eq!(rough.bcs.inlet_velocity, [1e-2, 0.0]);
        assert!((rough.geometry.roughness_height - 0.3e-6).abs() < 1e-20);
    }

    #[test]
    fn overrides_and_comments() {
        let text =
            "# viscosity study\npreset = rough-01h\nphysics.viscosity = 0.5  # override\nscheme.convection = plain\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.physics.viscosity, 0.5);
        assert_eq!(cfg.options.convection, Convection::Plain);
        assert_eq!(cfg.preset.as_deref(), Some("rough-01h"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("time.tau = 0\n", 1),
            ("\n\nbogus.key = 1\n", 3),
            ("physics.viscosity = abc\n", 1),
            ("time.T = 1\ntime.T = 2\n", 2),
            ("preset = nope\n", 1),
            ("no equals sign\n", 1),
            ("output.interval = -3\n", 1),
            ("bcs.inlet_velocity = 1\n", 1),
            ("physics.viscosity = -1\n", 1),
        ];
        for (text, line) in cases {
            match parse_config(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn garbage_never_panics() {
        for text in ["=", "= =", "\"", "a=\"", "time.T = 1e400", "physics.valence = ,,", "#only comment", "\u{feff}x=1"]
        {
            let _ = parse_config(text);
        }
    }

    #[test]
    fn step_count_rounds_up() {
        let mut cfg = preset("tjunction-nu1").unwrap();
        assert_eq!(cfg.n_steps(), 60);
        cfg.tau = 4e-6;
        assert_eq!(cfg.n_steps(), 2);
    }
}
