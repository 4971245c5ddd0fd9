//! VTK snapshots and energy logs.
//!
//! Snapshots are legacy ASCII VTK (version 3.0) unstructured grids with one
//! linear triangle per cell. Fields are written at the vertices, where the
//! bubble contributions vanish, with 17 significant digits so that a file
//! reproduces the nodal values exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scheme::{EnergyRecord, SimState};

const VTK_TRIANGLE: u8 = 5;

fn write_geometry<W: Write>(w: &mut W, mesh: &TriMesh, title: &str) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for [x, y] in &mesh.vertices {
        writeln!(w, "{x:.16e} {y:.16e} 0")?;
    }
    let nt = mesh.n_triangles();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for [a, b, c] in &mesh.triangles {
        writeln!(w, "3 {a} {b} {c}")?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "{VTK_TRIANGLE}")?;
    }
    Ok(())
}

fn write_scalars<W: Write>(w: &mut W, name: &str, values: &[f64]) -> io::Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

/// Mesh only, for inspecting generated geometries.
pub fn write_mesh_vtk<W: Write>(w: &mut W, mesh: &TriMesh) -> io::Result<()> {
    write_geometry(w, mesh, "mesh")
}

/// Snapshot of `ρ`, `φ`, `p`, each `c_i` and the velocity vector.
pub fn write_vtk<W: Write>(w: &mut W, mesh: &TriMesh, state: &SimState) -> Result<()> {
    let nv = mesh.n_vertices();
    let ns = state.u.len() / 2;
    let short = |len: usize| len < nv;
    if short(state.rho.len()) || short(state.phi.len()) || short(state.p.len()) || short(ns) {
        return Err(Error::Shape { what: "snapshot fields", expected: nv, got: state.rho.len().min(state.p.len()) });
    }
    if let Some(c) = state.c.iter().find(|c| short(c.len())) {
        return Err(Error::Shape { what: "snapshot concentration", expected: nv, got: c.len() });
    }
    let io = |e| Error::io(Path::new("<vtk stream>"), e);
    let title = format!("step {} time {:.16e}", state.step, state.time);
    write_geometry(w, mesh, &title).map_err(io)?;
    let body = |w: &mut W| -> io::Result<()> {
        writeln!(w, "POINT_DATA {nv}")?;
        write_scalars(w, "rho", &state.rho[..nv])?;
        write_scalars(w, "phi", &state.phi[..nv])?;
        write_scalars(w, "p", &state.p[..nv])?;
        for (i, c) in state.c.iter().enumerate() {
            write_scalars(w, &format!("c{}", i + 1), &c[..nv])?;
        }
        writeln!(w, "VECTORS u double")?;
        for v in 0..nv {
            writeln!(w, "{:.16e} {:.16e} 0", state.u[v], state.u[ns + v])?;
        }
        Ok(())
    };
    body(w).map_err(io)
}

/// Writes `dir/<stem>_<step>.vtk` and returns its path.
pub fn save_vtk(dir: &Path, stem: &str, mesh: &TriMesh, state: &SimState) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}_{:06}.vtk", state.step));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    write_vtk(&mut w, mesh, state).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(&path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Header of the energy log.
pub fn energy_header(n_species: usize) -> String {
    let mut cols = vec!["step".to_string(), "time".to_string()];
    cols.extend(EnergyRecord::entry_names(n_species));
    cols.join(",")
}

pub fn energy_row(e: &EnergyRecord) -> String {
    let mut s = format!("{},{:.16e}", e.step, e.time);
    for v in e.entries() {
        s.push_str(&format!(",{v:.16e}"));
    }
    s
}

/// Energy log streamed to a CSV file, one row per step.
pub struct EnergyCsv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl EnergyCsv {
    pub fn create(path: &Path, n_species: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", energy_header(n_species)).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out })
    }

    pub fn push(&mut self, e: &EnergyRecord) -> Result<()> {
        writeln!(self.out, "{}", energy_row(e)).map_err(|err| Error::io(&self.path, err))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::FormContext;
    use crate::mesh::{generate, GeometrySpec};

    fn sample() -> (TriMesh, SimState) {
        let mesh = generate(&GeometrySpec::unit_square(2)).unwrap();
        let ctx = FormContext::new(&mesh);
        let mut s = SimState::zeros(&ctx, 2, 0.1);
        for (k, v) in s.rho.iter_mut().enumerate() {
            *v = 0.1 * k as f64 + 1.0 / 3.0;
        }
        let ns = s.u.len() / 2;
        s.u[ns + 4] = -2.5;
        (mesh, s)
    }

    #[test]
    fn vtk_layout_and_round_trip() {
        let (mesh, s) = sample();
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert!(text.contains(&format!("CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles())));
        assert!(text.contains("SCALARS c2 double 1"));
        let at = lines.iter().position(|l| *l == "SCALARS rho double 1").unwrap();
        for v in 0..mesh.n_vertices() {
            let back: f64 = lines[at + 2 + v].parse().unwrap();
            assert_eq!(back, s.rho[v]);
        }
        let vec_at = lines.iter().position(|l| *l == "VECTORS u double").unwrap();
        assert_eq!(lines[vec_at + 5].split(' ').nth(1).unwrap().parse::<f64>().unwrap(), -2.5);
        assert_eq!(lines.iter().filter(|l| **l == "5").count(), mesh.n_triangles());
    }

    #[test]
    fn short_fields_are_rejected() {
        let (mesh, mut s) = sample();
        s.c[1].truncate(2);
        assert!(matches!(write_vtk(&mut Vec::new(), &mesh, &s), Err(Error::Shape { .. })));
    }

    #[test]
    fn energy_csv_has_one_row_per_record() {
        let (mesh, s) = sample();
        let ctx = FormContext::new(&mesh);
        let e = EnergyRecord::measure(&ctx, &s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("energy.csv");
        let mut log = EnergyCsv::create(&path, 2).unwrap();
        log.push(&e).unwrap();
        log.push(&e).unwrap();
        log.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,time,rho_l2,u_l2,phi_h1,c1_l2,c2_l2");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 7);
    }
}
