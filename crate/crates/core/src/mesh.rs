//! Triangulations of the channel geometries with tagged boundary edges.
//!
//! Every mesh comes from a structured background grid whose lines pass
//! through all geometric breakpoints (obstacle faces, junction walls).
//! Cells outside the domain are dropped and the rest are split along a
//! diagonal whose direction is mirrored across the bounding-box center
//! lines, so geometries that are symmetric about their centerline produce
//! meshes with the same symmetry.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Inlet,
    Outlet,
    Wall,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 3] = [BoundaryTag::Inlet, BoundaryTag::Outlet, BoundaryTag::Wall];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints in the counter-clockwise order of the owning triangle.
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    UnitSquare,
    Channel,
    TJunction,
    RoughChannel,
}

impl GeometryKind {
    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::UnitSquare => "unit_square",
            GeometryKind::Channel => "channel",
            GeometryKind::TJunction => "tjunction",
            GeometryKind::RoughChannel => "rough_channel",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "unit_square" => Some(GeometryKind::UnitSquare),
            "channel" => Some(GeometryKind::Channel),
            "tjunction" => Some(GeometryKind::TJunction),
            "rough_channel" => Some(GeometryKind::RoughChannel),
            _ => None,
        }
    }
}

/// Geometry description.
///
/// * `UnitSquare`: `[0,1]²`, every edge a wall; `width`, `length` are ignored.
/// * `Channel`: `[0,L]×[0,H]`, inlet at `x = 0`, outlet at `x = L`.
/// * `RoughChannel`: a channel with `w × h_r` blocks on both walls, centered
///   at `x = D, 2D, …` (blocks that would cross an end are omitted).
/// * `TJunction`: main channel `[-L/2, L/2]×[0,H]` with a branch
///   `[-H/2, H/2]×[H, H + L/2]`; inlet at the right end, outlets at the
///   left end and at the top of the branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    pub width: f64,
    pub length: f64,
    pub roughness_height: f64,
    pub roughness_width: f64,
    pub roughness_spacing: f64,
    pub target_edge: f64,
}

impl GeometrySpec {
    pub fn unit_square(divisions: usize) -> Self {
        Self {
            kind: GeometryKind::UnitSquare,
            width: 1.0,
            length: 1.0,
            roughness_height: 0.0,
            roughness_width: 0.0,
            roughness_spacing: 0.0,
            target_edge: 1.0 / divisions as f64,
        }
    }

    pub fn channel(width: f64, length: f64, target_edge: f64) -> Self {
        Self {
            kind: GeometryKind::Channel,
            width,
            length,
            roughness_height: 0.0,
            roughness_width: 0.0,
            roughness_spacing: 0.0,
            target_edge,
        }
    }

    pub fn rough_channel(
        width: f64,
        length: f64,
        height: f64,
        block_width: f64,
        spacing: f64,
        target_edge: f64,
    ) -> Self {
        Self {
            kind: GeometryKind::RoughChannel,
            width,
            length,
            roughness_height: height,
            roughness_width: block_width,
            roughness_spacing: spacing,
            target_edge,
        }
    }

    /// Main channel `4H × H`, branch `H × 2H`.
    pub fn t_junction(width: f64, target_edge: f64) -> Self {
        Self {
            kind: GeometryKind::TJunction,
            width,
            length: 4.0 * width,
            roughness_height: 0.0,
            roughness_width: 0.0,
            roughness_spacing: 0.0,
            target_edge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.width,
            self.length,
            self.roughness_height,
            self.roughness_width,
            self.roughness_spacing,
            self.target_edge,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("geometry parameters must be finite"));
        }
        if self.target_edge <= 0.0 {
            return Err(Error::param("target edge length must be positive"));
        }
        if self.kind != GeometryKind::UnitSquare && (self.width <= 0.0 || self.length <= 0.0) {
            return Err(Error::param("channel width and length must be positive"));
        }
        if self.kind == GeometryKind::RoughChannel {
            let (h, w, d) = (self.roughness_height, self.roughness_width, self.roughness_spacing);
            if !(0.0..self.width / 2.0).contains(&h) {
                return Err(Error::param(format!(
                    "roughness height {h} must satisfy 0 <= h_r < H/2 = {}",
                    self.width / 2.0
                )));
            }
            if !(w > 0.0 && w < d && d <= self.length) {
                return Err(Error::param(format!(
                    "roughness needs 0 < w < D <= L (w = {w}, D = {d}, L = {})",
                    self.length
                )));
            }
        }
        Ok(())
    }

    /// Exact area of the geometry.
    pub fn area(&self) -> f64 {
        match self.kind {
            GeometryKind::UnitSquare => 1.0,
            GeometryKind::Channel => self.width * self.length,
            GeometryKind::TJunction => self.width * self.length + self.width * self.length / 2.0,
            GeometryKind::RoughChannel => {
                let n = self.obstacle_centers().len() as f64;
                self.width * self.length - 2.0 * n * self.roughness_width * self.roughness_height
            }
        }
    }

    /// x-centers of the roughness blocks (one block per wall at each).
    pub fn obstacle_centers(&self) -> Vec<f64> {
        if self.kind != GeometryKind::RoughChannel || self.roughness_height == 0.0 {
            return Vec::new();
        }
        let half = self.roughness_width / 2.0;
        (1..)
            .map(|k| k as f64 * self.roughness_spacing)
            .take_while(|&c| c + half < self.length)
            .filter(|&c| c - half > 0.0)
            .collect()
    }
}

/// Immutable triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Largest triangle diameter.
    pub h_max: f64,
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.corners(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// All undirected edges, each as a sorted vertex pair, in first-seen order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let e = sorted_pair(tri[k], tri[(k + 1) % 3]);
                if seen.insert(e, ()).is_none() {
                    out.push(e);
                }
            }
        }
        out
    }

    /// Vertices incident to an edge carrying `tag`. A corner shared by two
    /// tags is reported for both; callers decide which condition wins.
    pub fn boundary_vertices(&self, tag: BoundaryTag) -> BTreeSet<usize> {
        self.boundary_edges.iter().filter(|e| e.tag == tag).flat_map(|e| e.vertices).collect()
    }

    pub fn all_boundary_vertices(&self) -> BTreeSet<usize> {
        self.boundary_edges.iter().flat_map(|e| e.vertices).collect()
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_vertices()];
        for e in &self.boundary_edges {
            mask[e.vertices[0]] = true;
            mask[e.vertices[1]] = true;
        }
        mask
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }

    fn compute_h_max(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |k| (tri[k], tri[(k + 1) % 3])))
            .map(|(a, b)| dist(self.vertices[a], self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Checks orientation and boundary consistency.
    pub fn check_invariants(&self) -> Result<()> {
        for t in 0..self.n_triangles() {
            if self.signed_area(t) <= 0.0 {
                return Err(Error::Domain(format!("triangle {t} has non-positive area")));
            }
        }
        let mut owners: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *owners.entry(sorted_pair(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        if owners.values().any(|&n| n > 2) {
            return Err(Error::Domain("edge shared by more than two triangles".into()));
        }
        let mut tagged: HashMap<[usize; 2], usize> = HashMap::new();
        for e in &self.boundary_edges {
            let key = sorted_pair(e.vertices[0], e.vertices[1]);
            if owners.get(&key) != Some(&1) {
                return Err(Error::Domain(format!("boundary edge {key:?} is not owned by exactly one triangle")));
            }
            *tagged.entry(key).or_default() += 1;
        }
        if tagged.values().any(|&n| n != 1) {
            return Err(Error::Domain("boundary edge tagged more than once".into()));
        }
        let n_boundary = owners.values().filter(|&&n| n == 1).count();
        if n_boundary != tagged.len() {
            return Err(Error::Domain(format!(
                "{} topological boundary edges but {} tagged",
                n_boundary,
                tagged.len()
            )));
        }
        Ok(())
    }
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Grid lines through `breaks`, each gap cut into pieces no longer than
/// `target`. With `even`, every gap gets an even number of pieces so no
/// cell straddles a symmetry line placed at a gap midpoint.
fn grid_lines(breaks: &[f64], target: f64, even: bool) -> Vec<f64> {
    let mut lines = vec![breaks[0]];
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        let mut n = ((len / target) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        if even && n % 2 == 1 {
            n += 1;
        }
        for k in 1..n {
            lines.push(w[0] + len * k as f64 / n as f64);
        }
        lines.push(w[1]);
    }
    lines
}

fn structured<F, G>(xs: &[f64], ys: &[f64], inside: F, classify: G) -> TriMesh
where
    F: Fn(f64, f64) -> bool,
    G: Fn([f64; 2]) -> BoundaryTag,
{
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let mid_x = 0.5 * (xs[0] + xs[nx]);
    let mid_y = 0.5 * (ys[0] + ys[ny]);
    let cell_in = |i: usize, j: usize| inside(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));

    let mut index = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let touches =
                [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)]
                    .into_iter()
                    .any(|(ci, cj)| ci < nx && cj < ny && cell_in(ci, cj));
            if touches {
                index[j * (nx + 1) + i] = vertices.len();
                vertices.push([xs[i], ys[j]]);
            }
        }
    }
    let id = |i: usize, j: usize| index[j * (nx + 1) + i];

    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !cell_in(i, j) {
                continue;
            }
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let cx = 0.5 * (xs[i] + xs[i + 1]);
            let cy = 0.5 * (ys[j] + ys[j + 1]);
            if (cx < mid_x) == (cy < mid_y) {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    finish(vertices, triangles, classify)
}

fn finish<G: Fn([f64; 2]) -> BoundaryTag>(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, classify: G) -> TriMesh {
    let mut count: HashMap<[usize; 2], usize> = HashMap::new();
    for tri in &triangles {
        for k in 0..3 {
            *count.entry(sorted_pair(tri[k], tri[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut boundary_edges = Vec::new();
    for tri in &triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if count[&sorted_pair(a, b)] == 1 {
                let m = [0.5 * (vertices[a][0] + vertices[b][0]), 0.5 * (vertices[a][1] + vertices[b][1])];
                boundary_edges.push(BoundaryEdge { vertices: [a, b], tag: classify(m) });
            }
        }
    }
    let mut mesh = TriMesh { vertices, triangles, boundary_edges, h_max: 0.0 };
    mesh.h_max = mesh.compute_h_max();
    mesh
}

/// Builds the triangulation for `spec`.
pub fn generate(spec: &GeometrySpec) -> Result<TriMesh> {
    spec.validate()?;
    let target = spec.target_edge;
    let (h, l) = (spec.width, spec.length);
    let mesh = match spec.kind {
        GeometryKind::UnitSquare => {
            let lines = grid_lines(&[0.0, 1.0], target, false);
            structured(&lines, &lines, |_, _| true, |_| BoundaryTag::Wall)
        }
        GeometryKind::Channel | GeometryKind::RoughChannel => {
            let centers = spec.obstacle_centers();
            let half = spec.roughness_width / 2.0;
            let hr = spec.roughness_height;
            let mut xb = vec![0.0];
            for &c in &centers {
                xb.push(c - half);
                xb.push(c + half);
            }
            xb.push(l);
            let yb = if centers.is_empty() { vec![0.0, h] } else { vec![0.0, hr, h - hr, h] };
            let xs = grid_lines(&xb, target, true);
            let ys = grid_lines(&yb, target, true);
            let eps = 1e-9 * h;
            structured(
                &xs,
                &ys,
                |x, y| {
                    let in_block = centers.iter().any(|&c| (x - c).abs() < half);
                    !(in_block && (y < hr || y > h - hr))
                },
                |m| {
                    if m[0].abs() < eps {
                        BoundaryTag::Inlet
                    } else if (m[0] - l).abs() < eps {
                        BoundaryTag::Outlet
                    } else {
                        BoundaryTag::Wall
                    }
                },
            )
        }
        GeometryKind::TJunction => {
            let xs = grid_lines(&[-l / 2.0, -h / 2.0, h / 2.0, l / 2.0], target, true);
            let ys = grid_lines(&[0.0, h, h + l / 2.0], target, true);
            let top = h + l / 2.0;
            let eps = 1e-9 * h;
            structured(
                &xs,
                &ys,
                |x, y| y < h || x.abs() < h / 2.0,
                |m| {
                    if (m[0] - l / 2.0).abs() < eps {
                        BoundaryTag::Inlet
                    } else if (m[0] + l / 2.0).abs() < eps || (m[1] - top).abs() < eps {
                        BoundaryTag::Outlet
                    } else {
                        BoundaryTag::Wall
                    }
                },
            )
        }
    };
    Ok(mesh)
}

/// Splits every triangle into four similar children through its edge midpoints.
pub fn refine_uniform(mesh: &TriMesh) -> TriMesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        *midpoint.entry(sorted_pair(a, b)).or_insert_with(|| {
            let (p, q) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.vertices;
        let m = mid(a, b, &mut vertices);
        boundary_edges.push(BoundaryEdge { vertices: [a, m], tag: e.tag });
        boundary_edges.push(BoundaryEdge { vertices: [m, b], tag: e.tag });
    }
    TriMesh { vertices, triangles, boundary_edges, h_max: 0.5 * mesh.h_max }
}
