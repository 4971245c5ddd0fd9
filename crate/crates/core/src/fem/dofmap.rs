use crate::fem::basis::SpaceKind;
use crate::mesh::TriMesh;

/// Global numbering of a space on a mesh.
///
/// Scalar numbering puts vertex dofs first (`0..n_vertices`) and bubble
/// dofs after them (`n_vertices + t`). Vector spaces stack components:
/// component `c` of scalar dof `i` is `c * n_scalar + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub space: SpaceKind,
    pub n_dofs: usize,
    pub n_scalar: usize,
    pub n_vertices: usize,
    cell_dofs: Vec<[usize; 4]>,
}

impl DofMap {
    pub fn new(space: SpaceKind, mesh: &TriMesh) -> Self {
        let nv = mesh.n_vertices();
        let bubble = space.has_bubble();
        let n_scalar = if bubble { nv + mesh.n_triangles() } else { nv };
        let cell_dofs = mesh
            .triangles
            .iter()
            .enumerate()
            .map(|(t, &[a, b, c])| [a, b, c, if bubble { nv + t } else { usize::MAX }])
            .collect();
        Self { space, n_dofs: n_scalar * space.components(), n_scalar, n_vertices: nv, cell_dofs }
    }

    /// Scalar dofs of triangle `t`, in local shape-function order.
    pub fn cell(&self, t: usize) -> &[usize] {
        &self.cell_dofs[t][..self.space.local_dofs()]
    }

    pub fn n_cells(&self) -> usize {
        self.cell_dofs.len()
    }

    pub fn components(&self) -> usize {
        self.space.components()
    }

    pub fn offset(&self, component: usize) -> usize {
        component * self.n_scalar
    }

    pub fn vertex_dof(&self, vertex: usize, component: usize) -> usize {
        self.offset(component) + vertex
    }

    /// Dofs of one component as a contiguous slice of `coeffs`.
    pub fn component<'a>(&self, coeffs: &'a [f64], component: usize) -> &'a [f64] {
        &coeffs[self.offset(component)..self.offset(component) + self.n_scalar]
    }

    /// The scalar numbering underlying each component.
    pub fn scalar_map(&self) -> DofMap {
        DofMap {
            space: self.space.scalar(),
            n_dofs: self.n_scalar,
            n_scalar: self.n_scalar,
            n_vertices: self.n_vertices,
            cell_dofs: self.cell_dofs.clone(),
        }
    }
}
