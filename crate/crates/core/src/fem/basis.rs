//! Shape functions on the reference triangle and the affine element map.

use crate::error::{Error, Result};

/// Finite element space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// Continuous piecewise linears.
    P1,
    /// P1 enriched with the cubic bubble `27 λ1 λ2 λ3` per triangle.
    P1Bubble,
    /// Two components of [`SpaceKind::P1Bubble`] (the MINI velocity).
    MiniVelocity,
    /// [`SpaceKind::P1`] used as the MINI pressure.
    P1Pressure,
}

impl SpaceKind {
    /// Scalar space each component belongs to.
    pub fn scalar(self) -> SpaceKind {
        match self {
            SpaceKind::P1 | SpaceKind::P1Pressure => SpaceKind::P1,
            SpaceKind::P1Bubble | SpaceKind::MiniVelocity => SpaceKind::P1Bubble,
        }
    }

    pub fn components(self) -> usize {
        match self {
            SpaceKind::MiniVelocity => 2,
            _ => 1,
        }
    }

    /// Local shape functions per component.
    pub fn local_dofs(self) -> usize {
        match self.scalar() {
            SpaceKind::P1Bubble => 4,
            _ => 3,
        }
    }

    pub fn has_bubble(self) -> bool {
        self.scalar() == SpaceKind::P1Bubble
    }
}

/// Values and reference-coordinate gradients of the local shape functions
/// of one component. Entries past `n` are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBasis {
    pub n: usize,
    pub values: [f64; 4],
    pub grads: [[f64; 2]; 4],
}

const BARY_GRADS: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

pub fn eval_basis(space: SpaceKind, bary: [f64; 3]) -> Result<LocalBasis> {
    let tol = 1e-12;
    if bary.iter().any(|&l| l < -tol) || (bary.iter().sum::<f64>() - 1.0).abs() > tol {
        return Err(Error::Domain(format!("point {bary:?} is outside the reference triangle")));
    }
    Ok(eval_unchecked(space, bary))
}

pub(crate) fn eval_unchecked(space: SpaceKind, bary: [f64; 3]) -> LocalBasis {
    let [l1, l2, l3] = bary;
    let mut out = LocalBasis {
        n: space.local_dofs(),
        values: [l1, l2, l3, 0.0],
        grads: [BARY_GRADS[0], BARY_GRADS[1], BARY_GRADS[2], [0.0, 0.0]],
    };
    if space.has_bubble() {
        out.values[3] = 27.0 * l1 * l2 * l3;
        for d in 0..2 {
            out.grads[3][d] =
                27.0 * (BARY_GRADS[0][d] * l2 * l3 + l1 * BARY_GRADS[1][d] * l3 + l1 * l2 * BARY_GRADS[2][d]);
        }
    }
    out
}

/// Affine map from the reference triangle onto a mesh triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMap {
    pub origin: [f64; 2],
    /// Columns are the edge vectors `p1 - p0`, `p2 - p0`.
    pub jacobian: [[f64; 2]; 2],
    /// `J^{-T}`, maps reference gradients to physical gradients.
    pub inv_jt: [[f64; 2]; 2],
    pub area: f64,
}

impl ElementMap {
    pub fn new(corners: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = corners;
        let (a, b) = (p1[0] - p0[0], p2[0] - p0[0]);
        let (c, d) = (p1[1] - p0[1], p2[1] - p0[1]);
        let det = a * d - b * c;
        Self {
            origin: p0,
            jacobian: [[a, b], [c, d]],
            inv_jt: [[d / det, -c / det], [-b / det, a / det]],
            area: 0.5 * det,
        }
    }

    pub fn to_physical(&self, bary: [f64; 3]) -> [f64; 2] {
        let (s, t) = (bary[1], bary[2]);
        [
            self.origin[0] + self.jacobian[0][0] * s + self.jacobian[0][1] * t,
            self.origin[1] + self.jacobian[1][0] * s + self.jacobian[1][1] * t,
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [self.inv_jt[0][0] * g[0] + self.inv_jt[0][1] * g[1], self.inv_jt[1][0] * g[0] + self.inv_jt[1][1] * g[1]]
    }

    /// Quadrature weight scale: physical measure per unit reference measure.
    pub fn det(&self) -> f64 {
        2.0 * self.area
    }
}
